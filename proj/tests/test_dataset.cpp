// Copyright 2026 The Phaselocal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "phaselocal/dataset.hpp"

using namespace phaselocal;

namespace {

// Brute-force clip enumeration: every start with the whole clip inside the
// segment, restricted to the stride lattice.
long clip_count_oracle(long seg_len, long clip_len, long step) {
  long count = 0;
  for (long s = 0; s + clip_len <= seg_len; ++s)
    if (s % step == 0) ++count;
  return count;
}

std::vector<AnnotationRecord> synthetic_annotations(int n_videos, long total = 2300,
                                                    long action_start = 500,
                                                    long action_end = 1600) {
  std::vector<AnnotationRecord> recs;
  for (int v = 0; v < n_videos; ++v)
    recs.push_back({"vid_" + std::to_string(v), total,
                    {{action_start, action_end, PhaseLabel::Phaco}}});
  return recs;
}

}  // namespace

TEST_CASE("generate_clips handles the exact-fit segment", "[dataset]") {
  ClipConfig cfg;
  const Segment seg{100, 175, PhaseLabel::Rhexis};
  const auto clips = generate_clips("v", seg, cfg);
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].start == 100);
  CHECK(clips[0].clip_len == 75);
  CHECK(clips[0].label == PhaseLabel::Rhexis);
}

TEST_CASE("generate_clips strides by the per-phase step", "[dataset]") {
  ClipConfig cfg;
  // Length 100, clip 75, step 4: starts 0,4,...,24 relative -> 7 clips.
  const Segment seg{0, 100, PhaseLabel::Phaco};
  const auto clips = generate_clips("v", seg, cfg);
  REQUIRE(clips.size() == 7);
  for (std::size_t k = 0; k < clips.size(); ++k)
    CHECK(clips[k].start == static_cast<long>(4 * k));
}

TEST_CASE("default overlap steps follow the phase durations", "[dataset]") {
  ClipConfig cfg;
  CHECK(cfg.clip_len == 75);
  CHECK(cfg.step_for(PhaseLabel::Rhexis) == 1);
  CHECK(cfg.step_for(PhaseLabel::LensImpl) == 1);
  CHECK(cfg.step_for(PhaseLabel::Phaco) == 4);
  CHECK(cfg.step_for(PhaseLabel::IrrAspVisc) == 4);
  CHECK(cfg.step_for(PhaseLabel::Rest) == 4);
}

TEST_CASE("generate_clips count matches the enumeration oracle", "[dataset]") {
  // The acceptance suite sweeps segment lengths to 200; this covers 0..120.
  for (long clip_len : {10L, 75L}) {
    for (long step = 1; step <= 8; ++step) {
      ClipConfig cfg;
      cfg.clip_len = clip_len;
      cfg.step_by_phase[PhaseLabel::Phaco] = step;
      for (long len = 1; len <= 120; ++len) {
        const Segment seg{10, 10 + len, PhaseLabel::Phaco};
        const auto clips = generate_clips("v", seg, cfg);
        REQUIRE(static_cast<long>(clips.size()) == clip_count_oracle(len, clip_len, step));
        for (const ClipSpec& c : clips) {
          CHECK(c.start >= seg.start);
          CHECK(c.start + c.clip_len <= seg.end);
        }
      }
    }
  }
}

TEST_CASE("sample_balanced_frames reproduces the per-split totals", "[dataset]") {
  const auto train = sample_balanced_frames(synthetic_annotations(18), 500, 11);
  long idle = 0, action = 0;
  for (const FrameSample& s : train) (s.is_action ? action : idle) += 1;
  CHECK(idle == 9000);
  CHECK(action == 9000);

  const auto test = sample_balanced_frames(synthetic_annotations(4), 500, 11);
  CHECK(test.size() == 4000);
}

TEST_CASE("sample_balanced_frames is deterministic and duplicate-free", "[dataset]") {
  const auto a = sample_balanced_frames(synthetic_annotations(3), 200, 5);
  const auto b = sample_balanced_frames(synthetic_annotations(3), 200, 5);
  CHECK(a == b);
  std::set<std::tuple<std::string, long>> seen;
  for (const FrameSample& s : a) {
    CHECK(seen.emplace(s.video_id, s.frame).second);
    // Class consistency: sampled action frames lie in the annotated segment.
    CHECK(s.is_action == (s.frame >= 500 && s.frame < 1600));
  }
}

TEST_CASE("sample_balanced_frames names the starved video and class", "[dataset]") {
  // 80 idle frames only.
  std::vector<AnnotationRecord> recs{{"short_vid", 580, {{80, 580, PhaseLabel::Rest}}}};
  try {
    sample_balanced_frames(recs, 100, 1);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("short_vid") != std::string::npos);
    CHECK(msg.find("idle") != std::string::npos);
  }
  CHECK(sample_balanced_frames(recs, 0, 1).empty());
}

TEST_CASE("sample_clip_dataset balances classes and rejects shortfalls", "[dataset]") {
  std::map<PhaseLabel, std::vector<ClipSpec>> train_pool, test_pool;
  for (PhaseLabel label : {PhaseLabel::Rhexis, PhaseLabel::Phaco, PhaseLabel::IrrAspVisc,
                           PhaseLabel::LensImpl, PhaseLabel::Rest}) {
    for (long s = 0; s < 40; ++s) train_pool[label].push_back({"train_v", s, 75, label});
    for (long s = 0; s < 10; ++s) test_pool[label].push_back({"test_v", s, 75, label});
  }
  const SplitManifest m =
      sample_clip_dataset(train_pool, test_pool, {"train_v"}, {"test_v"}, 20, 5, 3);
  for (const auto& [label, clips] : m.train_clips) CHECK(clips.size() == 20);
  for (const auto& [label, clips] : m.test_clips) CHECK(clips.size() == 5);

  // One binary task: target count + equal rest count.
  const auto task = binary_task_clips(m.train_clips, PhaseLabel::Rhexis, 3);
  CHECK(task.size() == 40);
  long pos = 0;
  for (const auto& [clip, y] : task) pos += y;
  CHECK(pos == 20);

  const auto tiny = sample_clip_dataset(train_pool, test_pool, {"train_v"}, {"test_v"}, 1, 1, 3);
  CHECK(binary_task_clips(tiny.train_clips, PhaseLabel::Phaco, 3).size() == 2);
  CHECK(binary_task_clips(tiny.test_clips, PhaseLabel::Phaco, 3).size() == 2);

  try {
    sample_clip_dataset(train_pool, test_pool, {"train_v"}, {"test_v"}, 20, 11, 3);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("test") != std::string::npos);
  }
}

TEST_CASE("split manifests reject train/test leakage", "[dataset]") {
  SplitManifest m;
  m.train_videos = {"a", "b"};
  m.test_videos = {"b"};
  CHECK_THROWS_AS(validate(m), std::invalid_argument);

  SplitManifest clean;
  clean.train_videos = {"a"};
  clean.test_videos = {"b"};
  clean.train_clips[PhaseLabel::Rhexis].push_back({"b", 0, 75, PhaseLabel::Rhexis});
  CHECK_THROWS_AS(validate(clean), std::invalid_argument);
}

TEST_CASE("sequence_sample draws one strictly increasing index per bin", "[dataset]") {
  const ClipSpec clip{"v", 0, 75, PhaseLabel::Phaco};
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto idx = sequence_sample(clip, 5, seed);
    REQUIRE(idx.size() == 5);
    for (long j = 0; j < 5; ++j) {
      CHECK(idx[static_cast<std::size_t>(j)] >= 15 * j);
      CHECK(idx[static_cast<std::size_t>(j)] < 15 * j + 15);
      if (j > 0) CHECK(idx[static_cast<std::size_t>(j)] > idx[static_cast<std::size_t>(j - 1)]);
    }
  }
}

TEST_CASE("sequence_sample degenerates to the identity when k equals clip_len", "[dataset]") {
  const ClipSpec clip{"v", 0, 12, PhaseLabel::Phaco};
  const auto idx = sequence_sample(clip, 12, 9);
  for (long j = 0; j < 12; ++j) CHECK(idx[static_cast<std::size_t>(j)] == j);
}

TEST_CASE("sequence_sample is deterministic per seed and errors on k > clip_len",
          "[dataset]") {
  const ClipSpec clip{"v", 30, 75, PhaseLabel::Rhexis};
  CHECK(sequence_sample(clip, 5, 77) == sequence_sample(clip, 5, 77));
  CHECK_THROWS_AS(sequence_sample(clip, 76, 1), std::invalid_argument);
}

TEST_CASE("sequence_centers picks deterministic mid-bin offsets", "[dataset]") {
  const auto idx = sequence_centers(75, 5);
  REQUIRE(idx.size() == 5);
  for (long j = 0; j < 5; ++j) {
    CHECK(idx[static_cast<std::size_t>(j)] >= 15 * j);
    CHECK(idx[static_cast<std::size_t>(j)] < 15 * (j + 1));
  }
}

TEST_CASE("annotation files round-trip", "[dataset]") {
  std::vector<AnnotationRecord> recs;
  recs.push_back({"v0", 0, {{10, 90, PhaseLabel::Rhexis}, {120, 300, PhaseLabel::Rest}}});
  recs.push_back({"v1", 0, {{5, 200, PhaseLabel::LensImpl}}});
  std::stringstream ss;
  write_annotations(ss, recs);
  const auto back = read_annotations(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].video_id == "v0");
  CHECK(back[0].segments == recs[0].segments);
  CHECK(back[1].segments == recs[1].segments);

  std::stringstream overlapping("v,0,10,Rest\nv,5,20,Rest\n");
  CHECK_THROWS_AS(read_annotations(overlapping), std::invalid_argument);
}

TEST_CASE("clip manifests round-trip with split assignment", "[dataset]") {
  std::map<PhaseLabel, std::vector<ClipSpec>> train_pool, test_pool;
  train_pool[PhaseLabel::Rhexis] = {{"tr", 0, 75, PhaseLabel::Rhexis},
                                    {"tr", 1, 75, PhaseLabel::Rhexis}};
  test_pool[PhaseLabel::Rhexis] = {{"te", 4, 75, PhaseLabel::Rhexis}};
  const SplitManifest m = sample_clip_dataset(train_pool, test_pool, {"tr"}, {"te"}, 2, 1, 1);
  std::stringstream ss;
  write_clip_manifest(ss, m);
  const SplitManifest back = read_clip_manifest(ss);
  CHECK(back.train_clips.at(PhaseLabel::Rhexis).size() == 2);
  CHECK(back.test_clips.at(PhaseLabel::Rhexis).size() == 1);
  CHECK(back.train_videos == std::vector<std::string>{"tr"});
}

TEST_CASE("frame manifests round-trip", "[dataset]") {
  const std::vector<FrameSample> frames{{"v0", 3, false}, {"v0", 700, true}};
  std::stringstream ss;
  write_frame_manifest(ss, frames);
  CHECK(read_frame_manifest(ss) == frames);
}

TEST_CASE("annotation_to_timeline plants segment labels over idle", "[dataset]") {
  const AnnotationRecord rec{"v", 50, {{10, 20, PhaseLabel::Phaco}}};
  const Timeline t = annotation_to_timeline(rec);
  CHECK(t.labels[5] == PhaseLabel::Idle);
  CHECK(t.labels[15] == PhaseLabel::Phaco);
  CHECK(t.labels[45] == PhaseLabel::Idle);
  CHECK(t.frame_count() == 50);
}
