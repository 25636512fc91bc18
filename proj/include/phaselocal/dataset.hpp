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

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "phaselocal/phase.hpp"
#include "phaselocal/rng.hpp"
#include "phaselocal/timeline.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// Annotated action segments of one video. Idle is everything outside the
// segments.
struct AnnotationRecord {
  std::string video_id;
  long total_frames = 0;
  std::vector<Segment> segments;  // sorted, non-overlapping
};

inline void validate(const AnnotationRecord& rec) {
  check(rec.total_frames > 0, "annotation for '" + rec.video_id + "' declares no frames");
  long prev_end = 0;
  for (const Segment& s : rec.segments) {
    validate(s);
    check(s.end <= rec.total_frames,
          "segment [" + std::to_string(s.start) + "," + std::to_string(s.end) +
              ") exceeds total frames of '" + rec.video_id + "'");
    check(s.start >= prev_end, "segments of '" + rec.video_id + "' overlap or are unsorted");
    prev_end = s.end;
  }
}

// Ground-truth frame labels implied by an annotation record.
inline Timeline annotation_to_timeline(const AnnotationRecord& rec, double fps = 25.0) {
  validate(rec);
  Timeline t;
  t.video_id = rec.video_id;
  t.fps = fps;
  t.labels.assign(static_cast<std::size_t>(rec.total_frames), PhaseLabel::Idle);
  for (const Segment& s : rec.segments)
    for (long f = s.start; f < s.end; ++f)
      t.labels[static_cast<std::size_t>(f)] = s.label;
  return t;
}

// Clip extraction parameters: clip length and per-phase overlap step. Short
// phases use step 1 so they yield enough clips to balance the classes.
struct ClipConfig {
  long clip_len = 75;
  std::map<PhaseLabel, long> step_by_phase = {
      {PhaseLabel::Rhexis, 1},   {PhaseLabel::LensImpl, 1},
      {PhaseLabel::Phaco, 4},    {PhaseLabel::IrrAspVisc, 4},
      {PhaseLabel::Rest, 4}};

  long step_for(PhaseLabel label) const {
    auto it = step_by_phase.find(label);
    check(it != step_by_phase.end(),
          "no overlap step configured for phase " + std::string(to_string(label)));
    return it->second;
  }
};

inline void validate(const ClipConfig& cfg) {
  check(cfg.clip_len >= 1, "clip_len must be >= 1");
  for (const auto& [label, step] : cfg.step_by_phase)
    check(step >= 1, "overlap step for " + std::string(to_string(label)) + " must be >= 1");
}

// Reference to one fixed-length training clip inside an annotated segment.
struct ClipSpec {
  std::string video_id;
  long start = 0;
  long clip_len = 75;
  PhaseLabel label = PhaseLabel::Rest;

  bool operator==(const ClipSpec&) const = default;
};

// All clip starts segment.start + k*step that fit inside the segment.
// Segments shorter than clip_len yield no clips.
inline std::vector<ClipSpec> generate_clips(const std::string& video_id,
                                            const Segment& segment,
                                            const ClipConfig& cfg) {
  validate(segment);
  validate(cfg);
  std::vector<ClipSpec> out;
  if (segment.length() < cfg.clip_len) return out;
  const long step = cfg.step_for(segment.label);
  const long last_k = (segment.length() - cfg.clip_len) / step;
  out.reserve(static_cast<std::size_t>(last_k) + 1);
  for (long k = 0; k <= last_k; ++k)
    out.push_back({video_id, segment.start + k * step, cfg.clip_len, segment.label});
  return out;
}

namespace detail {

// Stratified uniform pick of n items: the (sorted) pool is divided into n
// equal bins and one item is drawn per bin. Deterministic for a fixed rng
// state; n == pool size degenerates to the identity selection.
template <typename T>
std::vector<T> sample_uniform(const std::vector<T>& pool, long n, Rng& rng) {
  check(n >= 0, "sample size must be non-negative");
  check(n <= static_cast<long>(pool.size()), "sample size exceeds pool");
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(n));
  const long m = static_cast<long>(pool.size());
  for (long j = 0; j < n; ++j) {
    const long lo = j * m / n;
    const long hi = (j + 1) * m / n;  // > lo because n <= m
    out.push_back(pool[static_cast<std::size_t>(rng.range_long(lo, hi - 1))]);
  }
  return out;
}

}  // namespace detail

// One row of the balanced idle/action frame manifest.
struct FrameSample {
  std::string video_id;
  long frame = 0;
  bool is_action = false;

  bool operator==(const FrameSample&) const = default;
};

// Per video, exactly n_per_class idle and n_per_class action frame indices,
// stratified-uniformly sampled. Videos are processed independently with
// per-video derived seeds, so the result does not depend on processing order.
inline std::vector<FrameSample> sample_balanced_frames(
    const std::vector<AnnotationRecord>& annotations, long n_per_class,
    std::uint64_t seed) {
  check(n_per_class >= 0, "n_per_class must be non-negative");
  std::vector<FrameSample> out;
  for (const AnnotationRecord& rec : annotations) {
    validate(rec);
    std::vector<long> action, idle;
    long cursor = 0;
    for (const Segment& s : rec.segments) {
      for (long f = cursor; f < s.start; ++f) idle.push_back(f);
      for (long f = s.start; f < s.end; ++f) action.push_back(f);
      cursor = s.end;
    }
    for (long f = cursor; f < rec.total_frames; ++f) idle.push_back(f);
    if (static_cast<long>(idle.size()) < n_per_class)
      throw std::invalid_argument("video '" + rec.video_id + "' has only " +
                                  std::to_string(idle.size()) + " idle frames, " +
                                  std::to_string(n_per_class) + " required");
    if (static_cast<long>(action.size()) < n_per_class)
      throw std::invalid_argument("video '" + rec.video_id + "' has only " +
                                  std::to_string(action.size()) + " action frames, " +
                                  std::to_string(n_per_class) + " required");
    Rng idle_rng(derive_seed(seed, "frames/idle", rec.video_id));
    Rng action_rng(derive_seed(seed, "frames/action", rec.video_id));
    for (long f : detail::sample_uniform(idle, n_per_class, idle_rng))
      out.push_back({rec.video_id, f, false});
    for (long f : detail::sample_uniform(action, n_per_class, action_rng))
      out.push_back({rec.video_id, f, true});
  }
  return out;
}

// Train/test clip selection. Video id sets are disjoint by construction.
struct SplitManifest {
  std::vector<std::string> train_videos;
  std::vector<std::string> test_videos;
  std::map<PhaseLabel, std::vector<ClipSpec>> train_clips;
  std::map<PhaseLabel, std::vector<ClipSpec>> test_clips;
};

inline void validate(const SplitManifest& m) {
  std::set<std::string> train(m.train_videos.begin(), m.train_videos.end());
  for (const std::string& v : m.test_videos)
    check(!train.count(v), "video '" + v + "' appears in both train and test splits");
  auto check_clips = [&](const std::map<PhaseLabel, std::vector<ClipSpec>>& clips,
                         const std::vector<std::string>& videos, const char* split) {
    std::set<std::string> ids(videos.begin(), videos.end());
    for (const auto& [label, list] : clips)
      for (const ClipSpec& c : list) {
        check(c.label == label, "clip listed under wrong class");
        check(ids.count(c.video_id) > 0, "clip of video '" + c.video_id +
                                             "' does not belong to the " + split + " split");
      }
  };
  check_clips(m.train_clips, m.train_videos, "train");
  check_clips(m.test_clips, m.test_videos, "test");
}

// Uniformly samples n_train clips per class from the train pools and n_test
// per class from the test pools. Shortfalls name the class and split.
inline SplitManifest sample_clip_dataset(
    const std::map<PhaseLabel, std::vector<ClipSpec>>& train_pool,
    const std::map<PhaseLabel, std::vector<ClipSpec>>& test_pool,
    std::vector<std::string> train_videos, std::vector<std::string> test_videos,
    long n_train, long n_test, std::uint64_t seed) {
  SplitManifest m;
  m.train_videos = std::move(train_videos);
  m.test_videos = std::move(test_videos);
  auto take = [&](const std::map<PhaseLabel, std::vector<ClipSpec>>& pool, long n,
                  const char* split) {
    std::map<PhaseLabel, std::vector<ClipSpec>> out;
    for (const auto& [label, clips] : pool) {
      if (static_cast<long>(clips.size()) < n)
        throw std::invalid_argument(
            "class " + std::string(to_string(label)) + " has only " +
            std::to_string(clips.size()) + " clips in the " + split + " split, " +
            std::to_string(n) + " required");
      Rng rng(derive_seed(seed, split, to_string(label)));
      out[label] = detail::sample_uniform(clips, n, rng);
    }
    return out;
  };
  m.train_clips = take(train_pool, n_train, "train");
  m.test_clips = take(test_pool, n_test, "test");
  validate(m);
  return m;
}

// Balanced binary clip set for one one-vs-rest task: all target-class clips
// against an equally sized stratified sample pooled from every other class.
inline std::vector<std::pair<ClipSpec, int>> binary_task_clips(
    const std::map<PhaseLabel, std::vector<ClipSpec>>& clips_by_class,
    PhaseLabel target, std::uint64_t seed) {
  auto it = clips_by_class.find(target);
  check(it != clips_by_class.end() && !it->second.empty(),
        "no clips for target class " + std::string(to_string(target)));
  std::vector<std::pair<ClipSpec, int>> out;
  for (const ClipSpec& c : it->second) out.emplace_back(c, 1);

  std::vector<ClipSpec> negatives;
  for (const auto& [label, clips] : clips_by_class) {
    if (label == target) continue;
    negatives.insert(negatives.end(), clips.begin(), clips.end());
  }
  const long n = static_cast<long>(it->second.size());
  check(static_cast<long>(negatives.size()) >= n,
        "not enough rest clips to balance task " + std::string(to_string(target)));
  Rng rng(derive_seed(seed, "binary-rest", to_string(target)));
  for (const ClipSpec& c : detail::sample_uniform(negatives, n, rng))
    out.emplace_back(c, 0);
  return out;
}

// k frame indices for a clip, one drawn per equal-length temporal bin, so the
// result is strictly increasing and covers the clip span. Bin j is
// [floor(j*L/k), floor((j+1)*L/k)). The draw is seeded per clip identity.
inline std::vector<long> sequence_sample(const ClipSpec& clip, long k, std::uint64_t seed) {
  check(clip.clip_len >= 1, "clip_len must be >= 1");
  if (k > clip.clip_len)
    throw std::invalid_argument("sequence_sample: k = " + std::to_string(k) +
                                " exceeds clip length " + std::to_string(clip.clip_len));
  check(k >= 1, "sequence_sample: k must be >= 1");
  Rng rng(derive_seed(derive_seed(seed, "seq", clip.video_id),
                      "start", static_cast<std::uint64_t>(clip.start)));
  std::vector<long> idx(static_cast<std::size_t>(k));
  for (long j = 0; j < k; ++j) {
    const long lo = j * clip.clip_len / k;
    const long hi = (j + 1) * clip.clip_len / k;
    idx[static_cast<std::size_t>(j)] = rng.range_long(lo, hi - 1);
  }
  return idx;
}

// Deterministic variant used at evaluation time: the center of each bin.
inline std::vector<long> sequence_centers(long clip_len, long k) {
  check(k >= 1 && k <= clip_len, "sequence_centers: need 1 <= k <= clip_len");
  std::vector<long> idx(static_cast<std::size_t>(k));
  for (long j = 0; j < k; ++j) {
    const long lo = j * clip_len / k;
    const long hi = (j + 1) * clip_len / k;
    idx[static_cast<std::size_t>(j)] = (lo + hi - 1) / 2;
  }
  return idx;
}

// --- text formats ---
// Annotations: `video_id,start,end,label` per segment.
// Clip manifests: `video_id,start,clip_len,label,split`.
// Frame manifests: `video_id,frame,idle|action`.

inline void write_annotations(std::ostream& os, const std::vector<AnnotationRecord>& recs) {
  for (const AnnotationRecord& rec : recs)
    for (const Segment& s : rec.segments)
      os << rec.video_id << ',' << s.start << ',' << s.end << ','
         << to_string(s.label) << '\n';
}

// Reads segment records grouped by video (order of first appearance).
// total_frames is not part of the format; callers resolve it from the frame
// source (or any other authority) afterwards.
inline std::vector<AnnotationRecord> read_annotations(std::istream& is) {
  std::vector<AnnotationRecord> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  while (std::getline(is, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto f = split(t, ',');
    check(f.size() == 4, "annotation record must be video_id,start,end,label: '" + line + "'");
    const std::string vid(f[0]);
    auto [it, inserted] = index.emplace(vid, out.size());
    if (inserted) out.push_back({vid, 0, {}});
    Segment s{parse_long(f[1], "start"), parse_long(f[2], "end"),
              phase_from_string(f[3])};
    validate(s);
    out[it->second].segments.push_back(s);
  }
  for (AnnotationRecord& rec : out) {
    std::sort(rec.segments.begin(), rec.segments.end(),
              [](const Segment& a, const Segment& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < rec.segments.size(); ++i)
      check(rec.segments[i].start >= rec.segments[i - 1].end,
            "segments of '" + rec.video_id + "' overlap");
  }
  return out;
}

inline void write_clip_manifest(std::ostream& os, const SplitManifest& m) {
  auto dump = [&](const std::map<PhaseLabel, std::vector<ClipSpec>>& clips,
                  const char* split) {
    for (const auto& [label, list] : clips)
      for (const ClipSpec& c : list)
        os << c.video_id << ',' << c.start << ',' << c.clip_len << ','
           << to_string(c.label) << ',' << split << '\n';
  };
  dump(m.train_clips, "train");
  dump(m.test_clips, "test");
}

inline SplitManifest read_clip_manifest(std::istream& is) {
  SplitManifest m;
  std::set<std::string> train_ids, test_ids;
  std::string line;
  while (std::getline(is, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto f = split(t, ',');
    check(f.size() == 5, "clip record must be video_id,start,clip_len,label,split: '" + line + "'");
    ClipSpec c{std::string(f[0]), parse_long(f[1], "start"),
               parse_long(f[2], "clip_len"), phase_from_string(f[3])};
    const auto split_name = f[4];
    if (split_name == "train") {
      m.train_clips[c.label].push_back(c);
      train_ids.insert(c.video_id);
    } else if (split_name == "test") {
      m.test_clips[c.label].push_back(c);
      test_ids.insert(c.video_id);
    } else {
      throw std::invalid_argument("unknown split '" + std::string(split_name) + "'");
    }
  }
  m.train_videos.assign(train_ids.begin(), train_ids.end());
  m.test_videos.assign(test_ids.begin(), test_ids.end());
  validate(m);
  return m;
}

inline void write_frame_manifest(std::ostream& os, const std::vector<FrameSample>& frames) {
  for (const FrameSample& s : frames)
    os << s.video_id << ',' << s.frame << ',' << (s.is_action ? "action" : "idle") << '\n';
}

inline std::vector<FrameSample> read_frame_manifest(std::istream& is) {
  std::vector<FrameSample> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto f = split(t, ',');
    check(f.size() == 3, "frame record must be video_id,frame,class: '" + line + "'");
    check(f[2] == "idle" || f[2] == "action", "frame class must be idle or action");
    out.push_back({std::string(f[0]), parse_long(f[1], "frame"), f[2] == "action"});
  }
  return out;
}

}  // namespace phaselocal
