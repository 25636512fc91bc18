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

#include <filesystem>
#include <fstream>
#include <set>

#include "phaselocal/fixtures.hpp"
#include "phaselocal/framesource.hpp"

using namespace phaselocal;

namespace {

FixtureConfig small_config() {
  FixtureConfig cfg;
  cfg.n_videos = 2;
  cfg.width = 48;
  cfg.height = 48;
  cfg.idle_min = 6;
  cfg.idle_max = 10;
  cfg.action_min = 14;
  cfg.action_max = 22;
  cfg.rest_segments = 1;
  cfg.seed = 99;
  return cfg;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("every requested phase appears in every fixture video", "[fixtures]") {
  TempDir dir("phaselocal_fixture_phases");
  const FixtureSet set = make_fixtures(small_config(), dir.path);
  REQUIRE(set.videos.size() == 2);
  for (const FixtureVideo& v : set.videos) {
    std::set<PhaseLabel> seen;
    for (const Segment& s : v.annotation.segments) seen.insert(s.label);
    for (PhaseLabel phase : kRelevantPhases) CHECK(seen.count(phase) == 1);
    CHECK(seen.count(PhaseLabel::Rest) == 1);
  }
}

TEST_CASE("fixture annotations round-trip through the parser", "[fixtures]") {
  TempDir dir("phaselocal_fixture_roundtrip");
  const FixtureSet set = make_fixtures(small_config(), dir.path);
  std::ifstream is(dir.path / "annotations.csv");
  const auto parsed = read_annotations(is);
  REQUIRE(parsed.size() == set.videos.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].video_id == set.videos[i].video_id);
    CHECK(parsed[i].segments == set.videos[i].annotation.segments);
  }
}

TEST_CASE("fixture segments are idle-delimited", "[fixtures]") {
  TempDir dir("phaselocal_fixture_idle");
  const FixtureSet set = make_fixtures(small_config(), dir.path);
  for (const FixtureVideo& v : set.videos) {
    // The truth timeline's action runs must coincide with the annotation.
    const auto segments = extract_action_segments(v.truth);
    REQUIRE(segments.size() == v.annotation.segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) {
      CHECK(segments[i] == v.annotation.segments[i]);
      // Idle on both sides of every segment.
      CHECK(segments[i].start > 0);
      CHECK(v.truth.labels[static_cast<std::size_t>(segments[i].start - 1)] == PhaseLabel::Idle);
      if (segments[i].end < v.truth.frame_count())
        CHECK(v.truth.labels[static_cast<std::size_t>(segments[i].end)] == PhaseLabel::Idle);
    }
  }
}

TEST_CASE("fixture frames land on disk and read back through the frame source",
          "[fixtures]") {
  TempDir dir("phaselocal_fixture_source");
  const FixtureSet set = make_fixtures(small_config(), dir.path);
  const DirectoryFrameSource source(dir.path / "videos");
  const auto ids = source.video_ids();
  REQUIRE(ids.size() == set.videos.size());
  for (const FixtureVideo& v : set.videos) {
    CHECK(source.frame_count(v.video_id) == v.annotation.total_frames);
    const Image frame = source.frame(v.video_id, 0);
    CHECK(frame.width == 48);
    CHECK(frame.height == 48);
  }
  CHECK_THROWS(source.frame(set.videos[0].video_id, 999999));
  CHECK_THROWS(source.frame_count("nonexistent"));

  std::ifstream vis(dir.path / "videos.csv");
  const auto index = read_video_index(vis);
  REQUIRE(index.size() == set.videos.size());
  CHECK(index[0].total_frames == set.videos[0].annotation.total_frames);
  CHECK(index[0].fps == 25.0);
}

TEST_CASE("reference detector tracks the fixture disk boxes", "[fixtures]") {
  TempDir dir("phaselocal_fixture_detector");
  const FixtureSet set = make_fixtures(small_config(), dir.path);
  const DirectoryFrameSource source(dir.path / "videos");
  const ReferenceDetector detector;
  const FixtureVideo& v = set.videos[0];
  for (long f = 0; f < v.annotation.total_frames; f += 7) {
    const auto dets = detector.detect(source.frame(v.video_id, f));
    REQUIRE(!dets.empty());
    CHECK(iou(dets.front().bbox, v.disk_boxes[static_cast<std::size_t>(f)].box) >= 0.9);
  }
}

TEST_CASE("fixture generation is deterministic per seed", "[fixtures]") {
  TempDir a("phaselocal_fixture_det_a"), b("phaselocal_fixture_det_b");
  const FixtureSet sa = make_fixtures(small_config(), a.path);
  const FixtureSet sb = make_fixtures(small_config(), b.path);
  REQUIRE(sa.videos.size() == sb.videos.size());
  for (std::size_t i = 0; i < sa.videos.size(); ++i) {
    CHECK(sa.videos[i].annotation.segments == sb.videos[i].annotation.segments);
    CHECK(sa.videos[i].truth.labels == sb.videos[i].truth.labels);
  }
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  const auto rel = std::filesystem::path("videos") / sa.videos[0].video_id / frame_file_name(3);
  CHECK(slurp(a.path / rel) == slurp(b.path / rel));

  FixtureConfig other = small_config();
  other.seed = 100;
  TempDir c("phaselocal_fixture_det_c");
  const FixtureSet sc = make_fixtures(other, c.path);
  CHECK(sa.videos[0].truth.labels != sc.videos[0].truth.labels);
}

TEST_CASE("truth timelines file matches the in-memory truth", "[fixtures]") {
  TempDir dir("phaselocal_fixture_truth");
  const FixtureSet set = make_fixtures(small_config(), dir.path);
  std::ifstream is(dir.path / "truth_timelines.csv");
  const auto timelines = read_timelines(is);
  REQUIRE(timelines.size() == set.videos.size());
  for (std::size_t i = 0; i < timelines.size(); ++i)
    CHECK(timelines[i].labels == set.videos[i].truth.labels);
}

TEST_CASE("fixture config validation", "[fixtures]") {
  FixtureConfig cfg = small_config();
  cfg.n_phases = 5;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.width = 8;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.idle_min = 0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}
