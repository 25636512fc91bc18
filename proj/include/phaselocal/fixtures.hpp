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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "phaselocal/dataset.hpp"
#include "phaselocal/framesource.hpp"
#include "phaselocal/image.hpp"
#include "phaselocal/localizer.hpp"
#include "phaselocal/rng.hpp"
#include "phaselocal/timeline.hpp"

namespace phaselocal {

// Synthetic desk-scale stand-in for real surgery recordings: a bright disk
// (the cornea) drifts over a dark background; during action segments a
// phase-coded instrument glyph moves inside the disk, idle segments show the
// disk alone. Ground truth (timelines, segment annotations, per-frame disk
// boxes) is exact by construction.
struct FixtureConfig {
  int n_videos = 6;
  int width = 64;
  int height = 64;
  double fps = 25.0;
  int n_phases = 4;        // how many of the relevant phases to plant
  int rest_segments = 2;   // additional non-relevant action segments per video
  long idle_min = 25, idle_max = 45;
  long action_min = 130, action_max = 190;
  std::uint64_t seed = 7;
};

inline void validate(const FixtureConfig& cfg) {
  check(cfg.n_videos >= 1, "need at least one fixture video");
  check(cfg.width >= 32 && cfg.height >= 32, "fixture frames must be at least 32x32");
  check(cfg.n_phases >= 1 && cfg.n_phases <= 4, "n_phases must be 1..4");
  check(cfg.rest_segments >= 0, "rest_segments must be >= 0");
  check(cfg.idle_min >= 1 && cfg.idle_min <= cfg.idle_max, "bad idle length range");
  check(cfg.action_min >= 1 && cfg.action_min <= cfg.action_max, "bad action length range");
  check(cfg.fps > 0, "fps must be positive");
}

struct FixtureVideo {
  std::string video_id;
  Timeline truth;
  AnnotationRecord annotation;
  std::vector<GtRecord> disk_boxes;  // per frame
};

struct FixtureSet {
  FixtureConfig config;
  std::vector<FixtureVideo> videos;
};

namespace detail {

struct GlyphStyle {
  float r, g, b;
  int shape;  // 0 cross, 1 square, 2 triangle, 3 diamond, 4 bar
};

inline GlyphStyle glyph_style(PhaseLabel label) {
  switch (label) {
    case PhaseLabel::Rhexis: return {230, 60, 50, 0};
    case PhaseLabel::Phaco: return {60, 200, 70, 1};
    case PhaseLabel::IrrAspVisc: return {70, 110, 235, 2};
    case PhaseLabel::LensImpl: return {235, 210, 60, 3};
    default: return {225, 70, 210, 4};  // Rest
  }
}

// Instrument shaft: a dim 2-px line from the frame border toward the glyph,
// stopping just outside the disk. Its colors stay below the detector
// brightness threshold and never overwrite disk pixels, so cornea boxes are
// unaffected.
inline void draw_shaft(Image& img, double from_x, double from_y, double to_x, double to_y,
                       double disk_x, double disk_y, double radius, const GlyphStyle& style) {
  const float r = style.r * 0.45f, g = style.g * 0.45f, b = style.b * 0.45f;
  const double len = std::hypot(to_x - from_x, to_y - from_y);
  const int steps = std::max(2, static_cast<int>(len));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const double x = from_x + t * (to_x - from_x);
    const double y = from_y + t * (to_y - from_y);
    if (std::hypot(x - disk_x, y - disk_y) <= radius + 2.0) break;
    fill_rect(img, static_cast<int>(x), static_cast<int>(y), static_cast<int>(x) + 2,
              static_cast<int>(y) + 2, r, g, b);
  }
}

inline void draw_glyph(Image& img, double cx, double cy, double size,
                       const GlyphStyle& style) {
  const int s = std::max(2, static_cast<int>(size));
  const int x = static_cast<int>(cx), y = static_cast<int>(cy);
  switch (style.shape) {
    case 0:  // cross
      fill_rect(img, x - s, y - 1, x + s + 1, y + 2, style.r, style.g, style.b);
      fill_rect(img, x - 1, y - s, x + 2, y + s + 1, style.r, style.g, style.b);
      break;
    case 1:  // square
      fill_rect(img, x - s, y - s, x + s + 1, y + s + 1, style.r, style.g, style.b);
      break;
    case 2:  // triangle (downward stack of widening rows)
      for (int row = 0; row <= 2 * s; ++row) {
        const int half = row / 2;
        fill_rect(img, x - half, y - s + row, x + half + 1, y - s + row + 1,
                  style.r, style.g, style.b);
      }
      break;
    case 3:  // diamond
      for (int row = -s; row <= s; ++row) {
        const int half = s - std::abs(row);
        fill_rect(img, x - half, y + row, x + half + 1, y + row + 1,
                  style.r, style.g, style.b);
      }
      break;
    default:  // bar
      fill_rect(img, x - s, y - 1, x + s + 1, y + 3, style.r, style.g, style.b);
      break;
  }
}

}  // namespace detail

// Segment plan for one video: leading idle, then the planted phases plus
// Rest segments in seeded order, each followed by an idle gap.
inline std::vector<Segment> plan_segments(const FixtureConfig& cfg, Rng& rng,
                                          long& total_frames) {
  std::vector<PhaseLabel> order;
  for (int i = 0; i < cfg.n_phases; ++i) order.push_back(kRelevantPhases[static_cast<std::size_t>(i)]);
  for (int i = 0; i < cfg.rest_segments; ++i) order.push_back(PhaseLabel::Rest);
  rng.shuffle(order);

  std::vector<Segment> segments;
  long cursor = rng.range_long(cfg.idle_min, cfg.idle_max);
  for (PhaseLabel label : order) {
    const long len = rng.range_long(cfg.action_min, cfg.action_max);
    segments.push_back({cursor, cursor + len, label});
    cursor += len + rng.range_long(cfg.idle_min, cfg.idle_max);
  }
  total_frames = cursor;
  return segments;
}

// Renders one frame and its exact disk bounding box.
inline Image render_fixture_frame(const FixtureConfig& cfg, double disk_x, double disk_y,
                                  double radius, PhaseLabel label, double glyph_dx,
                                  double glyph_dy, BBox& disk_box) {
  Image img(cfg.width, cfg.height, 3);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      img.at(y, x, 0) = 22;
      img.at(y, x, 1) = 24;
      img.at(y, x, 2) = 30;
    }
  fill_disk(img, disk_x, disk_y, radius, 205, 205, 212);

  // Exact tight box of the rendered disk pixels.
  int min_x = cfg.width, min_y = cfg.height, max_x = -1, max_y = -1;
  const double r2 = radius * radius;
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      const double dx = x - disk_x, dy = y - disk_y;
      if (dx * dx + dy * dy <= r2) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
    }
  disk_box = {static_cast<double>(min_x), static_cast<double>(min_y),
              static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};

  if (label != PhaseLabel::Idle) {
    const detail::GlyphStyle style = detail::glyph_style(label);
    const double gx = disk_x + glyph_dx, gy = disk_y + glyph_dy;
    // The instrument enters from the nearest vertical border.
    const double entry_x = disk_x < cfg.width / 2.0 ? 0.0 : cfg.width - 2.0;
    detail::draw_shaft(img, entry_x, gy >= 2 ? gy - 2 : 0, gx, gy, disk_x, disk_y, radius,
                       style);
    detail::draw_glyph(img, gx, gy, radius * 0.45, style);
  }
  return img;
}

// Generates all videos under <out>/videos/<video_id>/ plus the ground-truth
// side files. Returns the in-memory ground truth.
inline FixtureSet make_fixtures(const FixtureConfig& cfg, const std::filesystem::path& out) {
  validate(cfg);
  FixtureSet set;
  set.config = cfg;
  std::filesystem::create_directories(out / "videos");

  for (int v = 0; v < cfg.n_videos; ++v) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "video_%02d", v);
    FixtureVideo video;
    video.video_id = id_buf;

    Rng rng(derive_seed(cfg.seed, "fixture", video.video_id));
    long total_frames = 0;
    const std::vector<Segment> segments = plan_segments(cfg, rng, total_frames);

    video.annotation = {video.video_id, total_frames, segments};
    validate(video.annotation);
    video.truth = annotation_to_timeline(video.annotation, cfg.fps);

    const double radius = 11.0 + rng.unit() * 4.0;
    const double margin = radius + 3.0;
    double cx = rng.uniform(margin, cfg.width - margin);
    double cy = rng.uniform(margin, cfg.height - margin);
    double gdx = 0, gdy = 0;

    const std::filesystem::path dir = out / "videos" / video.video_id;
    std::filesystem::create_directories(dir);
    for (long f = 0; f < total_frames; ++f) {
      // Slow drift keeps the disk inside the frame.
      cx = std::clamp(cx + rng.uniform(-0.8, 0.8), margin, cfg.width - margin);
      cy = std::clamp(cy + rng.uniform(-0.8, 0.8), margin, cfg.height - margin);
      const double glyph_limit = radius * 0.35;
      gdx = std::clamp(gdx + rng.uniform(-0.6, 0.6), -glyph_limit, glyph_limit);
      gdy = std::clamp(gdy + rng.uniform(-0.6, 0.6), -glyph_limit, glyph_limit);

      BBox disk_box;
      const Image frame = render_fixture_frame(
          cfg, cx, cy, radius, video.truth.labels[static_cast<std::size_t>(f)], gdx, gdy,
          disk_box);
      write_ppm(dir / frame_file_name(f), frame);
      video.disk_boxes.push_back({video.video_id, f, disk_box});
    }
    set.videos.push_back(std::move(video));
  }

  // Ground-truth side files.
  {
    std::ofstream os(out / "annotations.csv");
    std::vector<AnnotationRecord> recs;
    for (const FixtureVideo& v : set.videos) recs.push_back(v.annotation);
    write_annotations(os, recs);
  }
  {
    std::ofstream os(out / "truth_timelines.csv");
    for (const FixtureVideo& v : set.videos) write_timeline(os, v.truth);
  }
  {
    std::ofstream os(out / "detector_gt.csv");
    std::vector<GtRecord> all;
    for (const FixtureVideo& v : set.videos)
      all.insert(all.end(), v.disk_boxes.begin(), v.disk_boxes.end());
    write_ground_truth(os, all);
  }
  {
    std::ofstream os(out / "videos.csv");
    for (const FixtureVideo& v : set.videos)
      os << v.video_id << ',' << v.annotation.total_frames << ','
         << format_double(set.config.fps) << '\n';
  }
  return set;
}

// `video_id,total_frames,fps` records written by make_fixtures.
struct VideoInfo {
  std::string video_id;
  long total_frames = 0;
  double fps = 25.0;
};

inline std::vector<VideoInfo> read_video_index(std::istream& is) {
  std::vector<VideoInfo> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto f = split(t, ',');
    check(f.size() == 3, "video index record must be video_id,total_frames,fps");
    out.push_back({std::string(f[0]), parse_long(f[1], "total_frames"),
                   parse_double(f[2], "fps")});
  }
  return out;
}

}  // namespace phaselocal
