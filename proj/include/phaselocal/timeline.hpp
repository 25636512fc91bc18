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

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "phaselocal/phase.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// Half-open frame interval [start, end) carrying one label.
struct Segment {
  long start = 0;
  long end = 0;
  PhaseLabel label = PhaseLabel::Rest;

  long length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

inline void validate(const Segment& s) {
  check(s.start >= 0 && s.start < s.end,
        "segment requires 0 <= start < end, got [" + std::to_string(s.start) +
            "," + std::to_string(s.end) + ")");
}

// Frame-indexed label sequence for one video.
struct Timeline {
  std::string video_id;
  double fps = 25.0;
  std::vector<PhaseLabel> labels;

  long frame_count() const { return static_cast<long>(labels.size()); }
};

inline void validate(const Timeline& t) {
  check(!t.labels.empty(), "timeline for '" + t.video_id + "' has no frames");
  check(t.fps > 0, "timeline fps must be positive");
}

// Temporal mean filter window; must be odd so full windows cannot tie.
struct FilterConfig {
  int window = 15;
};

inline void validate(const FilterConfig& cfg) {
  check(cfg.window >= 1 && cfg.window % 2 == 1,
        "filter window must be an odd positive integer, got " +
            std::to_string(cfg.window));
}

// Majority vote over the centered window, truncated at the sequence edges.
// Equivalent to mean-then-threshold at 0.5 on 0/1 labels. A truncated window
// of even length can tie; the original label is kept in that case.
inline void mean_filter(std::span<const std::uint8_t> labels, const FilterConfig& cfg,
                        std::vector<std::uint8_t>& out) {
  validate(cfg);
  check(!labels.empty(), "mean_filter: no frames to filter");
  const long n = static_cast<long>(labels.size());
  const long half = cfg.window / 2;
  out.resize(labels.size());
  long lo = 0, hi = -1;  // current window [lo, hi]
  long sum = 0;
  for (long i = 0; i < n; ++i) {
    const long want_lo = i - half < 0 ? 0 : i - half;
    const long want_hi = i + half >= n ? n - 1 : i + half;
    while (hi < want_hi) sum += labels[static_cast<std::size_t>(++hi)];
    while (lo < want_lo) sum -= labels[static_cast<std::size_t>(lo++)];
    const long count = want_hi - want_lo + 1;
    const long twice = 2 * sum;
    std::uint8_t v;
    if (twice > count)
      v = 1;
    else if (twice < count)
      v = 0;
    else
      v = labels[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = v;
  }
}

inline std::vector<std::uint8_t> mean_filter(const std::vector<std::uint8_t>& labels,
                                             const FilterConfig& cfg) {
  std::vector<std::uint8_t> out;
  mean_filter(std::span<const std::uint8_t>(labels), cfg, out);
  return out;
}

// Maximal runs of consecutive non-Idle frames, in increasing start order.
// A run's label is the label of its first frame (runs cut from annotated
// timelines are uniform because action phases are idle-delimited).
inline std::vector<Segment> extract_action_segments(const Timeline& t) {
  std::vector<Segment> out;
  const long n = t.frame_count();
  long run_start = -1;
  for (long i = 0; i <= n; ++i) {
    const bool action = i < n && t.labels[static_cast<std::size_t>(i)] != PhaseLabel::Idle;
    if (action && run_start < 0) {
      run_start = i;
    } else if (!action && run_start >= 0) {
      out.push_back({run_start, i, t.labels[static_cast<std::size_t>(run_start)]});
      run_start = -1;
    }
  }
  return out;
}

// Builds a timeline from raw per-frame idle/action predictions. Action frames
// are provisionally labeled Rest; the ensemble assigns phases later.
inline Timeline timeline_from_predictions(std::string video_id, double fps,
                                          const std::vector<std::uint8_t>& predictions,
                                          const FilterConfig& cfg,
                                          std::optional<long> expected_frames = std::nullopt) {
  check(!predictions.empty(), "timeline_from_predictions: no predictions");
  check(fps > 0, "timeline_from_predictions: fps must be positive");
  if (expected_frames)
    check(*expected_frames == static_cast<long>(predictions.size()),
          "prediction count " + std::to_string(predictions.size()) +
              " does not match declared frame count " + std::to_string(*expected_frames));
  Timeline t;
  t.video_id = std::move(video_id);
  t.fps = fps;
  const std::vector<std::uint8_t> filtered = mean_filter(predictions, cfg);
  t.labels.reserve(filtered.size());
  for (std::uint8_t v : filtered)
    t.labels.push_back(v ? PhaseLabel::Rest : PhaseLabel::Idle);
  return t;
}

// Text format: header `video_id,fps,num_frames`, then one `index,label` line
// per frame.
inline void write_timeline(std::ostream& os, const Timeline& t) {
  validate(t);
  check(t.video_id.find(',') == std::string::npos,
        "video id must not contain ',': '" + t.video_id + "'");
  os << t.video_id << ',' << format_double(t.fps) << ',' << t.frame_count() << '\n';
  for (long i = 0; i < t.frame_count(); ++i)
    os << i << ',' << to_string(t.labels[static_cast<std::size_t>(i)]) << '\n';
}

inline Timeline read_timeline(std::istream& is) {
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "timeline stream is empty");
  auto header = split(trim(line), ',');
  check(header.size() == 3, "timeline header must be video_id,fps,num_frames");
  Timeline t;
  t.video_id = std::string(header[0]);
  t.fps = parse_double(header[1], "fps");
  const long n = parse_long(header[2], "num_frames");
  check(n > 0, "timeline must declare at least one frame");
  t.labels.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    check(static_cast<bool>(std::getline(is, line)),
          "timeline truncated at frame " + std::to_string(i));
    auto fields = split(trim(line), ',');
    check(fields.size() == 2, "timeline frame line must be index,label");
    check(parse_long(fields[0], "frame index") == i,
          "timeline frame indices must be consecutive from 0");
    t.labels.push_back(phase_from_string(fields[1]));
  }
  validate(t);
  return t;
}

// Convenience for multi-video files: timelines are concatenated records.
inline void write_timelines(std::ostream& os, const std::vector<Timeline>& ts) {
  for (const Timeline& t : ts) write_timeline(os, t);
}

inline std::vector<Timeline> read_timelines(std::istream& is) {
  std::vector<Timeline> out;
  while (is.peek() != std::char_traits<char>::eof() && is.good()) {
    out.push_back(read_timeline(is));
    while (is.peek() == '\n') is.get();
  }
  return out;
}

}  // namespace phaselocal
