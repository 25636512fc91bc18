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
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "phaselocal/image.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// Half-open pixel box [x0,x1) x [y0,y1).
struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double area() const { return (x1 - x0) * (y1 - y0); }
  bool operator==(const BBox&) const = default;
};

inline void validate(const BBox& b) {
  check(b.x0 < b.x1 && b.y0 < b.y1, "bbox must have positive extent");
}

inline double iou(const BBox& a, const BBox& b) {
  validate(a);
  validate(b);
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

// Frame-sized binary mask.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int y, int x) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  BBox tight_bbox() const {
    int min_x = width, min_y = height, max_x = -1, max_y = -1;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (at(y, x)) {
          min_x = std::min(min_x, x);
          max_x = std::max(max_x, x);
          min_y = std::min(min_y, y);
          max_y = std::max(max_y, y);
        }
    check(max_x >= 0, "tight_bbox: empty mask");
    return {static_cast<double>(min_x), static_cast<double>(min_y),
            static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};
  }
};

struct Detection {
  BBox bbox;
  std::optional<Mask> mask;
  double score = 0.0;
};

// Behavioral contract for cornea detectors. Implementations must return
// detections sorted by descending score. The production-scale instance
// segmentation model plugs in behind this interface.
class DetectorInterface {
 public:
  virtual ~DetectorInterface() = default;
  virtual std::vector<Detection> detect(const Image& frame) const = 0;
};

// Crops the detection's bounding box (clipped to the frame) and resamples it
// to the classifier input size. Aspect ratio is not preserved.
inline Image crop_to_cornea(const Image& frame, const Detection& det,
                            int target_w, int target_h) {
  validate(det.bbox);
  const int x0 = static_cast<int>(std::floor(det.bbox.x0));
  const int y0 = static_cast<int>(std::floor(det.bbox.y0));
  const int x1 = static_cast<int>(std::ceil(det.bbox.x1));
  const int y1 = static_cast<int>(std::ceil(det.bbox.y1));
  check(std::min(x1, frame.width) > std::max(x0, 0) &&
            std::min(y1, frame.height) > std::max(y0, 0),
        "crop_to_cornea: bbox has zero area after clipping to the frame");
  return resize_bilinear(crop(frame, x0, y0, x1, y1), target_w, target_h);
}

// --- AP / mAP evaluation ---

struct EvalConfig {
  std::vector<double> iou_thresholds;

  // Inclusive range with a fixed step, default 0.50..0.95 step 0.05.
  static EvalConfig range(double from = 0.50, double to = 0.95, double step = 0.05) {
    check(step > 0, "iou step must be positive");
    EvalConfig cfg;
    for (int k = 0;; ++k) {
      const double t = from + k * step;
      if (t > to + 1e-12) break;
      cfg.iou_thresholds.push_back(t);
    }
    validate_thresholds(cfg);
    return cfg;
  }

  static void validate_thresholds(const EvalConfig& cfg) {
    check(!cfg.iou_thresholds.empty(), "no IoU thresholds configured");
    double prev = 0.0;
    for (double t : cfg.iou_thresholds) {
      check(t > 0.0 && t <= 1.0, "IoU thresholds must lie in (0,1]");
      check(t > prev, "IoU thresholds must be strictly increasing");
      prev = t;
    }
  }
};

// One detection record; images are keyed by (video_id, frame).
struct DetRecord {
  std::string video_id;
  long frame = 0;
  BBox box;
  double score = 0.0;
};

struct GtRecord {
  std::string video_id;
  long frame = 0;
  BBox box;
};

namespace detail {
inline std::vector<std::size_t> rank_by_score(const std::vector<DetRecord>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}
}  // namespace detail

// All-point interpolated AP over the score-ranked precision/recall curve with
// greedy one-to-one matching at the given IoU threshold.
inline double average_precision(const std::vector<DetRecord>& dets,
                                const std::vector<GtRecord>& gt,
                                double iou_threshold) {
  check(!gt.empty(), "average_precision: empty ground truth");
  for (const GtRecord& g : gt) validate(g.box);
  std::map<std::pair<std::string, long>, std::vector<std::size_t>> gt_by_image;
  for (std::size_t i = 0; i < gt.size(); ++i)
    gt_by_image[{gt[i].video_id, gt[i].frame}].push_back(i);

  std::vector<char> gt_matched(gt.size(), 0);
  std::vector<char> is_tp;
  is_tp.reserve(dets.size());
  for (std::size_t idx : detail::rank_by_score(dets)) {
    const DetRecord& d = dets[idx];
    auto it = gt_by_image.find({d.video_id, d.frame});
    bool matched = false;
    if (it != gt_by_image.end()) {
      double best = iou_threshold;
      std::size_t best_gt = gt.size();
      for (std::size_t gi : it->second) {
        if (gt_matched[gi]) continue;
        const double v = iou(d.box, gt[gi].box);
        if (v >= best) {
          best = v;
          best_gt = gi;
        }
      }
      if (best_gt < gt.size()) {
        gt_matched[best_gt] = 1;
        matched = true;
      }
    }
    is_tp.push_back(matched ? 1 : 0);
  }

  const double n_gt = static_cast<double>(gt.size());
  double ap = 0.0;
  long tp = 0;
  // Area under the PR curve with the precision envelope: scan ranks from the
  // bottom keeping the running max precision, add area at each recall step.
  std::vector<double> precision_at(is_tp.size());
  for (std::size_t k = 0; k < is_tp.size(); ++k) {
    tp += is_tp[k];
    precision_at[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  double env = 0.0;
  for (std::size_t k = is_tp.size(); k-- > 0;) {
    env = std::max(env, precision_at[k]);
    if (is_tp[k]) ap += env / n_gt;
  }
  return ap;
}

struct APReport {
  std::vector<std::pair<double, double>> ap_by_threshold;  // (threshold, AP)
  double mean_ap = 0.0;

  double at(double threshold) const {
    for (const auto& [t, ap] : ap_by_threshold)
      if (std::abs(t - threshold) < 1e-9) return ap;
    throw std::invalid_argument("threshold not evaluated: " + format_double(threshold));
  }
};

inline APReport map_over_range(const std::vector<DetRecord>& dets,
                               const std::vector<GtRecord>& gt,
                               const EvalConfig& cfg) {
  EvalConfig::validate_thresholds(cfg);
  APReport report;
  double sum = 0.0;
  for (double t : cfg.iou_thresholds) {
    const double ap = average_precision(dets, gt, t);
    report.ap_by_threshold.emplace_back(t, ap);
    sum += ap;
  }
  report.mean_ap = sum / static_cast<double>(cfg.iou_thresholds.size());
  return report;
}

// --- reference detector ---

// Desk-scale stand-in for the external instance-segmentation model: finds
// bright connected blobs and ranks them by size and circular fill ratio.
class ReferenceDetector : public DetectorInterface {
 public:
  explicit ReferenceDetector(float brightness_threshold = 110.f, int min_area = 9)
      : threshold_(brightness_threshold), min_area_(min_area) {}

  std::vector<Detection> detect(const Image& frame) const override {
    const int w = frame.width, h = frame.height;
    std::vector<std::uint8_t> bright(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float lum = 0.f;
        for (int c = 0; c < frame.channels; ++c) lum += frame.at(y, x, c);
        lum /= static_cast<float>(frame.channels);
        bright[static_cast<std::size_t>(y) * w + x] = lum >= threshold_ ? 1 : 0;
      }

    struct Blob {
      long area = 0;
      int min_x, min_y, max_x, max_y;
      std::vector<std::uint8_t> mask;
    };
    std::vector<Blob> blobs;
    std::vector<std::uint8_t> seen(bright.size(), 0);
    std::vector<int> stack;
    for (int sy = 0; sy < h; ++sy)
      for (int sx = 0; sx < w; ++sx) {
        const std::size_t s0 = static_cast<std::size_t>(sy) * w + sx;
        if (!bright[s0] || seen[s0]) continue;
        Blob blob{0, sx, sy, sx, sy, std::vector<std::uint8_t>(bright.size(), 0)};
        stack.assign(1, static_cast<int>(s0));
        seen[s0] = 1;
        while (!stack.empty()) {
          const int p = stack.back();
          stack.pop_back();
          const int y = p / w, x = p % w;
          blob.mask[static_cast<std::size_t>(p)] = 1;
          ++blob.area;
          blob.min_x = std::min(blob.min_x, x);
          blob.max_x = std::max(blob.max_x, x);
          blob.min_y = std::min(blob.min_y, y);
          blob.max_y = std::max(blob.max_y, y);
          const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
          for (const auto& q : nbr) {
            if (q[0] < 0 || q[0] >= w || q[1] < 0 || q[1] >= h) continue;
            const std::size_t qi = static_cast<std::size_t>(q[1]) * w + q[0];
            if (bright[qi] && !seen[qi]) {
              seen[qi] = 1;
              stack.push_back(static_cast<int>(qi));
            }
          }
        }
        if (blob.area >= min_area_) blobs.push_back(std::move(blob));
      }
    if (blobs.empty()) return {};

    long max_area = 0;
    for (const Blob& b : blobs) max_area = std::max(max_area, b.area);
    std::vector<Detection> dets;
    dets.reserve(blobs.size());
    constexpr double kDiskFill = 0.7853981633974483;  // pi/4, ideal disk-in-bbox ratio
    for (Blob& b : blobs) {
      Detection d;
      d.bbox = {static_cast<double>(b.min_x), static_cast<double>(b.min_y),
                static_cast<double>(b.max_x + 1), static_cast<double>(b.max_y + 1)};
      const double fill = static_cast<double>(b.area) / d.bbox.area();
      const double rel = static_cast<double>(b.area) / static_cast<double>(max_area);
      d.score = rel * std::min(1.0, fill / kDiskFill);
      d.mask = Mask{w, h, std::move(b.mask)};
      dets.push_back(std::move(d));
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.bbox.area() > b.bbox.area();
    });
    return dets;
  }

 private:
  float threshold_;
  int min_area_;
};

// --- detection file I/O ---
// Detections: `video_id,frame,x0,y0,x1,y1,score`; ground truth omits score.

inline void write_detections(std::ostream& os, const std::vector<DetRecord>& dets) {
  for (const DetRecord& d : dets)
    os << d.video_id << ',' << d.frame << ',' << format_double(d.box.x0) << ','
       << format_double(d.box.y0) << ',' << format_double(d.box.x1) << ','
       << format_double(d.box.y1) << ',' << format_double(d.score) << '\n';
}

inline std::vector<DetRecord> read_detections(std::istream& is) {
  std::vector<DetRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto f = split(t, ',');
    check(f.size() == 7, "detection record must have 7 fields: '" + line + "'");
    DetRecord d;
    d.video_id = std::string(f[0]);
    d.frame = parse_long(f[1], "frame");
    d.box = {parse_double(f[2], "x0"), parse_double(f[3], "y0"),
             parse_double(f[4], "x1"), parse_double(f[5], "y1")};
    d.score = parse_double(f[6], "score");
    out.push_back(std::move(d));
  }
  return out;
}

inline void write_ground_truth(std::ostream& os, const std::vector<GtRecord>& gt) {
  for (const GtRecord& g : gt)
    os << g.video_id << ',' << g.frame << ',' << format_double(g.box.x0) << ','
       << format_double(g.box.y0) << ',' << format_double(g.box.x1) << ','
       << format_double(g.box.y1) << '\n';
}

inline std::vector<GtRecord> read_ground_truth(std::istream& is) {
  std::vector<GtRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto f = split(t, ',');
    check(f.size() == 6, "ground-truth record must have 6 fields: '" + line + "'");
    GtRecord g;
    g.video_id = std::string(f[0]);
    g.frame = parse_long(f[1], "frame");
    g.box = {parse_double(f[2], "x0"), parse_double(f[3], "y0"),
             parse_double(f[4], "x1"), parse_double(f[5], "y1")};
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace phaselocal
