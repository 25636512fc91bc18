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

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phaselocal/image.hpp"
#include "phaselocal/models.hpp"
#include "phaselocal/nn.hpp"
#include "phaselocal/rng.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

using nn::OptimizerSpec;

// --- learning-rate schedules -------------------------------------------------

// Piecewise-constant schedule: from each milestone epoch onward the rate is
// initial_lr / divisor. Divisors are relative to the initial rate, not
// compounded.
struct LRSchedule {
  double initial_lr = 1e-4;
  std::vector<std::pair<int, double>> milestones;  // (epoch, divisor)
  int total_epochs = 0;
};

inline void validate(const LRSchedule& s) {
  check(s.initial_lr > 0, "initial learning rate must be positive");
  check(s.total_epochs > 0, "schedule must cover at least one epoch");
  int prev_epoch = 0;
  for (const auto& [epoch, divisor] : s.milestones) {
    check(epoch > prev_epoch, "milestone epochs must be strictly increasing");
    check(divisor > 0, "milestone divisors must be positive");
    prev_epoch = epoch;
  }
}

inline double lr_at(const LRSchedule& s, int epoch) {
  validate(s);
  if (epoch < 0 || epoch >= s.total_epochs)
    throw std::invalid_argument("epoch " + std::to_string(epoch) +
                                " outside schedule of " + std::to_string(s.total_epochs) +
                                " epochs");
  double divisor = 1.0;
  for (const auto& [e, d] : s.milestones) {
    if (e > epoch) break;
    divisor = d;
  }
  return s.initial_lr / divisor;
}

// The production schedules. Static relevance heads: 40 epochs at 1e-4 with
// /2, /10, /20 cuts; the idle network: 30 epochs at 5e-4 with /5 and /10
// fine-tuning phases; recurrent heads: 15 epochs; the detector: 50 epochs at
// 1e-3 with /2, /10, /20, /100 cuts.
inline LRSchedule static_schedule() { return {1e-4, {{2, 2}, {20, 10}, {30, 20}}, 40}; }
inline LRSchedule idle_schedule() { return {5e-4, {{10, 5}, {20, 10}}, 30}; }
inline LRSchedule recurrent_feature_schedule() { return {1e-4, {{5, 2}}, 15}; }
inline LRSchedule recurrent_e2e_schedule() { return {1e-4, {}, 15}; }
inline LRSchedule detector_schedule() {
  return {1e-3, {{10, 2}, {20, 10}, {30, 20}, {40, 100}}, 50};
}

// --- augmentation --------------------------------------------------------------

// Parameter ranges for the six augmentation methods. Each method is applied
// independently with probability 0.5 per image; sampled parameters always lie
// inside the closed ranges. Identity parameter values (delta 0, gamma 1,
// sigma 0, kernel 1, pct 0, scale 1) leave the image bit-exact.
struct AugmentationSpec {
  double brightness_lo = -50, brightness_hi = 50;
  double gamma_lo = 0.5, gamma_hi = 2.0;
  double blur_sigma_lo = 0.0, blur_sigma_hi = 5.0;
  int motion_blur_kernel = 9;
  double crop_pad_lo = -0.25, crop_pad_hi = 0.25;
  double affine_scale_lo = 0.5, affine_scale_hi = 1.5;

  static AugmentationSpec identity() {
    AugmentationSpec s;
    s.brightness_lo = s.brightness_hi = 0;
    s.gamma_lo = s.gamma_hi = 1;
    s.blur_sigma_lo = s.blur_sigma_hi = 0;
    s.motion_blur_kernel = 1;
    s.crop_pad_lo = s.crop_pad_hi = 0;
    s.affine_scale_lo = s.affine_scale_hi = 1;
    return s;
  }
};

inline void validate(const AugmentationSpec& s) {
  check(s.brightness_lo <= s.brightness_hi, "brightness range inverted");
  check(s.gamma_lo <= s.gamma_hi && s.gamma_lo > 0, "gamma range must be positive");
  check(s.blur_sigma_lo <= s.blur_sigma_hi && s.blur_sigma_lo >= 0, "blur sigma range invalid");
  check(s.motion_blur_kernel >= 1 && s.motion_blur_kernel % 2 == 1,
        "motion blur kernel must be odd and >= 1");
  check(s.crop_pad_lo <= s.crop_pad_hi, "crop/pad range inverted");
  check(s.crop_pad_lo > -1.0, "crop fraction must leave pixels");
  check(s.affine_scale_lo <= s.affine_scale_hi && s.affine_scale_lo > 0,
        "affine scale range must be positive");
}

namespace detail {

inline void add_brightness(Image& img, double delta) {
  for (float& v : img.data) v = clamp255(v + static_cast<float>(delta));
}

inline void gamma_contrast(Image& img, double gamma) {
  for (float& v : img.data)
    v = static_cast<float>(255.0 * std::pow(clamp255(v) / 255.0, gamma));
}

inline Image gaussian_blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= sum;
  Image tmp(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xs = std::clamp(x + i, 0, img.width - 1);
          acc += k[static_cast<std::size_t>(i + radius)] * img.at(y, xs, c);
        }
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int ys = std::clamp(y + i, 0, img.height - 1);
          acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(ys, x, c);
        }
        out.at(y, x, c) = static_cast<float>(acc);
      }
  return out;
}

// Averages along a 1-px line through the kernel center at the given angle.
inline Image motion_blur(const Image& img, int kernel, double angle_rad) {
  const int half = kernel / 2;
  std::vector<std::pair<int, int>> taps;
  const double cx = std::cos(angle_rad), cy = std::sin(angle_rad);
  for (int t = -half; t <= half; ++t) {
    const int dx = static_cast<int>(std::lround(t * cx));
    const int dy = static_cast<int>(std::lround(t * cy));
    if (std::find(taps.begin(), taps.end(), std::make_pair(dx, dy)) == taps.end())
      taps.emplace_back(dx, dy);
  }
  Image out(img.width, img.height, img.channels);
  const double inv = 1.0 / static_cast<double>(taps.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (const auto& [dx, dy] : taps) {
          const int xs = std::clamp(x + dx, 0, img.width - 1);
          const int ys = std::clamp(y + dy, 0, img.height - 1);
          acc += img.at(ys, xs, c);
        }
        out.at(y, x, c) = static_cast<float>(acc * inv);
      }
  return out;
}

// Negative pct crops that fraction, positive pct pads black; either way the
// result is resized back to the source dimensions.
inline Image crop_and_pad(const Image& img, double pct) {
  const int dx = static_cast<int>(std::lround(std::abs(pct) * img.width / 2.0));
  const int dy = static_cast<int>(std::lround(std::abs(pct) * img.height / 2.0));
  if (dx == 0 && dy == 0) return img;
  if (pct < 0) {
    const Image inner = crop(img, dx, dy, img.width - dx, img.height - dy);
    return resize_bilinear(inner, img.width, img.height);
  }
  Image padded(img.width + 2 * dx, img.height + 2 * dy, img.channels, 0.f);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        padded.at(y + dy, x + dx, c) = img.at(y, x, c);
  return resize_bilinear(padded, img.width, img.height);
}

// Scales the content about the image center; uncovered regions are black.
inline Image affine_scale(const Image& img, double scale) {
  Image out(img.width, img.height, img.channels, 0.f);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double sx = cx + (x - cx) / scale;
      const double sy = cy + (y - cy) / scale;
      if (sx < 0 || sy < 0 || sx > img.width - 1 || sy > img.height - 1) continue;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const int x1 = std::min(x0 + 1, img.width - 1);
      const int y1 = std::min(y0 + 1, img.height - 1);
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
        const double bot = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
        out.at(y, x, c) = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  return out;
}

}  // namespace detail

// Seeded random augmentation. Methods run in a fixed order (brightness,
// gamma, gaussian blur, motion blur, crop/pad, affine scale); each fires with
// probability 0.5. Output dimensions always equal input dimensions and pixel
// values stay in [0,255].
inline Image augment(const Image& input, const AugmentationSpec& spec, std::uint64_t seed) {
  validate(spec);
  check(input.channels == 3, "augment expects a 3-channel image");
  Rng rng(derive_seed(seed, "augment"));
  Image img = input;

  if (rng.bernoulli(0.5)) {
    const double delta = rng.uniform(spec.brightness_lo, spec.brightness_hi);
    if (delta != 0.0) detail::add_brightness(img, delta);
  }
  if (rng.bernoulli(0.5)) {
    const double gamma = rng.uniform(spec.gamma_lo, spec.gamma_hi);
    if (gamma != 1.0) detail::gamma_contrast(img, gamma);
  }
  if (rng.bernoulli(0.5)) {
    const double sigma = rng.uniform(spec.blur_sigma_lo, spec.blur_sigma_hi);
    if (sigma > 0.0) img = detail::gaussian_blur(img, sigma);
  }
  if (rng.bernoulli(0.5)) {
    const double angle = rng.uniform(0.0, 3.14159265358979323846);
    if (spec.motion_blur_kernel > 1)
      img = detail::motion_blur(img, spec.motion_blur_kernel, angle);
  }
  if (rng.bernoulli(0.5)) {
    const double pct = rng.uniform(spec.crop_pad_lo, spec.crop_pad_hi);
    if (pct != 0.0) img = detail::crop_and_pad(img, pct);
  }
  if (rng.bernoulli(0.5)) {
    const double scale = rng.uniform(spec.affine_scale_lo, spec.affine_scale_hi);
    if (scale != 1.0) img = detail::affine_scale(img, scale);
  }
  for (float& v : img.data) v = clamp255(v);
  return img;
}

// --- training loop --------------------------------------------------------------

// Example access for one task. `load` materializes example `index`; the draw
// seed varies per epoch so loaders can re-augment and re-sample sequences.
struct TaskDataset {
  std::vector<int> labels;
  std::function<TrainExample(std::size_t index, std::uint64_t draw_seed)> load;

  std::size_t size() const { return labels.size(); }
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double mean_loss = 0;
  double val_accuracy = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double final_val_accuracy = 0;
};

inline double evaluate_accuracy(Classifier& model, const TaskDataset& data,
                                std::uint64_t seed) {
  check(data.size() > 0, "empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const TrainExample ex = data.load(i, derive_seed(seed, "eval", i));
    const auto p = model.predict(ex.frames);
    const int pred = p[1] >= p[0] ? 1 : 0;
    if (pred == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Runs the full schedule with per-epoch seeded shuffling, logging mean loss
// and validation accuracy each epoch. Deterministic for a fixed seed in
// single-threaded mode. Non-finite losses abort with a diagnostic.
inline TrainResult train_task(const std::string& task, const TaskDataset& train,
                              const TaskDataset& val, Classifier& model,
                              const LRSchedule& schedule, const OptimizerSpec& opt,
                              int batch_size, std::uint64_t seed) {
  validate(schedule);
  check(batch_size >= 1, "batch size must be >= 1");
  check(train.size() > 0, "task '" + task + "': empty training set");
  check(val.size() > 0, "task '" + task + "': empty validation set");
  for (int cls = 0; cls <= 1; ++cls)
    check(std::count(train.labels.begin(), train.labels.end(), cls) > 0,
          "task '" + task + "': class " + std::to_string(cls) +
              " has no training examples");

  TrainResult result;
  Rng dropout_rng(derive_seed(seed, "dropout", task));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    Rng shuffle_rng(derive_seed(derive_seed(seed, "order", task),
                                "epoch", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    std::size_t batches = 0;
    std::vector<TrainExample> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(batch_size)) {
      batch.clear();
      const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(batch_size));
      for (std::size_t i = pos; i < end; ++i) {
        const std::size_t idx = order[i];
        batch.push_back(train.load(
            idx, derive_seed(derive_seed(seed, "draw", task),
                             "item", (static_cast<std::uint64_t>(epoch) << 32) | idx)));
        check(batch.back().label == train.labels[idx], "loader returned mismatched label");
      }
      const float loss = model.train_batch(batch, lr, opt, dropout_rng);
      if (!std::isfinite(loss))
        throw std::runtime_error("task '" + task + "': non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batches) + " (lr=" + format_double(lr) + ")");
      loss_sum += loss;
      ++batches;
    }
    const double val_acc = evaluate_accuracy(model, val, seed);
    result.log.push_back({epoch, lr, loss_sum / static_cast<double>(batches), val_acc});
  }
  result.final_val_accuracy = result.log.back().val_accuracy;
  return result;
}

}  // namespace phaselocal
