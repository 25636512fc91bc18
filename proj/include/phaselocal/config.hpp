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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phaselocal/dataset.hpp"
#include "phaselocal/ensemble.hpp"
#include "phaselocal/models.hpp"
#include "phaselocal/timeline.hpp"
#include "phaselocal/training.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// Resolved run configuration. Defaults are the production settings; desk
// runs override via JSON config and CLI flags (precedence: PHASELOCAL_SEED
// env > flags > config file > defaults).
struct RunConfig {
  std::string fixtures_dir = "fixtures";
  std::string run_dir = "out";
  std::uint64_t seed = 7;
  int workers = 1;
  std::string stamp;  // run-directory stamp; empty -> wall-clock timestamp

  FilterConfig filter;
  ClipConfig clips;
  long infer_stride = 25;
  FusionConfig fusion;

  // Reference detector + its evaluation.
  float detector_threshold = 110.f;
  int detector_min_area = 9;
  double iou_from = 0.50, iou_to = 0.95, iou_step = 0.05;

  // Dataset construction.
  long frames_per_class = 500;
  long clips_train = 2000;
  long clips_test = 400;
  int train_videos = 0;  // 0 -> two thirds, at least one test video

  BackboneSpec backbone;

  // Idle network (static classifier).
  double idle_dropout = 0.5;
  LRSchedule idle_schedule_cfg = idle_schedule();
  std::string idle_freeze;  // empty -> train everything

  // Relevance networks (recurrent one-vs-rest).
  CellKind relevance_cell = CellKind::LSTM;
  bool relevance_bidirectional = true;
  TrainingMode relevance_mode = TrainingMode::EndToEnd;
  std::string relevance_freeze;
  LRSchedule relevance_schedule_cfg = recurrent_e2e_schedule();

  OptimizerSpec optimizer;
  int batch_size = 16;
  bool augment_enabled = true;
  AugmentationSpec augmentation;

  std::filesystem::path fixtures_path() const { return fixtures_dir; }
  std::filesystem::path run_path() const { return run_dir; }
};

namespace detail {

inline LRSchedule schedule_from_json(const nlohmann::json& j, LRSchedule base) {
  if (j.contains("epochs")) base.total_epochs = j.at("epochs").get<int>();
  if (j.contains("initial_lr")) base.initial_lr = j.at("initial_lr").get<double>();
  if (j.contains("milestones")) {
    base.milestones.clear();
    for (const auto& m : j.at("milestones"))
      base.milestones.emplace_back(m.at(0).get<int>(), m.at(1).get<double>());
  }
  return base;
}

inline nlohmann::json schedule_to_json(const LRSchedule& s) {
  nlohmann::json milestones = nlohmann::json::array();
  for (const auto& [e, d] : s.milestones) milestones.push_back({e, d});
  return {{"epochs", s.total_epochs}, {"initial_lr", s.initial_lr}, {"milestones", milestones}};
}

}  // namespace detail

inline void validate(const RunConfig& cfg) {
  validate(cfg.filter);
  validate(cfg.clips);
  validate(cfg.fusion);
  validate(cfg.backbone);
  validate(cfg.idle_schedule_cfg);
  validate(cfg.relevance_schedule_cfg);
  validate(cfg.augmentation);
  check(cfg.workers >= 1, "workers must be >= 1");
  check(cfg.batch_size >= 1, "batch_size must be >= 1");
  check(cfg.infer_stride >= 1, "infer_stride must be >= 1");
  check(cfg.frames_per_class >= 0, "frames_per_class must be >= 0");
  check(cfg.clips_train >= 1 && cfg.clips_test >= 1, "clip counts must be >= 1");
  check(cfg.train_videos >= 0, "train_videos must be >= 0");
  check(cfg.idle_dropout >= 0 && cfg.idle_dropout < 1, "idle dropout must lie in [0,1)");
  check(cfg.iou_step > 0 && cfg.iou_from > 0 && cfg.iou_to <= 1 && cfg.iou_from <= cfg.iou_to,
        "bad IoU threshold range");
  if (!cfg.idle_freeze.empty()) resolve_freeze_count(cfg.idle_freeze, 9);
  if (!cfg.relevance_freeze.empty()) resolve_freeze_count(cfg.relevance_freeze, 9);
}

// Merges a JSON document over the defaults. Unknown keys are rejected so
// typos fail loudly before any output is written.
inline RunConfig config_from_json(const nlohmann::json& j, RunConfig cfg = {}) {
  static const std::set<std::string> known{
      "fixtures_dir", "run_dir", "seed", "workers", "stamp", "filter", "clips",
      "fusion", "detector", "dataset", "backbone", "idle", "relevance",
      "batch_size", "augment", "augmentation"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");

  if (j.contains("fixtures_dir")) cfg.fixtures_dir = j.at("fixtures_dir").get<std::string>();
  if (j.contains("run_dir")) cfg.run_dir = j.at("run_dir").get<std::string>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
  if (j.contains("stamp")) cfg.stamp = j.at("stamp").get<std::string>();
  if (j.contains("filter") && j.at("filter").contains("window"))
    cfg.filter.window = j.at("filter").at("window").get<int>();
  if (j.contains("clips")) {
    const auto& c = j.at("clips");
    if (c.contains("clip_len")) cfg.clips.clip_len = c.at("clip_len").get<long>();
    if (c.contains("infer_stride")) cfg.infer_stride = c.at("infer_stride").get<long>();
    if (c.contains("steps"))
      for (const auto& [phase, step] : c.at("steps").items())
        cfg.clips.step_by_phase[phase_from_string(phase)] = step.get<long>();
  }
  if (j.contains("fusion") && j.at("fusion").contains("threshold"))
    cfg.fusion.threshold = j.at("fusion").at("threshold").get<double>();
  if (j.contains("detector")) {
    const auto& d = j.at("detector");
    if (d.contains("brightness_threshold"))
      cfg.detector_threshold = d.at("brightness_threshold").get<float>();
    if (d.contains("min_area")) cfg.detector_min_area = d.at("min_area").get<int>();
    if (d.contains("iou_from")) cfg.iou_from = d.at("iou_from").get<double>();
    if (d.contains("iou_to")) cfg.iou_to = d.at("iou_to").get<double>();
    if (d.contains("iou_step")) cfg.iou_step = d.at("iou_step").get<double>();
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("frames_per_class")) cfg.frames_per_class = d.at("frames_per_class").get<long>();
    if (d.contains("clips_train")) cfg.clips_train = d.at("clips_train").get<long>();
    if (d.contains("clips_test")) cfg.clips_test = d.at("clips_test").get<long>();
    if (d.contains("train_videos")) cfg.train_videos = d.at("train_videos").get<int>();
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    if (b.contains("input")) {
      cfg.backbone.input_w = b.at("input").get<int>();
      cfg.backbone.input_h = cfg.backbone.input_w;
    }
    if (b.contains("widths")) {
      cfg.backbone.widths = b.at("widths").get<std::vector<int>>();
      cfg.backbone.feature_dim = cfg.backbone.widths.back();
    }
  }
  if (j.contains("idle")) {
    const auto& i = j.at("idle");
    cfg.idle_schedule_cfg = detail::schedule_from_json(i, cfg.idle_schedule_cfg);
    if (i.contains("dropout")) cfg.idle_dropout = i.at("dropout").get<double>();
    if (i.contains("freeze")) cfg.idle_freeze = i.at("freeze").get<std::string>();
  }
  if (j.contains("relevance")) {
    const auto& r = j.at("relevance");
    cfg.relevance_schedule_cfg = detail::schedule_from_json(r, cfg.relevance_schedule_cfg);
    if (r.contains("cell")) cfg.relevance_cell = cell_from_string(r.at("cell").get<std::string>());
    if (r.contains("bidirectional"))
      cfg.relevance_bidirectional = r.at("bidirectional").get<bool>();
    if (r.contains("mode")) cfg.relevance_mode = mode_from_string(r.at("mode").get<std::string>());
    if (r.contains("freeze")) cfg.relevance_freeze = r.at("freeze").get<std::string>();
  }
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
  if (j.contains("augment")) cfg.augment_enabled = j.at("augment").get<bool>();
  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    auto range = [&](const char* key, double& lo, double& hi) {
      if (a.contains(key)) {
        lo = a.at(key).at(0).get<double>();
        hi = a.at(key).at(1).get<double>();
      }
    };
    range("brightness", cfg.augmentation.brightness_lo, cfg.augmentation.brightness_hi);
    range("gamma", cfg.augmentation.gamma_lo, cfg.augmentation.gamma_hi);
    range("blur_sigma", cfg.augmentation.blur_sigma_lo, cfg.augmentation.blur_sigma_hi);
    range("crop_pad", cfg.augmentation.crop_pad_lo, cfg.augmentation.crop_pad_hi);
    range("affine_scale", cfg.augmentation.affine_scale_lo, cfg.augmentation.affine_scale_hi);
    if (a.contains("motion_blur_kernel"))
      cfg.augmentation.motion_blur_kernel = a.at("motion_blur_kernel").get<int>();
  }
  validate(cfg);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path.string());
  return config_from_json(nlohmann::json::parse(is));
}

// Echo of the fully resolved configuration, written into every run directory.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json steps;
  for (const auto& [label, step] : cfg.clips.step_by_phase)
    steps[std::string(to_string(label))] = step;
  return {
      {"fixtures_dir", cfg.fixtures_dir},
      {"run_dir", cfg.run_dir},
      {"seed", cfg.seed},
      {"workers", cfg.workers},
      {"stamp", cfg.stamp},
      {"filter", {{"window", cfg.filter.window}}},
      {"clips",
       {{"clip_len", cfg.clips.clip_len}, {"infer_stride", cfg.infer_stride}, {"steps", steps}}},
      {"fusion", {{"threshold", cfg.fusion.threshold}}},
      {"detector",
       {{"brightness_threshold", cfg.detector_threshold},
        {"min_area", cfg.detector_min_area},
        {"iou_from", cfg.iou_from},
        {"iou_to", cfg.iou_to},
        {"iou_step", cfg.iou_step}}},
      {"dataset",
       {{"frames_per_class", cfg.frames_per_class},
        {"clips_train", cfg.clips_train},
        {"clips_test", cfg.clips_test},
        {"train_videos", cfg.train_videos}}},
      {"backbone", {{"input", cfg.backbone.input_w}, {"widths", cfg.backbone.widths}}},
      {"idle",
       [&] {
         nlohmann::json idle = detail::schedule_to_json(cfg.idle_schedule_cfg);
         idle["dropout"] = cfg.idle_dropout;
         idle["freeze"] = cfg.idle_freeze;
         return idle;
       }()},
      {"relevance",
       [&] {
         nlohmann::json rel = detail::schedule_to_json(cfg.relevance_schedule_cfg);
         rel["cell"] = std::string(to_string(cfg.relevance_cell));
         rel["bidirectional"] = cfg.relevance_bidirectional;
         rel["mode"] = std::string(to_string(cfg.relevance_mode));
         rel["freeze"] = cfg.relevance_freeze;
         return rel;
       }()},
      {"batch_size", cfg.batch_size},
      {"augment", cfg.augment_enabled},
  };
}

}  // namespace phaselocal
