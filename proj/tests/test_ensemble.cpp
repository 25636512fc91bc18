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

#include <sstream>

#include "phaselocal/ensemble.hpp"

using namespace phaselocal;

namespace {

PhaseProbabilities probs(double rhexis, double phaco, double irr, double lens) {
  PhaseProbabilities p;
  p.p[PhaseLabel::Rhexis] = rhexis;
  p.p[PhaseLabel::Phaco] = phaco;
  p.p[PhaseLabel::IrrAspVisc] = irr;
  p.p[PhaseLabel::LensImpl] = lens;
  return p;
}

// Independent rule evaluation: build the firing set explicitly, then apply
// the empty / singleton / argmax-with-tie-order cases one by one.
PhaseLabel integrate_oracle(const PhaseProbabilities& p, const FusionConfig& cfg) {
  std::vector<PhaseLabel> firing;
  for (PhaseLabel label : cfg.tie_order)
    if (p.at(label) >= cfg.threshold) firing.push_back(label);
  if (firing.empty()) return PhaseLabel::Rest;
  if (firing.size() == 1) return firing.front();
  double best = -1;
  for (PhaseLabel label : firing) best = std::max(best, p.at(label));
  for (PhaseLabel label : cfg.tie_order)
    if (p.at(label) >= cfg.threshold && p.at(label) == best) return label;
  return PhaseLabel::Rest;
}

// Test double for the classifier interface: decodes the fixture's channel
// statistics instead of learned weights.
class StubClassifier final : public Classifier {
 public:
  using Fn = std::function<float(std::span<const Image>)>;
  StubClassifier(int seq, Fn fn) : seq_(seq), fn_(std::move(fn)) {
    spec_.input_w = 32;
    spec_.input_h = 32;
    spec_.widths = {4, 6, 8};
    spec_.feature_dim = 8;
  }

  int seq_len() const override { return seq_; }
  const BackboneSpec& backbone_spec() const override { return spec_; }
  std::array<float, 2> predict(std::span<const Image> frames) const override {
    ++calls;
    const float p1 = fn_(frames);
    return {1.f - p1, p1};
  }
  float train_batch(std::span<const TrainExample>, double, const nn::OptimizerSpec&,
                    Rng&) override {
    return 0;
  }
  std::vector<nn::Param*> parameters() override { return {}; }
  std::vector<LayerInfo> backbone_layers() const override { return {}; }
  void set_backbone_frozen_prefix(int) override {}
  nlohmann::json arch_json() const override { return {{"kind", "stub"}}; }

  mutable long calls = 0;

 private:
  int seq_;
  BackboneSpec spec_;
  Fn fn_;
};

class FullFrameDetector final : public DetectorInterface {
 public:
  std::vector<Detection> detect(const Image& frame) const override {
    return {{{0, 0, static_cast<double>(frame.width), static_cast<double>(frame.height)},
             std::nullopt, 1.0}};
  }
};

class BlindDetector final : public DetectorInterface {
 public:
  std::vector<Detection> detect(const Image&) const override { return {}; }
};

// Fixture video: dark idle frames; action frames carry a phase-coded color
// cast that survives bilinear resizing.
std::array<float, 3> phase_cast(PhaseLabel label) {
  switch (label) {
    case PhaseLabel::Rhexis: return {200, 40, 40};
    case PhaseLabel::Phaco: return {40, 200, 40};
    case PhaseLabel::IrrAspVisc: return {40, 40, 200};
    case PhaseLabel::LensImpl: return {200, 200, 40};
    default: return {120, 120, 120};
  }
}

std::vector<Image> coded_video(const std::vector<PhaseLabel>& truth, int w = 40, int h = 40) {
  std::vector<Image> frames;
  for (PhaseLabel label : truth) {
    Image img(w, h, 3, 10.f);
    if (label != PhaseLabel::Idle) {
      const auto [r, g, b] = phase_cast(label);
      fill_rect(img, 0, 0, w, h, r, g, b);
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

float mean_channel(std::span<const Image> frames, int c) {
  double acc = 0;
  std::size_t n = 0;
  for (const Image& img : frames)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        acc += img.at(y, x, c);
        ++n;
      }
  return static_cast<float>(acc / static_cast<double>(n));
}

std::map<PhaseLabel, Classifier*> stub_relevance_models(
    std::vector<std::unique_ptr<StubClassifier>>& storage) {
  auto make = [&](PhaseLabel target) {
    storage.push_back(std::make_unique<StubClassifier>(5, [target](std::span<const Image> f) {
      const float r = mean_channel(f, 0), g = mean_channel(f, 1), b = mean_channel(f, 2);
      bool match = false;
      switch (target) {
        case PhaseLabel::Rhexis: match = r > 150 && g < 100 && b < 100; break;
        case PhaseLabel::Phaco: match = g > 150 && r < 100 && b < 100; break;
        case PhaseLabel::IrrAspVisc: match = b > 150 && r < 100 && g < 100; break;
        default: match = r > 150 && g > 150 && b < 100; break;
      }
      return match ? 0.92f : 0.06f;
    }));
    return storage.back().get();
  };
  std::map<PhaseLabel, Classifier*> models;
  for (PhaseLabel label : kRelevantPhases) models[label] = make(label);
  return models;
}

std::unique_ptr<StubClassifier> stub_idle_model() {
  return std::make_unique<StubClassifier>(1, [](std::span<const Image> f) {
    return mean_channel(f, 0) + mean_channel(f, 1) + mean_channel(f, 2) > 100 ? 0.95f : 0.04f;
  });
}

}  // namespace

TEST_CASE("integrate picks the highest firing phase", "[ensemble]") {
  const FusionConfig cfg;
  CHECK(integrate(probs(0.9, 0.7, 0.1, 0.2), cfg) == PhaseLabel::Rhexis);
  CHECK(integrate(probs(0.7, 0.9, 0.1, 0.2), cfg) == PhaseLabel::Phaco);
}

TEST_CASE("integrate returns Rest when nothing fires", "[ensemble]") {
  CHECK(integrate(probs(0.4, 0.49, 0.1, 0.0), {}) == PhaseLabel::Rest);
}

TEST_CASE("integrate honors a singleton firing set regardless of the others",
          "[ensemble]") {
  CHECK(integrate(probs(0.1, 0.2, 0.61, 0.49), {}) == PhaseLabel::IrrAspVisc);
  CHECK(integrate(probs(0.499, 0.2, 0.0, 0.5), {}) == PhaseLabel::LensImpl);
}

TEST_CASE("integrate matches the brute-force oracle on the 625-point grid",
          "[ensemble]") {
  const FusionConfig cfg;
  const double grid[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  long cases = 0;
  for (double a : grid)
    for (double b : grid)
      for (double c : grid)
        for (double d : grid) {
          const PhaseProbabilities p = probs(a, b, c, d);
          REQUIRE(integrate(p, cfg) == integrate_oracle(p, cfg));
          ++cases;
        }
  CHECK(cases == 625);
}

TEST_CASE("integrate is invariant under threshold-preserving monotone transforms",
          "[ensemble]") {
  const FusionConfig cfg;
  Rng rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    const PhaseProbabilities p = probs(rng.unit(), rng.unit(), rng.unit(), rng.unit());
    PhaseProbabilities q;
    for (const auto& [label, v] : p.p) {
      const double d = v - 0.5;
      q.p[label] = 0.5 + d * d * d;  // strictly increasing, fixes 0.5
    }
    CHECK(integrate(p, cfg) == integrate(q, cfg));
  }
}

TEST_CASE("integrate validates its inputs", "[ensemble]") {
  PhaseProbabilities missing;
  missing.p[PhaseLabel::Rhexis] = 0.5;
  CHECK_THROWS_AS(integrate(missing, {}), std::invalid_argument);

  CHECK_THROWS_AS(integrate(probs(1.5, 0, 0, 0), {}), std::invalid_argument);

  FusionConfig bad;
  bad.threshold = 0;
  CHECK_THROWS_AS(integrate(probs(0.5, 0.5, 0.5, 0.5), bad), std::invalid_argument);
}

TEST_CASE("infer_video leaves an all-idle video untouched", "[ensemble]") {
  const std::vector<PhaseLabel> truth(50, PhaseLabel::Idle);
  const auto frames = coded_video(truth);
  auto idle = stub_idle_model();
  std::vector<std::unique_ptr<StubClassifier>> storage;
  auto models = stub_relevance_models(storage);
  FullFrameDetector detector;

  InferConfig cfg;
  cfg.clip_len = 20;
  cfg.stride = 8;
  const InferResult result = infer_video("v", 25.0, frames, *idle, detector, models, cfg);
  CHECK(result.timeline.frame_count() == 50);
  for (PhaseLabel l : result.timeline.labels) CHECK(l == PhaseLabel::Idle);
  CHECK(result.decisions.empty());
  for (const auto& [label, model] : models)
    CHECK(static_cast<StubClassifier*>(model)->calls == 0);
}

TEST_CASE("infer_video recovers planted phase segments", "[ensemble]") {
  std::vector<PhaseLabel> truth(160, PhaseLabel::Idle);
  for (int i = 30; i < 70; ++i) truth[static_cast<std::size_t>(i)] = PhaseLabel::Phaco;
  for (int i = 100; i < 130; ++i) truth[static_cast<std::size_t>(i)] = PhaseLabel::LensImpl;
  const auto frames = coded_video(truth);
  auto idle = stub_idle_model();
  std::vector<std::unique_ptr<StubClassifier>> storage;
  auto models = stub_relevance_models(storage);
  FullFrameDetector detector;

  InferConfig cfg;
  cfg.filter.window = 5;
  cfg.clip_len = 20;
  cfg.stride = 8;
  const InferResult result = infer_video("v", 25.0, frames, *idle, detector, models, cfg);

  REQUIRE(result.timeline.frame_count() == 160);
  // Interior frames of each planted segment carry the planted phase.
  for (int i = 35; i < 65; ++i)
    CHECK(result.timeline.labels[static_cast<std::size_t>(i)] == PhaseLabel::Phaco);
  for (int i = 105; i < 125; ++i)
    CHECK(result.timeline.labels[static_cast<std::size_t>(i)] == PhaseLabel::LensImpl);
  // Deep idle stays idle and never receives a relevant phase.
  for (int i : {0, 10, 85, 150})
    CHECK(result.timeline.labels[static_cast<std::size_t>(i)] == PhaseLabel::Idle);

  REQUIRE(result.decisions.size() == 2);
  CHECK(result.decisions[0].label == PhaseLabel::Phaco);
  CHECK(result.decisions[1].label == PhaseLabel::LensImpl);
  for (const SegmentDecision& d : result.decisions)
    for (const auto& [label, p] : d.mean_probs) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  CHECK(result.warnings.empty());
}

TEST_CASE("infer_video classifies short segments from one padded clip", "[ensemble]") {
  std::vector<PhaseLabel> truth(60, PhaseLabel::Idle);
  for (int i = 25; i < 37; ++i) truth[static_cast<std::size_t>(i)] = PhaseLabel::Rhexis;
  const auto frames = coded_video(truth);
  auto idle = stub_idle_model();
  std::vector<std::unique_ptr<StubClassifier>> storage;
  auto models = stub_relevance_models(storage);
  FullFrameDetector detector;

  InferConfig cfg;
  cfg.filter.window = 5;
  cfg.clip_len = 30;  // longer than the planted segment
  cfg.stride = 10;
  const InferResult result = infer_video("v", 25.0, frames, *idle, detector, models, cfg);
  REQUIRE(result.decisions.size() == 1);
  CHECK(result.decisions[0].label == PhaseLabel::Rhexis);
  for (int i = 27; i < 35; ++i)
    CHECK(result.timeline.labels[static_cast<std::size_t>(i)] == PhaseLabel::Rhexis);
}

TEST_CASE("infer_video falls back to whole frames when detection fails", "[ensemble]") {
  std::vector<PhaseLabel> truth(60, PhaseLabel::Idle);
  for (int i = 20; i < 45; ++i) truth[static_cast<std::size_t>(i)] = PhaseLabel::Phaco;
  const auto frames = coded_video(truth);
  auto idle = stub_idle_model();
  std::vector<std::unique_ptr<StubClassifier>> storage;
  auto models = stub_relevance_models(storage);
  BlindDetector detector;

  InferConfig cfg;
  cfg.filter.window = 5;
  cfg.clip_len = 20;
  cfg.stride = 10;
  const InferResult result = infer_video("v", 25.0, frames, *idle, detector, models, cfg);
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("no cornea detection") != std::string::npos);
  CHECK(result.crop_fallbacks > 0);
  REQUIRE(result.decisions.size() == 1);
  CHECK(result.decisions[0].label == PhaseLabel::Phaco);  // color survives whole-frame input
}

TEST_CASE("infer_video with workers matches the single-threaded result", "[ensemble]") {
  std::vector<PhaseLabel> truth(200, PhaseLabel::Idle);
  for (int i = 20; i < 60; ++i) truth[static_cast<std::size_t>(i)] = PhaseLabel::Rhexis;
  for (int i = 80; i < 120; ++i) truth[static_cast<std::size_t>(i)] = PhaseLabel::IrrAspVisc;
  for (int i = 140; i < 180; ++i) truth[static_cast<std::size_t>(i)] = PhaseLabel::Phaco;
  const auto frames = coded_video(truth);
  auto idle = stub_idle_model();
  std::vector<std::unique_ptr<StubClassifier>> storage;
  auto models = stub_relevance_models(storage);
  FullFrameDetector detector;

  InferConfig cfg;
  cfg.filter.window = 5;
  cfg.clip_len = 25;
  cfg.stride = 10;
  const InferResult serial = infer_video("v", 25.0, frames, *idle, detector, models, cfg);
  cfg.workers = 2;
  const InferResult parallel = infer_video("v", 25.0, frames, *idle, detector, models, cfg);
  CHECK(serial.timeline.labels == parallel.timeline.labels);
  REQUIRE(serial.decisions.size() == parallel.decisions.size());
  for (std::size_t i = 0; i < serial.decisions.size(); ++i) {
    CHECK(serial.decisions[i].label == parallel.decisions[i].label);
    CHECK(serial.decisions[i].mean_probs == parallel.decisions[i].mean_probs);
  }
}

TEST_CASE("decision logs serialize with four probabilities per segment", "[ensemble]") {
  SegmentDecision d;
  d.start = 10;
  d.end = 90;
  d.label = PhaseLabel::Phaco;
  d.mean_probs = {{PhaseLabel::Rhexis, 0.125}, {PhaseLabel::Phaco, 0.875},
                  {PhaseLabel::IrrAspVisc, 0.0}, {PhaseLabel::LensImpl, 0.0625}};
  std::stringstream ss;
  write_decision_log(ss, {d});
  CHECK(ss.str() == "10,90,Phaco,0.125,0.875,0,0.0625\n");
}
