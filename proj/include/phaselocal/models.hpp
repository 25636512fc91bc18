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

#include <array>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "phaselocal/image.hpp"
#include "phaselocal/nn.hpp"
#include "phaselocal/rng.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// --- architecture specs ----------------------------------------------------

// Convolutional backbone contract: maps an input_w x input_h x 3 image to a
// single feature vector of length feature_dim (global average pooling at the
// top). The desk-scale implementation is a small residual CNN; paper-scale
// residual networks satisfy the same contract.
struct BackboneSpec {
  std::string name = "tiny-resnet";
  int input_w = 32;
  int input_h = 32;
  int feature_dim = 32;
  bool pretrained = false;
  std::vector<int> widths = {8, 16, 32};  // stage channel counts
};

inline void validate(const BackboneSpec& spec) {
  check(spec.input_w >= 8 && spec.input_h >= 8,
        "backbone input must be at least 8x8, got " + std::to_string(spec.input_w) +
            "x" + std::to_string(spec.input_h));
  check(spec.widths.size() == 3, "tiny-resnet uses exactly three stages");
  for (int w : spec.widths) check(w > 0, "stage widths must be positive");
  check(spec.feature_dim == spec.widths.back(),
        "feature_dim must equal the last stage width");
  check(!spec.pretrained, "no pretrained weights are shipped for backbone '" +
                              spec.name + "'");
}

struct StaticHeadSpec {
  double dropout_p = 0.5;
  int out_classes = 2;
};

inline void validate(const StaticHeadSpec& spec) {
  check(spec.dropout_p >= 0.0 && spec.dropout_p < 1.0, "dropout_p must lie in [0,1)");
  check(spec.out_classes == 2, "all tasks in scope are binary (out_classes = 2)");
}

enum class CellKind { GRU, LSTM };

inline std::string_view to_string(CellKind c) { return c == CellKind::GRU ? "GRU" : "LSTM"; }

inline CellKind cell_from_string(std::string_view s) {
  if (s == "GRU") return CellKind::GRU;
  if (s == "LSTM") return CellKind::LSTM;
  throw std::invalid_argument("unknown recurrent cell: '" + std::string(s) + "'");
}

struct RecurrentHeadSpec {
  CellKind cell = CellKind::LSTM;
  bool bidirectional = true;
  int units = 5;
  int seq_len = 5;

  int readout_dim() const { return bidirectional ? 2 * units : units; }
};

inline void validate(const RecurrentHeadSpec& spec) {
  check(spec.units >= 1, "recurrent units must be >= 1");
  check(spec.seq_len >= 1, "sequence length must be >= 1");
}

// FeatureBased trains only the head on frozen backbone features; EndToEnd
// trains backbone and head jointly (subject to a freeze expression).
enum class TrainingMode { FeatureBased, EndToEnd };

inline std::string_view to_string(TrainingMode m) {
  return m == TrainingMode::FeatureBased ? "feature_based" : "end_to_end";
}

inline TrainingMode mode_from_string(std::string_view s) {
  if (s == "feature_based") return TrainingMode::FeatureBased;
  if (s == "end_to_end") return TrainingMode::EndToEnd;
  throw std::invalid_argument("unknown training mode: '" + std::string(s) + "'");
}

// --- tiny residual backbone -------------------------------------------------

namespace detail {

struct BackboneCache {
  std::vector<nn::Tensor3> acts;  // t0 .. t9, see forward()
};

// Three stages of [conv, residual block] with stride-2 transitions:
//   stem -> res1 -> down1 -> res2 -> down2 -> res3 -> global average pool.
class TinyBackbone {
 public:
  void configure(const BackboneSpec& spec, Rng& rng) {
    validate(spec);
    spec_ = spec;
    const int w1 = spec.widths[0], w2 = spec.widths[1], w3 = spec.widths[2];
    layers_.clear();
    stem_.configure("backbone.stem", 3, w1, 1, rng);
    res1_a_.configure("backbone.res1.conv1", w1, w1, 1, rng);
    res1_b_.configure("backbone.res1.conv2", w1, w1, 1, rng);
    down1_.configure("backbone.down1", w1, w2, 2, rng);
    res2_a_.configure("backbone.res2.conv1", w2, w2, 1, rng);
    res2_b_.configure("backbone.res2.conv2", w2, w2, 1, rng);
    down2_.configure("backbone.down2", w2, w3, 2, rng);
    res3_a_.configure("backbone.res3.conv1", w3, w3, 1, rng);
    res3_b_.configure("backbone.res3.conv2", w3, w3, 1, rng);
    layers_ = {&stem_,  &res1_a_, &res1_b_, &down1_, &res2_a_,
               &res2_b_, &down2_, &res3_a_, &res3_b_};
    // Residual branches start near zero so each block begins as an identity;
    // without normalization layers this keeps the effective depth shallow at
    // init and speeds up early training.
    for (nn::Conv2d* block_out : {&res1_b_, &res2_b_, &res3_b_})
      for (float& w : block_out->weight.w) w *= 0.05f;
  }

  const BackboneSpec& spec() const { return spec_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }

  std::vector<nn::Conv2d*>& layers() { return layers_; }
  const std::vector<nn::Conv2d*>& layers() const { return layers_; }

  // Images arrive in [0,255]; the network consumes centered [-1,1] values.
  nn::Tensor3 to_input(const Image& img) const {
    check(img.width == spec_.input_w && img.height == spec_.input_h && img.channels == 3,
          "backbone expects a " + std::to_string(spec_.input_w) + "x" +
              std::to_string(spec_.input_h) + "x3 image, got " +
              std::to_string(img.width) + "x" + std::to_string(img.height) + "x" +
              std::to_string(img.channels));
    nn::Tensor3 t(spec_.input_h, spec_.input_w, 3);
    for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] = img.data[i] / 127.5f - 1.f;
    return t;
  }

  std::vector<float> forward(const nn::Tensor3& input, BackboneCache& cache) const {
    auto& a = cache.acts;
    a.assign(10, nn::Tensor3{});
    a[0] = input;
    stem_.forward(a[0], a[1]);
    nn::relu_inplace(a[1]);
    residual_forward(res1_a_, res1_b_, a[1], a[2], a[3]);
    down1_.forward(a[3], a[4]);
    nn::relu_inplace(a[4]);
    residual_forward(res2_a_, res2_b_, a[4], a[5], a[6]);
    down2_.forward(a[6], a[7]);
    nn::relu_inplace(a[7]);
    residual_forward(res3_a_, res3_b_, a[7], a[8], a[9]);
    return nn::global_average_pool(a[9]);
  }

  // Propagates dL/dfeatures into parameter grads. Stops at the input.
  void backward(const std::vector<float>& dfeat, const BackboneCache& cache) {
    const auto& a = cache.acts;
    nn::Tensor3 d9 = nn::global_average_pool_backward(dfeat, a[9].h, a[9].w);
    nn::Tensor3 d7 = residual_backward(res3_a_, res3_b_, a[7], a[8], a[9], d9);
    nn::relu_backward_inplace(d7, a[7]);
    nn::Tensor3 d6;
    down2_.backward(a[6], d7, &d6);
    nn::Tensor3 d4 = residual_backward(res2_a_, res2_b_, a[4], a[5], a[6], d6);
    nn::relu_backward_inplace(d4, a[4]);
    nn::Tensor3 d3;
    down1_.backward(a[3], d4, &d3);
    nn::Tensor3 d1 = residual_backward(res1_a_, res1_b_, a[1], a[2], a[3], d3);
    nn::relu_backward_inplace(d1, a[1]);
    stem_.backward(a[0], d1, nullptr);
  }

  bool any_trainable() const {
    for (const nn::Conv2d* l : layers_)
      if (l->weight.trainable) return true;
    return false;
  }

 private:
  static void residual_forward(const nn::Conv2d& ca, const nn::Conv2d& cb,
                               const nn::Tensor3& in, nn::Tensor3& mid,
                               nn::Tensor3& out) {
    ca.forward(in, mid);
    nn::relu_inplace(mid);
    cb.forward(mid, out);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += in.v[i];
    nn::relu_inplace(out);
  }

  // in -> mid -> out were cached post-activation; d_out is the grad at `out`.
  static nn::Tensor3 residual_backward(nn::Conv2d& ca, nn::Conv2d& cb,
                                       const nn::Tensor3& in, const nn::Tensor3& mid,
                                       const nn::Tensor3& out, nn::Tensor3 d_out) {
    nn::relu_backward_inplace(d_out, out);
    nn::Tensor3 d_mid;
    cb.backward(mid, d_out, &d_mid);
    nn::relu_backward_inplace(d_mid, mid);
    nn::Tensor3 d_in;
    ca.backward(in, d_mid, &d_in);
    for (std::size_t i = 0; i < d_in.v.size(); ++i) d_in.v[i] += d_out.v[i];
    return d_in;
  }

  BackboneSpec spec_;
  nn::Conv2d stem_, res1_a_, res1_b_, down1_, res2_a_, res2_b_, down2_, res3_a_, res3_b_;
  std::vector<nn::Conv2d*> layers_;
};

}  // namespace detail

// --- classifier handles ------------------------------------------------------

// One training example: seq_len frames (one for static models) plus a binary
// label.
struct TrainExample {
  std::vector<Image> frames;
  int label = 0;
};

struct LayerInfo {
  std::string name;
  std::size_t param_count = 0;
  bool trainable = true;
};

// Common handle for the static and recurrent classifiers. Inference is pure;
// training mutates parameters and must be externally serialized.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int seq_len() const = 0;
  virtual const BackboneSpec& backbone_spec() const = 0;

  // Eval-mode forward: dropout disabled, deterministic.
  virtual std::array<float, 2> predict(std::span<const Image> frames) const = 0;

  // One SGD minibatch; returns the mean loss. `rng` drives dropout masks.
  virtual float train_batch(std::span<const TrainExample> batch, double lr,
                            const nn::OptimizerSpec& opt, Rng& rng) = 0;

  virtual std::vector<nn::Param*> parameters() = 0;
  std::vector<const nn::Param*> parameters() const {
    auto* self = const_cast<Classifier*>(this);
    std::vector<const nn::Param*> out;
    for (nn::Param* p : self->parameters()) out.push_back(p);
    return out;
  }

  // Ordered backbone layers for freeze-range resolution.
  virtual std::vector<LayerInfo> backbone_layers() const = 0;
  virtual void set_backbone_frozen_prefix(int frozen_count) = 0;

  virtual nlohmann::json arch_json() const = 0;
};

// FNV fingerprint of every parameter byte; bit-identity witness for freeze
// tests.
inline std::uint64_t parameter_fingerprint(const Classifier& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const nn::Param* p : model.parameters())
    h = fnv1a(p->w.data(), p->w.size() * sizeof(float), h);
  return h;
}

inline std::uint64_t backbone_fingerprint(const Classifier& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const nn::Param* p : model.parameters())
    if (p->name.rfind("backbone.", 0) == 0)
      h = fnv1a(p->w.data(), p->w.size() * sizeof(float), h);
  return h;
}

namespace detail {

inline void sgd_update(std::vector<nn::Param*> params, double lr,
                       const nn::OptimizerSpec& opt, std::size_t batch,
                       std::uint64_t iteration) {
  const double lr_t = lr / (1.0 + opt.decay * static_cast<double>(iteration));
  const double inv_batch = 1.0 / static_cast<double>(batch);
  // Clip the batch-mean gradient by global L2 norm; plain SGD on an
  // unnormalized net diverges otherwise once features grow.
  constexpr double kClipNorm = 5.0;
  double sq = 0.0;
  for (const nn::Param* p : params)
    if (p->trainable)
      for (float g : p->g) sq += static_cast<double>(g) * g * inv_batch * inv_batch;
  const double norm = std::sqrt(sq);
  const double scale = norm > kClipNorm ? kClipNorm / norm : 1.0;
  for (nn::Param* p : params) {
    p->sgd_step(lr_t * scale, opt.momentum, inv_batch);
    p->zero_grad();
  }
}

}  // namespace detail

// Static classifier: backbone features -> dropout -> dense(2) -> softmax.
class StaticClassifier final : public Classifier {
 public:
  StaticClassifier(const BackboneSpec& backbone, const StaticHeadSpec& head,
                   std::uint64_t init_seed) {
    validate(backbone);
    validate(head);
    head_spec_ = head;
    Rng rng(derive_seed(init_seed, "init/static"));
    backbone_.configure(backbone, rng);
    dense_.configure("head.dense", backbone.feature_dim, head.out_classes, rng);
  }

  int seq_len() const override { return 1; }
  const BackboneSpec& backbone_spec() const override { return backbone_.spec(); }
  const StaticHeadSpec& head_spec() const { return head_spec_; }

  std::array<float, 2> predict(std::span<const Image> frames) const override {
    check(frames.size() == 1, "static classifier takes exactly one frame, got " +
                                  std::to_string(frames.size()));
    detail::BackboneCache cache;
    const std::vector<float> feat = backbone_.forward(backbone_.to_input(frames[0]), cache);
    const std::vector<float> p = nn::softmax(dense_.forward(feat));
    return {p[0], p[1]};
  }

  float train_batch(std::span<const TrainExample> batch, double lr,
                    const nn::OptimizerSpec& opt, Rng& rng) override {
    check(!batch.empty(), "empty training batch");
    float loss_sum = 0.f;
    const bool backbone_trainable = backbone_.any_trainable();
    for (const TrainExample& ex : batch) {
      check(ex.frames.size() == 1, "static classifier takes exactly one frame");
      check(ex.label == 0 || ex.label == 1, "labels must be 0 or 1");
      detail::BackboneCache cache;
      std::vector<float> feat = backbone_.forward(backbone_.to_input(ex.frames[0]), cache);

      // Inverted dropout on the pooled features.
      std::vector<float> mask(feat.size(), 1.f);
      if (head_spec_.dropout_p > 0.0) {
        const float keep = 1.f - static_cast<float>(head_spec_.dropout_p);
        for (std::size_t i = 0; i < feat.size(); ++i) {
          mask[i] = rng.unit() < head_spec_.dropout_p ? 0.f : 1.f / keep;
          feat[i] *= mask[i];
        }
      }
      const std::vector<float> logits = dense_.forward(feat);
      std::vector<float> dlogits;
      loss_sum += nn::cross_entropy_grad(logits, ex.label, dlogits);
      std::vector<float> dfeat = dense_.backward(feat, dlogits);
      if (backbone_trainable) {
        for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] *= mask[i];
        backbone_.backward(dfeat, cache);
      }
    }
    detail::sgd_update(parameters(), lr, opt, batch.size(), iteration_++);
    return loss_sum / static_cast<float>(batch.size());
  }

  std::vector<nn::Param*> parameters() override {
    std::vector<nn::Param*> out;
    for (nn::Conv2d* l : backbone_.layers()) {
      out.push_back(&l->weight);
      out.push_back(&l->bias);
    }
    out.push_back(&dense_.weight);
    out.push_back(&dense_.bias);
    return out;
  }

  std::vector<LayerInfo> backbone_layers() const override {
    std::vector<LayerInfo> out;
    for (const nn::Conv2d* l : backbone_.layers())
      out.push_back({l->weight.name, l->weight.size() + l->bias.size(),
                     l->weight.trainable});
    return out;
  }

  void set_backbone_frozen_prefix(int frozen_count) override {
    auto& layers = backbone_.layers();
    check(frozen_count >= 0 && frozen_count <= static_cast<int>(layers.size()),
          "frozen layer count out of range");
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
      const bool trainable = i >= frozen_count;
      layers[static_cast<std::size_t>(i)]->weight.trainable = trainable;
      layers[static_cast<std::size_t>(i)]->bias.trainable = trainable;
    }
  }

  nlohmann::json arch_json() const override {
    const BackboneSpec& b = backbone_.spec();
    return {{"kind", "static"},
            {"backbone",
             {{"name", b.name},
              {"input_w", b.input_w},
              {"input_h", b.input_h},
              {"feature_dim", b.feature_dim},
              {"pretrained", b.pretrained},
              {"widths", b.widths}}},
            {"head", {{"dropout_p", head_spec_.dropout_p}, {"out_classes", head_spec_.out_classes}}}};
  }

 private:
  detail::TinyBackbone backbone_;
  StaticHeadSpec head_spec_;
  nn::Dense dense_;
  std::uint64_t iteration_ = 0;
};

// Recurrent classifier: the backbone is applied per time step with shared
// weights; the cell consumes the feature sequence in temporal order and the
// final state feeds a dense softmax readout.
class RecurrentClassifier final : public Classifier {
 public:
  RecurrentClassifier(const BackboneSpec& backbone, const RecurrentHeadSpec& head,
                      TrainingMode mode, std::uint64_t init_seed) {
    validate(backbone);
    validate(head);
    head_spec_ = head;
    mode_ = mode;
    Rng rng(derive_seed(init_seed, "init/recurrent"));
    backbone_.configure(backbone, rng);
    fwd_cell_.configure("head.rnn.fwd", backbone.feature_dim, head.units,
                        head.cell == CellKind::LSTM, rng);
    if (head.bidirectional)
      bwd_cell_.configure("head.rnn.bwd", backbone.feature_dim, head.units,
                          head.cell == CellKind::LSTM, rng);
    dense_.configure("head.dense", head.readout_dim(), 2, rng);
    if (mode == TrainingMode::FeatureBased) set_backbone_frozen_prefix(backbone_.layer_count());
  }

  int seq_len() const override { return head_spec_.seq_len; }
  const BackboneSpec& backbone_spec() const override { return backbone_.spec(); }
  const RecurrentHeadSpec& head_spec() const { return head_spec_; }
  TrainingMode mode() const { return mode_; }

  // Backbone features per time step; the time-distributed application shares
  // one set of weights across frames.
  std::vector<std::vector<float>> frame_features(std::span<const Image> frames) const {
    std::vector<std::vector<float>> out;
    out.reserve(frames.size());
    for (const Image& frame : frames) {
      detail::BackboneCache cache;
      out.push_back(backbone_.forward(backbone_.to_input(frame), cache));
    }
    return out;
  }

  std::array<float, 2> predict(std::span<const Image> frames) const override {
    auto* self = const_cast<RecurrentClassifier*>(this);
    Workspace ws;
    const std::vector<float> logits = self->forward(frames, ws);
    const std::vector<float> p = nn::softmax(logits);
    return {p[0], p[1]};
  }

  float train_batch(std::span<const TrainExample> batch, double lr,
                    const nn::OptimizerSpec& opt, Rng&) override {
    check(!batch.empty(), "empty training batch");
    float loss_sum = 0.f;
    for (const TrainExample& ex : batch) {
      check(ex.label == 0 || ex.label == 1, "labels must be 0 or 1");
      Workspace ws;
      const std::vector<float> logits = forward(ex.frames, ws);
      std::vector<float> dlogits;
      loss_sum += nn::cross_entropy_grad(logits, ex.label, dlogits);
      backward(dlogits, ws);
    }
    detail::sgd_update(parameters(), lr, opt, batch.size(), iteration_++);
    return loss_sum / static_cast<float>(batch.size());
  }

  std::vector<nn::Param*> parameters() override {
    std::vector<nn::Param*> out;
    for (nn::Conv2d* l : backbone_.layers()) {
      out.push_back(&l->weight);
      out.push_back(&l->bias);
    }
    for (nn::RnnCell* cell : cells()) {
      out.push_back(&cell->w_in);
      out.push_back(&cell->w_rec);
      out.push_back(&cell->bias);
    }
    out.push_back(&dense_.weight);
    out.push_back(&dense_.bias);
    return out;
  }

  std::vector<LayerInfo> backbone_layers() const override {
    std::vector<LayerInfo> out;
    for (const nn::Conv2d* l : backbone_.layers())
      out.push_back({l->weight.name, l->weight.size() + l->bias.size(),
                     l->weight.trainable});
    return out;
  }

  void set_backbone_frozen_prefix(int frozen_count) override {
    auto& layers = backbone_.layers();
    check(frozen_count >= 0 && frozen_count <= static_cast<int>(layers.size()),
          "frozen layer count out of range");
    check(mode_ == TrainingMode::EndToEnd || frozen_count == backbone_.layer_count(),
          "feature-based models keep the whole backbone frozen");
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
      const bool trainable = i >= frozen_count;
      layers[static_cast<std::size_t>(i)]->weight.trainable = trainable;
      layers[static_cast<std::size_t>(i)]->bias.trainable = trainable;
    }
  }

  nlohmann::json arch_json() const override {
    const BackboneSpec& b = backbone_.spec();
    return {{"kind", "recurrent"},
            {"backbone",
             {{"name", b.name},
              {"input_w", b.input_w},
              {"input_h", b.input_h},
              {"feature_dim", b.feature_dim},
              {"pretrained", b.pretrained},
              {"widths", b.widths}}},
            {"head",
             {{"cell", std::string(to_string(head_spec_.cell))},
              {"bidirectional", head_spec_.bidirectional},
              {"units", head_spec_.units},
              {"seq_len", head_spec_.seq_len}}},
            {"mode", std::string(to_string(mode_))}};
  }

 private:
  struct Workspace {
    std::vector<detail::BackboneCache> frame_caches;
    std::vector<std::vector<float>> features;  // per time step
    std::vector<nn::RnnStepCache> fwd_steps, bwd_steps;
    std::vector<float> readout;
  };

  std::vector<nn::RnnCell*> cells() {
    std::vector<nn::RnnCell*> out{&fwd_cell_};
    if (head_spec_.bidirectional) out.push_back(&bwd_cell_);
    return out;
  }

  std::vector<float> forward(std::span<const Image> frames, Workspace& ws) {
    const int T = head_spec_.seq_len;
    check(static_cast<int>(frames.size()) == T,
          "recurrent classifier expects " + std::to_string(T) + " frames, got " +
              std::to_string(frames.size()));
    ws.frame_caches.assign(static_cast<std::size_t>(T), {});
    ws.features.assign(static_cast<std::size_t>(T), {});
    for (int t = 0; t < T; ++t)
      ws.features[static_cast<std::size_t>(t)] = backbone_.forward(
          backbone_.to_input(frames[static_cast<std::size_t>(t)]),
          ws.frame_caches[static_cast<std::size_t>(t)]);

    const int u = head_spec_.units;
    const std::vector<float> zeros(static_cast<std::size_t>(u), 0.f);
    ws.fwd_steps.assign(static_cast<std::size_t>(T), {});
    std::vector<float> h = zeros, c = zeros;
    for (int t = 0; t < T; ++t) {
      fwd_cell_.step(ws.features[static_cast<std::size_t>(t)], h, c,
                     ws.fwd_steps[static_cast<std::size_t>(t)]);
      h = ws.fwd_steps[static_cast<std::size_t>(t)].h;
      if (fwd_cell_.lstm) c = ws.fwd_steps[static_cast<std::size_t>(t)].c;
    }
    ws.readout = h;
    if (head_spec_.bidirectional) {
      ws.bwd_steps.assign(static_cast<std::size_t>(T), {});
      std::vector<float> hb = zeros, cb = zeros;
      for (int t = T - 1; t >= 0; --t) {
        bwd_cell_.step(ws.features[static_cast<std::size_t>(t)], hb, cb,
                       ws.bwd_steps[static_cast<std::size_t>(t)]);
        hb = ws.bwd_steps[static_cast<std::size_t>(t)].h;
        if (bwd_cell_.lstm) cb = ws.bwd_steps[static_cast<std::size_t>(t)].c;
      }
      ws.readout.insert(ws.readout.end(), hb.begin(), hb.end());
    }
    return dense_.forward(ws.readout);
  }

  void backward(const std::vector<float>& dlogits, Workspace& ws) {
    const int T = head_spec_.seq_len;
    const int u = head_spec_.units;
    const std::vector<float> dreadout = dense_.backward(ws.readout, dlogits);

    std::vector<std::vector<float>> dfeat(
        static_cast<std::size_t>(T),
        std::vector<float>(ws.features[0].size(), 0.f));

    // Forward direction: gradient enters at the final state only.
    {
      std::vector<float> dh(dreadout.begin(), dreadout.begin() + u);
      std::vector<float> dc(static_cast<std::size_t>(u), 0.f);
      for (int t = T - 1; t >= 0; --t) {
        std::vector<float> dx, dh_prev;
        fwd_cell_.step_backward(ws.fwd_steps[static_cast<std::size_t>(t)], dh, dc, dx, dh_prev);
        for (std::size_t i = 0; i < dx.size(); ++i) dfeat[static_cast<std::size_t>(t)][i] += dx[i];
        dh = std::move(dh_prev);
      }
    }
    if (head_spec_.bidirectional) {
      std::vector<float> dh(dreadout.begin() + u, dreadout.begin() + 2 * u);
      std::vector<float> dc(static_cast<std::size_t>(u), 0.f);
      for (int t = 0; t < T; ++t) {
        std::vector<float> dx, dh_prev;
        bwd_cell_.step_backward(ws.bwd_steps[static_cast<std::size_t>(t)], dh, dc, dx, dh_prev);
        for (std::size_t i = 0; i < dx.size(); ++i) dfeat[static_cast<std::size_t>(t)][i] += dx[i];
        dh = std::move(dh_prev);
      }
    }
    if (backbone_.any_trainable())
      for (int t = 0; t < T; ++t)
        backbone_.backward(dfeat[static_cast<std::size_t>(t)],
                           ws.frame_caches[static_cast<std::size_t>(t)]);
  }

  detail::TinyBackbone backbone_;
  RecurrentHeadSpec head_spec_;
  TrainingMode mode_ = TrainingMode::EndToEnd;
  nn::RnnCell fwd_cell_, bwd_cell_;
  nn::Dense dense_;
  std::uint64_t iteration_ = 0;
};

inline std::unique_ptr<StaticClassifier> build_static_classifier(
    const BackboneSpec& backbone, const StaticHeadSpec& head,
    std::uint64_t init_seed = 0x5eed) {
  return std::make_unique<StaticClassifier>(backbone, head, init_seed);
}

inline std::unique_ptr<RecurrentClassifier> build_recurrent_classifier(
    const BackboneSpec& backbone, const RecurrentHeadSpec& head, TrainingMode mode,
    std::uint64_t init_seed = 0x5eed) {
  return std::make_unique<RecurrentClassifier>(backbone, head, mode, init_seed);
}

// --- layer freezing ----------------------------------------------------------

// Resolves a layer-range expression over the ordered backbone layer list.
// `[a:b]` freezes the 1-based contiguous prefix a..b, where a negative b
// counts from the end (`[1:-20]` on 50 layers freezes 1..30, leaving the last
// 20 trainable). `CNN` freezes the whole backbone. Returns the frozen count.
inline int resolve_freeze_count(const std::string& expr, int n_layers) {
  check(n_layers > 0, "model has no backbone layers");
  if (expr == "CNN") return n_layers;
  check(expr.size() >= 5 && expr.front() == '[' && expr.back() == ']',
        "freeze spec must be 'CNN' or '[a:b]', got '" + expr + "'");
  const auto body = expr.substr(1, expr.size() - 2);
  const auto colon = body.find(':');
  check(colon != std::string::npos, "freeze spec must contain ':': '" + expr + "'");
  const long a = parse_long(body.substr(0, colon), "freeze start");
  const long b = parse_long(body.substr(colon + 1), "freeze end");
  check(a == 1, "freeze ranges must start at layer 1 (contiguous prefix), got '" + expr + "'");
  const long end = b < 0 ? n_layers + b : b;
  if (end < 1 || end > n_layers)
    throw std::invalid_argument("freeze spec '" + expr + "' is out of range for " +
                                std::to_string(n_layers) + " backbone layers");
  return static_cast<int>(end);
}

inline void freeze_layers(Classifier& model, const std::string& expr) {
  const int n = static_cast<int>(model.backbone_layers().size());
  model.set_backbone_frozen_prefix(resolve_freeze_count(expr, n));
}

// --- checkpoints --------------------------------------------------------------
//
// <dir>/<task>.weights  binary parameter blob (names + shapes + float data)
// <dir>/<task>.arch.json architecture spec

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_checkpoint(const Classifier& model, const std::filesystem::path& dir,
                            const std::string& task) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / (task + ".arch.json"));
    if (!os) throw std::runtime_error("cannot write arch spec for task " + task);
    os << model.arch_json().dump(2) << '\n';
  }
  std::ofstream os(dir / (task + ".weights"), std::ios::binary);
  if (!os) throw std::runtime_error("cannot write weights for task " + task);
  os.write("PLWT1\n", 6);
  const auto params = model.parameters();
  detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const nn::Param* p : params) {
    detail::write_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
    detail::write_u32(os, static_cast<std::uint32_t>(p->w.size()));
    os.write(reinterpret_cast<const char*>(p->w.data()),
             static_cast<std::streamsize>(p->w.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("failed writing weights for task " + task);
}

inline void load_weights(Classifier& model, const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + file.string());
  char magic[6];
  is.read(magic, 6);
  check(std::string_view(magic, 6) == "PLWT1\n", "bad checkpoint magic in " + file.string());
  const std::uint32_t n = detail::read_u32(is);
  auto params = model.parameters();
  check(n == params.size(), "checkpoint parameter count mismatch in " + file.string());
  for (nn::Param* p : params) {
    const std::uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    check(name == p->name, "checkpoint parameter order mismatch: expected '" + p->name +
                               "', found '" + name + "'");
    const std::uint32_t ndim = detail::read_u32(is);
    check(ndim == p->shape.size(), "checkpoint shape mismatch for " + name);
    for (int d : p->shape)
      check(detail::read_u32(is) == static_cast<std::uint32_t>(d),
            "checkpoint shape mismatch for " + name);
    const std::uint32_t len = detail::read_u32(is);
    check(len == p->w.size(), "checkpoint size mismatch for " + name);
    is.read(reinterpret_cast<char*>(p->w.data()),
            static_cast<std::streamsize>(p->w.size() * sizeof(float)));
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + file.string());
}

inline std::unique_ptr<Classifier> load_checkpoint(const std::filesystem::path& dir,
                                                   const std::string& task) {
  std::ifstream arch_is(dir / (task + ".arch.json"));
  if (!arch_is)
    throw std::runtime_error("missing arch spec: " + (dir / (task + ".arch.json")).string());
  const nlohmann::json arch = nlohmann::json::parse(arch_is);

  BackboneSpec backbone;
  const auto& b = arch.at("backbone");
  backbone.name = b.at("name").get<std::string>();
  backbone.input_w = b.at("input_w").get<int>();
  backbone.input_h = b.at("input_h").get<int>();
  backbone.feature_dim = b.at("feature_dim").get<int>();
  backbone.pretrained = b.at("pretrained").get<bool>();
  backbone.widths = b.at("widths").get<std::vector<int>>();

  std::unique_ptr<Classifier> model;
  const std::string kind = arch.at("kind").get<std::string>();
  if (kind == "static") {
    StaticHeadSpec head;
    head.dropout_p = arch.at("head").at("dropout_p").get<double>();
    head.out_classes = arch.at("head").at("out_classes").get<int>();
    model = build_static_classifier(backbone, head);
  } else if (kind == "recurrent") {
    RecurrentHeadSpec head;
    const auto& h = arch.at("head");
    head.cell = cell_from_string(h.at("cell").get<std::string>());
    head.bidirectional = h.at("bidirectional").get<bool>();
    head.units = h.at("units").get<int>();
    head.seq_len = h.at("seq_len").get<int>();
    model = build_recurrent_classifier(backbone, head,
                                       mode_from_string(arch.at("mode").get<std::string>()));
  } else {
    throw std::invalid_argument("unknown model kind '" + kind + "' in checkpoint");
  }
  load_weights(*model, dir / (task + ".weights"));
  return model;
}

}  // namespace phaselocal
