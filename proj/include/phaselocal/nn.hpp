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
#include <string>
#include <vector>

#include "phaselocal/rng.hpp"
#include "phaselocal/util.hpp"

// Minimal CPU training engine: 3x3 convolutions, dense layers, GRU/LSTM
// cells, softmax cross-entropy, and SGD with momentum. Everything runs
// single-threaded in deterministic order so fixed seeds reproduce runs
// bit-for-bit.
namespace phaselocal::nn {

// SGD settings shared by every network in this project.
struct OptimizerSpec {
  double decay = 1e-6;     // per-update learning-rate decay: lr / (1 + decay * t)
  double momentum = 0.9;
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> w;   // values
  std::vector<float> g;   // gradient accumulator
  std::vector<float> m;   // momentum buffer
  bool trainable = true;

  std::size_t size() const { return w.size(); }

  void init_shape(std::string n, std::vector<int> s) {
    name = std::move(n);
    shape = std::move(s);
    std::size_t total = 1;
    for (int d : shape) total *= static_cast<std::size_t>(d);
    w.assign(total, 0.f);
    g.assign(total, 0.f);
    m.assign(total, 0.f);
  }

  void fill_uniform(Rng& rng, float limit) {
    for (float& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
  }

  void zero_grad() { std::fill(g.begin(), g.end(), 0.f); }

  // v <- momentum * v - lr * g/batch ; w <- w + v. Frozen params are
  // untouched, keeping their bytes identical.
  void sgd_step(double lr, double momentum, double inv_batch) {
    if (!trainable) return;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float step = static_cast<float>(momentum * m[i] - lr * g[i] * inv_batch);
      m[i] = step;
      w[i] += step;
    }
  }
};

// HWC feature map.
struct Tensor3 {
  int h = 0, w = 0, c = 0;
  std::vector<float> v;

  Tensor3() = default;
  Tensor3(int hh, int ww, int cc)
      : h(hh), w(ww), c(cc), v(static_cast<std::size_t>(hh) * ww * cc, 0.f) {}

  float& at(int y, int x, int ch) {
    return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  float at(int y, int x, int ch) const {
    return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  float* ptr(int y, int x) { return v.data() + (static_cast<std::size_t>(y) * w + x) * c; }
  const float* ptr(int y, int x) const {
    return v.data() + (static_cast<std::size_t>(y) * w + x) * c;
  }
  void zero() { std::fill(v.begin(), v.end(), 0.f); }
};

inline void relu_inplace(Tensor3& t) {
  for (float& x : t.v)
    if (x < 0.f) x = 0.f;
}

// d <- d * 1[out > 0], where out is the post-ReLU activation.
inline void relu_backward_inplace(Tensor3& d, const Tensor3& out) {
  for (std::size_t i = 0; i < d.v.size(); ++i)
    if (out.v[i] <= 0.f) d.v[i] = 0.f;
}

// 3x3 convolution, zero padding 1, configurable stride.
class Conv2d {
 public:
  Param weight;  // [3][3][in_c][out_c]
  Param bias;    // [out_c]
  int in_c = 0, out_c = 0, stride = 1;

  void configure(const std::string& name, int in_channels, int out_channels,
                 int s, Rng& rng) {
    in_c = in_channels;
    out_c = out_channels;
    stride = s;
    weight.init_shape(name + ".weight", {3, 3, in_c, out_c});
    bias.init_shape(name + ".bias", {out_c});
    const float limit = std::sqrt(6.0f / (9.0f * static_cast<float>(in_c)));
    weight.fill_uniform(rng, limit);
  }

  int out_dim(int n) const { return (n + 2 - 3) / stride + 1; }

  void forward(const Tensor3& in, Tensor3& out) const {
    out = Tensor3(out_dim(in.h), out_dim(in.w), out_c);
    const float* wp = weight.w.data();
    for (int oy = 0; oy < out.h; ++oy) {
      const int base_y = oy * stride - 1;
      for (int ox = 0; ox < out.w; ++ox) {
        const int base_x = ox * stride - 1;
        float* op = out.ptr(oy, ox);
        for (int co = 0; co < out_c; ++co) op[co] = bias.w[static_cast<std::size_t>(co)];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = base_y + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = base_x + kx;
            if (ix < 0 || ix >= in.w) continue;
            const float* ip = in.ptr(iy, ix);
            const float* kp = wp + ((static_cast<std::size_t>(ky) * 3 + kx) * in_c) * out_c;
            for (int ci = 0; ci < in_c; ++ci) {
              const float xv = ip[ci];
              const float* kc = kp + static_cast<std::size_t>(ci) * out_c;
              for (int co = 0; co < out_c; ++co) op[co] += xv * kc[co];
            }
          }
        }
      }
    }
  }

  // Accumulates weight/bias grads; writes input grad when grad_in != nullptr.
  void backward(const Tensor3& in, const Tensor3& grad_out, Tensor3* grad_in) {
    if (grad_in) {
      *grad_in = Tensor3(in.h, in.w, in.c);
    }
    float* gw = weight.g.data();
    for (int oy = 0; oy < grad_out.h; ++oy) {
      const int base_y = oy * stride - 1;
      for (int ox = 0; ox < grad_out.w; ++ox) {
        const int base_x = ox * stride - 1;
        const float* gp = grad_out.ptr(oy, ox);
        for (int co = 0; co < out_c; ++co) bias.g[static_cast<std::size_t>(co)] += gp[co];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = base_y + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = base_x + kx;
            if (ix < 0 || ix >= in.w) continue;
            const float* ip = in.ptr(iy, ix);
            float* gi = grad_in ? grad_in->ptr(iy, ix) : nullptr;
            const std::size_t koff = ((static_cast<std::size_t>(ky) * 3 + kx) * in_c) * out_c;
            for (int ci = 0; ci < in_c; ++ci) {
              const float xv = ip[ci];
              const float* kc = weight.w.data() + koff + static_cast<std::size_t>(ci) * out_c;
              float* gc = gw + koff + static_cast<std::size_t>(ci) * out_c;
              float acc = 0.f;
              for (int co = 0; co < out_c; ++co) {
                gc[co] += xv * gp[co];
                acc += kc[co] * gp[co];
              }
              if (gi) gi[ci] += acc;
            }
          }
        }
      }
    }
  }
};

inline std::vector<float> global_average_pool(const Tensor3& t) {
  std::vector<float> out(static_cast<std::size_t>(t.c), 0.f);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < t.c; ++c) out[static_cast<std::size_t>(c)] += t.at(y, x, c);
  const float inv = 1.f / static_cast<float>(t.h * t.w);
  for (float& v : out) v *= inv;
  return out;
}

inline Tensor3 global_average_pool_backward(const std::vector<float>& grad,
                                            int h, int w) {
  Tensor3 out(h, w, static_cast<int>(grad.size()));
  const float inv = 1.f / static_cast<float>(h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < out.c; ++c) out.at(y, x, c) = grad[static_cast<std::size_t>(c)] * inv;
  return out;
}

class Dense {
 public:
  Param weight;  // [out][in]
  Param bias;    // [out]
  int in_dim = 0, out_dim = 0;

  void configure(const std::string& name, int in_d, int out_d, Rng& rng) {
    in_dim = in_d;
    out_dim = out_d;
    weight.init_shape(name + ".weight", {out_d, in_d});
    bias.init_shape(name + ".bias", {out_d});
    weight.fill_uniform(rng, std::sqrt(6.0f / static_cast<float>(in_d)));
  }

  std::vector<float> forward(const std::vector<float>& x) const {
    std::vector<float> out(static_cast<std::size_t>(out_dim));
    for (int o = 0; o < out_dim; ++o) {
      const float* row = weight.w.data() + static_cast<std::size_t>(o) * in_dim;
      float acc = bias.w[static_cast<std::size_t>(o)];
      for (int i = 0; i < in_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(o)] = acc;
    }
    return out;
  }

  std::vector<float> backward(const std::vector<float>& x,
                              const std::vector<float>& grad_out) {
    std::vector<float> grad_in(static_cast<std::size_t>(in_dim), 0.f);
    for (int o = 0; o < out_dim; ++o) {
      const float go = grad_out[static_cast<std::size_t>(o)];
      bias.g[static_cast<std::size_t>(o)] += go;
      const float* row = weight.w.data() + static_cast<std::size_t>(o) * in_dim;
      float* grow = weight.g.data() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) {
        grow[i] += go * x[static_cast<std::size_t>(i)];
        grad_in[static_cast<std::size_t>(i)] += go * row[i];
      }
    }
    return grad_in;
  }
};

inline std::vector<float> softmax(const std::vector<float>& logits) {
  float mx = logits[0];
  for (float v : logits) mx = std::max(mx, v);
  std::vector<float> p(logits.size());
  float sum = 0.f;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (float& v : p) v /= sum;
  return p;
}

// Returns loss; writes dL/dlogits (softmax + categorical cross-entropy).
inline float cross_entropy_grad(const std::vector<float>& logits, int label,
                                std::vector<float>& grad_logits) {
  const std::vector<float> p = softmax(logits);
  grad_logits = p;
  grad_logits[static_cast<std::size_t>(label)] -= 1.f;
  const float q = std::max(p[static_cast<std::size_t>(label)], 1e-12f);
  return -std::log(q);
}

inline float sigmoid(float x) { return 1.f / (1.f + std::exp(-x)); }

// --- recurrent cells -------------------------------------------------------
//
// Weight layout follows the common stacked-gate convention: W [gates*u][in],
// U [gates*u][u], b [gates*u]. GRU gate order: r, z, n with the reset gate
// applied to the projected previous state, n = tanh(Wn x + bn + r * (Un h)).
// LSTM gate order: i, f, g, o.

struct RnnStepCache {
  std::vector<float> x;        // input
  std::vector<float> h_prev;   // previous hidden state
  std::vector<float> c_prev;   // LSTM only
  std::vector<float> gates;    // post-activation gate values
  std::vector<float> uh;       // GRU: Un*h (pre reset)
  std::vector<float> c;        // LSTM cell state
  std::vector<float> h;        // output state
};

class RnnCell {
 public:
  Param w_in;    // [gates*u][in]
  Param w_rec;   // [gates*u][u]
  Param bias;    // [gates*u]
  int units = 0, input_dim = 0;
  bool lstm = false;

  void configure(const std::string& name, int in_d, int u, bool is_lstm, Rng& rng) {
    units = u;
    input_dim = in_d;
    lstm = is_lstm;
    const int gates = is_lstm ? 4 : 3;
    w_in.init_shape(name + ".w_in", {gates * u, in_d});
    w_rec.init_shape(name + ".w_rec", {gates * u, u});
    bias.init_shape(name + ".bias", {gates * u});
    w_in.fill_uniform(rng, std::sqrt(6.0f / static_cast<float>(in_d + u)));
    w_rec.fill_uniform(rng, std::sqrt(6.0f / static_cast<float>(u + u)));
  }

  void step(const std::vector<float>& x, const std::vector<float>& h_prev,
            const std::vector<float>& c_prev, RnnStepCache& cache) const {
    const int u = units;
    const int gates = lstm ? 4 : 3;
    std::vector<float> pre(static_cast<std::size_t>(gates) * u);
    for (int g = 0; g < gates * u; ++g) {
      const float* wi = w_in.w.data() + static_cast<std::size_t>(g) * input_dim;
      float acc = bias.w[static_cast<std::size_t>(g)];
      for (int i = 0; i < input_dim; ++i) acc += wi[i] * x[static_cast<std::size_t>(i)];
      pre[static_cast<std::size_t>(g)] = acc;
    }
    cache.x = x;
    cache.h_prev = h_prev;
    cache.h.assign(static_cast<std::size_t>(u), 0.f);
    if (!lstm) {
      // r, z act on (x, h_prev); n uses the reset-scaled recurrent projection.
      std::vector<float> rec(static_cast<std::size_t>(3) * u, 0.f);
      for (int g = 0; g < 3 * u; ++g) {
        const float* wr = w_rec.w.data() + static_cast<std::size_t>(g) * u;
        float acc = 0.f;
        for (int j = 0; j < u; ++j) acc += wr[j] * h_prev[static_cast<std::size_t>(j)];
        rec[static_cast<std::size_t>(g)] = acc;
      }
      cache.gates.assign(static_cast<std::size_t>(3) * u, 0.f);
      cache.uh.assign(static_cast<std::size_t>(u), 0.f);
      for (int j = 0; j < u; ++j) {
        const float r = sigmoid(pre[static_cast<std::size_t>(j)] + rec[static_cast<std::size_t>(j)]);
        const float z = sigmoid(pre[static_cast<std::size_t>(u + j)] + rec[static_cast<std::size_t>(u + j)]);
        const float uh = rec[static_cast<std::size_t>(2 * u + j)];
        const float n = std::tanh(pre[static_cast<std::size_t>(2 * u + j)] + r * uh);
        cache.gates[static_cast<std::size_t>(j)] = r;
        cache.gates[static_cast<std::size_t>(u + j)] = z;
        cache.gates[static_cast<std::size_t>(2 * u + j)] = n;
        cache.uh[static_cast<std::size_t>(j)] = uh;
        cache.h[static_cast<std::size_t>(j)] =
            (1.f - z) * n + z * h_prev[static_cast<std::size_t>(j)];
      }
    } else {
      cache.c_prev = c_prev;
      cache.c.assign(static_cast<std::size_t>(u), 0.f);
      cache.gates.assign(static_cast<std::size_t>(4) * u, 0.f);
      for (int g = 0; g < 4 * u; ++g) {
        const float* wr = w_rec.w.data() + static_cast<std::size_t>(g) * u;
        float acc = pre[static_cast<std::size_t>(g)];
        for (int j = 0; j < u; ++j) acc += wr[j] * h_prev[static_cast<std::size_t>(j)];
        pre[static_cast<std::size_t>(g)] = acc;
      }
      for (int j = 0; j < u; ++j) {
        const float i = sigmoid(pre[static_cast<std::size_t>(j)]);
        const float f = sigmoid(pre[static_cast<std::size_t>(u + j)]);
        const float g = std::tanh(pre[static_cast<std::size_t>(2 * u + j)]);
        const float o = sigmoid(pre[static_cast<std::size_t>(3 * u + j)]);
        const float c = f * c_prev[static_cast<std::size_t>(j)] + i * g;
        cache.gates[static_cast<std::size_t>(j)] = i;
        cache.gates[static_cast<std::size_t>(u + j)] = f;
        cache.gates[static_cast<std::size_t>(2 * u + j)] = g;
        cache.gates[static_cast<std::size_t>(3 * u + j)] = o;
        cache.c[static_cast<std::size_t>(j)] = c;
        cache.h[static_cast<std::size_t>(j)] = o * std::tanh(c);
      }
    }
  }

  // Consumes dL/dh (and dL/dc for LSTM); accumulates parameter grads and
  // returns grads w.r.t. x, h_prev (and c_prev via dc in/out).
  void step_backward(const RnnStepCache& cache, const std::vector<float>& dh,
                     std::vector<float>& dc, std::vector<float>& dx,
                     std::vector<float>& dh_prev) {
    const int u = units;
    const int gates = lstm ? 4 : 3;
    std::vector<float> dpre(static_cast<std::size_t>(gates) * u, 0.f);
    dx.assign(static_cast<std::size_t>(input_dim), 0.f);
    dh_prev.assign(static_cast<std::size_t>(u), 0.f);

    if (!lstm) {
      for (int j = 0; j < u; ++j) {
        const float r = cache.gates[static_cast<std::size_t>(j)];
        const float z = cache.gates[static_cast<std::size_t>(u + j)];
        const float n = cache.gates[static_cast<std::size_t>(2 * u + j)];
        const float uh = cache.uh[static_cast<std::size_t>(j)];
        const float dhj = dh[static_cast<std::size_t>(j)];
        const float dz = dhj * (cache.h_prev[static_cast<std::size_t>(j)] - n);
        const float dn = dhj * (1.f - z);
        dh_prev[static_cast<std::size_t>(j)] += dhj * z;
        const float dan = dn * (1.f - n * n);
        const float dr = dan * uh;
        // n-gate pre-activation: contributes to W/b directly and to U via r.
        dpre[static_cast<std::size_t>(2 * u + j)] = dan;
        dpre[static_cast<std::size_t>(j)] = dr * r * (1.f - r);
        dpre[static_cast<std::size_t>(u + j)] = dz * z * (1.f - z);
      }
      // Recurrent matrix: rows r,z see h_prev with plain products; row n is
      // scaled by the reset gate.
      for (int j = 0; j < u; ++j) {
        const float r = cache.gates[static_cast<std::size_t>(j)];
        const float dan = dpre[static_cast<std::size_t>(2 * u + j)];
        const float d_uh = dan * r;
        const float* wr = w_rec.w.data() + static_cast<std::size_t>(2 * u + j) * u;
        float* gr = w_rec.g.data() + static_cast<std::size_t>(2 * u + j) * u;
        for (int k = 0; k < u; ++k) {
          gr[k] += d_uh * cache.h_prev[static_cast<std::size_t>(k)];
          dh_prev[static_cast<std::size_t>(k)] += d_uh * wr[k];
        }
      }
      for (int g = 0; g < 2 * u; ++g) {
        const float d = dpre[static_cast<std::size_t>(g)];
        const float* wr = w_rec.w.data() + static_cast<std::size_t>(g) * u;
        float* gr = w_rec.g.data() + static_cast<std::size_t>(g) * u;
        for (int k = 0; k < u; ++k) {
          gr[k] += d * cache.h_prev[static_cast<std::size_t>(k)];
          dh_prev[static_cast<std::size_t>(k)] += d * wr[k];
        }
      }
    } else {
      for (int j = 0; j < u; ++j) {
        const float i = cache.gates[static_cast<std::size_t>(j)];
        const float f = cache.gates[static_cast<std::size_t>(u + j)];
        const float g = cache.gates[static_cast<std::size_t>(2 * u + j)];
        const float o = cache.gates[static_cast<std::size_t>(3 * u + j)];
        const float c = cache.c[static_cast<std::size_t>(j)];
        const float tc = std::tanh(c);
        const float dhj = dh[static_cast<std::size_t>(j)];
        float dcj = dc[static_cast<std::size_t>(j)] + dhj * o * (1.f - tc * tc);
        const float do_ = dhj * tc;
        const float di = dcj * g;
        const float dg = dcj * i;
        const float df = dcj * cache.c_prev[static_cast<std::size_t>(j)];
        dc[static_cast<std::size_t>(j)] = dcj * f;  // becomes dc_prev
        dpre[static_cast<std::size_t>(j)] = di * i * (1.f - i);
        dpre[static_cast<std::size_t>(u + j)] = df * f * (1.f - f);
        dpre[static_cast<std::size_t>(2 * u + j)] = dg * (1.f - g * g);
        dpre[static_cast<std::size_t>(3 * u + j)] = do_ * o * (1.f - o);
      }
      for (int g = 0; g < 4 * u; ++g) {
        const float d = dpre[static_cast<std::size_t>(g)];
        const float* wr = w_rec.w.data() + static_cast<std::size_t>(g) * u;
        float* gr = w_rec.g.data() + static_cast<std::size_t>(g) * u;
        for (int k = 0; k < u; ++k) {
          gr[k] += d * cache.h_prev[static_cast<std::size_t>(k)];
          dh_prev[static_cast<std::size_t>(k)] += d * wr[k];
        }
      }
    }

    for (int g = 0; g < gates * u; ++g) {
      const float d = dpre[static_cast<std::size_t>(g)];
      bias.g[static_cast<std::size_t>(g)] += d;
      const float* wi = w_in.w.data() + static_cast<std::size_t>(g) * input_dim;
      float* gi = w_in.g.data() + static_cast<std::size_t>(g) * input_dim;
      for (int i = 0; i < input_dim; ++i) {
        gi[i] += d * cache.x[static_cast<std::size_t>(i)];
        dx[static_cast<std::size_t>(i)] += d * wi[i];
      }
    }
  }
};

}  // namespace phaselocal::nn
