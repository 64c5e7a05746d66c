// Copyright 2026 The hflow Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hflow/layers.h"

#include <algorithm>
#include <cmath>

namespace hflow {

void init_uniform(Param& p, double scale, RngStream& rng) {
  for (double& v : p.value.flat()) v = round_to_float(rng.uniform(-scale, scale));
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out,
               bool with_bias)
    : weight(name + ".weight", out, in),
      bias(with_bias ? Param(name + ".bias", out, 1) : Param()),
      has_bias(with_bias) {}

void Linear::forward(std::span<const double> x, std::span<double> y) const {
  if (has_bias) {
    std::copy(bias.value.flat().begin(), bias.value.flat().end(), y.begin());
  } else {
    std::fill(y.begin(), y.end(), 0.0);
  }
  matvec_acc(weight.value, x, y);
}

Vec Linear::forward(std::span<const double> x) const {
  Vec y(out());
  forward(x, y);
  return y;
}

void Linear::backward(std::span<const double> x, std::span<const double> dy,
                      std::span<double> dx) {
  outer_acc(dy, x, weight.grad);
  if (has_bias) axpy(1.0, dy, bias.grad.flat());
  if (!dx.empty()) matvec_transposed_acc(weight.value, dy, dx);
}

void Linear::init(RngStream& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(in()));
  init_uniform(weight, scale, rng);
  if (has_bias) init_uniform(bias, scale, rng);
}

GruCell::GruCell(const std::string& name, std::size_t in, std::size_t hidden)
    : input_weight(name + ".input_weight", 3 * hidden, in),
      hidden_weight(name + ".hidden_weight", 3 * hidden, hidden),
      input_bias(name + ".input_bias", 3 * hidden, 1),
      hidden_bias(name + ".hidden_bias", 3 * hidden, 1) {}

void GruCell::step(std::span<const double> x, std::span<const double> h_prev,
                   std::span<double> h_out, GruStepCache* cache) const {
  const std::size_t h = hidden();
  if (x.size() != in() || h_prev.size() != h || h_out.size() != h) {
    throw DimensionError("GruCell::step: shape mismatch");
  }
  Vec gx(input_bias.value.flat().begin(), input_bias.value.flat().end());
  Vec gh(hidden_bias.value.flat().begin(), hidden_bias.value.flat().end());
  matvec_acc(input_weight.value, x, gx);
  matvec_acc(hidden_weight.value, h_prev, gh);

  Vec reset(h), update(h), candidate(h), hidden_candidate(h);
  for (std::size_t i = 0; i < h; ++i) {
    reset[i] = sigmoid(gx[i] + gh[i]);
    update[i] = sigmoid(gx[h + i] + gh[h + i]);
    hidden_candidate[i] = gh[2 * h + i];
    candidate[i] = std::tanh(gx[2 * h + i] + reset[i] * hidden_candidate[i]);
  }
  for (std::size_t i = 0; i < h; ++i) {
    h_out[i] = (1.0 - update[i]) * candidate[i] + update[i] * h_prev[i];
  }
  if (cache != nullptr) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->reset = std::move(reset);
    cache->update = std::move(update);
    cache->candidate = std::move(candidate);
    cache->hidden_candidate = std::move(hidden_candidate);
  }
}

void GruCell::backward(const GruStepCache& cache,
                       std::span<const double> dh_out, std::span<double> dx,
                       std::span<double> dh_prev) {
  const std::size_t h = hidden();
  Vec dgx(3 * h), dgh(3 * h);
  for (std::size_t i = 0; i < h; ++i) {
    const double r = cache.reset[i];
    const double u = cache.update[i];
    const double n = cache.candidate[i];
    const double g = dh_out[i];
    dh_prev[i] += g * u;
    const double dn_pre = g * (1.0 - u) * (1.0 - n * n);
    const double du_pre = g * (cache.h_prev[i] - n) * u * (1.0 - u);
    const double dr_pre = dn_pre * cache.hidden_candidate[i] * r * (1.0 - r);
    dgx[i] = dr_pre;
    dgx[h + i] = du_pre;
    dgx[2 * h + i] = dn_pre;
    dgh[i] = dr_pre;
    dgh[h + i] = du_pre;
    dgh[2 * h + i] = dn_pre * r;
  }
  outer_acc(dgx, cache.x, input_weight.grad);
  outer_acc(dgh, cache.h_prev, hidden_weight.grad);
  axpy(1.0, dgx, input_bias.grad.flat());
  axpy(1.0, dgh, hidden_bias.grad.flat());
  if (!dx.empty()) matvec_transposed_acc(input_weight.value, dgx, dx);
  matvec_transposed_acc(hidden_weight.value, dgh, dh_prev);
}

void GruCell::init(RngStream& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden()));
  init_uniform(input_weight, scale, rng);
  init_uniform(hidden_weight, scale, rng);
  init_uniform(input_bias, scale, rng);
  init_uniform(hidden_bias, scale, rng);
}

Conv2d::Conv2d(const std::string& name, std::size_t in_channels,
               std::size_t out_channels)
    : weight(name + ".weight", out_channels, in_channels * 9),
      bias(name + ".bias", out_channels, 1) {}

FeatureMap Conv2d::forward(const FeatureMap& in) const {
  if (in.channels != in_channels()) {
    throw DimensionError("Conv2d: input channel mismatch");
  }
  const std::size_t out_t = output_extent(in.time);
  const std::size_t out_b = output_extent(in.bands);
  FeatureMap out(out_channels(), out_t, out_b);
  for (std::size_t o = 0; o < out_channels(); ++o) {
    const double* w = weight.value.data() + o * in_channels() * 9;
    for (std::size_t t = 0; t < out_t; ++t) {
      for (std::size_t b = 0; b < out_b; ++b) {
        double s = bias.value(o, 0);
        for (std::size_t c = 0; c < in.channels; ++c) {
          for (std::size_t kt = 0; kt < kKernel; ++kt) {
            const long it = static_cast<long>(t * kStride + kt) - 1;
            if (it < 0 || it >= static_cast<long>(in.time)) continue;
            for (std::size_t kb = 0; kb < kKernel; ++kb) {
              const long ib = static_cast<long>(b * kStride + kb) - 1;
              if (ib < 0 || ib >= static_cast<long>(in.bands)) continue;
              s += w[c * 9 + kt * 3 + kb] * in.at(c, it, ib);
            }
          }
        }
        out.at(o, t, b) = s;
      }
    }
  }
  return out;
}

void Conv2d::backward(const FeatureMap& in, const FeatureMap& dout,
                      FeatureMap* din) {
  if (din != nullptr) *din = FeatureMap(in.channels, in.time, in.bands);
  for (std::size_t o = 0; o < out_channels(); ++o) {
    const double* w = weight.value.data() + o * in_channels() * 9;
    double* gw = weight.grad.data() + o * in_channels() * 9;
    for (std::size_t t = 0; t < dout.time; ++t) {
      for (std::size_t b = 0; b < dout.bands; ++b) {
        const double g = dout.at(o, t, b);
        if (g == 0.0) continue;
        bias.grad(o, 0) += g;
        for (std::size_t c = 0; c < in.channels; ++c) {
          for (std::size_t kt = 0; kt < kKernel; ++kt) {
            const long it = static_cast<long>(t * kStride + kt) - 1;
            if (it < 0 || it >= static_cast<long>(in.time)) continue;
            for (std::size_t kb = 0; kb < kKernel; ++kb) {
              const long ib = static_cast<long>(b * kStride + kb) - 1;
              if (ib < 0 || ib >= static_cast<long>(in.bands)) continue;
              gw[c * 9 + kt * 3 + kb] += g * in.at(c, it, ib);
              if (din != nullptr) {
                din->at(c, it, ib) += g * w[c * 9 + kt * 3 + kb];
              }
            }
          }
        }
      }
    }
  }
}

void Conv2d::init(RngStream& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_channels() * 9));
  init_uniform(weight, scale, rng);
  init_uniform(bias, scale, rng);
}

void relu_inplace(std::span<double> values) {
  for (double& v : values) v = v > 0.0 ? v : 0.0;
}

void relu_backward(std::span<const double> activated, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (activated[i] <= 0.0) grad[i] = 0.0;
  }
}

}  // namespace hflow
