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

// Building blocks shared by the reference encoder and the seq2seq model.
// Every layer is a plain parameter holder; forward passes are const and
// return whatever the matching backward needs, backward passes accumulate
// into Param::grad.

#ifndef HFLOW_LAYERS_H_
#define HFLOW_LAYERS_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hflow/numerics.h"

namespace hflow {

struct Param {
  Param() = default;
  Param(std::string name_in, std::size_t rows, std::size_t cols)
      : name(std::move(name_in)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Matrix value;
  Matrix grad;
};

// Fills with U(-scale, scale), rounded to float32.
void init_uniform(Param& p, double scale, RngStream& rng);

struct Linear {
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out,
         bool with_bias = true);

  std::size_t in() const { return weight.value.cols(); }
  std::size_t out() const { return weight.value.rows(); }

  // y = W x + b (overwrites y).
  void forward(std::span<const double> x, std::span<double> y) const;
  Vec forward(std::span<const double> x) const;
  // Accumulates dW, db; adds W^T dy into dx unless dx is empty.
  void backward(std::span<const double> x, std::span<const double> dy,
                std::span<double> dx);

  void init(RngStream& rng);

  template <class F>
  void visit(F&& f) {
    f(weight);
    if (has_bias) f(bias);
  }

  Param weight;
  Param bias;
  bool has_bias = true;
};

struct GruStepCache {
  Vec x;
  Vec h_prev;
  Vec reset;
  Vec update;
  Vec candidate;
  Vec hidden_candidate;  // U_n h + b_un, before gating by reset
};

// Gated recurrent cell:
//   r = sigma(W_r x + b_r + U_r h + c_r)
//   u = sigma(W_u x + b_u + U_u h + c_u)
//   n = tanh(W_n x + b_n + r * (U_n h + c_n))
//   h' = (1 - u) * n + u * h
struct GruCell {
  GruCell() = default;
  GruCell(const std::string& name, std::size_t in, std::size_t hidden);

  std::size_t in() const { return input_weight.value.cols(); }
  std::size_t hidden() const { return hidden_weight.value.cols(); }

  // Writes h' into h_out; fills cache when non-null.
  void step(std::span<const double> x, std::span<const double> h_prev,
            std::span<double> h_out, GruStepCache* cache) const;
  // Given dL/dh', accumulates parameter grads, adds dL/dx into dx (unless
  // empty) and dL/dh into dh_prev.
  void backward(const GruStepCache& cache, std::span<const double> dh_out,
                std::span<double> dx, std::span<double> dh_prev);

  void init(RngStream& rng);

  template <class F>
  void visit(F&& f) {
    f(input_weight);
    f(hidden_weight);
    f(input_bias);
    f(hidden_bias);
  }

  Param input_weight;   // 3H x I, blocks [reset; update; candidate]
  Param hidden_weight;  // 3H x H
  Param input_bias;     // 3H x 1
  Param hidden_bias;    // 3H x 1
};

// Channels x time x bands activation volume.
struct FeatureMap {
  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t t, std::size_t b)
      : channels(c), time(t), bands(b), data(c * t * b, 0.0) {}

  double& at(std::size_t c, std::size_t t, std::size_t b) {
    return data[(c * time + t) * bands + b];
  }
  double at(std::size_t c, std::size_t t, std::size_t b) const {
    return data[(c * time + t) * bands + b];
  }

  std::size_t channels = 0;
  std::size_t time = 0;
  std::size_t bands = 0;
  Vec data;
};

// 3x3 convolution, stride 2, zero padding 1.
struct Conv2d {
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 2;

  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_channels,
         std::size_t out_channels);

  static std::size_t output_extent(std::size_t n) { return (n + 1) / 2; }

  std::size_t in_channels() const { return weight.value.cols() / 9; }
  std::size_t out_channels() const { return weight.value.rows(); }

  FeatureMap forward(const FeatureMap& in) const;
  // din may be null when the input gradient is not needed.
  void backward(const FeatureMap& in, const FeatureMap& dout,
                FeatureMap* din);

  void init(RngStream& rng);

  template <class F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }

  Param weight;  // out x (in * 9)
  Param bias;    // out x 1
};

void relu_inplace(std::span<double> values);
// Zeroes grad entries where the post-activation output is not positive.
void relu_backward(std::span<const double> activated, std::span<double> grad);

}  // namespace hflow

#endif  // HFLOW_LAYERS_H_
