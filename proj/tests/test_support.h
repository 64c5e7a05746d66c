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

// Shared helpers for the unit and acceptance tests.

#ifndef HFLOW_TESTS_TEST_SUPPORT_H_
#define HFLOW_TESTS_TEST_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hflow/model.h"
#include "hflow/numerics.h"
#include "hflow/synthdata.h"

namespace hflow::testing {

inline Vec random_vec(RngStream& rng, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline Matrix random_matrix(RngStream& rng, std::size_t r, std::size_t c,
                            double scale = 1.0) {
  Matrix m(r, c);
  for (double& x : m.flat()) x = scale * rng.normal();
  return m;
}

// Dense Householder matrix I - 2 v v^T / (v^T v), built independently of
// apply_householder.
inline Matrix householder_matrix(const Vec& v) {
  const std::size_t n = v.size();
  double s = 0.0;
  for (double x : v) s += x * x;
  Matrix h = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) h(i, j) -= 2.0 * v[i] * v[j] / s;
  }
  return h;
}

inline Vec dense_apply(const Matrix& m, const Vec& x) {
  Vec y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) y[i] += m(i, j) * x[j];
  }
  return y;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Small model for gradient checks: every dimension a handful of units.
inline ModelConfig tiny_model_config(Arch arch, std::size_t k = 2) {
  ModelConfig c;
  c.arch = arch;
  c.num_vectors = k;
  c.latent_dim = 3;
  c.mel_bands = 6;
  c.vocab = 5;
  c.embedding_dim = 3;
  c.encoder_hidden = 4;
  c.decoder_hidden = 5;
  c.attention_dim = 4;
  c.ref_conv1_channels = 2;
  c.ref_conv2_channels = 3;
  c.ref_hidden = 4;
  return c;
}

// Small corpus for fast training tests.
inline CorpusSpec tiny_corpus_spec(std::size_t n_train = 5) {
  CorpusSpec s;
  s.vocab = 5;
  s.mel_bands = 6;
  s.n_train = n_train;
  s.min_phonemes = 2;
  s.max_phonemes = 3;
  s.n_prompts = 4;
  return s;
}

// Flattened values of every parameter of `model`.
inline Vec flatten_params(Model& model) {
  Vec out;
  for (Param* p : model.params()) out.insert(out.end(), p->value.flat().begin(), p->value.flat().end());
  return out;
}

inline Vec flatten_grads(Model& model) {
  Vec out;
  for (Param* p : model.params()) out.insert(out.end(), p->grad.flat().begin(), p->grad.flat().end());
  return out;
}

inline void assign_params(Model& model, std::span<const double> values) {
  std::size_t at = 0;
  for (Param* p : model.params()) {
    for (double& v : p->value.flat()) v = values[at++];
  }
}

// Checks d(loss)/d(param) for every parameter entry of `model` against
// central differences; `loss` reads the model's current values.
inline double model_grad_check(Model& model, const std::function<double()>& loss,
                               std::span<const double> analytic, double step = 1e-5) {
  const Vec base = flatten_params(model);
  const ScalarFunction f = [&](std::span<const double> x) {
    assign_params(model, x);
    return loss();
  };
  const double err = grad_check(f, base, analytic, step);
  assign_params(model, base);
  return err;
}

}  // namespace hflow::testing

#endif  // HFLOW_TESTS_TEST_SUPPORT_H_
