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

#include "hflow/numerics.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace hflow {

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void matvec_acc(const Matrix& w, std::span<const double> x,
                std::span<double> y) {
  if (x.size() != w.cols() || y.size() != w.rows()) {
    throw DimensionError("matvec: shape mismatch");
  }
  const std::size_t cols = w.cols();
  const double* row = w.data();
  for (std::size_t r = 0; r < w.rows(); ++r, row += cols) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
    y[r] += s;
  }
}

void matvec_transposed_acc(const Matrix& w, std::span<const double> y,
                           std::span<double> x) {
  if (x.size() != w.cols() || y.size() != w.rows()) {
    throw DimensionError("matvec_transposed: shape mismatch");
  }
  const std::size_t cols = w.cols();
  const double* row = w.data();
  for (std::size_t r = 0; r < w.rows(); ++r, row += cols) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) x[c] += row[c] * yr;
  }
}

void outer_acc(std::span<const double> a, std::span<const double> b,
               Matrix& g) {
  if (g.rows() != a.size() || g.cols() != b.size()) {
    throw DimensionError("outer: shape mismatch");
  }
  const std::size_t cols = g.cols();
  double* row = g.data();
  for (std::size_t r = 0; r < a.size(); ++r, row += cols) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ar * b[c];
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

double determinant(Matrix a) {
  if (a.rows() != a.cols()) throw DimensionError("determinant: not square");
  const std::size_t n = a.rows();
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > std::abs(a(pivot, k))) pivot = i;
    }
    if (a(pivot, k) == 0.0) return 0.0;
    if (pivot != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(pivot, j));
      det = -det;
    }
    det *= a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return det;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double round_to_float(double x) {
  return static_cast<double>(static_cast<float>(x));
}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = round_to_float(v);
}

DiagGaussian::DiagGaussian(Vec mu_in, Vec log_var_in)
    : mu(std::move(mu_in)), log_var(std::move(log_var_in)) {
  if (mu.size() != log_var.size()) {
    throw DimensionError("DiagGaussian: mu and log_var lengths differ");
  }
  for (double& lv : log_var) lv = std::clamp(lv, kLogVarMin, kLogVarMax);
}

Vec gaussian_sample(const DiagGaussian& d, std::span<const double> eps) {
  if (eps.size() != d.mu.size()) {
    throw DimensionError("gaussian_sample: eps length " +
                         std::to_string(eps.size()) + " != latent dim " +
                         std::to_string(d.mu.size()));
  }
  Vec z(d.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = d.mu[i] + std::exp(0.5 * d.log_var[i]) * eps[i];
  }
  return z;
}

double diag_gaussian_kl(const DiagGaussian& d) {
  double kl = 0.0;
  for (std::size_t i = 0; i < d.mu.size(); ++i) {
    kl += std::exp(d.log_var[i]) + d.mu[i] * d.mu[i] - 1.0 - d.log_var[i];
  }
  kl *= 0.5;
  if (!std::isfinite(kl)) throw NonFiniteError("diag_gaussian_kl: non-finite");
  // exp(x) - 1 - x >= 0 holds exactly in real arithmetic; clear rounding dust.
  return std::max(kl, 0.0);
}

void diag_gaussian_kl_grad(const DiagGaussian& d, std::span<double> grad_mu,
                           std::span<double> grad_log_var) {
  if (grad_mu.size() != d.dim() || grad_log_var.size() != d.dim()) {
    throw DimensionError("diag_gaussian_kl_grad: shape mismatch");
  }
  for (std::size_t i = 0; i < d.dim(); ++i) {
    grad_mu[i] = d.mu[i];
    grad_log_var[i] = 0.5 * (std::exp(d.log_var[i]) - 1.0);
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view label)
    : seed_(seed),
      key_(splitmix64(splitmix64(seed) ^ fnv1a(label))),
      label_(label) {}

std::uint64_t RngStream::next_u64() {
  // Two rounds decorrelate neighbouring counters under the same key.
  const std::uint64_t c = counter_++;
  return splitmix64(splitmix64(key_ + c * 0xd1b54a32d192ed03ULL) ^ key_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int RngStream::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
  const auto wide = static_cast<unsigned __int128>(next_u64()) * range;
  return lo + static_cast<int>(wide >> 64);
}

double RngStream::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

void RngStream::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal();
}

RngStream RngStream::derive(std::string_view suffix) const {
  std::string child = label_;
  child += '/';
  child += suffix;
  return RngStream(seed_, child);
}

Vec numerical_gradient(const ScalarFunction& f, std::span<const double> x,
                       double step) {
  Vec probe(x.begin(), x.end());
  Vec grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(probe);
    probe[i] = saved - step;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NonFiniteError("grad_check: f is not finite at coordinate " +
                           std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double grad_check(const ScalarFunction& f, std::span<const double> x,
                  std::span<const double> analytic, double step) {
  if (analytic.size() != x.size()) {
    throw DimensionError("grad_check: gradient length mismatch");
  }
  const Vec central = numerical_gradient(f, x, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(central[i]), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - central[i]) / denom);
  }
  return worst;
}

}  // namespace hflow
