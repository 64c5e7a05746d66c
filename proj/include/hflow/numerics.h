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

#ifndef HFLOW_NUMERICS_H_
#define HFLOW_NUMERICS_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hflow {

// Thrown on shape or dimension mismatches between arguments.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double value);

  static Matrix identity(std::size_t n);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Elementary kernels. The *_acc variants accumulate into their output.
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// y += W x
void matvec_acc(const Matrix& w, std::span<const double> x,
                std::span<double> y);
// x += W^T y
void matvec_transposed_acc(const Matrix& w, std::span<const double> y,
                           std::span<double> x);
// G += a b^T
void outer_acc(std::span<const double> a, std::span<const double> b,
               Matrix& g);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
// Determinant by partial-pivot LU. Intended for small verification matrices.
double determinant(Matrix a);

bool all_finite(std::span<const double> values);

double sigmoid(double x);

// Nearest float32 value, so that data written as float32 reloads exactly.
double round_to_float(double x);
void round_to_float(std::span<double> values);

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 30.0;

// Diagonal Gaussian posterior N(mu, diag(exp(log_var))).
// log_var is clamped to [kLogVarMin, kLogVarMax] on construction.
struct DiagGaussian {
  DiagGaussian() = default;
  DiagGaussian(Vec mu_in, Vec log_var_in);

  std::size_t dim() const { return mu.size(); }

  Vec mu;
  Vec log_var;
};

// Reparameterized draw z0 = mu + exp(log_var / 2) * eps.
Vec gaussian_sample(const DiagGaussian& d, std::span<const double> eps);

// KL(N(mu, diag sigma^2) || N(0, I)) in nats.
double diag_gaussian_kl(const DiagGaussian& d);

// Gradient of diag_gaussian_kl with respect to mu and log_var, written into
// grad_mu and grad_log_var (overwritten, not accumulated).
void diag_gaussian_kl_grad(const DiagGaussian& d, std::span<double> grad_mu,
                           std::span<double> grad_log_var);

// Counter-based generator: output i is a hash of (seed, label, i), so a
// stream's sequence depends only on those three values.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer on the closed range [lo, hi].
  int uniform_int(int lo, int hi);
  // Standard normal via Box-Muller; consumes two counters per draw.
  double normal();
  void fill_normal(std::span<double> out);

  // Independent child stream labelled "<label>/<suffix>".
  RngStream derive(std::string_view suffix) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  const std::string& label() const { return label_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::string label_;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central-difference gradient.
Vec numerical_gradient(const ScalarFunction& f, std::span<const double> x,
                       double step = 1e-5);

// Max over coordinates of |analytic - central| / max(|analytic|, |central|,
// 1e-8). Throws NonFiniteError if f is not finite at any probe point.
double grad_check(const ScalarFunction& f, std::span<const double> x,
                  std::span<const double> analytic, double step = 1e-5);

}  // namespace hflow

#endif  // HFLOW_NUMERICS_H_
