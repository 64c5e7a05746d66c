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

#include "hflow/flow.h"

#include <cmath>

#include "gtest/gtest.h"
#include "test_support.h"

namespace hflow {
namespace {

using testing::dense_apply;
using testing::householder_matrix;
using testing::max_abs_diff;
using testing::random_vec;

double max_abs_entry(const Matrix& m) {
  double worst = 0.0;
  for (double x : m.flat()) worst = std::max(worst, std::abs(x));
  return worst;
}

Matrix minus_identity(Matrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) -= 1.0;
  return m;
}

TEST(HouseholderTest, MatchesDenseMatrix) {
  RngStream rng(1, "dense");
  for (int trial = 0; trial < 100; ++trial) {
    const Vec v = random_vec(rng, 7);
    const Vec z = random_vec(rng, 7);
    EXPECT_LT(max_abs_diff(apply_householder(v, z), dense_apply(householder_matrix(v), z)),
              1e-12);
  }
}

TEST(HouseholderTest, ReflectsVectorAndFixesOrthogonalComplement) {
  const Vec v = {1.0, 2.0, -2.0};
  const Vec reflected = apply_householder(v, v);
  EXPECT_LT(max_abs_diff(reflected, Vec{-1.0, -2.0, 2.0}), 1e-15);
  const Vec w = {2.0, -1.0, 0.0};  // v.w = 0
  EXPECT_EQ(apply_householder(v, w), w);
}

TEST(HouseholderTest, ReflectsFirstCoordinate) {
  EXPECT_EQ(apply_householder(Vec{1.0, 0.0}, Vec{3.0, 4.0}), (Vec{-3.0, 4.0}));
  EXPECT_EQ(apply_householder(Vec{2.0, 0.0, 0.0}, Vec{2.0, 0.0, 0.0}), (Vec{-2.0, 0.0, 0.0}));
}

TEST(HouseholderTest, ScaleInvariantInV) {
  RngStream rng(2, "scale");
  const Vec v = random_vec(rng, 5);
  const Vec z = random_vec(rng, 5);
  Vec scaled = v;
  for (double& x : scaled) x *= -37.5;
  EXPECT_LT(max_abs_diff(apply_householder(v, z), apply_householder(scaled, z)), 1e-12);
}

TEST(HouseholderTest, OrthogonalInvolutiveNormPreservingDetMinusOne) {
  RngStream rng(3, "props");
  for (int trial = 0; trial < 200; ++trial) {
    const Vec v = random_vec(rng, 16, std::exp(rng.uniform(-3.0, 3.0)));
    const Vec z = random_vec(rng, 16);
    const Matrix h = householder_matrix(v);
    EXPECT_LT(max_abs_entry(minus_identity(matmul(transpose(h), h))), 1e-10);
    EXPECT_LT(max_abs_diff(apply_householder(v, apply_householder(v, z)), z), 1e-10);
    EXPECT_NEAR(norm(apply_householder(v, z)), norm(z), 1e-9);
    EXPECT_NEAR(determinant(h), -1.0, 1e-10);
  }
}

TEST(HouseholderTest, DegenerateReflector) {
  const Vec z = {1.0, 2.0};
  EXPECT_THROW(apply_householder(Vec{0.0, 0.0}, z), DegenerateReflectorError);
  EXPECT_THROW(apply_householder(Vec{1e-9, 0.0}, z), DegenerateReflectorError);
  EXPECT_NO_THROW(apply_householder(Vec{2e-8, 0.0}, z));
  try {
    apply_householder(Vec{0.0, 0.0}, z);
  } catch (const DegenerateReflectorError& e) {
    EXPECT_STREQ(e.what(), "degenerate reflector");
  }
  EXPECT_THROW(apply_householder(Vec{1.0}, z), DimensionError);
}

TEST(ComposeFlowTest, EqualsDenseProductAndSignAlternates) {
  RngStream rng(4, "compose");
  for (std::size_t k : {1u, 2u, 3u, 8u, 16u}) {
    FlowStack stack;
    stack.arch = Arch::kArch2;
    Matrix product = Matrix::identity(6);
    for (std::size_t i = 0; i < k; ++i) {
      stack.vectors.push_back(random_vec(rng, 6));
      product = matmul(householder_matrix(stack.vectors.back()), product);
    }
    const Vec z = random_vec(rng, 6);
    EXPECT_LT(max_abs_diff(compose_flow(stack, z), dense_apply(product, z)), 1e-12);
    EXPECT_NEAR(determinant(product), k % 2 == 0 ? 1.0 : -1.0, 1e-10);
    EXPECT_EQ(flow_logdet(stack), 0.0);
  }
}

TEST(ComposeFlowTest, EmptyStackIsIdentity) {
  const Vec z = {0.5, -1.0, 2.0};
  EXPECT_EQ(compose_flow(FlowStack{}, z), z);
}

TEST(ComposeFlowTest, KlOfFlowedGaussianUnchanged) {
  // Oracle: full-covariance KL(N(H mu, H S H^T) || N(0, I)) computed with
  // dense matrices, compared with the diagonal formula on (mu, S).
  RngStream rng(5, "kl-invariance");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 5;
    const DiagGaussian q(random_vec(rng, d), random_vec(rng, d, 0.7));
    Matrix h = Matrix::identity(d);
    for (int k = 0; k < 4; ++k) h = matmul(householder_matrix(random_vec(rng, d)), h);
    Matrix s(d, d);
    for (std::size_t i = 0; i < d; ++i) s(i, i) = std::exp(q.log_var[i]);
    const Matrix cov = matmul(matmul(h, s), transpose(h));
    const Vec mean = dense_apply(h, q.mu);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += cov(i, i);
    const double full_kl =
        0.5 * (trace + dot(mean, mean) - static_cast<double>(d) - std::log(determinant(cov)));
    EXPECT_NEAR(full_kl, diag_gaussian_kl(q), 1e-10);
  }
}

// Scalar probe L = <u, compose_flow(stack, z0)>.
TEST(FlowTapeTest, GradientsMatchFiniteDifferences) {
  RngStream rng(6, "tape");
  for (std::size_t k : {1u, 2u, 4u}) {
    const std::size_t d = 4;
    FlowStack stack;
    for (std::size_t i = 0; i < k; ++i) stack.vectors.push_back(random_vec(rng, d));
    const Vec z0 = random_vec(rng, d);
    const Vec u = random_vec(rng, d);
    FlowTape tape;
    const Vec zk = tape.forward(stack, z0);
    EXPECT_EQ(zk, compose_flow(stack, z0));
    const FlowGradients g = tape.backward(u);

    Vec x = z0, analytic = g.grad_z0;
    for (std::size_t i = 0; i < k; ++i) {
      x.insert(x.end(), stack.vectors[i].begin(), stack.vectors[i].end());
      analytic.insert(analytic.end(), g.grad_vectors[i].begin(), g.grad_vectors[i].end());
    }
    const ScalarFunction f = [&](std::span<const double> p) {
      FlowStack s;
      for (std::size_t i = 0; i < k; ++i) {
        s.vectors.emplace_back(p.begin() + d * (i + 1), p.begin() + d * (i + 2));
      }
      return dot(u, compose_flow(s, p.subspan(0, d)));
    };
    EXPECT_LT(grad_check(f, x, analytic), 1e-6) << "K=" << k;
  }
}

TEST(FlowTapeTest, ZeroUpstreamGivesZeroGradients) {
  RngStream rng(7, "zero");
  FlowStack stack;
  for (int i = 0; i < 3; ++i) stack.vectors.push_back(random_vec(rng, 4));
  FlowTape tape;
  tape.forward(stack, random_vec(rng, 4));
  const FlowGradients g = tape.backward(Vec(4, 0.0));
  EXPECT_EQ(g.grad_z0, Vec(4, 0.0));
  for (const Vec& gv : g.grad_vectors) EXPECT_EQ(gv, Vec(4, 0.0));
}

TEST(FlowTapeTest, BackwardWithoutForwardThrows) {
  FlowTape tape;
  EXPECT_FALSE(tape.has_cache());
  EXPECT_THROW(tape.backward(Vec{1.0}), std::logic_error);
}

TEST(FlowParamsTest, ParameterLayoutPerArchitecture) {
  auto count = [](FlowParams& p) {
    std::size_t n = 0;
    p.visit([&](Param&) { ++n; });
    return n;
  };
  FlowParams vanilla(Arch::kVanilla, 16, 8);
  EXPECT_EQ(count(vanilla), 0u);
  EXPECT_EQ(vanilla.head_outputs(), 0u);
  FlowParams a1(Arch::kArch1, 4, 8);
  EXPECT_EQ(a1.affine.size(), 3u);
  EXPECT_EQ(a1.head_outputs(), 8u);
  FlowParams a2(Arch::kArch2, 4, 8);
  EXPECT_EQ(count(a2), 0u);
  EXPECT_EQ(a2.head_outputs(), 32u);
  FlowParams a3(Arch::kArch3, 4, 8);
  EXPECT_EQ(count(a3), 4u);
  EXPECT_EQ(a3.shared[2].name, "flow.shared.2");
  EXPECT_EQ(a3.head_outputs(), 0u);
  EXPECT_THROW(FlowParams(Arch::kArch3, 0, 8), std::invalid_argument);
}

TEST(FlowParamsTest, InitIsSeededAndNonDegenerate) {
  FlowParams a(Arch::kArch3, 8, 6), b(Arch::kArch3, 8, 6);
  RngStream ra(11, "flow"), rb(11, "flow");
  a.init(ra);
  b.init(rb);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(a.shared[k].value, b.shared[k].value);
    EXPECT_NEAR(norm(a.shared[k].value.flat()), 1.0, 1e-6);
  }
  FlowParams c(Arch::kArch1, 3, 4);
  RngStream rc(12, "flow");
  c.init(rc);
  EXPECT_NEAR(c.affine[0].weight.value(1, 1), 1.0, 0.1);
  EXPECT_NEAR(c.affine[0].weight.value(0, 1), 0.0, 0.1);
}

TEST(SourceVectorsTest, Arch2SlicesHeads) {
  FlowParams p(Arch::kArch2, 3, 2);
  const Vec heads = {1, 2, 3, 4, 5, 6};
  const FlowStack s = source_vectors(p, heads);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.vectors[1], (Vec{3, 4}));
  EXPECT_THROW(source_vectors(p, Vec{1, 2}), DimensionError);
}

TEST(SourceVectorsTest, Arch1FollowsAffineRecursion) {
  FlowParams p(Arch::kArch1, 3, 2);
  RngStream rng(13, "a1");
  p.init(rng);
  p.affine[1].bias.value(0, 0) = 0.25;
  const Vec head = {0.3, -0.7};
  const FlowStack s = source_vectors(p, head);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.vectors[0], head);
  for (std::size_t k = 1; k < 3; ++k) {
    const Linear& a = p.affine[k - 1];
    for (std::size_t i = 0; i < 2; ++i) {
      const double expect = a.weight.value(i, 0) * s.vectors[k - 1][0] +
                            a.weight.value(i, 1) * s.vectors[k - 1][1] + a.bias.value(i, 0);
      EXPECT_NEAR(s.vectors[k][i], expect, 1e-15);
    }
  }
}

TEST(SourceVectorsTest, Arch1IdentityChainRepeatsFirstVector) {
  FlowParams p(Arch::kArch1, 4, 3);
  for (Linear& a : p.affine) {
    a.weight.value = Matrix::identity(3);
    a.bias.value.fill(0.0);
  }
  const Vec head = {0.2, -1.0, 0.4};
  const FlowStack s = source_vectors(p, head);
  ASSERT_EQ(s.size(), 4u);
  for (const Vec& v : s.vectors) EXPECT_EQ(v, head);
}

// L = <u, zK> through source_vectors; checks head and parameter gradients.
void check_source_gradients(Arch arch) {
  const std::size_t d = 3, k = 3;
  FlowParams p(arch, k, d);
  RngStream rng(14, "src-grad");
  p.init(rng);
  const Vec heads = random_vec(rng, p.head_outputs());
  const Vec z0 = random_vec(rng, d);
  const Vec u = random_vec(rng, d);

  std::vector<Param*> params;
  p.visit([&](Param& q) { params.push_back(&q); });
  for (Param* q : params) q->zero_grad();
  const FlowStack stack = source_vectors(p, heads);
  FlowTape tape;
  tape.forward(stack, z0);
  const FlowGradients g = tape.backward(u);
  Vec grad_heads(heads.size(), 0.0);
  source_vectors_backward(p, stack, g.grad_vectors, grad_heads);

  Vec x = heads, analytic = grad_heads;
  for (Param* q : params) {
    x.insert(x.end(), q->value.flat().begin(), q->value.flat().end());
    analytic.insert(analytic.end(), q->grad.flat().begin(), q->grad.flat().end());
  }
  const ScalarFunction f = [&](std::span<const double> v) {
    std::size_t at = heads.size();
    for (Param* q : params) {
      for (double& w : q->value.flat()) w = v[at++];
    }
    return dot(u, compose_flow(source_vectors(p, v.subspan(0, heads.size())), z0));
  };
  EXPECT_LT(grad_check(f, x, analytic), 1e-5) << arch_name(arch);
}

TEST(SourceVectorsTest, GradientsArch1) { check_source_gradients(Arch::kArch1); }
TEST(SourceVectorsTest, GradientsArch2) { check_source_gradients(Arch::kArch2); }
TEST(SourceVectorsTest, GradientsArch3) { check_source_gradients(Arch::kArch3); }

TEST(ArchNameTest, RoundTrip) {
  for (Arch a : {Arch::kVanilla, Arch::kArch1, Arch::kArch2, Arch::kArch3}) {
    EXPECT_EQ(parse_arch(arch_name(a)), a);
  }
  EXPECT_THROW(parse_arch("arch4"), std::invalid_argument);
}

}  // namespace
}  // namespace hflow
