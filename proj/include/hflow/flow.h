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

// Householder normalizing flow.
//
// A stack of K reflections H_k = I - 2 v_k v_k^T / |v_k|^2 maps a sample z0 of
// the diagonal posterior to z_K = H_K ... H_1 z0, whose distribution is a
// full-covariance Gaussian. Each H_k is orthogonal, so the flow contributes
// nothing to the log-density.
//
// Three ways of obtaining the vectors are supported:
//   kArch1  first vector from an encoder head, each following vector an
//           affine image of the previous one (v_{k+1} = A_k v_k + c_k);
//   kArch2  all K vectors from encoder heads;
//   kArch3  K trainable vectors shared by every utterance.
// kVanilla means no flow at all.

#ifndef HFLOW_FLOW_H_
#define HFLOW_FLOW_H_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "hflow/layers.h"
#include "hflow/numerics.h"

namespace hflow {

enum class Arch { kVanilla, kArch1, kArch2, kArch3 };

std::string_view arch_name(Arch arch);
// Accepts "vanilla", "arch1", "arch2", "arch3".
Arch parse_arch(std::string_view name);

// Reflectors shorter than this are rejected instead of being treated as the
// identity.
inline constexpr double kMinReflectorNorm = 1e-8;

class DegenerateReflectorError : public std::invalid_argument {
 public:
  DegenerateReflectorError() : std::invalid_argument("degenerate reflector") {}
};

struct FlowStack {
  Arch arch = Arch::kVanilla;
  std::vector<Vec> vectors;

  std::size_t size() const { return vectors.size(); }
};

// z' = z - 2 v (v . z) / |v|^2
Vec apply_householder(std::span<const double> v, std::span<const double> z);

Vec compose_flow(const FlowStack& stack, std::span<const double> z0);

// Always 0: every step is a reflection with |det| = 1.
double flow_logdet(const FlowStack& stack);

struct FlowGradients {
  Vec grad_z0;
  std::vector<Vec> grad_vectors;
};

// Records the intermediate samples of one forward pass for backprop.
class FlowTape {
 public:
  Vec forward(const FlowStack& stack, std::span<const double> z0);
  // Throws std::logic_error when forward() has not been called.
  FlowGradients backward(std::span<const double> upstream) const;

  bool has_cache() const { return cached_; }
  const FlowStack& stack() const { return stack_; }

 private:
  FlowStack stack_;
  std::vector<Vec> inputs_;
  bool cached_ = false;
};

// Trainable state for vector sourcing.
struct FlowParams {
  FlowParams() = default;
  FlowParams(Arch arch, std::size_t num_vectors, std::size_t latent_dim);

  // Arch1 maps: identity + N(0, 0.01^2) noise, zero bias. Arch3 vectors:
  // seeded random unit vectors.
  void init(RngStream& rng);

  // Number of reference-encoder head outputs consumed by source_vectors.
  std::size_t head_outputs() const;

  template <class F>
  void visit(F&& f) {
    for (Param& p : shared) f(p);
    for (Linear& a : affine) a.visit(f);
  }

  Arch arch = Arch::kVanilla;
  std::size_t num_vectors = 0;
  std::size_t latent_dim = 0;
  std::vector<Param> shared;   // kArch3: K vectors, latent x 1
  std::vector<Linear> affine;  // kArch1: K - 1 square maps with bias
};

// Produces the K Householder vectors for one utterance. head_outputs must have
// FlowParams::head_outputs() entries (ignored for kArch3).
FlowStack source_vectors(const FlowParams& params,
                         std::span<const double> head_outputs);

// Backprop from per-vector gradients into the flow parameters (accumulated)
// and into grad_head (added, sized like head_outputs).
void source_vectors_backward(FlowParams& params, const FlowStack& stack,
                             const std::vector<Vec>& grad_vectors,
                             std::span<double> grad_head);

}  // namespace hflow

#endif  // HFLOW_FLOW_H_
