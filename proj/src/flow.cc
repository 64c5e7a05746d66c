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
#include <string>

namespace hflow {

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::kVanilla:
      return "vanilla";
    case Arch::kArch1:
      return "arch1";
    case Arch::kArch2:
      return "arch2";
    case Arch::kArch3:
      return "arch3";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  if (name == "vanilla") return Arch::kVanilla;
  if (name == "arch1") return Arch::kArch1;
  if (name == "arch2") return Arch::kArch2;
  if (name == "arch3") return Arch::kArch3;
  throw std::invalid_argument("unknown architecture '" + std::string(name) +
                              "'");
}

namespace {

double checked_norm_sq(std::span<const double> v, std::span<const double> z) {
  if (v.size() != z.size()) {
    throw DimensionError("householder: vector length " +
                         std::to_string(v.size()) + " != sample length " +
                         std::to_string(z.size()));
  }
  const double s = dot(v, v);
  if (!(std::sqrt(s) >= kMinReflectorNorm)) throw DegenerateReflectorError();
  return s;
}

}  // namespace

Vec apply_householder(std::span<const double> v, std::span<const double> z) {
  const double s = checked_norm_sq(v, z);
  const double scale = 2.0 * dot(v, z) / s;
  Vec out(z.begin(), z.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= scale * v[i];
  return out;
}

Vec compose_flow(const FlowStack& stack, std::span<const double> z0) {
  Vec z(z0.begin(), z0.end());
  for (const Vec& v : stack.vectors) z = apply_householder(v, z);
  return z;
}

double flow_logdet(const FlowStack& /*stack*/) { return 0.0; }

Vec FlowTape::forward(const FlowStack& stack, std::span<const double> z0) {
  stack_ = stack;
  inputs_.clear();
  inputs_.reserve(stack.size());
  Vec z(z0.begin(), z0.end());
  for (const Vec& v : stack.vectors) {
    inputs_.push_back(z);
    z = apply_householder(v, z);
  }
  cached_ = true;
  return z;
}

FlowGradients FlowTape::backward(std::span<const double> upstream) const {
  if (!cached_) throw std::logic_error("flow_backward: no cached forward pass");
  FlowGradients out;
  out.grad_vectors.resize(stack_.size());
  Vec g(upstream.begin(), upstream.end());
  for (std::size_t k = stack_.size(); k-- > 0;) {
    const Vec& v = stack_.vectors[k];
    const Vec& z = inputs_[k];
    if (g.size() != z.size()) throw DimensionError("flow_backward: shape");
    // For z' = z - (2c/s) v with c = v.z and s = v.v:
    //   dz = g - (2 (v.g)/s) v
    //   dv = -(2/s) [ (v.g) z + c g - (2 c (v.g)/s) v ]
    const double s = dot(v, v);
    const double c = dot(v, z);
    const double vg = dot(v, g);
    Vec dv(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      dv[i] = -(2.0 / s) * (vg * z[i] + c * g[i] - 2.0 * c * vg / s * v[i]);
    }
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= 2.0 * vg / s * v[i];
    out.grad_vectors[k] = std::move(dv);
  }
  out.grad_z0 = std::move(g);
  return out;
}

FlowParams::FlowParams(Arch arch_in, std::size_t num_vectors_in,
                       std::size_t latent_dim_in)
    : arch(arch_in),
      num_vectors(arch_in == Arch::kVanilla ? 0 : num_vectors_in),
      latent_dim(latent_dim_in) {
  if (arch != Arch::kVanilla && num_vectors == 0) {
    throw std::invalid_argument("flow: architecture needs at least 1 vector");
  }
  if (arch == Arch::kArch3) {
    for (std::size_t k = 0; k < num_vectors; ++k) {
      shared.emplace_back("flow.shared." + std::to_string(k), latent_dim, 1);
    }
  } else if (arch == Arch::kArch1) {
    for (std::size_t k = 0; k + 1 < num_vectors; ++k) {
      affine.emplace_back("flow.affine." + std::to_string(k), latent_dim,
                          latent_dim);
    }
  }
}

void FlowParams::init(RngStream& rng) {
  for (Param& p : shared) {
    Vec v(latent_dim);
    do {
      rng.fill_normal(v);
    } while (norm(v) < 1e-3);
    const double n = norm(v);
    for (std::size_t i = 0; i < latent_dim; ++i) {
      p.value(i, 0) = round_to_float(v[i] / n);
    }
  }
  for (Linear& a : affine) {
    for (std::size_t r = 0; r < latent_dim; ++r) {
      for (std::size_t c = 0; c < latent_dim; ++c) {
        a.weight.value(r, c) =
            round_to_float((r == c ? 1.0 : 0.0) + 0.01 * rng.normal());
      }
    }
    a.bias.value.fill(0.0);
  }
}

std::size_t FlowParams::head_outputs() const {
  switch (arch) {
    case Arch::kArch1:
      return latent_dim;
    case Arch::kArch2:
      return num_vectors * latent_dim;
    default:
      return 0;
  }
}

FlowStack source_vectors(const FlowParams& params,
                         std::span<const double> head_outputs) {
  FlowStack stack;
  stack.arch = params.arch;
  const std::size_t d = params.latent_dim;
  if (params.arch != Arch::kArch3 && head_outputs.size() != params.head_outputs()) {
    throw DimensionError("source_vectors: expected " +
                         std::to_string(params.head_outputs()) +
                         " head outputs, got " +
                         std::to_string(head_outputs.size()));
  }
  switch (params.arch) {
    case Arch::kVanilla:
      break;
    case Arch::kArch1: {
      if (params.affine.size() + 1 != params.num_vectors) {
        throw DimensionError("source_vectors: arch1 needs K-1 affine maps");
      }
      stack.vectors.emplace_back(head_outputs.begin(), head_outputs.end());
      for (const Linear& a : params.affine) {
        stack.vectors.push_back(a.forward(stack.vectors.back()));
      }
      break;
    }
    case Arch::kArch2:
      for (std::size_t k = 0; k < params.num_vectors; ++k) {
        auto slice = head_outputs.subspan(k * d, d);
        stack.vectors.emplace_back(slice.begin(), slice.end());
      }
      break;
    case Arch::kArch3:
      if (params.shared.size() != params.num_vectors) {
        throw DimensionError("source_vectors: arch3 needs K shared vectors");
      }
      for (const Param& p : params.shared) {
        stack.vectors.emplace_back(p.value.flat().begin(),
                                   p.value.flat().end());
      }
      break;
  }
  return stack;
}

void source_vectors_backward(FlowParams& params, const FlowStack& stack,
                             const std::vector<Vec>& grad_vectors,
                             std::span<double> grad_head) {
  if (grad_vectors.size() != stack.size()) {
    throw DimensionError("source_vectors_backward: gradient count mismatch");
  }
  const std::size_t d = params.latent_dim;
  switch (params.arch) {
    case Arch::kVanilla:
      break;
    case Arch::kArch1: {
      Vec g = grad_vectors.back();
      for (std::size_t k = params.affine.size(); k-- > 0;) {
        Vec prev = grad_vectors[k];
        params.affine[k].backward(stack.vectors[k], g, prev);
        g = std::move(prev);
      }
      axpy(1.0, g, grad_head);
      break;
    }
    case Arch::kArch2:
      for (std::size_t k = 0; k < grad_vectors.size(); ++k) {
        axpy(1.0, grad_vectors[k], grad_head.subspan(k * d, d));
      }
      break;
    case Arch::kArch3:
      for (std::size_t k = 0; k < grad_vectors.size(); ++k) {
        axpy(1.0, grad_vectors[k], params.shared[k].grad.flat());
      }
      break;
  }
}

}  // namespace hflow
