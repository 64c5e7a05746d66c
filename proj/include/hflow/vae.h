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

// Reference encoder and the posterior side of the VAE.
//
// MelGram (T x B) -> conv 3x3/2 (8 ch) -> ReLU -> conv 3x3/2 (16 ch) -> ReLU
//   -> GRU over time (last state) -> linear heads {mu, log_var, vectors}.

#ifndef HFLOW_VAE_H_
#define HFLOW_VAE_H_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hflow/flow.h"
#include "hflow/layers.h"
#include "hflow/numerics.h"
#include "hflow/sequence_types.h"

namespace hflow {

struct ReferenceEncoderConfig {
  std::size_t mel_bands = 20;
  std::size_t latent_dim = 16;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t rnn_hidden = 32;
  // Extra head outputs for Householder vectors (0 when not needed).
  std::size_t vector_outputs = 0;
};

struct ReferenceEncoder {
  ReferenceEncoder() = default;
  explicit ReferenceEncoder(const ReferenceEncoderConfig& config);

  // Draws the trunk and mu/log_var heads from `rng`; the vector head (when
  // present) from `vector_rng`, so configurations that differ only in the
  // flow share the rest of their initialization.
  void init(RngStream& rng, RngStream& vector_rng);

  template <class F>
  void visit(F&& f) {
    conv1.visit(f);
    conv2.visit(f);
    rnn.visit(f);
    mu_head.visit(f);
    log_var_head.visit(f);
    if (vector_head) vector_head->visit(f);
  }

  ReferenceEncoderConfig config;
  Conv2d conv1;
  Conv2d conv2;
  GruCell rnn;
  Linear mu_head;
  Linear log_var_head;
  std::optional<Linear> vector_head;
};

struct ReferenceEncoding {
  DiagGaussian posterior;
  Vec vector_heads;
};

struct ReferenceEncoderTape {
  FeatureMap input;
  FeatureMap conv1_out;  // after ReLU
  FeatureMap conv2_out;  // after ReLU
  std::vector<GruStepCache> steps;
  Vec summary;
  Vec raw_log_var;
};

// Throws std::invalid_argument on an empty MelGram, DimensionError on a band
// count that differs from the configuration.
ReferenceEncoding reference_encode(const MelGram& mel,
                                   const ReferenceEncoder& encoder,
                                   ReferenceEncoderTape* tape = nullptr);

// grad_vector_heads may be empty when the encoder has no vector head.
void reference_encode_backward(ReferenceEncoder& encoder,
                               const ReferenceEncoderTape& tape,
                               std::span<const double> grad_mu,
                               std::span<const double> grad_log_var,
                               std::span<const double> grad_vector_heads);

struct LatentSample {
  Vec z0;
  Vec zK;
  DiagGaussian posterior;
  FlowStack stack;
};

// Encodes, draws z0 = mu + sigma * eps, then runs the flow sourced for this
// utterance.
LatentSample posterior_sample(const MelGram& mel,
                              const ReferenceEncoder& encoder,
                              const FlowParams& flow,
                              std::span<const double> eps);

// recon_l2 + beta * kl. Throws std::invalid_argument on negative inputs.
double elbo_loss(double recon_l2, double kl, double beta);

}  // namespace hflow

#endif  // HFLOW_VAE_H_
