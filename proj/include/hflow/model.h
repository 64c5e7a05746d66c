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

#ifndef HFLOW_MODEL_H_
#define HFLOW_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hflow/flow.h"
#include "hflow/json_io.h"
#include "hflow/seq2seq.h"
#include "hflow/vae.h"

namespace hflow {

struct ModelConfig {
  Arch arch = Arch::kArch3;
  std::size_t num_vectors = 16;  // ignored for kVanilla
  std::size_t latent_dim = 16;
  std::size_t mel_bands = 20;
  std::size_t vocab = 32;
  std::size_t embedding_dim = 16;
  std::size_t encoder_hidden = 32;
  std::size_t decoder_hidden = 64;
  std::size_t attention_dim = 32;
  std::size_t ref_conv1_channels = 8;
  std::size_t ref_conv2_channels = 16;
  std::size_t ref_hidden = 32;
  // Sin/cos frame-index features for the decoder; the default matches the
  // default corpus modulation period.
  std::vector<double> position_periods = {12.0};

  std::size_t flow_vectors() const {
    return arch == Arch::kVanilla ? 0 : num_vectors;
  }
};

// Text-conditioned VAE with an optional Householder flow on the latent.
class Model {
 public:
  Model() = default;
  // All parameters zero.
  explicit Model(const ModelConfig& config);

  // Seeded initialization. Each component draws from its own stream, so two
  // configurations that differ only in the flow share every other parameter.
  static Model initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  template <class F>
  void visit(F&& f) {
    reference.visit(f);
    flow.visit(f);
    text.visit(f);
    decoder.visit(f);
  }
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::size_t parameter_count() const;
  void zero_grad();

  ReferenceEncoder reference;
  FlowParams flow;
  PhonemeEncoder text;
  Decoder decoder;

 private:
  ModelConfig config_;
};

struct LossBreakdown {
  double recon = 0.0;  // mean squared error per (frame, band)
  double kl = 0.0;     // KL of the pre-flow posterior per latent dimension
  double loss = 0.0;   // recon + beta * kl
};

// Teacher-forced loss with the reference encoder fed the target itself.
LossBreakdown evaluate_loss(const Model& model, const MelGram& mel,
                            const PhonemeSequence& phonemes,
                            std::span<const double> eps, double beta);

// Same loss; gradients scaled by `weight` are added into Param::grad.
// `dropped` is the decoder's history-dropout mask (see
// decode_teacher_forced).
LossBreakdown accumulate_gradients(Model& model, const MelGram& mel,
                                   const PhonemeSequence& phonemes,
                                   std::span<const double> eps, double beta,
                                   double weight = 1.0,
                                   std::span<const std::uint8_t> dropped = {});

// Posterior-mean latent of `reference`, flowed, conditioning a free-running
// decode of `prompt`.
MelGram synthesize(const Model& model, const MelGram& reference,
                   const PhonemeSequence& prompt, std::size_t n_frames);

Json to_json(const ModelConfig& config);
// Reads model keys from an object also holding other keys; the caller is
// responsible for rejecting unknown keys.
void read_model_config(StrictObject& object, ModelConfig& config);

}  // namespace hflow

#endif  // HFLOW_MODEL_H_
