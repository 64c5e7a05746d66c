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

#include "hflow/model.h"

#include <cmath>
#include <string>

namespace hflow {

namespace {

ReferenceEncoderConfig reference_config(const ModelConfig& c) {
  ReferenceEncoderConfig r;
  r.mel_bands = c.mel_bands;
  r.latent_dim = c.latent_dim;
  r.conv1_channels = c.ref_conv1_channels;
  r.conv2_channels = c.ref_conv2_channels;
  r.rnn_hidden = c.ref_hidden;
  r.vector_outputs = FlowParams(c.arch, c.flow_vectors(), c.latent_dim).head_outputs();
  return r;
}

DecoderConfig decoder_config(const ModelConfig& c) {
  DecoderConfig d;
  d.mel_bands = c.mel_bands;
  d.conditioning_dim = c.encoder_hidden + c.latent_dim;
  d.hidden = c.decoder_hidden;
  d.attention_dim = c.attention_dim;
  d.position_periods = c.position_periods;
  return d;
}

}  // namespace

Model::Model(const ModelConfig& config)
    : reference(reference_config(config)),
      flow(config.arch, config.flow_vectors(), config.latent_dim),
      text(config.vocab, config.embedding_dim, config.encoder_hidden),
      decoder(decoder_config(config)),
      config_(config) {}

Model Model::initialize(const ModelConfig& config, std::uint64_t seed) {
  Model m(config);
  const RngStream root(seed, "init");
  RngStream ref_rng = root.derive("reference");
  RngStream head_rng = root.derive("vector_head");
  RngStream flow_rng = root.derive("flow");
  RngStream text_rng = root.derive("text");
  RngStream dec_rng = root.derive("decoder");
  m.reference.init(ref_rng, head_rng);
  m.flow.init(flow_rng);
  m.text.init(text_rng);
  m.decoder.init(dec_rng);
  return m;
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  visit([&](Param& p) { out.push_back(&p); });
  return out;
}

std::vector<const Param*> Model::params() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<Model*>(this)->params()) out.push_back(p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Param* p : params()) n += p->value.size();
  return n;
}

void Model::zero_grad() {
  visit([](Param& p) { p.zero_grad(); });
}

namespace {

void check_eps(const Model& model, std::span<const double> eps) {
  if (eps.size() != model.config().latent_dim) {
    throw DimensionError("eps length " + std::to_string(eps.size()) +
                         " != latent dim " +
                         std::to_string(model.config().latent_dim));
  }
}

}  // namespace

LossBreakdown evaluate_loss(const Model& model, const MelGram& mel,
                            const PhonemeSequence& phonemes,
                            std::span<const double> eps, double beta) {
  check_eps(model, eps);
  const LatentSample latent = posterior_sample(mel, model.reference, model.flow, eps);
  const Matrix encoded = phoneme_encode(phonemes, model.text);
  const Matrix conditioned = broadcast_concat(encoded, latent.zK);
  const DecodeResult dec = decode_teacher_forced(conditioned, mel, model.decoder);
  LossBreakdown out;
  out.recon = dec.l2_loss;
  out.kl = diag_gaussian_kl(latent.posterior) /
           static_cast<double>(model.config().latent_dim);
  out.loss = elbo_loss(out.recon, out.kl, beta);
  return out;
}

LossBreakdown accumulate_gradients(Model& model, const MelGram& mel,
                                   const PhonemeSequence& phonemes,
                                   std::span<const double> eps, double beta,
                                   double weight,
                                   std::span<const std::uint8_t> dropped) {
  check_eps(model, eps);
  const std::size_t latent = model.config().latent_dim;

  ReferenceEncoderTape ref_tape;
  const ReferenceEncoding enc = reference_encode(mel, model.reference, &ref_tape);
  const Vec z0 = gaussian_sample(enc.posterior, eps);
  const FlowStack stack = source_vectors(model.flow, enc.vector_heads);
  FlowTape flow_tape;
  const Vec zK = flow_tape.forward(stack, z0);

  PhonemeEncoderTape text_tape;
  const Matrix encoded = phoneme_encode(phonemes, model.text, &text_tape);
  const Matrix conditioned = broadcast_concat(encoded, zK);
  DecoderTape dec_tape;
  const DecodeResult dec =
      decode_teacher_forced(conditioned, mel, model.decoder, &dec_tape, dropped);

  LossBreakdown out;
  out.recon = dec.l2_loss;
  out.kl = diag_gaussian_kl(enc.posterior) / static_cast<double>(latent);
  out.loss = elbo_loss(out.recon, out.kl, beta);

  const Matrix grad_conditioned =
      decode_teacher_forced_backward(model.decoder, dec_tape, dec.predicted, mel, weight);
  Matrix grad_encoded;
  Vec grad_zK;
  broadcast_concat_backward(grad_conditioned, model.config().encoder_hidden,
                            grad_encoded, grad_zK);
  phoneme_encode_backward(model.text, text_tape, grad_encoded);

  const FlowGradients flow_grads = flow_tape.backward(grad_zK);
  Vec grad_heads(enc.vector_heads.size(), 0.0);
  source_vectors_backward(model.flow, stack, flow_grads.grad_vectors, grad_heads);

  Vec grad_mu(latent), grad_log_var(latent);
  diag_gaussian_kl_grad(enc.posterior, grad_mu, grad_log_var);
  const double kl_scale = weight * beta / static_cast<double>(latent);
  for (std::size_t i = 0; i < latent; ++i) {
    const double sigma = std::exp(0.5 * enc.posterior.log_var[i]);
    const double dz = flow_grads.grad_z0[i];
    grad_mu[i] = kl_scale * grad_mu[i] + dz;
    grad_log_var[i] = kl_scale * grad_log_var[i] + dz * 0.5 * sigma * eps[i];
  }
  reference_encode_backward(model.reference, ref_tape, grad_mu, grad_log_var,
                            grad_heads);
  return out;
}

MelGram synthesize(const Model& model, const MelGram& reference,
                   const PhonemeSequence& prompt, std::size_t n_frames) {
  const Vec zero(model.config().latent_dim, 0.0);
  const LatentSample latent = posterior_sample(reference, model.reference, model.flow, zero);
  const Matrix conditioned = broadcast_concat(phoneme_encode(prompt, model.text), latent.zK);
  return decode_free_running(conditioned, n_frames, model.decoder);
}

Json to_json(const ModelConfig& c) {
  return Json{{"arch", std::string(arch_name(c.arch))},
              {"K", c.num_vectors},
              {"latent_dim", c.latent_dim},
              {"mel_bands", c.mel_bands},
              {"vocab", c.vocab},
              {"embedding_dim", c.embedding_dim},
              {"encoder_hidden", c.encoder_hidden},
              {"decoder_hidden", c.decoder_hidden},
              {"attention_dim", c.attention_dim},
              {"ref_conv1_channels", c.ref_conv1_channels},
              {"ref_conv2_channels", c.ref_conv2_channels},
              {"ref_hidden", c.ref_hidden},
              {"position_periods", c.position_periods}};
}

void read_model_config(StrictObject& o, ModelConfig& c) {
  std::string arch(arch_name(c.arch));
  o.read("arch", arch);
  try {
    c.arch = parse_arch(arch);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bad value for key '" + o.qualified("arch") + "': " + e.what());
  }
  o.read("K", c.num_vectors);
  o.read("latent_dim", c.latent_dim);
  o.read("mel_bands", c.mel_bands);
  o.read("vocab", c.vocab);
  o.read("embedding_dim", c.embedding_dim);
  o.read("encoder_hidden", c.encoder_hidden);
  o.read("decoder_hidden", c.decoder_hidden);
  o.read("attention_dim", c.attention_dim);
  o.read("ref_conv1_channels", c.ref_conv1_channels);
  o.read("ref_conv2_channels", c.ref_conv2_channels);
  o.read("ref_hidden", c.ref_hidden);
  o.read("position_periods", c.position_periods);
  if (c.arch != Arch::kVanilla && c.num_vectors == 0) {
    throw ConfigError("key '" + o.qualified("K") + "' must be >= 1 for " +
                      std::string(arch_name(c.arch)));
  }
}

}  // namespace hflow
