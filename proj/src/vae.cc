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

#include "hflow/vae.h"

#include <algorithm>
#include <stdexcept>

namespace hflow {

namespace {

std::size_t rnn_input_size(const ReferenceEncoderConfig& c) {
  return c.conv2_channels *
         Conv2d::output_extent(Conv2d::output_extent(c.mel_bands));
}

// Features of conv time step t, flattened channel-major.
Vec time_slice(const FeatureMap& m, std::size_t t) {
  Vec out(m.channels * m.bands);
  for (std::size_t c = 0; c < m.channels; ++c) {
    for (std::size_t b = 0; b < m.bands; ++b) out[c * m.bands + b] = m.at(c, t, b);
  }
  return out;
}

}  // namespace

ReferenceEncoder::ReferenceEncoder(const ReferenceEncoderConfig& c)
    : config(c),
      conv1("ref.conv1", 1, c.conv1_channels),
      conv2("ref.conv2", c.conv1_channels, c.conv2_channels),
      rnn("ref.rnn", rnn_input_size(c), c.rnn_hidden),
      mu_head("ref.mu_head", c.rnn_hidden, c.latent_dim),
      log_var_head("ref.log_var_head", c.rnn_hidden, c.latent_dim) {
  if (c.vector_outputs > 0) {
    vector_head.emplace("ref.vector_head", c.rnn_hidden, c.vector_outputs);
  }
}

void ReferenceEncoder::init(RngStream& rng, RngStream& vector_rng) {
  conv1.init(rng);
  conv2.init(rng);
  rnn.init(rng);
  mu_head.init(rng);
  log_var_head.init(rng);
  if (vector_head) vector_head->init(vector_rng);
}

ReferenceEncoding reference_encode(const MelGram& mel,
                                   const ReferenceEncoder& encoder,
                                   ReferenceEncoderTape* tape) {
  const ReferenceEncoderConfig& cfg = encoder.config;
  if (mel.rows() == 0) {
    throw std::invalid_argument("reference_encode: empty MelGram");
  }
  if (mel.cols() != cfg.mel_bands) {
    throw DimensionError("reference_encode: MelGram has " +
                         std::to_string(mel.cols()) + " bands, expected " +
                         std::to_string(cfg.mel_bands));
  }
  FeatureMap input(1, mel.rows(), mel.cols());
  std::copy(mel.flat().begin(), mel.flat().end(), input.data.begin());

  FeatureMap a1 = encoder.conv1.forward(input);
  relu_inplace(a1.data);
  FeatureMap a2 = encoder.conv2.forward(a1);
  relu_inplace(a2.data);

  const std::size_t hidden = cfg.rnn_hidden;
  Vec h(hidden, 0.0), next(hidden);
  std::vector<GruStepCache> steps(tape != nullptr ? a2.time : 0);
  for (std::size_t t = 0; t < a2.time; ++t) {
    const Vec x = time_slice(a2, t);
    encoder.rnn.step(x, h, next, tape != nullptr ? &steps[t] : nullptr);
    std::swap(h, next);
  }

  Vec mu = encoder.mu_head.forward(h);
  Vec raw_log_var = encoder.log_var_head.forward(h);
  ReferenceEncoding out;
  out.posterior = DiagGaussian(std::move(mu), raw_log_var);
  if (encoder.vector_head) out.vector_heads = encoder.vector_head->forward(h);

  if (tape != nullptr) {
    tape->input = std::move(input);
    tape->conv1_out = std::move(a1);
    tape->conv2_out = std::move(a2);
    tape->steps = std::move(steps);
    tape->summary = std::move(h);
    tape->raw_log_var = std::move(raw_log_var);
  }
  return out;
}

void reference_encode_backward(ReferenceEncoder& encoder,
                               const ReferenceEncoderTape& tape,
                               std::span<const double> grad_mu,
                               std::span<const double> grad_log_var,
                               std::span<const double> grad_vector_heads) {
  if (tape.steps.empty()) {
    throw std::logic_error("reference_encode_backward: empty tape");
  }
  const std::size_t hidden = encoder.config.rnn_hidden;
  Vec dh(hidden, 0.0);
  encoder.mu_head.backward(tape.summary, grad_mu, dh);

  // The clamp passes no gradient outside [kLogVarMin, kLogVarMax].
  Vec dlv(grad_log_var.begin(), grad_log_var.end());
  for (std::size_t i = 0; i < dlv.size(); ++i) {
    const double raw = tape.raw_log_var[i];
    if (raw < kLogVarMin || raw > kLogVarMax) dlv[i] = 0.0;
  }
  encoder.log_var_head.backward(tape.summary, dlv, dh);
  if (encoder.vector_head && !grad_vector_heads.empty()) {
    encoder.vector_head->backward(tape.summary, grad_vector_heads, dh);
  }

  const FeatureMap& a2 = tape.conv2_out;
  FeatureMap da2(a2.channels, a2.time, a2.bands);
  const std::size_t features = a2.channels * a2.bands;
  for (std::size_t t = a2.time; t-- > 0;) {
    Vec dx(features, 0.0), dh_prev(hidden, 0.0);
    encoder.rnn.backward(tape.steps[t], dh, dx, dh_prev);
    for (std::size_t c = 0; c < a2.channels; ++c) {
      for (std::size_t b = 0; b < a2.bands; ++b) {
        da2.at(c, t, b) = dx[c * a2.bands + b];
      }
    }
    dh = std::move(dh_prev);
  }
  relu_backward(a2.data, da2.data);
  FeatureMap da1;
  encoder.conv2.backward(tape.conv1_out, da2, &da1);
  relu_backward(tape.conv1_out.data, da1.data);
  encoder.conv1.backward(tape.input, da1, nullptr);
}

LatentSample posterior_sample(const MelGram& mel,
                              const ReferenceEncoder& encoder,
                              const FlowParams& flow,
                              std::span<const double> eps) {
  ReferenceEncoding enc = reference_encode(mel, encoder);
  LatentSample out;
  out.z0 = gaussian_sample(enc.posterior, eps);
  out.stack = source_vectors(flow, enc.vector_heads);
  out.zK = compose_flow(out.stack, out.z0);
  out.posterior = std::move(enc.posterior);
  return out;
}

double elbo_loss(double recon_l2, double kl, double beta) {
  if (recon_l2 < 0.0 || kl < 0.0 || beta < 0.0) {
    throw std::invalid_argument("elbo_loss: inputs must be non-negative");
  }
  return recon_l2 + beta * kl;
}

}  // namespace hflow
