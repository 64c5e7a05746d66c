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

#include "hflow/seq2seq.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hflow {

void PhonemeSequence::validate(std::size_t vocab) const {
  if (ids.empty()) throw std::invalid_argument("empty phoneme sequence");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::invalid_argument("phoneme id " + std::to_string(id) +
                                  " outside vocabulary of " +
                                  std::to_string(vocab));
    }
  }
}

PhonemeEncoder::PhonemeEncoder(std::size_t vocab, std::size_t embedding_dim,
                               std::size_t hidden)
    : embedding("text.embedding", vocab, embedding_dim),
      rnn("text.rnn", embedding_dim, hidden) {}

void PhonemeEncoder::init(RngStream& rng) {
  init_uniform(embedding, 1.0, rng);
  rnn.init(rng);
}

Matrix phoneme_encode(const PhonemeSequence& seq, const PhonemeEncoder& enc,
                      PhonemeEncoderTape* tape) {
  seq.validate(enc.vocab());
  const std::size_t hidden = enc.hidden();
  Matrix out(seq.size(), hidden);
  Vec h(hidden, 0.0);
  if (tape != nullptr) {
    tape->ids = seq.ids;
    tape->steps.assign(seq.size(), {});
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    enc.rnn.step(enc.embedding.value.row(seq.ids[i]), h, out.row(i),
                 tape != nullptr ? &tape->steps[i] : nullptr);
    h.assign(out.row(i).begin(), out.row(i).end());
  }
  return out;
}

void phoneme_encode_backward(PhonemeEncoder& enc, const PhonemeEncoderTape& tape,
                             const Matrix& grad_outputs) {
  if (tape.steps.size() != grad_outputs.rows()) {
    throw std::logic_error("phoneme_encode_backward: tape/gradient mismatch");
  }
  const std::size_t hidden = enc.hidden();
  const std::size_t emb = enc.embedding.value.cols();
  Vec dh(hidden, 0.0);
  for (std::size_t i = tape.steps.size(); i-- > 0;) {
    axpy(1.0, grad_outputs.row(i), dh);
    Vec dx(emb, 0.0), dh_prev(hidden, 0.0);
    enc.rnn.backward(tape.steps[i], dh, dx, dh_prev);
    axpy(1.0, dx, enc.embedding.grad.row(tape.ids[i]));
    dh = std::move(dh_prev);
  }
}

Matrix broadcast_concat(const Matrix& encodings, std::span<const double> z) {
  const std::size_t h = encodings.cols();
  Matrix out(encodings.rows(), h + z.size());
  for (std::size_t i = 0; i < encodings.rows(); ++i) {
    std::copy(encodings.row(i).begin(), encodings.row(i).end(),
              out.row(i).begin());
    std::copy(z.begin(), z.end(), out.row(i).begin() + h);
  }
  return out;
}

void broadcast_concat_backward(const Matrix& grad, std::size_t encoder_dim,
                               Matrix& grad_encodings, Vec& grad_z) {
  const std::size_t latent = grad.cols() - encoder_dim;
  grad_encodings = Matrix(grad.rows(), encoder_dim);
  grad_z.assign(latent, 0.0);
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    auto row = grad.row(i);
    std::copy(row.begin(), row.begin() + encoder_dim,
              grad_encodings.row(i).begin());
    for (std::size_t j = 0; j < latent; ++j) grad_z[j] += row[encoder_dim + j];
  }
}

Attention::Attention(std::size_t query_dim, std::size_t key_dim,
                     std::size_t attention_dim)
    : query("attention.query", query_dim, attention_dim),
      key("attention.key", key_dim, attention_dim, /*with_bias=*/false),
      score("attention.score", attention_dim, 1) {}

void Attention::init(RngStream& rng) {
  query.init(rng);
  key.init(rng);
  init_uniform(score, 1.0 / std::sqrt(static_cast<double>(score.value.rows())),
               rng);
}

AttentionMemory prepare_attention(const Attention& att, const Matrix& keys) {
  if (keys.cols() != att.key.in()) {
    throw DimensionError("attention: key width " + std::to_string(keys.cols()) +
                         " != " + std::to_string(att.key.in()));
  }
  AttentionMemory mem;
  mem.keys = keys;
  mem.projected = Matrix(keys.rows(), att.key.out());
  for (std::size_t i = 0; i < keys.rows(); ++i) {
    att.key.forward(keys.row(i), mem.projected.row(i));
  }
  return mem;
}

AttentionStep attention_step(const Attention& att, const AttentionMemory& mem,
                             std::span<const double> query) {
  const std::size_t len = mem.keys.rows();
  const std::size_t dim = att.score.value.rows();
  AttentionStep step;
  step.projected_query = att.query.forward(query);
  step.activations = Matrix(len, dim);
  step.weights.assign(len, 0.0);
  const double* w = att.score.value.data();
  for (std::size_t i = 0; i < len; ++i) {
    auto act = step.activations.row(i);
    auto proj = mem.projected.row(i);
    double e = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
      act[a] = std::tanh(step.projected_query[a] + proj[a]);
      e += w[a] * act[a];
    }
    step.weights[i] = e;
  }
  const double max_e = *std::max_element(step.weights.begin(), step.weights.end());
  double total = 0.0;
  for (double& e : step.weights) {
    e = std::exp(e - max_e);
    total += e;
  }
  for (double& e : step.weights) e /= total;
  step.context.assign(mem.keys.cols(), 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    axpy(step.weights[i], mem.keys.row(i), step.context);
  }
  return step;
}

AttentionStep attention_step(const Attention& att,
                             std::span<const double> query,
                             const Matrix& keys) {
  return attention_step(att, prepare_attention(att, keys), query);
}

void attention_step_backward(Attention& att, const AttentionMemory& mem,
                             const AttentionStep& step,
                             std::span<const double> query,
                             std::span<const double> grad_context,
                             std::span<double> grad_query, Matrix& grad_keys,
                             Matrix& grad_projected) {
  const std::size_t len = mem.keys.rows();
  const std::size_t dim = att.score.value.rows();
  Vec dweights(len);
  double weighted = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    dweights[i] = dot(grad_context, mem.keys.row(i));
    weighted += step.weights[i] * dweights[i];
    axpy(step.weights[i], grad_context, grad_keys.row(i));
  }
  Vec dq(dim, 0.0);
  const double* w = att.score.value.data();
  double* dw = att.score.grad.data();
  for (std::size_t i = 0; i < len; ++i) {
    const double de = step.weights[i] * (dweights[i] - weighted);
    if (de == 0.0) continue;
    auto act = step.activations.row(i);
    auto dproj = grad_projected.row(i);
    for (std::size_t a = 0; a < dim; ++a) {
      dw[a] += de * act[a];
      const double dpre = de * w[a] * (1.0 - act[a] * act[a]);
      dq[a] += dpre;
      dproj[a] += dpre;
    }
  }
  att.query.backward(query, dq, grad_query);
}

void attention_memory_backward(Attention& att, const AttentionMemory& mem,
                               const Matrix& grad_projected, Matrix& grad_keys) {
  for (std::size_t i = 0; i < mem.keys.rows(); ++i) {
    att.key.backward(mem.keys.row(i), grad_projected.row(i), grad_keys.row(i));
  }
}

Decoder::Decoder(const DecoderConfig& c)
    : config(c),
      rnn("decoder.rnn",
          c.mel_bands + c.conditioning_dim + 2 * c.position_periods.size(),
          c.hidden),
      attention(c.hidden, c.conditioning_dim, c.attention_dim),
      output("decoder.output", c.hidden + c.conditioning_dim, c.mel_bands) {}

std::size_t Decoder::input_dim() const { return rnn.in(); }

void Decoder::init(RngStream& rng) {
  rnn.init(rng);
  attention.init(rng);
  output.init(rng);
}

namespace {

struct StepState {
  Vec hidden;
  Vec context;
};

Vec step_input(const Decoder& dec, std::span<const double> prev_frame,
               std::span<const double> prev_context, std::size_t t) {
  Vec in;
  in.reserve(dec.input_dim());
  in.insert(in.end(), prev_frame.begin(), prev_frame.end());
  in.insert(in.end(), prev_context.begin(), prev_context.end());
  for (double period : dec.config.position_periods) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / period;
    in.push_back(std::sin(phase));
    in.push_back(std::cos(phase));
  }
  return in;
}

// One decoder step shared by teacher-forced and free-running decoding.
void decoder_step(const Decoder& dec, const AttentionMemory& mem,
                  std::span<const double> prev_frame, std::size_t t,
                  StepState& state, std::span<double> frame_out,
                  GruStepCache* rnn_cache, AttentionStep* att_out) {
  const Vec in = step_input(dec, prev_frame, state.context, t);
  Vec h(dec.config.hidden);
  dec.rnn.step(in, state.hidden, h, rnn_cache);
  AttentionStep att = attention_step(dec.attention, mem, h);
  Vec joint(h);
  joint.insert(joint.end(), att.context.begin(), att.context.end());
  dec.output.forward(joint, frame_out);
  state.hidden = std::move(h);
  state.context = att.context;
  if (att_out != nullptr) *att_out = std::move(att);
}

void check_conditioning(const Matrix& conditioned, const Decoder& dec) {
  if (conditioned.rows() == 0) {
    throw std::invalid_argument("decoder: empty conditioning sequence");
  }
  if (conditioned.cols() != dec.config.conditioning_dim) {
    throw DimensionError("decoder: conditioning width " +
                         std::to_string(conditioned.cols()) + " != " +
                         std::to_string(dec.config.conditioning_dim));
  }
}

}  // namespace

DecodeResult decode_teacher_forced(const Matrix& conditioned,
                                   const MelGram& target, const Decoder& dec,
                                   DecoderTape* tape,
                                   std::span<const std::uint8_t> dropped) {
  check_conditioning(conditioned, dec);
  if (!dropped.empty() && dropped.size() != target.rows()) {
    throw DimensionError("decoder: history mask length " + std::to_string(dropped.size()) +
                         " != frames " + std::to_string(target.rows()));
  }
  if (target.rows() == 0) throw std::invalid_argument("decoder: empty target");
  if (target.cols() != dec.config.mel_bands) {
    throw DimensionError("decoder: target has " + std::to_string(target.cols()) +
                         " bands, expected " +
                         std::to_string(dec.config.mel_bands));
  }
  const std::size_t frames = target.rows();
  const std::size_t bands = target.cols();
  AttentionMemory mem = prepare_attention(dec.attention, conditioned);
  StepState state{Vec(dec.config.hidden, 0.0),
                  Vec(dec.config.conditioning_dim, 0.0)};
  if (tape != nullptr) {
    tape->rnn_steps.assign(frames, {});
    tape->attention_steps.assign(frames, {});
    tape->hidden.assign(frames, {});
  }
  DecodeResult result;
  result.predicted = MelGram(frames, bands);
  const Vec zero_frame(bands, 0.0);
  double sse = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    const bool no_history = t == 0 || (!dropped.empty() && dropped[t] != 0);
    std::span<const double> prev =
        no_history ? std::span<const double>(zero_frame) : target.row(t - 1);
    decoder_step(dec, mem, prev, t, state, result.predicted.row(t),
                 tape != nullptr ? &tape->rnn_steps[t] : nullptr,
                 tape != nullptr ? &tape->attention_steps[t] : nullptr);
    if (tape != nullptr) tape->hidden[t] = state.hidden;
    for (std::size_t b = 0; b < bands; ++b) {
      const double d = result.predicted(t, b) - target(t, b);
      sse += d * d;
    }
  }
  result.l2_loss = sse / static_cast<double>(frames * bands);
  if (tape != nullptr) tape->memory = std::move(mem);
  return result;
}

Matrix decode_teacher_forced_backward(Decoder& dec, const DecoderTape& tape,
                                      const MelGram& predicted,
                                      const MelGram& target,
                                      double loss_scale) {
  if (tape.rnn_steps.size() != target.rows()) {
    throw std::logic_error("decoder backward: tape does not match target");
  }
  const std::size_t frames = target.rows();
  const std::size_t bands = target.cols();
  const std::size_t hidden = dec.config.hidden;
  const std::size_t cond = dec.config.conditioning_dim;
  const AttentionMemory& mem = tape.memory;
  Matrix grad_keys(mem.keys.rows(), mem.keys.cols());
  Matrix grad_projected(mem.projected.rows(), mem.projected.cols());

  const double scale = 2.0 * loss_scale / static_cast<double>(frames * bands);
  Vec dh_carry(hidden, 0.0), dc_carry(cond, 0.0);
  Vec dy(bands);
  for (std::size_t t = frames; t-- > 0;) {
    for (std::size_t b = 0; b < bands; ++b) {
      dy[b] = scale * (predicted(t, b) - target(t, b));
    }
    const AttentionStep& att = tape.attention_steps[t];
    Vec joint(tape.hidden[t]);
    joint.insert(joint.end(), att.context.begin(), att.context.end());
    Vec djoint(hidden + cond, 0.0);
    dec.output.backward(joint, dy, djoint);

    Vec dh(djoint.begin(), djoint.begin() + hidden);
    Vec dc(djoint.begin() + hidden, djoint.end());
    axpy(1.0, dc_carry, dc);
    axpy(1.0, dh_carry, dh);
    attention_step_backward(dec.attention, mem, att, tape.hidden[t], dc, dh,
                            grad_keys, grad_projected);

    Vec dinput(dec.input_dim(), 0.0), dh_prev(hidden, 0.0);
    dec.rnn.backward(tape.rnn_steps[t], dh, dinput, dh_prev);
    std::copy(dinput.begin() + bands, dinput.begin() + bands + cond,
              dc_carry.begin());
    dh_carry = std::move(dh_prev);
  }
  attention_memory_backward(dec.attention, mem, grad_projected, grad_keys);
  return grad_keys;
}

MelGram decode_free_running(const Matrix& conditioned, std::size_t n_frames,
                            const Decoder& dec) {
  check_conditioning(conditioned, dec);
  if (n_frames == 0) throw std::invalid_argument("decoder: n_frames must be >= 1");
  const std::size_t bands = dec.config.mel_bands;
  AttentionMemory mem = prepare_attention(dec.attention, conditioned);
  StepState state{Vec(dec.config.hidden, 0.0), Vec(dec.config.conditioning_dim, 0.0)};
  MelGram out(n_frames, bands);
  const Vec zero_frame(bands, 0.0);
  for (std::size_t t = 0; t < n_frames; ++t) {
    std::span<const double> prev =
        t == 0 ? std::span<const double>(zero_frame) : out.row(t - 1);
    decoder_step(dec, mem, prev, t, state, out.row(t), nullptr, nullptr);
  }
  return out;
}

}  // namespace hflow
