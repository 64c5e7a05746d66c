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

// Text side of the synthesizer: phoneme encoder, additive attention and an
// autoregressive GRU decoder producing one MelGram frame per step.
//
// Decoder step t (x_{-1} and c_{-1} are zero):
//   h_t       = GRU([x_{t-1}; c_{t-1}; pos_t], h_{t-1})
//   c_t, a_t  = attend(h_t, keys)        keys = [encoder rows | z_K]
//   y_t       = W_o [h_t; c_t] + b_o
// pos_t holds sin/cos of 2*pi*t/P for each configured period P (none by
// default).

#ifndef HFLOW_SEQ2SEQ_H_
#define HFLOW_SEQ2SEQ_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hflow/layers.h"
#include "hflow/numerics.h"
#include "hflow/sequence_types.h"

namespace hflow {

struct PhonemeEncoder {
  PhonemeEncoder() = default;
  PhonemeEncoder(std::size_t vocab, std::size_t embedding_dim,
                 std::size_t hidden);

  std::size_t vocab() const { return embedding.value.rows(); }
  std::size_t hidden() const { return rnn.hidden(); }

  void init(RngStream& rng);

  template <class F>
  void visit(F&& f) {
    f(embedding);
    rnn.visit(f);
  }

  Param embedding;  // vocab x embedding_dim
  GruCell rnn;
};

struct PhonemeEncoderTape {
  std::vector<int> ids;
  std::vector<GruStepCache> steps;
};

// One hidden row per phoneme (L x H).
Matrix phoneme_encode(const PhonemeSequence& seq, const PhonemeEncoder& enc,
                      PhonemeEncoderTape* tape = nullptr);
void phoneme_encode_backward(PhonemeEncoder& enc, const PhonemeEncoderTape& tape,
                             const Matrix& grad_outputs);

// Appends z_K to every encoder row: L x (H + latent).
Matrix broadcast_concat(const Matrix& encodings, std::span<const double> z);
// Splits a gradient of broadcast_concat into encoder rows and z_K (summed).
void broadcast_concat_backward(const Matrix& grad, std::size_t encoder_dim,
                               Matrix& grad_encodings, Vec& grad_z);

// score(q, k) = w . tanh(W_q q + b_q + W_k k); values are the keys.
struct Attention {
  Attention() = default;
  Attention(std::size_t query_dim, std::size_t key_dim,
            std::size_t attention_dim);

  void init(RngStream& rng);

  template <class F>
  void visit(F&& f) {
    query.visit(f);
    key.visit(f);
    f(score);
  }

  Linear query;
  Linear key;   // no bias
  Param score;  // attention_dim x 1
};

// Keys with their projections, computed once per utterance.
struct AttentionMemory {
  Matrix keys;
  Matrix projected;
};

AttentionMemory prepare_attention(const Attention& att, const Matrix& keys);

struct AttentionStep {
  Vec context;
  Vec weights;
  Vec projected_query;
  Matrix activations;  // tanh terms, L x attention_dim
};

AttentionStep attention_step(const Attention& att, const AttentionMemory& mem,
                             std::span<const double> query);
AttentionStep attention_step(const Attention& att,
                             std::span<const double> query,
                             const Matrix& keys);

// Backprop of one step given dL/dcontext. Adds into grad_query, grad_keys
// (rows of keys used as values) and grad_projected (rows of projected keys);
// accumulates W_q, b_q and w gradients.
void attention_step_backward(Attention& att, const AttentionMemory& mem,
                             const AttentionStep& step,
                             std::span<const double> query,
                             std::span<const double> grad_context,
                             std::span<double> grad_query, Matrix& grad_keys,
                             Matrix& grad_projected);
// Finishes the key projection backward: W_k grads and grad_keys updates.
void attention_memory_backward(Attention& att, const AttentionMemory& mem,
                               const Matrix& grad_projected, Matrix& grad_keys);

struct DecoderConfig {
  std::size_t mel_bands = 20;
  std::size_t conditioning_dim = 48;
  std::size_t hidden = 64;
  std::size_t attention_dim = 32;
  std::vector<double> position_periods;
};

struct Decoder {
  Decoder() = default;
  explicit Decoder(const DecoderConfig& config);

  std::size_t input_dim() const;
  void init(RngStream& rng);

  template <class F>
  void visit(F&& f) {
    rnn.visit(f);
    attention.visit(f);
    output.visit(f);
  }

  DecoderConfig config;
  GruCell rnn;
  Attention attention;
  Linear output;
};

struct DecoderTape {
  AttentionMemory memory;
  std::vector<GruStepCache> rnn_steps;
  std::vector<AttentionStep> attention_steps;
  std::vector<Vec> hidden;
};

struct DecodeResult {
  MelGram predicted;
  double l2_loss = 0.0;
};

// Mean squared error over (frame, band) with ground-truth previous frames.
// Frames t with dropped[t] != 0 see the zero frame instead of target t-1
// (training-time history dropout); an empty mask drops nothing.
DecodeResult decode_teacher_forced(const Matrix& conditioned,
                                   const MelGram& target, const Decoder& dec,
                                   DecoderTape* tape = nullptr,
                                   std::span<const std::uint8_t> dropped = {});

// Backprop of decode_teacher_forced's l2_loss (scaled by loss_scale).
// Returns dL/dconditioned.
Matrix decode_teacher_forced_backward(Decoder& dec, const DecoderTape& tape,
                                      const MelGram& predicted,
                                      const MelGram& target,
                                      double loss_scale = 1.0);

// Feeds back its own outputs; the first input frame is zero.
MelGram decode_free_running(const Matrix& conditioned, std::size_t n_frames,
                            const Decoder& dec);

}  // namespace hflow

#endif  // HFLOW_SEQ2SEQ_H_
