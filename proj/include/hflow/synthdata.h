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

// Synthetic style-annotated corpus.
//
// Each phoneme p owns a template T_p in [template_min, template_max]^B and a
// duration d_p in [min_duration, max_duration] frames, both fixed by
// template_seed. Frame f of an utterance (counted from the utterance start)
// inside phoneme p renders as
//
//   mel[f, j] = T_p[j] * (1 + a * sin(2 pi f / F0)) + b * (j / B - 0.5) + n
//
// with intensity a, tilt b, period F0 and n ~ N(0, noise_sigma^2).
//
// On disk a corpus is a directory holding meta.json and mels/<id>.mels, each
// mel file being "MELS", u32 LE frames, u32 LE bands, then frames*bands
// float32 LE values in row-major order.

#ifndef HFLOW_SYNTHDATA_H_
#define HFLOW_SYNTHDATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hflow/json_io.h"
#include "hflow/numerics.h"
#include "hflow/sequence_types.h"

namespace hflow {

struct StyleFactors {
  double intensity = 0.0;  // a, in [0, 1]
  double tilt = 0.0;       // b, in [-1, 1]
};

struct CorpusSpec {
  std::size_t vocab = 32;
  std::size_t mel_bands = 20;
  std::uint64_t template_seed = 20190101;
  std::size_t n_train = 256;
  std::size_t min_phonemes = 4;
  std::size_t max_phonemes = 8;
  int min_duration = 4;
  int max_duration = 8;
  double template_min = 0.2;
  double template_max = 1.0;
  double train_intensity_min = 0.0;
  double train_intensity_max = 0.3;
  double tilt_min = -1.0;
  double tilt_max = 1.0;
  std::vector<double> held_out_intensities = {0.5, 0.7, 0.9};
  std::size_t n_prompts = 50;
  double noise_sigma = 0.01;
  double modulation_period = 12.0;

  // Throws ConfigError on inconsistent ranges, including held-out
  // intensities that fall inside the training range.
  void validate() const;
};

Json to_json(const CorpusSpec& spec);
// Missing keys keep their defaults; unknown keys raise ConfigError.
CorpusSpec corpus_spec_from_json(const Json& j, const std::string& path = "");

// Templates (vocab x bands) and durations derived from template_seed.
struct PhonemeInventory {
  Matrix templates;
  std::vector<int> durations;
};

PhonemeInventory make_inventory(const CorpusSpec& spec);

std::size_t rendered_length(const PhonemeSequence& phonemes,
                            const PhonemeInventory& inventory);

MelGram render_utterance(const PhonemeSequence& phonemes,
                         const StyleFactors& style, const CorpusSpec& spec,
                         const PhonemeInventory& inventory, RngStream& rng);
MelGram render_utterance(const PhonemeSequence& phonemes,
                         const StyleFactors& style, const CorpusSpec& spec,
                         RngStream& rng);

enum class Split { kTrain, kOneShot };

struct Utterance {
  std::string id;
  PhonemeSequence phonemes;
  MelGram mel;
  StyleFactors style;
  Split split = Split::kTrain;
  std::string level;  // one-shot only: "low", "medium", "high"
};

struct Prompt {
  std::string id;
  PhonemeSequence phonemes;
};

struct Corpus {
  CorpusSpec spec;
  std::uint64_t seed = 0;
  std::vector<Utterance> train;
  std::vector<Utterance> one_shot;  // ascending intensity
  std::vector<Prompt> prompts;

  // Searches train, one_shot, then prompts; nullptr when absent.
  const Utterance* find_utterance(const std::string& id) const;
  const Prompt* find_prompt(const std::string& id) const;
};

// Names for held-out levels: low/medium/high for three levels, level<i>
// otherwise.
std::vector<std::string> level_names(std::size_t count);

// Pure in (spec, seed). MelGram values are rounded to float32 so the
// in-memory corpus equals its on-disk form.
Corpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed);

// Least-squares estimate of (a, b) given the phonemes' templates, durations
// and the rendering rule. When the frame count does not match the phoneme
// durations, each frame is matched to its nearest template among the given
// phonemes (or the full inventory if `phonemes` is empty) instead.
StyleFactors style_oracle(const MelGram& mel, const PhonemeSequence& phonemes,
                          const CorpusSpec& spec,
                          const PhonemeInventory& inventory);
StyleFactors style_oracle(const MelGram& mel, const PhonemeSequence& phonemes,
                          const CorpusSpec& spec);

// I/O. Errors opening or reading files raise std::runtime_error subclasses:
// IoError for filesystem failures, FormatError for malformed content.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_mel(const std::filesystem::path& path, const MelGram& mel);
MelGram read_mel(const std::filesystem::path& path);
std::vector<char> encode_mel(const MelGram& mel);
MelGram decode_mel(const std::vector<char>& bytes);

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

// Parses "3,14,7" into a phoneme sequence.
PhonemeSequence parse_phoneme_list(const std::string& text);

}  // namespace hflow

#endif  // HFLOW_SYNTHDATA_H_
