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

#include "hflow/synthdata.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <sstream>

namespace hflow {

void CorpusSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("corpus: " + msg); };
  if (vocab == 0) fail("vocab must be positive");
  if (mel_bands == 0) fail("mel_bands must be positive");
  if (min_phonemes == 0 || min_phonemes > max_phonemes) {
    fail("need 1 <= min_phonemes <= max_phonemes");
  }
  if (min_duration < 1 || min_duration > max_duration) {
    fail("need 1 <= min_duration <= max_duration");
  }
  if (!(template_min <= template_max)) fail("template_min > template_max");
  if (!(0.0 <= train_intensity_min && train_intensity_min <= train_intensity_max &&
        train_intensity_max <= 1.0)) {
    fail("train intensity range must satisfy 0 <= min <= max <= 1");
  }
  if (!(-1.0 <= tilt_min && tilt_min <= tilt_max && tilt_max <= 1.0)) {
    fail("tilt range must satisfy -1 <= min <= max <= 1");
  }
  for (double a : held_out_intensities) {
    if (!(a >= 0.0 && a <= 1.0)) fail("held-out intensity outside [0, 1]");
    if (a >= train_intensity_min && a <= train_intensity_max) {
      fail("held-out intensity " + std::to_string(a) +
           " lies inside the training range");
    }
  }
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be non-negative");
  if (!(modulation_period > 0.0)) fail("modulation_period must be positive");
}

Json to_json(const CorpusSpec& s) {
  return Json{{"vocab", s.vocab},
              {"mel_bands", s.mel_bands},
              {"template_seed", s.template_seed},
              {"n_train", s.n_train},
              {"min_phonemes", s.min_phonemes},
              {"max_phonemes", s.max_phonemes},
              {"min_duration", s.min_duration},
              {"max_duration", s.max_duration},
              {"template_min", s.template_min},
              {"template_max", s.template_max},
              {"train_intensity_min", s.train_intensity_min},
              {"train_intensity_max", s.train_intensity_max},
              {"tilt_min", s.tilt_min},
              {"tilt_max", s.tilt_max},
              {"held_out_intensities", s.held_out_intensities},
              {"n_prompts", s.n_prompts},
              {"noise_sigma", s.noise_sigma},
              {"modulation_period", s.modulation_period}};
}

CorpusSpec corpus_spec_from_json(const Json& j, const std::string& path) {
  CorpusSpec s;
  StrictObject o(j, path);
  o.read("vocab", s.vocab);
  o.read("mel_bands", s.mel_bands);
  o.read("template_seed", s.template_seed);
  o.read("n_train", s.n_train);
  o.read("min_phonemes", s.min_phonemes);
  o.read("max_phonemes", s.max_phonemes);
  o.read("min_duration", s.min_duration);
  o.read("max_duration", s.max_duration);
  o.read("template_min", s.template_min);
  o.read("template_max", s.template_max);
  o.read("train_intensity_min", s.train_intensity_min);
  o.read("train_intensity_max", s.train_intensity_max);
  o.read("tilt_min", s.tilt_min);
  o.read("tilt_max", s.tilt_max);
  o.read("held_out_intensities", s.held_out_intensities);
  o.read("n_prompts", s.n_prompts);
  o.read("noise_sigma", s.noise_sigma);
  o.read("modulation_period", s.modulation_period);
  o.finish();
  return s;
}

PhonemeInventory make_inventory(const CorpusSpec& spec) {
  RngStream rng(spec.template_seed, "inventory");
  RngStream template_rng = rng.derive("templates");
  RngStream duration_rng = rng.derive("durations");
  PhonemeInventory inv;
  inv.templates = Matrix(spec.vocab, spec.mel_bands);
  for (double& v : inv.templates.flat()) {
    v = round_to_float(template_rng.uniform(spec.template_min, spec.template_max));
  }
  inv.durations.resize(spec.vocab);
  for (int& d : inv.durations) {
    d = duration_rng.uniform_int(spec.min_duration, spec.max_duration);
  }
  return inv;
}

std::size_t rendered_length(const PhonemeSequence& phonemes,
                            const PhonemeInventory& inventory) {
  std::size_t total = 0;
  for (int p : phonemes.ids) total += static_cast<std::size_t>(inventory.durations.at(p));
  return total;
}

namespace {

double modulation(double frame, double period) {
  return std::sin(2.0 * std::numbers::pi * frame / period);
}

double tilt_ramp(std::size_t band, std::size_t bands) {
  return static_cast<double>(band) / static_cast<double>(bands) - 0.5;
}

}  // namespace

MelGram render_utterance(const PhonemeSequence& phonemes,
                         const StyleFactors& style, const CorpusSpec& spec,
                         const PhonemeInventory& inventory, RngStream& rng) {
  phonemes.validate(spec.vocab);
  const std::size_t bands = spec.mel_bands;
  MelGram mel(rendered_length(phonemes, inventory), bands);
  std::size_t f = 0;
  for (int p : phonemes.ids) {
    auto tmpl = inventory.templates.row(p);
    for (int k = 0; k < inventory.durations[p]; ++k, ++f) {
      const double gain =
          1.0 + style.intensity *
                    modulation(static_cast<double>(f), spec.modulation_period);
      for (std::size_t j = 0; j < bands; ++j) {
        double v = tmpl[j] * gain + style.tilt * tilt_ramp(j, bands);
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
        mel(f, j) = v;
      }
    }
  }
  return mel;
}

MelGram render_utterance(const PhonemeSequence& phonemes,
                         const StyleFactors& style, const CorpusSpec& spec,
                         RngStream& rng) {
  return render_utterance(phonemes, style, spec, make_inventory(spec), rng);
}

const Utterance* Corpus::find_utterance(const std::string& id) const {
  for (const auto* set : {&train, &one_shot}) {
    for (const Utterance& u : *set) {
      if (u.id == id) return &u;
    }
  }
  return nullptr;
}

const Prompt* Corpus::find_prompt(const std::string& id) const {
  for (const Prompt& p : prompts) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::vector<std::string> level_names(std::size_t count) {
  if (count == 3) return {"low", "medium", "high"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) names.push_back("level" + std::to_string(i));
  return names;
}

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%0*zu", prefix, width, i);
  return buf;
}

PhonemeSequence random_phonemes(const CorpusSpec& spec, RngStream& rng) {
  const int len = rng.uniform_int(static_cast<int>(spec.min_phonemes),
                                  static_cast<int>(spec.max_phonemes));
  PhonemeSequence seq;
  for (int i = 0; i < len; ++i) {
    seq.ids.push_back(rng.uniform_int(0, static_cast<int>(spec.vocab) - 1));
  }
  return seq;
}

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  const PhonemeInventory inv = make_inventory(spec);
  Corpus corpus;
  corpus.spec = spec;
  corpus.seed = seed;
  const RngStream root(seed, "data");

  auto make = [&](RngStream rng, std::string id, StyleFactors style, Split split) {
    Utterance u;
    u.id = std::move(id);
    u.split = split;
    u.phonemes = random_phonemes(spec, rng);
    u.style = style;
    RngStream noise = rng.derive("noise");
    u.mel = render_utterance(u.phonemes, style, spec, inv, noise);
    round_to_float(u.mel.flat());
    return u;
  };

  for (std::size_t i = 0; i < spec.n_train; ++i) {
    RngStream rng = root.derive("train/" + std::to_string(i));
    StyleFactors style;
    style.intensity = rng.uniform(spec.train_intensity_min, spec.train_intensity_max);
    style.tilt = rng.uniform(spec.tilt_min, spec.tilt_max);
    corpus.train.push_back(make(rng, numbered("train", i, 4), style, Split::kTrain));
  }

  std::vector<double> levels = spec.held_out_intensities;
  std::sort(levels.begin(), levels.end());
  const auto names = level_names(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    RngStream rng = root.derive("oneshot/" + std::to_string(i));
    StyleFactors style;
    style.intensity = levels[i];
    style.tilt = rng.uniform(spec.tilt_min, spec.tilt_max);
    Utterance u = make(rng, "oneshot_" + names[i], style, Split::kOneShot);
    u.level = names[i];
    corpus.one_shot.push_back(std::move(u));
  }

  for (std::size_t i = 0; i < spec.n_prompts; ++i) {
    RngStream rng = root.derive("prompt/" + std::to_string(i));
    corpus.prompts.push_back({numbered("prompt", i, 2), random_phonemes(spec, rng)});
  }
  return corpus;
}

namespace {

struct FrameTemplates {
  std::vector<std::size_t> ids;  // template row per frame
};

FrameTemplates assign_templates(const MelGram& mel, const PhonemeSequence& phonemes,
                                const PhonemeInventory& inv) {
  FrameTemplates out;
  if (!phonemes.empty() && rendered_length(phonemes, inv) == mel.rows()) {
    for (int p : phonemes.ids) {
      for (int k = 0; k < inv.durations[p]; ++k) out.ids.push_back(p);
    }
    return out;
  }
  std::vector<std::size_t> candidates;
  if (phonemes.empty()) {
    for (std::size_t p = 0; p < inv.templates.rows(); ++p) candidates.push_back(p);
  } else {
    for (int p : phonemes.ids) candidates.push_back(static_cast<std::size_t>(p));
  }
  for (std::size_t f = 0; f < mel.rows(); ++f) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_id = candidates.front();
    for (std::size_t p : candidates) {
      double d = 0.0;
      for (std::size_t j = 0; j < mel.cols(); ++j) {
        const double e = mel(f, j) - inv.templates(p, j);
        d += e * e;
      }
      if (d < best) {
        best = d;
        best_id = p;
      }
    }
    out.ids.push_back(best_id);
  }
  return out;
}

}  // namespace

StyleFactors style_oracle(const MelGram& mel, const PhonemeSequence& phonemes,
                          const CorpusSpec& spec, const PhonemeInventory& inv) {
  if (mel.cols() != spec.mel_bands) {
    throw DimensionError("style_oracle: band count mismatch");
  }
  const FrameTemplates frames = assign_templates(mel, phonemes, inv);
  const std::size_t bands = mel.cols();
  // Normal equations for r = a * x1 + b * x2, with r = mel - T,
  // x1 = T * sin(2 pi f / F0) and x2 = j / B - 0.5.
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, r1 = 0.0, r2 = 0.0;
  for (std::size_t f = 0; f < mel.rows(); ++f) {
    auto tmpl = inv.templates.row(frames.ids[f]);
    const double m = modulation(static_cast<double>(f), spec.modulation_period);
    for (std::size_t j = 0; j < bands; ++j) {
      const double x1 = tmpl[j] * m;
      const double x2 = tilt_ramp(j, bands);
      const double r = mel(f, j) - tmpl[j];
      s11 += x1 * x1;
      s12 += x1 * x2;
      s22 += x2 * x2;
      r1 += x1 * r;
      r2 += x2 * r;
    }
  }
  StyleFactors est;
  const double det = s11 * s22 - s12 * s12;
  if (s11 > 1e-12 && std::abs(det) > 1e-12 * s11 * s22) {
    est.intensity = (r1 * s22 - r2 * s12) / det;
    est.tilt = (s11 * r2 - s12 * r1) / det;
  } else if (s22 > 0.0) {
    // No modulated frames (e.g. a single frame at phase 0): tilt only.
    est.tilt = r2 / s22;
  }
  return est;
}

StyleFactors style_oracle(const MelGram& mel, const PhonemeSequence& phonemes,
                          const CorpusSpec& spec) {
  return style_oracle(mel, phonemes, spec, make_inventory(spec));
}

namespace {

constexpr char kMelMagic[4] = {'M', 'E', 'L', 'S'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void dump(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "oneshot"; }

}  // namespace

std::vector<char> encode_mel(const MelGram& mel) {
  std::vector<char> out(kMelMagic, kMelMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(mel.rows()));
  put_u32(out, static_cast<std::uint32_t>(mel.cols()));
  out.reserve(out.size() + 4 * mel.size());
  for (double v : mel.flat()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

MelGram decode_mel(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || !std::equal(kMelMagic, kMelMagic + 4, bytes.begin())) {
    throw FormatError("not a MELS file");
  }
  const std::uint32_t frames = get_u32(bytes, 4);
  const std::uint32_t bands = get_u32(bytes, 8);
  const std::size_t expected = 12 + 4ull * frames * bands;
  if (bytes.size() != expected) {
    throw FormatError("MELS payload size " + std::to_string(bytes.size()) +
                      " != expected " + std::to_string(expected));
  }
  MelGram mel(frames, bands);
  std::size_t at = 12;
  for (double& v : mel.flat()) {
    v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
    at += 4;
  }
  return mel;
}

void write_mel(const std::filesystem::path& path, const MelGram& mel) {
  dump(path, encode_mel(mel));
}

MelGram read_mel(const std::filesystem::path& path) { return decode_mel(slurp(path)); }

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "mels", ec);
  if (ec) throw IoError("cannot create " + (dir / "mels").string() + ": " + ec.message());

  Json utts = Json::array();
  for (const auto* set : {&corpus.train, &corpus.one_shot}) {
    for (const Utterance& u : *set) {
      const std::string file = "mels/" + u.id + ".mels";
      write_mel(dir / file, u.mel);
      Json entry = {{"id", u.id},
                    {"split", split_name(u.split)},
                    {"phonemes", u.phonemes.ids},
                    {"intensity", u.style.intensity},
                    {"tilt", u.style.tilt},
                    {"frames", u.mel.rows()},
                    {"file", file}};
      if (!u.level.empty()) entry["level"] = u.level;
      utts.push_back(std::move(entry));
    }
  }
  Json prompts = Json::array();
  for (const Prompt& p : corpus.prompts) {
    prompts.push_back({{"id", p.id}, {"phonemes", p.phonemes.ids}});
  }
  Json meta = {{"format", "hflow-corpus"},
               {"version", 1},
               {"seed", corpus.seed},
               {"spec", to_json(corpus.spec)},
               {"utterances", std::move(utts)},
               {"prompts", std::move(prompts)}};
  const std::string text = meta.dump(2) + "\n";
  dump(dir / "meta.json", std::vector<char>(text.begin(), text.end()));
}

Corpus read_corpus(const std::filesystem::path& dir) {
  const auto bytes = slurp(dir / "meta.json");
  Json meta;
  try {
    meta = Json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  Corpus corpus;
  try {
    if (meta.at("format") != "hflow-corpus" || meta.at("version") != 1) {
      throw FormatError("meta.json: unsupported corpus format");
    }
    corpus.seed = meta.at("seed").get<std::uint64_t>();
    corpus.spec = corpus_spec_from_json(meta.at("spec"), "spec");
    for (const Json& e : meta.at("utterances")) {
      Utterance u;
      u.id = e.at("id").get<std::string>();
      const std::string split = e.at("split").get<std::string>();
      if (split != "train" && split != "oneshot") {
        throw FormatError("meta.json: unknown split '" + split + "'");
      }
      u.split = split == "train" ? Split::kTrain : Split::kOneShot;
      u.phonemes.ids = e.at("phonemes").get<std::vector<int>>();
      u.style.intensity = e.at("intensity").get<double>();
      u.style.tilt = e.at("tilt").get<double>();
      if (e.contains("level")) u.level = e.at("level").get<std::string>();
      u.mel = read_mel(dir / e.at("file").get<std::string>());
      if (u.mel.rows() != e.at("frames").get<std::size_t>()) {
        throw FormatError("frame count mismatch for " + u.id);
      }
      (u.split == Split::kTrain ? corpus.train : corpus.one_shot).push_back(std::move(u));
    }
    for (const Json& e : meta.at("prompts")) {
      Prompt p;
      p.id = e.at("id").get<std::string>();
      p.phonemes.ids = e.at("phonemes").get<std::vector<int>>();
      corpus.prompts.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  return corpus;
}

PhonemeSequence parse_phoneme_list(const std::string& text) {
  PhonemeSequence seq;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int id = std::stoi(item, &used);
      if (used != item.size() || id < 0) throw std::invalid_argument(item);
      seq.ids.push_back(id);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad phoneme id '" + item + "'");
    }
  }
  if (seq.empty()) throw std::invalid_argument("empty phoneme list");
  return seq;
}

}  // namespace hflow
