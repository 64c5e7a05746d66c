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

#include "hflow/training.h"

#include <cmath>
#include <filesystem>
#include <limits>

#include "gtest/gtest.h"
#include "test_support.h"

namespace hflow {
namespace {

TrainConfig tiny_train(Arch arch = Arch::kArch3, std::size_t k = 3) {
  TrainConfig c;
  c.model = testing::tiny_model_config(arch, k);
  c.steps = 20;
  c.batch_size = 2;
  c.learning_rate = 5e-3;
  return c;
}

Vec values(const Matrix& m) { return Vec(m.flat().begin(), m.flat().end()); }

bool same_params(const Model& a, const Model& b) {
  const auto pa = a.params();
  const auto pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || values(pa[i]->value) != values(pb[i]->value)) return false;
  }
  return true;
}

TEST(BetaScheduleTest, LinearRampThenConstant) {
  TrainConfig c;
  c.steps = 100;
  c.beta_max = 0.5;
  c.anneal_fraction = 0.2;
  EXPECT_EQ(beta_at(c, 0), 0.0);
  EXPECT_DOUBLE_EQ(beta_at(c, 10), 0.25);
  EXPECT_EQ(beta_at(c, 20), 0.5);
  EXPECT_EQ(beta_at(c, 99), 0.5);
  c.anneal_fraction = 0.0;
  EXPECT_EQ(beta_at(c, 0), 0.5);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  for (double g : {1e-3, -0.2, 7.0}) {
    Param p("w", 1, 1);
    p.value(0, 0) = 1.0;
    p.grad(0, 0) = g;
    Param* ps[] = {&p};
    AdamState state;
    adam_step(ps, state, 0.01);
    // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps).
    EXPECT_NEAR(p.value(0, 0), 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
    EXPECT_EQ(state.t, 1);
  }
}

TEST(AdamTest, ZeroGradientsLeaveParamsAndDecayMoments) {
  Param p("w", 1, 2);
  p.value(0, 0) = 0.3;
  Param* ps[] = {&p};
  AdamState state;
  p.grad(0, 0) = 1.0;
  adam_step(ps, state, 0.1);
  const double after_first = p.value(0, 1);
  const double m = state.first[0](0, 0), v = state.second[0](0, 0);
  p.zero_grad();
  // A zero gradient with nonzero moments still moves the first entry, but
  // an entry whose moments are zero stays put.
  adam_step(ps, state, 0.1);
  EXPECT_EQ(p.value(0, 1), after_first);
  EXPECT_DOUBLE_EQ(state.first[0](0, 0), 0.9 * m);
  EXPECT_DOUBLE_EQ(state.second[0](0, 0), 0.999 * v);
}

TEST(AdamTest, ShapeMismatchThrows) {
  Param a("a", 2, 2), b("b", 1, 1);
  Param* first[] = {&a};
  AdamState state;
  adam_step(first, state, 0.1);
  Param* other[] = {&b};
  EXPECT_THROW(adam_step(other, state, 0.1), DimensionError);
  Param* two[] = {&a, &b};
  EXPECT_THROW(adam_step(two, state, 0.1), DimensionError);
}

TEST(AdamTest, Deterministic100Steps) {
  auto run = [] {
    Param p("w", 3, 2);
    RngStream rng(4, "adam");
    Param* ps[] = {&p};
    AdamState state;
    for (int i = 0; i < 100; ++i) {
      for (double& g : p.grad.flat()) g = rng.normal();
      adam_step(ps, state, 1e-3);
    }
    return values(p.value);
  };
  EXPECT_EQ(run(), run());
}

TEST(ClipGradNormTest, ScalesOnlyAboveThreshold) {
  Param p("w", 1, 2);
  p.grad(0, 0) = 3.0;
  p.grad(0, 1) = 4.0;
  Param* ps[] = {&p};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 5.0);
  EXPECT_EQ(p.grad(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(p.grad(0, 1), 0.8);
}

TEST(MetricLogTest, AppendFinalMeansAndTsv) {
  MetricLog log;
  for (std::size_t i = 0; i < 20; ++i) log.append({i, double(i), 2.0 * i, 0.1, 0.0});
  const auto [kl, recon] = log.final_epoch_means();
  EXPECT_DOUBLE_EQ(kl, 18.5);
  EXPECT_DOUBLE_EQ(recon, 37.0);
  const std::string tsv = log.to_tsv();
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "step\tkl\trecon\tbeta\twall_ms");
  EXPECT_THROW(log.append({20, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, 0.0}),
               NonFiniteError);
  EXPECT_EQ(log.size(), 20u);

  MetricLog one;
  one.append({0, 4.0, 5.0, 0.0, 0.0});
  EXPECT_EQ(one.final_epoch_means(), std::make_pair(4.0, 5.0));
}

TEST(TrainConfigTest, JsonRoundTripAndValidation) {
  TrainConfig c = tiny_train(Arch::kArch2, 4);
  c.history_dropout = 0.25;
  c.model.position_periods = {12.0};
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.model.arch, Arch::kArch2);
  EXPECT_EQ(back.model.num_vectors, 4u);

  Json j = to_json(c);
  j["learning_rat"] = 0.1;
  try {
    train_config_from_json(j);
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rat"), std::string::npos);
  }
  j = to_json(c);
  j["learning_rate"] = -1.0;
  EXPECT_THROW(train_config_from_json(j), ConfigError);
  j = to_json(c);
  j["history_dropout"] = 1.0;
  EXPECT_THROW(train_config_from_json(j), ConfigError);
}

class FullLossGradTest : public ::testing::TestWithParam<Arch> {};

TEST_P(FullLossGradTest, MatchesFiniteDifferences) {
  const Arch arch = GetParam();
  const CorpusSpec spec = testing::tiny_corpus_spec(2);
  const Corpus corpus = generate_corpus(spec, 3);
  const Utterance& u = corpus.train[0];
  Model model = Model::initialize(testing::tiny_model_config(arch, 3), 5);
  RngStream rng(6, "eps");
  const Vec eps = testing::random_vec(rng, 3);
  std::vector<std::uint8_t> dropped(u.mel.rows(), 0);
  for (std::size_t t = 0; t < dropped.size(); t += 3) dropped[t] = 1;
  const double beta = 0.3;
  model.zero_grad();
  accumulate_gradients(model, u.mel, u.phonemes, eps, beta, 1.0, dropped);
  const Vec analytic = testing::flatten_grads(model);
  // evaluate_loss has no dropout mask, so the scalar comes from a scratch copy.
  const auto loss = [&] {
    Model copy = model;
    return accumulate_gradients(copy, u.mel, u.phonemes, eps, beta, 1.0, dropped).loss;
  };
  // Some entries are ~1e-8, where a 1e-5 step is dominated by rounding.
  EXPECT_LT(testing::model_grad_check(model, loss, analytic, 1e-4), 1e-4) << arch_name(arch);
}

INSTANTIATE_TEST_SUITE_P(AllArchs, FullLossGradTest,
                         ::testing::Values(Arch::kVanilla, Arch::kArch1, Arch::kArch2,
                                           Arch::kArch3));

TEST(LossTest, AccumulateMatchesEvaluateWithoutDropout) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(2), 8);
  const Utterance& u = corpus.train[1];
  Model model = Model::initialize(testing::tiny_model_config(Arch::kArch1, 2), 9);
  const Vec eps = {0.1, -0.4, 0.7};
  const LossBreakdown a = evaluate_loss(model, u.mel, u.phonemes, eps, 0.2);
  const LossBreakdown b = accumulate_gradients(model, u.mel, u.phonemes, eps, 0.2);
  EXPECT_DOUBLE_EQ(a.loss, b.loss);
  EXPECT_DOUBLE_EQ(a.recon, b.recon);
  EXPECT_DOUBLE_EQ(a.kl, b.kl);
  EXPECT_NEAR(a.loss, a.recon + 0.2 * a.kl, 1e-15);
}

TEST(LossTest, BatchGradientsAccumulateLinearly) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(2), 10);
  Model model = Model::initialize(testing::tiny_model_config(Arch::kArch3, 3), 11);
  const Vec eps = {0.2, 0.0, -0.5};
  Vec single[2];
  for (int i = 0; i < 2; ++i) {
    model.zero_grad();
    accumulate_gradients(model, corpus.train[i].mel, corpus.train[i].phonemes, eps, 0.1);
    single[i] = testing::flatten_grads(model);
  }
  model.zero_grad();
  for (int i = 0; i < 2; ++i) {
    accumulate_gradients(model, corpus.train[i].mel, corpus.train[i].phonemes, eps, 0.1, 0.5);
  }
  const Vec both = testing::flatten_grads(model);
  for (std::size_t j = 0; j < both.size(); ++j) {
    EXPECT_NEAR(both[j], 0.5 * (single[0][j] + single[1][j]), 1e-12);
  }
}

TEST(TrainTest, ZeroStepsEqualsInitialization) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(3), 1);
  TrainConfig c = tiny_train();
  c.steps = 0;
  const TrainResult r = train(c, corpus);
  EXPECT_TRUE(same_params(r.checkpoint.model, Model::initialize(c.model, c.seed)));
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(std::isnan(r.checkpoint.final_kl));
}

TEST(TrainTest, VanillaAndArch3ShareNonFlowInitialization) {
  const Model vanilla = Model::initialize(testing::tiny_model_config(Arch::kVanilla), 21);
  const Model arch3 = Model::initialize(testing::tiny_model_config(Arch::kArch3, 4), 21);
  EXPECT_TRUE(vanilla.flow.shared.empty());
  std::size_t shared = 0;
  for (const Param* p : vanilla.params()) {
    for (const Param* q : arch3.params()) {
      if (p->name == q->name) {
        EXPECT_EQ(values(p->value), values(q->value)) << p->name;
        ++shared;
      }
    }
  }
  EXPECT_EQ(shared, vanilla.params().size());
  EXPECT_GT(arch3.params().size(), shared);
}

TEST(TrainTest, DeterministicForEqualSeeds) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(4), 2);
  const TrainConfig c = tiny_train(Arch::kArch2, 2);
  const TrainResult a = train(c, corpus);
  const TrainResult b = train(c, corpus);
  EXPECT_EQ(a.log, b.log);
  EXPECT_TRUE(same_params(a.checkpoint.model, b.checkpoint.model));
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  TrainConfig other = c;
  other.seed = 2;
  EXPECT_NE(train(other, corpus).log, a.log);
  for (const MetricRecord& r : a.log.records()) EXPECT_EQ(r.wall_ms, 0.0);
}

TEST(TrainTest, SmokeReconDecreases) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(5), 3);
  TrainConfig c = tiny_train();
  c.steps = 200;
  c.batch_size = 4;
  c.learning_rate = 1e-2;
  const TrainResult r = train(c, corpus);
  ASSERT_EQ(r.log.size(), 200u);
  double first = 0.0;
  for (std::size_t i = 0; i < 20; ++i) first += r.log.records()[i].recon / 20.0;
  EXPECT_LT(r.checkpoint.final_recon, first);
  EXPECT_EQ(r.log.records().back().beta, c.beta_max);
}

TEST(TrainTest, RejectsMismatchedCorpus) {
  CorpusSpec spec = testing::tiny_corpus_spec(2);
  spec.mel_bands = 7;
  EXPECT_THROW(train(tiny_train(), generate_corpus(spec, 1)), ConfigError);
  Corpus empty;
  empty.spec = testing::tiny_corpus_spec(0);
  EXPECT_THROW(train(tiny_train(), empty), std::invalid_argument);
}

TEST(TrainTest, DivergenceAborts) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(3), 4);
  TrainConfig c = tiny_train();
  c.learning_rate = 10.0;
  c.steps = 200;
  c.divergence_limit = 100.0;
  try {
    train(c, corpus);
    FAIL() << "lr = 10 did not diverge";
  } catch (const NumericAbort& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
    EXPECT_GT(std::max(e.record.kl, e.record.recon), 100.0);
  }
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(3), 5);
  for (Arch arch : {Arch::kVanilla, Arch::kArch1, Arch::kArch2, Arch::kArch3}) {
    TrainConfig c = tiny_train(arch, 2);
    c.steps = 5;
    const TrainResult r = train(c, corpus);
    const std::vector<char> bytes = encode_checkpoint(r.checkpoint);
    ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "HFVC");
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_TRUE(same_params(back.model, r.checkpoint.model));
    EXPECT_EQ(back.step, 5u);
    EXPECT_EQ(back.final_kl, r.checkpoint.final_kl);
    EXPECT_EQ(back.final_recon, r.checkpoint.final_recon);

    const Utterance& probe = corpus.train[0];
    const Vec eps(3, 0.25);
    const LossBreakdown before = evaluate_loss(r.checkpoint.model, probe.mel, probe.phonemes, eps, 1.0);
    const LossBreakdown after = evaluate_loss(back.model, probe.mel, probe.phonemes, eps, 1.0);
    EXPECT_EQ(before.loss, after.loss);
    EXPECT_EQ(values(synthesize(r.checkpoint.model, probe.mel, corpus.prompts[0].phonemes, 7)),
              values(synthesize(back.model, probe.mel, corpus.prompts[0].phonemes, 7)));
  }
}

TEST(CheckpointTest, FileRoundTripAndCorruption) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(2), 6);
  TrainConfig c = tiny_train();
  c.steps = 2;
  const Checkpoint ckpt = train(c, corpus).checkpoint;
  const auto path = std::filesystem::temp_directory_path() / "hflow_training_ckpt.hfvc";
  write_checkpoint(path, ckpt);
  EXPECT_EQ(encode_checkpoint(read_checkpoint(path)), encode_checkpoint(ckpt));
  std::filesystem::remove(path);
  EXPECT_THROW(read_checkpoint(path), IoError);

  const std::vector<char> good = encode_checkpoint(ckpt);
  std::vector<char> bad = good;
  bad[1] = 'x';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad[4] = 2;  // version
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.resize(bad.size() - 4);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.resize(20);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
}

TEST(SweepTest, ArchitectureGridHasThirteenConfigs) {
  const std::vector<TrainConfig> grid = architecture_grid(TrainConfig{});
  ASSERT_EQ(grid.size(), 13u);
  EXPECT_EQ(grid[0].model.arch, Arch::kVanilla);
  EXPECT_EQ(grid[0].model.flow_vectors(), 0u);
  EXPECT_EQ(grid[12].model.arch, Arch::kArch3);
  EXPECT_EQ(grid[12].model.num_vectors, 16u);
}

TEST(SweepTest, DuplicatesMatchAndFailuresAreRecorded) {
  const Corpus corpus = generate_corpus(testing::tiny_corpus_spec(3), 7);
  TrainConfig good = tiny_train(Arch::kArch1, 2);
  good.steps = 6;
  TrainConfig bad = good;
  bad.model.mel_bands = 9;
  std::size_t callbacks = 0;
  const auto rows = sweep({good, bad, good}, corpus, 2,
                          [&](std::size_t, const TrainConfig&, const TrainResult*) { ++callbacks; });
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(callbacks, 3u);
  EXPECT_TRUE(rows[0].ok);
  EXPECT_FALSE(rows[1].ok);
  EXPECT_FALSE(rows[1].error.empty());
  EXPECT_EQ(rows[0].final_kl, rows[2].final_kl);
  EXPECT_EQ(rows[0].final_recon, rows[2].final_recon);
  const std::string tsv = sweep_tsv(rows);
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "arch\tK\tfinal_kl\tfinal_recon\tstatus");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 4);
}

TEST(SweepTest, MediansPerConfiguration) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0}), 2.5);
  std::vector<SweepRow> rows;
  for (double v : {1.0, 5.0, 3.0}) rows.push_back({Arch::kArch3, 16, 0, v, 2 * v, true, ""});
  rows.push_back({Arch::kVanilla, 0, 0, 9.0, 9.0, true, ""});
  rows.push_back({Arch::kVanilla, 0, 1, 100.0, 100.0, false, "boom"});
  const auto med = sweep_medians(rows);
  ASSERT_EQ(med.size(), 2u);
  EXPECT_EQ(med[0].final_kl, 3.0);
  EXPECT_EQ(med[0].final_recon, 6.0);
  EXPECT_EQ(med[1].final_kl, 9.0);
}

}  // namespace
}  // namespace hflow
