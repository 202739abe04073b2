// Copyright 2026 The csst Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "csst/training.hpp"

namespace csst {
namespace {

struct Fixture {
  ToyCorpus corpus;
  Vocabulary vocab;
  ModelDims dims;
  Fixture() {
    ToyCorpusConfig cfg;
    cfg.n_train = 120;
    cfg.n_dev = 30;
    cfg.n_test = 30;
    cfg.seed = 8;
    corpus = generate_toy_corpus(cfg);
    vocab = Vocabulary::from_lexicon(corpus.lexicon);
    dims.d_model = 16;
    dims.n_heads = 2;
    dims.n_enc_layers = 1;
    dims.n_dec_layers = 1;
    dims.ffn_dim = 32;
    dims.vocab = vocab.size();
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

std::vector<Utterance> head(const std::vector<Utterance>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

// ---------------------------------------------------------------------------
// Schedule and freeze

TEST(Schedule, EndpointsAtBatch64) {
  TriStageSchedule s;  // peak 5e-4, batch 64
  EXPECT_EQ(s.warmup_steps(), 500.0);
  EXPECT_EQ(s.hold_steps(), 500.0);
  EXPECT_EQ(s.decay_steps(), 3000.0);
  EXPECT_EQ(lr_at(0, s), 0.0);
  EXPECT_EQ(lr_at(250, s), 2.5e-4);
  EXPECT_EQ(lr_at(500, s), 5e-4);
  EXPECT_EQ(lr_at(999, s), 5e-4);
  EXPECT_EQ(lr_at(1000, s), 5e-4);
  EXPECT_EQ(lr_at(4000, s), 5e-6);
  EXPECT_EQ(lr_at(10000, s), 5e-6);
  EXPECT_NEAR(lr_at(2500, s), 0.5 * (5e-4 + 5e-6), 1e-18);
  EXPECT_THROW(lr_at(-1, s), Error);
}

TEST(Schedule, ScalesInverselyWithBatch) {
  TriStageSchedule s;
  s.batch_size = 32;
  EXPECT_EQ(s.warmup_steps(), 1000.0);
  EXPECT_EQ(s.hold_steps(), 1000.0);
  EXPECT_EQ(s.decay_steps(), 6000.0);
  EXPECT_EQ(lr_at(1000, s), 5e-4);
  EXPECT_EQ(lr_at(8000, s), 5e-6);
}

TEST(Schedule, MonotoneWithinStages) {
  TriStageSchedule s;
  for (double t = 1; t < 500; ++t) EXPECT_GT(lr_at(t, s), lr_at(t - 1, s));
  for (double t = 1001; t <= 4000; ++t) EXPECT_LT(lr_at(t, s), lr_at(t - 1, s));
}

TEST(Schedule, DeskScaleEndsDecayAtMaxSteps) {
  const TrainPlan p = TrainPlan::desk_scale(1500, 16, 2e-3);
  const auto& s = p.schedule;
  EXPECT_NEAR(s.warmup_steps() + s.hold_steps() + s.decay_steps(), 1500.0, 1e-9);
  EXPECT_NEAR(lr_at(1500, s), 2e-5, 1e-15);
  EXPECT_EQ(p.eval_every, 75);
  EXPECT_NEAR(p.freeze.freeze_steps(), s.warmup_steps(), 1e-9);
}

TEST(Freeze, MaskOpensAfterTheFreeze) {
  FreezePlan f;
  EXPECT_EQ(f.freeze_steps(), 500.0);
  EXPECT_EQ(freeze_mask(0, f), (std::set<std::string>{kGroupBridge, kGroupFirstDecoderAttention}));
  EXPECT_EQ(freeze_mask(499, f), freeze_mask(0, f));
  EXPECT_EQ(freeze_mask(500, f), all_parameter_groups());
  f.batch_size = 32;
  EXPECT_EQ(freeze_mask(999, f), freeze_mask(0, f));
}

TEST(Freeze, NonExemptGroupsAreBitwiseConstantDuringFreeze) {
  Model m = build_model(ArchitectureKind::E2EBidirectShared, fx().dims, 1);
  TrainPlan plan;
  plan.freeze.step_scale = 3.0 / 500.0;  // three frozen steps
  std::map<std::string, std::uint64_t> before;
  for (const auto& g : all_parameter_groups()) before[g] = m.registry.hash_group(g);
  auto step = [&](int s) {
    m.registry.zero_grad();
    for (const auto& u : head(fx().corpus.train_cs, 4)) {
      Tape t;
      Ctx c{t};
      t.backward(forward_joint(c, m, m.route(u.matrix_lang), u.frames, tokenize(fx().vocab, u)).loss);
    }
    adam_step(m.registry, 1e-3, freeze_mask(s, plan.freeze), plan);
  };
  for (int s = 0; s < 3; ++s) step(s);
  for (const std::string g : {kGroupSpeechEncoder, kGroupDecoder})
    EXPECT_EQ(m.registry.hash_group(g), before[g]) << g;
  for (const std::string g : {kGroupBridge, kGroupFirstDecoderAttention})
    EXPECT_NE(m.registry.hash_group(g), before[g]) << g;
  step(3);
  EXPECT_NE(m.registry.hash_group(kGroupDecoder), before[kGroupDecoder]);
}

TEST(Freeze, TrainingInsideTheFreezeKeepsNonExemptGroups) {
  Model m = build_model(ArchitectureKind::E2EUnidirect, fx().dims, 2);
  const auto enc = m.registry.hash_group(kGroupSpeechEncoder);
  const auto dec = m.registry.hash_group(kGroupDecoder);
  TrainPlan plan = TrainPlan::desk_scale(40, 4, 1e-3);
  plan.max_steps = 4;  // the freeze lasts 5 steps
  plan.eval_every = 1;
  plan.early_stop_patience = 0;
  plan.dev_limit = 8;
  ASSERT_GT(plan.freeze.freeze_steps(), 4.0);
  train(m, fx().vocab, fx().corpus.train_mono, fx().corpus.dev_mono, plan);
  EXPECT_EQ(m.registry.hash_group(kGroupSpeechEncoder), enc);
  EXPECT_EQ(m.registry.hash_group(kGroupDecoder), dec);
}

// ---------------------------------------------------------------------------
// Optimizer

TEST(Adam, MatchesHandComputedSteps) {
  ParameterRegistry reg;
  Parameter& p = reg.create("w", kGroupDecoder, Mat::Constant(1, 1, 1.0));
  TrainPlan plan;
  ASSERT_EQ(plan.beta2, 0.98);
  const double grads[] = {0.5, -0.2};
  double value = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    p.grad(0, 0) = grads[t - 1];
    p.used = true;
    adam_step(reg, 0.01, all_parameter_groups(), plan);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.98 * v + 0.02 * grads[t - 1] * grads[t - 1];
    value -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.98, t))) + 1e-8);
    EXPECT_NEAR(p.value(0, 0), value, 1e-15);
  }
  EXPECT_EQ(p.updates, 2);
}

TEST(Adam, UnusedAndFrozenParametersAreUntouched) {
  ParameterRegistry reg;
  Parameter& a = reg.create("a", kGroupDecoder, Mat::Ones(1, 1));
  Parameter& b = reg.create("b", kGroupBridge, Mat::Ones(1, 1));
  a.grad.setOnes();
  b.grad.setOnes();
  b.used = true;
  adam_step(reg, 0.1, {kGroupDecoder}, TrainPlan{});  // a unused, b frozen
  EXPECT_EQ(a.value(0, 0), 1.0);
  EXPECT_EQ(b.value(0, 0), 1.0);
  EXPECT_TRUE(b.m.isZero());
  EXPECT_EQ(a.updates + b.updates, 0);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
  Model m = build_model(ArchitectureKind::CascadeUniSharedEnc, fx().dims, 3);
  for (auto& [name, p] : m.registry.params()) {
    p.m.setConstant(1.0 / 3.0);
    p.v.setConstant(std::nextafter(1.0, 2.0));
    p.updates = 7;
  }
  Checkpoint c = capture(m, 42);
  c.rng_state = Rng(5).state();
  c.config = {{"peak_lr", "0.001"}};
  const auto path = std::filesystem::temp_directory_path() / "csst_ckpt" / "m.ckpt";
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.model_type, "CascadeUniSharedEnc");
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.rng_state, c.rng_state);
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.dims.to_kv(), c.dims.to_kv());
  ASSERT_EQ(back.tensors.size(), c.tensors.size());
  for (const auto& [name, t] : c.tensors) {
    const auto& u = back.tensors.at(name);
    EXPECT_EQ(hash_matrix(u.value), hash_matrix(t.value)) << name;
    EXPECT_EQ(hash_matrix(u.m), hash_matrix(t.m));
    EXPECT_EQ(hash_matrix(u.v), hash_matrix(t.v));
    EXPECT_EQ(u.updates, 7);
    EXPECT_EQ(u.group, t.group);
  }
  const Model rebuilt = model_from_checkpoint(back);
  EXPECT_EQ(rebuilt.registry.hash(), m.registry.hash());
  EXPECT_EQ(rebuilt.registry.aliases(), m.registry.aliases());
  // Saving the loaded checkpoint reproduces the file byte for byte.
  const auto again = path.parent_path() / "again.ckpt";
  save_checkpoint(again, back);
  EXPECT_EQ(read_file(again), read_file(path));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "csst_ckpt";
  const Model m = build_model(ArchitectureKind::E2EBidirectShared, fx().dims, 3);
  save_checkpoint(dir / "ok.ckpt", capture(m));
  std::string bytes = read_file(dir / "ok.ckpt");
  write_file_atomic(dir / "trunc.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), Error);
  write_file_atomic(dir / "hdr.ckpt", "#cs-ckpt v9\n" + bytes.substr(bytes.find('\n') + 1));
  EXPECT_THROW(load_checkpoint(dir / "hdr.ckpt"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
  Checkpoint c = capture(m);
  c.tensors.begin()->second.value.resize(1, 1);
  EXPECT_THROW(model_from_checkpoint(c), Error);
}

TEST(Checkpoint, LidRoundTrip) {
  ModelDims d = fx().dims;
  const LidClassifier lid = LidClassifier::build(d, 4);
  const LidClassifier back = lid_from_checkpoint(capture(lid));
  EXPECT_EQ(back.registry.hash(), lid.registry.hash());
  EXPECT_THROW(model_from_checkpoint(capture(lid)), Error);
}

// ---------------------------------------------------------------------------
// Plans, traces, early stopping

TEST(TrainPlan, KeyValueRoundTripAndValidation) {
  TrainPlan p = TrainPlan::desk_scale(300, 8, 1e-3);
  p.selection = SelectionMetric::dev_wer;
  p.freeze.exempt = {kGroupBridge};
  EXPECT_EQ(TrainPlan::from_kv(p.to_kv()).to_kv(), p.to_kv());
  EXPECT_THROW(TrainPlan::from_kv({{"nonsense", "1"}}), Error);
  EXPECT_THROW(TrainPlan::from_kv({{"freeze_exempt", "not_a_group"}}), Error);
  TrainPlan bad;
  bad.eval_every = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Trace, JsonlRoundTrip) {
  MetricTrace t;
  t.add(0, "dev", "loss", 3.25);
  t.add(10, "train", "lr", 1e-4 / 3.0);
  const auto path = std::filesystem::temp_directory_path() / "csst_trace.jsonl";
  std::filesystem::remove(path);
  t.append_to(path);
  EXPECT_EQ(MetricTrace::read(path).records, t.records);
}

TEST(EarlyStopping, StopsAfterPatienceNonImprovements) {
  EarlyStopper s(2);
  EXPECT_TRUE(s.observe(3.0));
  EXPECT_FALSE(s.observe(3.0));  // ties do not improve
  EXPECT_FALSE(s.should_stop());
  EXPECT_TRUE(s.observe(2.0));
  EXPECT_FALSE(s.observe(2.5));
  EXPECT_FALSE(s.observe(2.1));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best(), 2.0);
  EarlyStopper never(0);
  for (int i = 0; i < 10; ++i) never.observe(1.0 + i);
  EXPECT_FALSE(never.should_stop());
}

// ---------------------------------------------------------------------------
// Training

TrainPlan quick_plan(long steps) {
  TrainPlan p = TrainPlan::desk_scale(steps, 8, 3e-3);
  p.dev_limit = 16;
  p.early_stop_patience = 0;
  return p;
}

TEST(Train, ReducesDevLossAndIsDeterministic) {
  auto run = [] {
    Model m = build_model(ArchitectureKind::E2EBidirectShared, fx().dims, 5);
    const TrainResult r = train(m, fx().vocab, fx().corpus.train_mono, fx().corpus.dev_mono, quick_plan(60));
    return std::make_pair(r, m.registry.hash());
  };
  const auto [r1, h1] = run();
  const auto [r2, h2] = run();
  EXPECT_EQ(h1, h2);
  EXPECT_EQ(r1.trace.to_jsonl(), r2.trace.to_jsonl());
  const double initial = r1.trace.records.front().value;
  EXPECT_LT(r1.best_metric, initial - 0.3);
  EXPECT_EQ(r1.steps_run, 60);
  EXPECT_EQ(model_from_checkpoint(r1.best).registry.hash(), h1);  // ends in the best state
}

TEST(Train, EarlyStoppingRestoresBest) {
  Model m = build_model(ArchitectureKind::E2EBidirectByTask, fx().dims, 6);
  TrainPlan p = quick_plan(200);
  p.schedule.peak_lr = 0.5;  // diverges quickly, so selection must hold on to the early best
  p.early_stop_patience = 2;
  p.eval_every = 5;
  TrainResult r;
  try {
    r = train(m, fx().vocab, fx().corpus.train_mono, fx().corpus.dev_mono, p);
  } catch (const Error& e) {
    GTEST_SKIP() << "diverged to non-finite values: " << e.what();
  }
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.steps_run, 200);
  EXPECT_NEAR(mean_loss(m, fx().vocab, head(fx().corpus.dev_mono, 16)), r.best_metric, 1e-9);
}

TEST(Finetune, RejectsMismatchedArchitectureAndResetsMoments) {
  Model m = build_model(ArchitectureKind::E2EUnidirect, fx().dims, 7);
  const TrainResult base = train(m, fx().vocab, fx().corpus.train_mono, fx().corpus.dev_mono, quick_plan(10));
  EXPECT_THROW(finetune(base.best, ArchitectureKind::E2EBidirectShared, fx().vocab, fx().corpus.train_cs,
                        fx().corpus.dev_cs, quick_plan(10)),
               Error);
  TrainPlan p = quick_plan(5);
  p.max_steps = 0;  // evaluation only: the returned state shows the reset
  p.eval_every = 1;
  const TrainResult ft = finetune(base.best, ArchitectureKind::E2EUnidirect, fx().vocab, fx().corpus.train_cs,
                                  fx().corpus.dev_cs, p);
  for (const auto& [name, t] : ft.best.tensors) {
    EXPECT_TRUE(t.m.isZero()) << name;
    EXPECT_EQ(t.updates, 0);
    EXPECT_EQ(hash_matrix(t.value), hash_matrix(base.best.tensors.at(name).value));
  }
}

// ---------------------------------------------------------------------------
// LID

LidDatasets lid_data(bool with_cs) {
  LidDatasets d;
  d.others.resize(2);
  for (const auto& u : fx().corpus.train_mono) d.others[static_cast<std::size_t>(index_of(u.matrix_lang))].push_back(u);
  if (with_cs) d.cs = fx().corpus.train_cs;
  d.dev = fx().corpus.dev_mono;
  return d;
}

TEST(LidMixture, UpsamplesCsAndBalancesOtherSources) {
  const LidDatasets d = lid_data(true);
  Rng rng(1);
  const auto mix = lid_epoch_mixture(d, 2, rng);
  std::map<int, std::size_t> per_source;
  std::map<std::size_t, int> cs_count;
  for (const auto& [s, i] : mix) {
    ++per_source[s];
    if (s == -1) ++cs_count[i];
  }
  EXPECT_EQ(per_source[-1], 2 * d.cs.size());
  for (const auto& [i, n] : cs_count) EXPECT_EQ(n, 2);
  EXPECT_EQ(per_source[0], 2 * d.cs.size());
  EXPECT_EQ(per_source[1], 2 * d.cs.size());
}

TEST(LidMixture, WithoutCsEachSourceAppearsOnce) {
  const LidDatasets d = lid_data(false);
  Rng rng(1);
  const auto mix = lid_epoch_mixture(d, 2, rng);
  EXPECT_EQ(mix.size(), d.others[0].size() + d.others[1].size());
  EXPECT_THROW(lid_epoch_mixture(d, 0, rng), Error);
}

TEST(LidTraining, LearnsAndRejectsSingleClassData) {
  ModelDims ld = fx().dims;
  LidClassifier lid = LidClassifier::build(ld, 9);
  TrainPlan p = quick_plan(60);
  const TrainResult r = train_lid(lid, lid_data(true), 2, p);
  EXPECT_GT(lid_accuracy(lid, fx().corpus.test_mono), 0.7);
  EXPECT_EQ(r.best.model_type, kLidModelType);
  LidDatasets one = lid_data(false);
  one.others[1].clear();
  EXPECT_THROW(train_lid(lid, one, 2, p), Error);
}

}  // namespace
}  // namespace csst
