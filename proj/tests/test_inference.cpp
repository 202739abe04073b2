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
#include <functional>
#include <sstream>

#include "csst/inference.hpp"

namespace csst {
namespace {

constexpr int kEos = 2;

// Deterministic pseudo-random logits over a 4-token vocabulary, keyed by
// the prefix so repeated queries agree.
Eigen::RowVectorXd table_logits(std::span<const int> prefix, std::uint64_t salt) {
  std::uint64_t h = salt;
  for (int t : prefix) h = splitmix64(h ^ static_cast<std::uint64_t>(t + 1));
  Rng rng(h);
  Eigen::RowVectorXd l(4);
  for (int i = 0; i < 4; ++i) l(i) = 2.0 * rng.normal();
  return l;
}

double log_softmax_at(const Eigen::RowVectorXd& l, int i) {
  const double mx = l.maxCoeff();
  return l(i) - (mx + std::log((l.array() - mx).exp().sum()));
}

// Best normalized score over every complete hypothesis.
DecodeResult exhaustive(std::uint64_t salt, const std::vector<int>& controls, int max_len, double lp) {
  DecodeResult best;
  best.score = -std::numeric_limits<double>::infinity();
  std::function<void(std::vector<int>&, double)> go = [&](std::vector<int>& toks, double logp) {
    std::vector<int> prefix = controls;
    prefix.insert(prefix.end(), toks.begin(), toks.end());
    if (static_cast<int>(toks.size()) == max_len) {
      const double s = logp / std::pow(static_cast<double>(toks.size()), lp);
      if (s > best.score) best = {toks, logp, s, true};
      return;
    }
    const Eigen::RowVectorXd l = table_logits(prefix, salt);
    const double end = logp + log_softmax_at(l, kEos);
    const double s = end / std::pow(static_cast<double>(toks.size() + 1), lp);
    if (s > best.score) best = {toks, end, s, false};
    for (int t : {0, 1, 3}) {
      toks.push_back(t);
      go(toks, logp + log_softmax_at(l, t));
      toks.pop_back();
    }
  };
  std::vector<int> toks;
  go(toks, 0.0);
  return best;
}

TEST(BeamSearch, WideBeamMatchesExhaustiveEnumeration) {
  const std::vector<int> controls = {1, 3};
  for (double lp : {0.0, 0.6, 1.0})
    for (std::uint64_t salt = 0; salt < 40; ++salt) {
      DecodeConfig cfg;
      cfg.strategy = DecodeStrategy::beam;
      cfg.beam_size = 4 * 4 * 4 * 4 * 4;  // wider than the whole tree
      cfg.max_len = 4;
      cfg.length_penalty = lp;
      const DecodeResult got = decode_sequence([&](auto p) { return table_logits(p, salt); }, controls, cfg);
      const DecodeResult want = exhaustive(salt, controls, 4, lp);
      ASSERT_EQ(got.tokens, want.tokens) << "salt " << salt << " lp " << lp;
      ASSERT_NEAR(got.score, want.score, 1e-12);
      ASSERT_NEAR(got.log_prob, want.log_prob, 1e-12);
      ASSERT_EQ(got.truncated, want.truncated);
    }
}

TEST(BeamSearch, NarrowBeamNeverBeatsTheOptimum) {
  for (std::uint64_t salt = 0; salt < 40; ++salt)
    for (int beam : {1, 2, 3}) {
      DecodeConfig cfg;
      cfg.strategy = DecodeStrategy::beam;
      cfg.beam_size = beam;
      cfg.max_len = 4;
      const DecodeResult got = decode_sequence([&](auto p) { return table_logits(p, salt); }, std::vector<int>{1}, cfg);
      EXPECT_LE(got.score, exhaustive(salt, {1}, 4, 1.0).score + 1e-12);
    }
}

TEST(BeamSearch, GreedyFollowsTheArgmaxChain) {
  for (std::uint64_t salt = 0; salt < 40; ++salt) {
    DecodeConfig cfg;
    cfg.max_len = 6;
    const std::vector<int> controls = {1};
    const DecodeResult got = decode_sequence([&](auto p) { return table_logits(p, salt); }, controls, cfg);
    std::vector<int> toks, prefix = controls;
    double logp = 0.0;
    bool ended = false;
    for (int step = 0; step < 6; ++step) {
      const Eigen::RowVectorXd l = table_logits(prefix, salt);
      Eigen::Index arg;
      l.maxCoeff(&arg);
      logp += log_softmax_at(l, static_cast<int>(arg));
      if (arg == kEos) {
        ended = true;
        break;
      }
      toks.push_back(static_cast<int>(arg));
      prefix.push_back(static_cast<int>(arg));
    }
    EXPECT_EQ(got.tokens, toks);
    EXPECT_NEAR(got.log_prob, logp, 1e-12);
    EXPECT_EQ(got.truncated, !ended);
  }
}

TEST(BeamSearch, ConfigValidation) {
  DecodeConfig cfg;
  cfg.max_len = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.strategy = DecodeStrategy::beam;
  cfg.beam_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(decode_sequence([](auto p) { return table_logits(p, 0); }, std::vector<int>{}, DecodeConfig{}), Error);
}

// ---------------------------------------------------------------------------
// Systems

struct Fixture {
  ToyCorpus corpus;
  Vocabulary vocab;
  ModelDims dims;
  Fixture() {
    ToyCorpusConfig cfg;
    cfg.n_train = 40;
    cfg.n_dev = 10;
    cfg.n_test = 40;
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

DecodeConfig short_greedy() {
  DecodeConfig cfg;
  cfg.max_len = 8;
  return cfg;
}

TEST(RunSystem, OracleRoutingAndTargets) {
  for (ArchitectureKind k : kAllArchitectures) {
    const Model m = build_model(k, fx().dims, 3);
    const System sys{&m, &fx().vocab, nullptr};
    for (const auto& u : fx().corpus.test_cs) {
      const SystemOutput o = run_system(sys, u, LidMode::oracle, short_greedy());
      if (is_lid_gated(k)) {
        ASSERT_TRUE(o.lid_used.has_value());
        EXPECT_EQ(*o.lid_used, u.matrix_lang);
        EXPECT_EQ(o.target, other(u.matrix_lang));
      } else {
        EXPECT_FALSE(o.lid_used.has_value());
        EXPECT_EQ(o.target, other(fx().vocab.majority_lang(o.transcript_tokens)));
      }
      // Outputs never contain control tokens.
      for (int t : o.transcript_tokens) EXPECT_FALSE(Vocabulary::is_control(t));
      for (int t : o.translation_tokens) EXPECT_FALSE(Vocabulary::is_control(t));
    }
  }
}

TEST(RunSystem, PredictedModeNeedsAClassifier) {
  const Model m = build_model(ArchitectureKind::E2EUnidirect, fx().dims, 3);
  const System sys{&m, &fx().vocab, nullptr};
  EXPECT_THROW(run_system(sys, fx().corpus.test_cs[0], LidMode::predicted, short_greedy()), Error);
  ModelDims ld = fx().dims;
  const LidClassifier lid = LidClassifier::build(ld, 1);
  const System with{&m, &fx().vocab, &lid};
  for (const auto& u : fx().corpus.test_cs)
    EXPECT_EQ(*run_system(with, u, LidMode::predicted, short_greedy()).lid_used, lid.predict(u.frames));
}

TEST(RunSystem, TranslationPassAttendsToRealizedTranscript) {
  for (ArchitectureKind k : {ArchitectureKind::E2EUnidirect, ArchitectureKind::E2EBidirectShared}) {
    const Model m = build_model(k, fx().dims, 4);
    const Utterance& u = fx().corpus.test_cs[0];
    const SystemOutput o = run_system({&m, &fx().vocab, nullptr}, u, LidMode::oracle, short_greedy());
    const Route& r = m.route(u.matrix_lang);
    Tape t(false);
    Ctx c{t};
    const Mat enc = t.value(encode(c, r, u.frames));
    EXPECT_EQ(o.first_states_hash, hash_matrix(transcript_states(*r.transcript, enc, o.transcript_tokens)));
  }
}

std::vector<std::string> text_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& ws) {
  std::string out;
  for (const auto& w : ws) out += (out.empty() ? "" : " ") + w;
  return out;
}

// Some lexicon word different from w.
std::string corpus_word_other_than(const std::string& w) {
  for (const auto& lang : fx().corpus.lexicon.words)
    for (const auto& x : lang)
      if (x != w) return x;
  throw Error("lexicon too small");
}

TEST(Cascade, MtReadsTheRealizedTranscript) {
  const Model m = build_model(ArchitectureKind::CascadeBidirect, fx().dims, 5);
  const Route& r = m.route(Lang::L1);
  const auto& test = fx().corpus.test_cs;
  int changed = 0;
  for (const auto& u : test) {
    const SystemOutput o = run_system({&m, &fx().vocab, nullptr}, u, LidMode::oracle, short_greedy());
    // Error propagation: translation is exactly the MT output for the ASR hypothesis.
    EXPECT_EQ(o.translation, cascade_translate(r, fx().vocab, o.transcript, o.target, short_greedy()));
    // Corrupting the MT input changes what the MT component produces.
    const std::string gold = cascade_translate(r, fx().vocab, u.transcript.text(), o.target, short_greedy());
    std::vector<std::string> words = text_words(u.transcript.text());
    words.front() = corpus_word_other_than(words.front());
    const std::string corrupted = cascade_translate(r, fx().vocab, join_words(words), o.target, short_greedy());
    changed += corrupted != gold;
  }
  EXPECT_GT(changed, 0);
  EXPECT_EQ(cascade_translate(r, fx().vocab, "", Lang::L2, short_greedy()), "");
}

TEST(Cascade, E2ERouteHasNoMtComponent) {
  const Model m = build_model(ArchitectureKind::E2EBidirectShared, fx().dims, 5);
  EXPECT_THROW(cascade_translate(m.route(Lang::L1), fx().vocab, "x", Lang::L2, short_greedy()), Error);
}

TEST(Outputs, RoundTripAndHeaderCheck) {
  const auto path = std::filesystem::temp_directory_path() / "csst_outputs" / "o.jsonl";
  std::vector<OutputRecord> recs(2);
  recs[0] = {"u1", "a b", "c d", "L1", -1.25, -0.1};
  recs[1] = {"u2", "", "", "none", -0.3333333333333333, 0.0};
  write_outputs(path, recs);
  const auto back = read_outputs(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].transcript, "a b");
  EXPECT_EQ(back[1].transcript_log_prob, recs[1].transcript_log_prob);
  EXPECT_EQ(back[0].lid_used, "L1");
  write_file_atomic(path, "#cs-outputs v0\n");
  EXPECT_THROW(read_outputs(path), Error);
  write_file_atomic(path, "#cs-outputs v1\n{\"id\": 1}\n");
  EXPECT_THROW(read_outputs(path), Error);
}

TEST(LidMode, Names) {
  EXPECT_EQ(lid_mode_from_string("oracle"), LidMode::oracle);
  EXPECT_EQ(lid_mode_from_string(to_string(LidMode::predicted)), LidMode::predicted);
  EXPECT_THROW(lid_mode_from_string("gold"), Error);
}

}  // namespace
}  // namespace csst
