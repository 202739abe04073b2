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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Criteria 1-6 and 8 are property checks against
// independent oracles; 7 trains the desk-scale directional matrix; 9 runs a
// full tiny matrix twice and compares the reports byte for byte.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "csst/experiments.hpp"
#include "csst/text.hpp"

namespace fs = std::filesystem;
using namespace csst;

namespace {

// Collects failed expectations for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = std::to_string(count_ - failed_) + "/" + std::to_string(count_) + " checks";
    for (const auto& n : notes_) s += "; " + n;
    for (const auto& f : failures_) s += "\n       failed: " + f;
    return s;
  }

 private:
  int count_ = 0;
  int failed_ = 0;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string num(double v, int digits = 4) {
  std::ostringstream o;
  o.precision(digits);
  o << v;
  return o.str();
}

std::vector<Lang> tags(const TaggedTranscript& t) {
  std::vector<Lang> out;
  for (const auto& tok : t.tokens) out.push_back(tok.lang);
  return out;
}

// ---------------------------------------------------------------------------
// Shared toy fixtures

const ToyCorpus& small_corpus() {
  static const ToyCorpus c = [] {
    ToyCorpusConfig cfg;
    cfg.n_train = 60;
    cfg.n_dev = 10;
    cfg.n_test = 60;
    cfg.seed = 31;
    return generate_toy_corpus(cfg);
  }();
  return c;
}

const Vocabulary& small_vocab() {
  static const Vocabulary v = Vocabulary::from_lexicon(small_corpus().lexicon);
  return v;
}

ModelDims toy_dims() {
  ModelDims d;
  d.d_model = 32;
  d.n_heads = 4;
  d.n_enc_layers = 2;
  d.n_dec_layers = 2;
  d.ffn_dim = 64;
  d.vocab = small_vocab().size();
  return d;
}

const Utterance& shortest_cs(Lang matrix) {
  const Utterance* best = nullptr;
  for (const auto& u : small_corpus().test_cs)
    if (u.matrix_lang == matrix && (!best || u.frames.rows() < best->frames.rows())) best = &u;
  if (!best) throw Error("no CS utterance with the requested matrix language");
  return *best;
}

// ---------------------------------------------------------------------------
// 1. Parser goldens

void parser_goldens(Check& c) {
  constexpr Lang S = Lang::L1, E = Lang::L2;
  const auto fisher = parse_fisher_annotation(
      "un <foreign lang=\"English\"> show <\\foreign>, a mi me gusta ver mucho estos "
      "<foreign lang=\"English\"> shows <\\foreign> de la medicina forense",
      Lang::L1);
  c.expect(fisher.text() == "un show, a mi me gusta ver mucho estos shows de la medicina forense",
           "fisher clean text: " + fisher.text());
  c.expect(tags(fisher) == std::vector<Lang>{S, E, S, S, S, S, S, S, S, E, S, S, S, S}, "fisher tags");
  const auto chat = parse_chat_annotation(
      "hay una [/] una que dice (.) it's@s:eng five@s:eng o'clock@s:eng somewhere@s:eng", Lang::L1);
  c.expect(chat.text() == "hay una una que dice it's five o'clock somewhere", "chat clean text: " + chat.text());
  c.expect(tags(chat) == std::vector<Lang>{S, S, S, S, S, E, E, E, E}, "chat tags");

  auto structured = [&](const std::string& raw, const std::function<void()>& f) {
    try {
      f();
      c.expect(false, "accepted malformed input: " + raw);
    } catch (const ParseError& e) {
      c.expect(e.offset() <= raw.size() && std::string(e.what()).find("offset") != std::string::npos,
               "error lacks a valid offset: " + raw);
    } catch (const std::exception& e) {
      c.expect(false, "unstructured error for: " + raw);
    }
  };
  for (const std::string raw :
       {"un <foreign lang=\"English\"> show", "un show </foreign>",
        "<foreign lang=\"English\"> <foreign lang=\"English\"> a </foreign>", "un <foreign> show </foreign>",
        "un <foreign lang=\"Klingon\"> show </foreign>", "un <foreign lang=\"English\"> show </foreign>s",
        "un <b> show </b>", "un <foreign lang=\"English\""})
    structured(raw, [&] { parse_fisher_annotation(raw, Lang::L1); });
  for (const std::string raw : {"hola @s:eng", "hola word@s:xyz", "hola [+ foo] bien", "&=laughs hola"})
    structured(raw, [&] { parse_chat_annotation(raw, Lang::L1); });
}

// ---------------------------------------------------------------------------
// 2. Gradient verification

void gradient_check(Check& c) {
  double worst_all = 0.0;
  for (ArchitectureKind k : kAllArchitectures) {
    Model m = build_model(k, toy_dims(), 101);
    for (Lang l : {Lang::L1, Lang::L2}) {
      const Route& r = m.route(l);
      const Utterance& u = shortest_cs(l);
      const TokenizedUtterance tok = tokenize(small_vocab(), u);
      auto loss = [&](bool grad) {
        Tape t(grad);
        Ctx ctx{t};
        const JointOutput out = forward_joint(ctx, m, r, u.frames, tok);
        if (grad) t.backward(out.loss);
        return t.scalar(out.loss);
      };
      m.registry.zero_grad();
      loss(true);
      Rng rng(derive_seed(7, std::string(to_string(k)) + std::string(to_string(l))));
      const double h = 1e-5;
      double worst = 0.0;
      for (auto& [name, p] : m.registry.params()) {
        if (!p.used) continue;
        for (int s = 0; s < 3; ++s) {
          const auto i = rng.uniform_int(0, p.value.size() - 1);
          const double orig = p.value.data()[i];
          p.value.data()[i] = orig + h;
          const double up = loss(false);
          p.value.data()[i] = orig - h;
          const double down = loss(false);
          p.value.data()[i] = orig;
          const double fd = (up - down) / (2 * h);
          const double an = p.grad.data()[i];
          const double rel = std::abs(fd - an) / std::max(1e-6, std::max(std::abs(fd), std::abs(an)));
          worst = std::max(worst, rel);
        }
      }
      c.expect(worst < 1e-4, std::string(to_string(k)) + " route " + r.name + " max rel err " + num(worst));
      worst_all = std::max(worst_all, worst);
      if (!is_lid_gated(k)) break;
    }
  }
  c.note("max rel err " + num(worst_all, 3));
}

// ---------------------------------------------------------------------------
// 3. Sharing plans

void sharing_plans(Check& c) {
  using Table = std::map<std::string, std::string>;
  const std::map<ArchitectureKind, Table> plans = {
      {ArchitectureKind::CascadeUnidirect,
       {{"L1.speech_encoder", "L1.speech_encoder"}, {"L1.asr_decoder", "L1.asr_decoder"},
        {"L1.mt_encoder", "L1.mt_encoder"}, {"L1.mt_decoder", "L1.mt_decoder"},
        {"L2.speech_encoder", "L2.speech_encoder"}, {"L2.asr_decoder", "L2.asr_decoder"},
        {"L2.mt_encoder", "L2.mt_encoder"}, {"L2.mt_decoder", "L2.mt_decoder"}}},
      {ArchitectureKind::CascadeUniSharedEnc,
       {{"L1.speech_encoder", "shared.speech_encoder"}, {"L1.asr_decoder", "L1.asr_decoder"},
        {"L1.mt_encoder", "L1.mt_encoder"}, {"L1.mt_decoder", "L1.mt_decoder"},
        {"L2.speech_encoder", "shared.speech_encoder"}, {"L2.asr_decoder", "L2.asr_decoder"},
        {"L2.mt_encoder", "L2.mt_encoder"}, {"L2.mt_decoder", "L2.mt_decoder"}}},
      {ArchitectureKind::CascadeBidirect,
       {{"bi.speech_encoder", "bi.speech_encoder"}, {"bi.asr_decoder", "bi.asr_decoder"},
        {"bi.mt_encoder", "bi.mt_encoder"}, {"bi.mt_decoder", "bi.mt_decoder"}}},
      {ArchitectureKind::E2EUnidirect,
       {{"L1.speech_encoder", "L1.speech_encoder"}, {"L1.transcript_decoder", "L1.transcript_decoder"},
        {"L1.translation_decoder", "L1.translation_decoder"}, {"L2.speech_encoder", "L2.speech_encoder"},
        {"L2.transcript_decoder", "L2.transcript_decoder"}, {"L2.translation_decoder", "L2.translation_decoder"}}},
      {ArchitectureKind::E2EBidirectByLang,
       {{"L1.speech_encoder", "shared.speech_encoder"}, {"L1.transcript_decoder", "L1.transcript_decoder"},
        {"L1.translation_decoder", "L1.translation_decoder"}, {"L2.speech_encoder", "shared.speech_encoder"},
        {"L2.transcript_decoder", "L2.transcript_decoder"}, {"L2.translation_decoder", "L2.translation_decoder"}}},
      {ArchitectureKind::E2EBidirectByTask,
       {{"bi.speech_encoder", "bi.speech_encoder"}, {"bi.transcript_decoder", "bi.transcript_decoder"},
        {"bi.translation_decoder", "bi.translation_decoder"}}},
      {ArchitectureKind::E2EBidirectShared,
       {{"bi.speech_encoder", "bi.speech_encoder"}, {"bi.transcript_decoder", "bi.joint_decoder"},
        {"bi.translation_decoder", "bi.joint_decoder"}}},
  };
  std::map<ArchitectureKind, std::size_t> counts;
  for (ArchitectureKind k : kAllArchitectures) {
    const Model m = build_model(k, toy_dims(), 3);
    counts[k] = m.registry.scalar_count();
    Table got;
    bool consistent = true;
    for (const std::string& slot : m.logical_slots())
      for (const auto& [logical, canonical] : m.registry.aliases())
        if (logical.rfind(slot + ".", 0) == 0) {
          const std::string rest = logical.substr(slot.size());
          const std::string target = canonical.substr(0, canonical.size() - rest.size());
          auto [it, inserted] = got.emplace(slot, target);
          consistent = consistent && it->second == target;
        }
    c.expect(consistent && got == plans.at(k), std::string(to_string(k)) + " alias table");
  }

  // Unidirect disjointness: an L1 update leaves every L2 tensor bitwise intact.
  auto update = [](Model& m, const Route& r, const Utterance& u) {
    m.registry.zero_grad();
    Tape t;
    Ctx ctx{t};
    t.backward(forward_joint(ctx, m, r, u.frames, tokenize(small_vocab(), u)).loss);
    std::set<std::string> used;
    for (const auto& [name, p] : m.registry.params())
      if (p.used) used.insert(name);
    adam_step(m.registry, 1e-3, all_parameter_groups(), TrainPlan{});
    return used;
  };
  for (ArchitectureKind k : {ArchitectureKind::E2EUnidirect, ArchitectureKind::CascadeUnidirect}) {
    Model m = build_model(k, toy_dims(), 4);
    const auto l1 = m.registry.hash_logical_prefix("L1."), l2 = m.registry.hash_logical_prefix("L2.");
    const auto used = update(m, m.route(Lang::L1), shortest_cs(Lang::L1));
    bool only_l1 = true;
    for (const auto& n : used) only_l1 = only_l1 && n.rfind("L1.", 0) == 0;
    c.expect(only_l1, std::string(to_string(k)) + ": L1 loss reached L2 tensors");
    c.expect(m.registry.hash_logical_prefix("L2.") == l2, std::string(to_string(k)) + ": L2 changed");
    c.expect(m.registry.hash_logical_prefix("L1.") != l1, std::string(to_string(k)) + ": L1 unchanged");
  }
  {
    Model m = build_model(ArchitectureKind::E2EBidirectByLang, toy_dims(), 5);
    update(m, m.route(Lang::L2), shortest_cs(Lang::L2));
    c.expect(m.registry.hash_logical_prefix("L1.speech_encoder.") == m.registry.hash_logical_prefix("L2.speech_encoder."),
             "by-language encoder views diverged");
  }
  {
    Model m = build_model(ArchitectureKind::E2EBidirectShared, toy_dims(), 6);
    const auto before = m.registry.hash_logical_prefix("bi.transcript_decoder.");
    update(m, m.route(Lang::L1), shortest_cs(Lang::L1));
    const auto tr = m.registry.hash_logical_prefix("bi.transcript_decoder.");
    c.expect(tr != before && tr == m.registry.hash_logical_prefix("bi.translation_decoder."),
             "shared decoder views are not identical after an update");
  }
  c.expect(counts[ArchitectureKind::E2EUnidirect] > counts[ArchitectureKind::E2EBidirectByLang] &&
               counts[ArchitectureKind::E2EBidirectByLang] > counts[ArchitectureKind::E2EBidirectByTask] &&
               counts[ArchitectureKind::E2EBidirectByTask] > counts[ArchitectureKind::E2EBidirectShared],
           "E2E parameter-count ordering");
  c.expect(counts[ArchitectureKind::CascadeUnidirect] > counts[ArchitectureKind::CascadeUniSharedEnc] &&
               counts[ArchitectureKind::CascadeUniSharedEnc] > counts[ArchitectureKind::CascadeBidirect],
           "cascade parameter-count ordering");
}

// ---------------------------------------------------------------------------
// 4. Triangle init

void triangle_init(Check& c) {
  int layers = 0;
  for (ArchitectureKind k : kAllArchitectures) {
    const Model m = build_model(k, toy_dims(), 8);
    int here = 0;
    for (const Route* r : m.routes())
      for (const Decoder* d : {r->transcript, r->translation})
        for (const DecoderLayer& l : d->layers) {
          if (!l.triangle()) continue;
          ++here;
          const MultiHeadAttention& a = *l.first_attn;
          for (auto [x, y] : {std::pair{a.q, l.enc_attn.q}, {a.k, l.enc_attn.k}, {a.v, l.enc_attn.v}, {a.o, l.enc_attn.o}})
            c.expect(x.w->value == y.w->value && x.b->value == y.b->value && x.w != y.w,
                     std::string(to_string(k)) + ": first attention differs from encoder attention");
        }
    c.expect(is_cascade(k) ? here == 0 : here > 0, std::string(to_string(k)) + ": triangle layer count");
    layers += here;
  }
  c.note(std::to_string(layers) + " triangle layers");
}

// ---------------------------------------------------------------------------
// 5. Schedule and freeze

void schedule_freeze(Check& c) {
  TriStageSchedule s;
  c.expect(s.peak_lr == 5e-4 && s.batch_size == 64, "default peak/batch");
  c.expect(s.warmup_steps() == 500 && s.hold_steps() == 500 && s.decay_steps() == 3000, "stage lengths at batch 64");
  c.expect(lr_at(0, s) == 0.0, "lr at 0");
  c.expect(lr_at(500, s) == 5e-4, "lr at end of warmup");
  c.expect(lr_at(1000, s) == 5e-4, "lr at end of hold");
  c.expect(lr_at(4000, s) == 5e-4 / 100.0, "lr at end of decay");
  c.expect(lr_at(250, s) == 2.5e-4, "lr mid-warmup");
  s.batch_size = 32;
  c.expect(s.warmup_steps() == 1000 && s.hold_steps() == 1000 && s.decay_steps() == 6000, "stage lengths at batch 32");

  FreezePlan f;
  c.expect(f.freeze_steps() == 500, "freeze length equals warmup");
  TrainPlan plan;
  plan.freeze.step_scale = 3.0 / 500.0;
  for (ArchitectureKind k : kAllArchitectures) {
    Model m = build_model(k, toy_dims(), 9);
    std::map<std::string, std::uint64_t> before;
    for (const auto& g : all_parameter_groups()) before[g] = m.registry.hash_group(g);
    for (int step = 0; step < 3; ++step) {
      m.registry.zero_grad();
      for (Lang l : {Lang::L1, Lang::L2}) {
        const Utterance& u = shortest_cs(l);
        Tape t;
        Ctx ctx{t};
        t.backward(forward_joint(ctx, m, m.route(l), u.frames, tokenize(small_vocab(), u)).loss);
      }
      adam_step(m.registry, 1e-3, freeze_mask(step, plan.freeze), plan);
    }
    bool exempt_moved = false;
    for (const auto& g : all_parameter_groups()) {
      const bool exempt = plan.freeze.exempt.count(g) > 0;
      if (exempt) exempt_moved = exempt_moved || m.registry.hash_group(g) != before[g];
      else c.expect(m.registry.hash_group(g) == before[g], std::string(to_string(k)) + ": frozen group " + g + " changed");
    }
    c.expect(exempt_moved, std::string(to_string(k)) + ": exempt groups did not train");
  }
}

// ---------------------------------------------------------------------------
// 6. Metric and decoder oracles

template <typename T>
std::size_t levenshtein(const std::vector<T>& a, const std::vector<T>& b) {
  // Full table, no shortcuts.
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

double charcut_oracle(const std::string& hyp_s, const std::string& ref_s) {
  const std::u32string hyp = text::utf8_decode(text::normalize_whitespace(hyp_s));
  const std::u32string ref = text::utf8_decode(text::normalize_whitespace(ref_s));
  std::vector<bool> hu(hyp.size(), false), ru(ref.size(), false);
  for (;;) {
    std::size_t best = 0, bi = 0, bj = 0;
    for (std::size_t i = 0; i < hyp.size(); ++i)
      for (std::size_t j = 0; j < ref.size(); ++j)
        for (std::size_t len = 1; i + len <= hyp.size() && j + len <= ref.size(); ++len) {
          bool ok = true;
          for (std::size_t q = 0; q < len && ok; ++q) ok = !hu[i + q] && !ru[j + q] && hyp[i + q] == ref[j + q];
          if (!ok) break;
          if (len > best) best = len, bi = i, bj = j;
        }
    if (best < static_cast<std::size_t>(kCharCutMinMatch)) break;
    for (std::size_t q = 0; q < best; ++q) hu[bi + q] = ru[bj + q] = true;
  }
  const std::size_t total = hyp.size() + ref.size();
  if (total == 0) return 0.0;
  return static_cast<double>(std::count(hu.begin(), hu.end(), false) + std::count(ru.begin(), ru.end(), false)) /
         static_cast<double>(total);
}

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

void metric_oracles(Check& c) {
  Rng rng(2024);
  const std::vector<std::string> words = {"a", "b", "c", "ab", "ba"};
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto sentence = [&](int min_words) {
      std::vector<std::string> w;
      for (auto n = rng.uniform_int(min_words, 6); n > 0; --n) w.push_back(words[static_cast<std::size_t>(rng.uniform_int(0, 4))]);
      return w;
    };
    const auto hw = sentence(0), rw = sentence(1);
    const std::string hyp = text::join(hw), ref = text::join(rw);
    const std::u32string hc = text::utf8_decode(hyp), rc = text::utf8_decode(ref);
    const bool ok =
        wer(hyp, ref) == static_cast<double>(levenshtein(hw, rw)) / static_cast<double>(rw.size()) &&
        cer(hyp, ref) == static_cast<double>(levenshtein(std::vector<char32_t>(hc.begin(), hc.end()),
                                                         std::vector<char32_t>(rc.begin(), rc.end()))) /
                             static_cast<double>(rc.size());
    mismatches += !ok;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " WER/CER mismatches against the DP oracle");

  int beam_mismatch = 0;
  for (std::uint64_t salt = 0; salt < 40; ++salt) {
    const std::vector<int> controls = {1, 3};
    // Exhaustive enumeration over tokens {0, 1, 3} with eos = 2, lengths <= 4.
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<int> best_tokens;
    std::function<void(std::vector<int>&, double)> go = [&](std::vector<int>& toks, double logp) {
      std::vector<int> prefix = controls;
      prefix.insert(prefix.end(), toks.begin(), toks.end());
      if (toks.size() == 4) {
        if (logp / 4.0 > best_score) best_score = logp / 4.0, best_tokens = toks;
        return;
      }
      const Eigen::RowVectorXd l = table_logits(prefix, salt);
      const double end = (logp + log_softmax_at(l, 2)) / static_cast<double>(toks.size() + 1);
      if (end > best_score) best_score = end, best_tokens = toks;
      for (int t : {0, 1, 3}) {
        toks.push_back(t);
        go(toks, logp + log_softmax_at(l, t));
        toks.pop_back();
      }
    };
    std::vector<int> toks;
    go(toks, 0.0);
    DecodeConfig cfg;
    cfg.strategy = DecodeStrategy::beam;
    cfg.beam_size = 1024;
    cfg.max_len = 4;
    const DecodeResult got = decode_sequence([&](auto p) { return table_logits(p, salt); }, controls, cfg);
    beam_mismatch += got.tokens != best_tokens || std::abs(got.score - best_score) > 1e-12;
  }
  c.expect(beam_mismatch == 0, std::to_string(beam_mismatch) + " beam/exhaustive mismatches");

  int cc_mismatch = 0;
  const std::string alphabet = "ab c";
  for (int trial = 0; trial < 1000; ++trial) {
    std::string h, r;
    for (auto n = rng.uniform_int(0, 12); n > 0; --n) h += alphabet[static_cast<std::size_t>(rng.uniform_int(0, 3))];
    for (auto n = rng.uniform_int(0, 12); n > 0; --n) r += alphabet[static_cast<std::size_t>(rng.uniform_int(0, 3))];
    cc_mismatch += charcut(h, r) != charcut_oracle(h, r);
  }
  c.expect(cc_mismatch == 0, std::to_string(cc_mismatch) + " CharCut mismatches");

  // Precisions 3/4, 2/3, 1/2 and a smoothed 0/1 -> ln(4)/5; equal lengths.
  const double golden = 100.0 * std::pow(0.75 * (2.0 / 3.0) * 0.5 * (std::log(4.0) / 5.0), 0.25);
  c.expect(std::abs(bleu("a b c d", "a b c e") - golden) < 1e-9, "BLEU hand golden");
  c.expect(std::abs(bleu("a b c d", "a b c d e f") - 100.0 * std::exp(1.0 - 1.5)) < 1e-9, "BLEU brevity penalty");

  const std::vector<double> best = {0.9, 0.7, 0.8, 0.4, 0.6, 0.9, 0.3, 0.7};
  double worst_gap = 0.0;
  for (const std::vector<double>& other : {std::vector<double>{0.8, 0.6, 0.9, 0.3, 0.5, 0.8, 0.4, 0.6},
                                           std::vector<double>{0.5, 0.7, 0.4, 0.4, 0.6, 0.2, 0.3, 0.1},
                                           std::vector<double>{0.9, 0.7, 0.8, 0.4, 0.6, 0.9, 0.3, 0.6}}) {
    std::vector<std::size_t> idx(8, 0);
    std::size_t hits = 0, total = 0;
    for (;;) {
      double s = 0.0;
      for (std::size_t i : idx) s += other[i] - best[i];
      hits += s >= -1e-12;
      ++total;
      std::size_t q = 0;
      while (q < 8 && ++idx[q] == 8) idx[q++] = 0;
      if (q == 8) break;
    }
    const double exact = static_cast<double>(hits) / static_cast<double>(total);
    const double p = bootstrap_significance(best, other, Direction::higher_better, 4000, 99).p_value;
    worst_gap = std::max(worst_gap, std::abs(p - exact));
  }
  c.expect(worst_gap <= 0.03, "bootstrap vs exact p gap " + num(worst_gap));
  c.note("max bootstrap gap " + num(worst_gap, 2));
}

// ---------------------------------------------------------------------------
// 8. Analysis suite

void analysis_suite(Check& c) {
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) x.push_back(0.0125 * i), y.push_back(0.7 - 1.3 * 0.0125 * i);
  c.expect(std::abs(score_vs_proportion(y, x).r_squared - 1.0) < 1e-12, "exact-linear R^2");
  Rng rng(12);
  std::vector<double> px, py;
  for (int i = 0; i < 2000; ++i) px.push_back(0.5 * rng.uniform()), py.push_back(3.0 * px.back());
  shuffle(py, rng);
  const double permuted = score_vs_proportion(py, px).r_squared;
  c.expect(permuted < 0.01, "permuted R^2 " + num(permuted));

  TaggedTranscript t;
  for (auto [w, l] : {std::pair{"tengo", Lang::L1}, {"fall", Lang::L2}, {"break", Lang::L2}, {"mañana", Lang::L1}})
    t.tokens.push_back({w, l});
  const std::vector<SpanReference> refs = {{t, Lang::L1}};
  c.expect(cs_span_accuracy(std::vector<std::string>{"tengo fallbreak mañana"}, refs).accuracy() == 0.0,
           "fallbreak counted as a span match");
  c.expect(cs_span_accuracy(std::vector<std::string>{"tengo fall break mañana"}, refs).accuracy() == 1.0,
           "fall break not matched");

  const ToyCorpus corpus = generate_toy_corpus(ToyCorpusConfig{});
  std::size_t above = 0, cs = 0;
  for (const auto* set : {&corpus.train_cs, &corpus.dev_cs, &corpus.test_cs})
    for (const auto& u : *set) {
      ++cs;
      const std::size_t k = u.transcript.count(other(u.matrix_lang));
      above += 2 * k > u.transcript.tokens.size();
    }
  CorpusSplit split;
  split.cs_set = corpus.test_cs;
  const CorpusStats stats = corpus_stats(split);
  std::size_t mass = 0;
  for (std::size_t b : stats.histogram) mass += b;
  c.expect(above == 0, std::to_string(above) + " of " + std::to_string(cs) + " CS utterances above 0.5");
  c.expect(mass == corpus.test_cs.size(), "histogram mass outside (0, 0.5]");
}

// ---------------------------------------------------------------------------
// 7. Desk-scale directional results

struct SeedWer {
  std::map<std::uint64_t, double> per_seed;
  double mean() const {
    double s = 0.0;
    for (const auto& [k, v] : per_seed) s += v;
    return s / static_cast<double>(per_seed.size());
  }
};

double cs_wer(const fs::path& outputs, const std::vector<Utterance>& refs) {
  const auto recs = read_outputs(outputs);
  if (recs.size() != refs.size()) throw Error("'" + outputs.string() + "' is incomplete");
  std::vector<SegmentStats> segs;
  for (std::size_t i = 0; i < recs.size(); ++i) segs.push_back(segment_stats(recs[i], refs[i]));
  return corpus_score(MetricName::WER, segs);
}

void desk_directional(Check& c, const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.architectures = {ArchitectureKind::E2EBidirectShared, ArchitectureKind::E2EUnidirect};
  cfg.seeds = {1, 2, 3};
  cfg.out_dir = dir;
  fs::remove_all(dir);
  run_matrix(cfg);

  const RunLayout layout{dir};
  const ToyCorpus corpus = load_toy_corpus(layout.corpus());
  const Vocabulary vocab = Vocabulary::from_lexicon(corpus.lexicon);
  ModelDims dims = cfg.dims;
  dims.vocab = vocab.size();
  c.note(std::to_string(corpus.train_mono.size() + corpus.train_cs.size()) + " train utts, d_model " +
         std::to_string(dims.d_model));

  const auto shared = ArchitectureKind::E2EBidirectShared, uni = ArchitectureKind::E2EUnidirect;
  SeedWer shared_noft, shared_ft, cold;
  std::map<Condition, SeedWer> uni_pred, uni_oracle;
  for (std::uint64_t seed : cfg.seeds) {
    shared_noft.per_seed[seed] = cs_wer(layout.outputs(shared, Condition::no_ft, std::nullopt, seed, "test_cs"), corpus.test_cs);
    shared_ft.per_seed[seed] = cs_wer(layout.outputs(shared, Condition::ft, std::nullopt, seed, "test_cs"), corpus.test_cs);
    for (Condition cond : cfg.conditions) {
      uni_pred[cond].per_seed[seed] = cs_wer(layout.outputs(uni, cond, LidMode::predicted, seed, "test_cs"), corpus.test_cs);
      uni_oracle[cond].per_seed[seed] = cs_wer(layout.outputs(uni, cond, LidMode::oracle, seed, "test_cs"), corpus.test_cs);
    }
    // Random init trained on the CS data alone with the fine-tuning plan.
    const std::string arch(to_string(shared));
    Model m = build_model(shared, dims, sub_seed(cfg, "init/" + arch + "/" + std::to_string(seed)));
    TrainPlan plan = cfg.ft_plan;
    plan.seed = sub_seed(cfg, "train/" + arch + "/cold/" + std::to_string(seed));
    const TrainResult r = train(m, vocab, corpus.train_cs, corpus.dev_cs, plan);
    const fs::path ckpt = dir / "ckpt" / arch / "cold" / std::to_string(seed);
    save_checkpoint(ckpt / "model.ckpt", r.best);
    write_file_atomic(ckpt / "trace.jsonl", r.trace.to_jsonl());
    const System sys{&m, &vocab, nullptr};
    std::vector<OutputRecord> recs;
    for (const auto& u : corpus.test_cs) recs.push_back(to_record(u.id, run_system(sys, u, LidMode::oracle, cfg.decode)));
    const fs::path out = dir / "outputs" / arch / "cold" / "none" / std::to_string(seed) / "test_cs.jsonl";
    write_outputs(out, recs);
    cold.per_seed[seed] = cs_wer(out, corpus.test_cs);
  }

  std::string tsv = "quantity\tseed\tcs_test_wer\n";
  auto dump = [&](const std::string& name, const SeedWer& w) {
    for (const auto& [s, v] : w.per_seed) tsv += name + '\t' + std::to_string(s) + '\t' + format_double(v) + '\n';
    tsv += name + "\tmean\t" + format_double(w.mean()) + '\n';
  };
  dump("shared_no_ft", shared_noft);
  dump("shared_ft", shared_ft);
  dump("shared_cold", cold);
  for (Condition cond : cfg.conditions) {
    dump("unidirect_predicted_" + std::string(to_string(cond)), uni_pred[cond]);
    dump("unidirect_oracle_" + std::string(to_string(cond)), uni_oracle[cond]);
  }
  write_file_atomic(dir / "directional.tsv", tsv);

  c.expect(shared_ft.mean() < shared_noft.mean(),
           "(a) FT " + num(shared_ft.mean()) + " vs No-FT " + num(shared_noft.mean()));
  for (Condition cond : cfg.conditions) {
    c.expect(uni_oracle[cond].mean() <= uni_pred[cond].mean(),
             "(b) " + std::string(to_string(cond)) + " oracle " + num(uni_oracle[cond].mean()) + " vs predicted " +
                 num(uni_pred[cond].mean()));
    const SeedWer& s = cond == Condition::ft ? shared_ft : shared_noft;
    c.expect(s.mean() <= uni_pred[cond].mean(), "(d) " + std::string(to_string(cond)) + " Shared " + num(s.mean()) +
                                                    " vs Unidirect " + num(uni_pred[cond].mean()));
  }
  c.expect(shared_ft.mean() < cold.mean(), "(c) warm " + num(shared_ft.mean()) + " vs cold " + num(cold.mean()));
  c.note("WER No-FT " + num(shared_noft.mean(), 3) + ", FT " + num(shared_ft.mean(), 3) + ", cold " +
         num(cold.mean(), 3) + ", Unidirect FT pred/oracle " + num(uni_pred[Condition::ft].mean(), 3) + "/" +
         num(uni_oracle[Condition::ft].mean(), 3));
  c.note("artifacts in " + dir.string());
}

// ---------------------------------------------------------------------------
// 9. Reproducibility

void reproducibility(Check& c, const fs::path& dir) {
  auto config = [&](const std::string& name) {
    ExperimentConfig cfg;
    cfg.corpus.n_train = 96;
    cfg.corpus.n_dev = 24;
    cfg.corpus.n_test = 40;
    cfg.dims.d_model = 16;
    cfg.dims.n_heads = 2;
    cfg.dims.n_enc_layers = 1;
    cfg.dims.n_dec_layers = 1;
    cfg.dims.ffn_dim = 32;
    cfg.lid_dims.d_model = 16;
    cfg.lid_dims.n_heads = 2;
    cfg.lid_dims.ffn_dim = 32;
    cfg.base_plan = TrainPlan::desk_scale(20, 8, 3e-3);
    cfg.ft_plan = TrainPlan::desk_scale(10, 8, 1e-3);
    cfg.lid_plan = TrainPlan::desk_scale(10, 8, 3e-3);
    for (TrainPlan* p : {&cfg.base_plan, &cfg.ft_plan, &cfg.lid_plan}) p->dev_limit = 8;
    cfg.decode.max_len = 10;
    cfg.seeds = {1, 2};
    cfg.root_seed = 77;
    cfg.expanded = true;
    cfg.bootstrap_resamples = 300;
    cfg.out_dir = dir / name;
    fs::remove_all(cfg.out_dir);
    return cfg;
  };
  const ExperimentConfig a = config("a"), b = config("b");
  run_matrix(a);
  run_matrix(b);
  const RunLayout la{a.out_dir}, lb{b.out_dir};
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(la.reports())) {
    const std::string name = e.path().filename().string();
    c.expect(fs::exists(lb.reports() / name) && read_file(e.path()) == read_file(lb.reports() / name),
             "reports/" + name + " differs between runs");
    ++compared;
  }
  c.expect(compared >= 5, "expected at least five report files");
  const std::string table = read_file(la.reports() / "table.txt");
  write_reports(a, load_toy_corpus(la.corpus()));
  c.expect(read_file(la.reports() / "table.txt") == table, "regenerated report differs");
  c.note(std::to_string(compared) + " report files identical across two 7-architecture runs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path out = "acceptance_run";
  std::vector<int> only;
  bool verbose = false;
  app.add_option("--out", out, "Directory for run artifacts");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_flag("-v,--verbose", verbose, "Log training progress");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"parser goldens and structured errors", parser_goldens},
      {"gradients match central differences, all 7 kinds", gradient_check},
      {"sharing plans, gradient isolation, parameter counts", sharing_plans},
      {"triangle init copies encoder attention", triangle_init},
      {"schedule endpoints and bitwise freeze", schedule_freeze},
      {"metric, decoder and bootstrap oracles", metric_oracles},
      {"desk-scale directional results (3 seeds)", [&](Check& c) { desk_directional(c, out / "desk"); }},
      {"analysis suite", analysis_suite},
      {"reproducible report tables", [&](Check& c) { reproducibility(c, out / "repro"); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !c.ok();
    std::cout << (c.ok() ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first << " ("
              << num(secs, 3) << " s; " << c.summary() << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
