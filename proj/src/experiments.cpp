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

#include "csst/experiments.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "csst/text.hpp"

namespace csst {

std::string_view to_string(Condition c) { return c == Condition::ft ? "ft" : "no_ft"; }

Condition condition_from_string(std::string_view s) {
  if (s == "no_ft") return Condition::no_ft;
  if (s == "ft") return Condition::ft;
  throw Error("unknown condition '" + std::string(s) + "'");
}

namespace {

std::string_view display(Condition c) { return c == Condition::ft ? "FT" : "No-FT"; }
std::string_view display_set(std::string_view set) { return set == "test_cs" ? "CS" : "Mono"; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <typename T, typename F>
std::string join_list(const std::vector<T>& xs, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::string(f(xs[i]));
  return out;
}

ModelDims merge_dims(const ModelDims& base, const KeyValues& overrides) {
  KeyValues kv = base.to_kv();
  for (const auto& [k, v] : overrides) {
    if (!kv.count(k)) throw Error("config: unknown dims key '" + k + "'");
    kv[k] = v;
  }
  return ModelDims::from_kv(kv);
}

TrainPlan merge_plan(const TrainPlan& base, const KeyValues& overrides, const char* section) {
  KeyValues kv = base.to_kv();
  for (const auto& [k, v] : overrides) {
    if (k == "seed")
      throw Error(std::string("config: ") + section + ".seed is derived from root_seed");
    if (!kv.count(k)) throw Error(std::string("config: unknown key '") + section + "." + k + "'");
    kv[k] = v;
  }
  return TrainPlan::from_kv(kv);
}

constexpr std::array<std::string_view, 2> kTestSets = {"test_cs", "test_mono"};

const std::vector<Utterance>& test_set(const ToyCorpus& c, std::string_view set) {
  if (set == "test_cs") return c.test_cs;
  if (set == "test_mono") return c.test_mono;
  throw Error("unknown test set '" + std::string(set) + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig::ExperimentConfig() {
  dims.vocab = kNumControlTokens + 1;  // replaced by the corpus vocabulary at run time
  lid_dims.d_model = 32;
  lid_dims.n_heads = 4;
  lid_dims.n_enc_layers = 1;
  lid_dims.ffn_dim = 64;
  lid_dims.vocab = kNumControlTokens + 1;
  base_plan = TrainPlan::desk_scale(1500, 16, 2e-3);
  ft_plan = TrainPlan::desk_scale(400, 16, 1e-3);
  lid_plan = TrainPlan::desk_scale(300, 16, 2e-3);
  for (TrainPlan* p : {&base_plan, &ft_plan, &lid_plan}) p->dev_limit = 200;
}

void ExperimentConfig::validate() const {
  if (architectures.empty()) throw Error("config: no architectures");
  if (seeds.empty()) throw Error("config: no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw Error("config: duplicate seeds");
  if (std::set<ArchitectureKind>(architectures.begin(), architectures.end()).size() != architectures.size())
    throw Error("config: duplicate architectures");
  if (conditions.empty()) throw Error("config: no conditions");
  const bool gated = std::any_of(architectures.begin(), architectures.end(), is_lid_gated);
  if (gated && lid_modes.empty()) throw Error("config: LID-gated architectures need lid_modes");
  if (lid_upsample < 1) throw Error("config: lid_upsample must be >= 1");
  if (bootstrap_resamples < 1) throw Error("config: bootstrap_resamples must be >= 1");
  dims.validate();
  lid_dims.validate();
  base_plan.validate();
  ft_plan.validate();
  lid_plan.validate();
  decode.validate();
  if (corpus_dir) {
    for (const char* f : {"config.txt", "lexicon.txt", "corpus.jsonl", "splits.tsv", "tie_breaks.tsv"})
      if (!std::filesystem::exists(*corpus_dir / f))
        throw Error("config: corpus_dir lacks '" + (*corpus_dir / f).string() + "'");
  } else {
    corpus.validate();
  }
}

std::string ExperimentConfig::to_text() const {
  KeyValues kv;
  if (corpus_dir) kv["corpus_dir"] = corpus_dir->string();
  for (const auto& [k, v] : corpus.to_kv())
    if (k != "seed" || corpus_seed_set) kv["corpus." + k] = v;
  kv["architectures"] = join_list(architectures, [](ArchitectureKind k) { return to_string(k); });
  for (const auto& [k, v] : dims.to_kv())
    if (k != "vocab") kv["dims." + k] = v;
  for (const auto& [k, v] : lid_dims.to_kv())
    if (k != "vocab") kv["lid_dims." + k] = v;
  for (const auto& [section, plan] :
       {std::pair{"base.", &base_plan}, std::pair{"ft.", &ft_plan}, std::pair{"lid.", &lid_plan}})
    for (const auto& [k, v] : plan->to_kv())
      if (k != "seed") kv[section + k] = v;
  kv["lid_upsample"] = std::to_string(lid_upsample);
  kv["decode.strategy"] = decode.strategy == DecodeStrategy::beam ? "beam" : "greedy";
  kv["decode.beam_size"] = std::to_string(decode.beam_size);
  kv["decode.max_len"] = std::to_string(decode.max_len);
  kv["decode.length_penalty"] = format_double(decode.length_penalty);
  kv["lid_modes"] = join_list(lid_modes, [](LidMode m) { return to_string(m); });
  kv["conditions"] = join_list(conditions, [](Condition c) { return to_string(c); });
  kv["seeds"] = join_list(seeds, [](std::uint64_t s) { return std::to_string(s); });
  kv["root_seed"] = std::to_string(root_seed);
  kv["out_dir"] = out_dir.string();
  kv["bootstrap_resamples"] = std::to_string(bootstrap_resamples);
  kv["expanded"] = expanded ? "true" : "false";
  kv["span_mode"] = span_mode == SpanMode::translation ? "translation" : "transcript";
  return format_key_values(kv, kExperimentHeader);
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  const KeyValues kv = parse_key_values(text, kExperimentHeader);
  ExperimentConfig c;
  KeyValues corpus_kv, dims_kv, lid_dims_kv, base_kv, ft_kv, lid_kv;
  auto parse_bool = [](const std::string& k, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw Error("config: " + k + " must be true or false");
  };
  for (const auto& [k, v] : kv) {
    auto section = [&k](std::string_view prefix) { return k.rfind(prefix, 0) == 0; };
    if (k == "corpus_dir") c.corpus_dir = v;
    else if (section("corpus.")) corpus_kv[k.substr(7)] = v;
    else if (section("dims.")) {
      if (k == "dims.vocab") throw Error("config: dims.vocab is derived from the corpus");
      dims_kv[k.substr(5)] = v;
    } else if (section("lid_dims.")) lid_dims_kv[k.substr(9)] = v;
    else if (section("base.")) base_kv[k.substr(5)] = v;
    else if (section("ft.")) ft_kv[k.substr(3)] = v;
    else if (section("lid.")) lid_kv[k.substr(4)] = v;
    else if (k == "architectures") {
      c.architectures.clear();
      for (const auto& a : split_list(v)) c.architectures.push_back(architecture_from_string(a));
    } else if (k == "lid_upsample") c.lid_upsample = static_cast<int>(parse_int(v, k));
    else if (k == "decode.strategy") {
      if (v == "greedy") c.decode.strategy = DecodeStrategy::greedy;
      else if (v == "beam") c.decode.strategy = DecodeStrategy::beam;
      else throw Error("config: unknown decode strategy '" + v + "'");
    } else if (k == "decode.beam_size") c.decode.beam_size = static_cast<int>(parse_int(v, k));
    else if (k == "decode.max_len") c.decode.max_len = static_cast<int>(parse_int(v, k));
    else if (k == "decode.length_penalty") c.decode.length_penalty = parse_double(v, k);
    else if (k == "lid_modes") {
      c.lid_modes.clear();
      for (const auto& m : split_list(v)) c.lid_modes.push_back(lid_mode_from_string(m));
    } else if (k == "conditions") {
      c.conditions.clear();
      for (const auto& m : split_list(v)) c.conditions.push_back(condition_from_string(m));
    } else if (k == "seeds") {
      c.seeds.clear();
      for (const auto& s : split_list(v)) c.seeds.push_back(static_cast<std::uint64_t>(parse_int(s, k)));
    } else if (k == "root_seed") c.root_seed = static_cast<std::uint64_t>(parse_int(v, k));
    else if (k == "out_dir") c.out_dir = v;
    else if (k == "bootstrap_resamples") c.bootstrap_resamples = static_cast<std::size_t>(parse_int(v, k));
    else if (k == "expanded") c.expanded = parse_bool(k, v);
    else if (k == "span_mode") {
      if (v == "transcript") c.span_mode = SpanMode::transcript;
      else if (v == "translation") c.span_mode = SpanMode::translation;
      else throw Error("config: unknown span_mode '" + v + "'");
    } else throw Error("config: unknown key '" + k + "'");
  }
  c.corpus = ToyCorpusConfig::from_kv(corpus_kv);
  c.corpus_seed_set = corpus_kv.count("seed") > 0;
  c.dims = merge_dims(c.dims, dims_kv);
  c.lid_dims = merge_dims(c.lid_dims, lid_dims_kv);
  c.base_plan = merge_plan(c.base_plan, base_kv, "base");
  c.ft_plan = merge_plan(c.ft_plan, ft_kv, "ft");
  c.lid_plan = merge_plan(c.lid_plan, lid_kv, "lid");
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

std::uint64_t sub_seed(const ExperimentConfig& cfg, std::string_view label) {
  return derive_seed(cfg.root_seed, label);
}

std::filesystem::path RunLayout::model_dir(ArchitectureKind k, Condition c, std::uint64_t seed) const {
  return root / "ckpt" / std::string(to_string(k)) / std::string(to_string(c)) / std::to_string(seed);
}

std::filesystem::path RunLayout::lid_dir(Condition c, std::uint64_t seed) const {
  return root / "ckpt" / "lid" / std::string(to_string(c)) / std::to_string(seed);
}

std::filesystem::path RunLayout::outputs(ArchitectureKind k, Condition c,
                                         std::optional<LidMode> mode, std::uint64_t seed,
                                         std::string_view set) const {
  return root / "outputs" / std::string(to_string(k)) / std::string(to_string(c)) /
         std::string(mode ? to_string(*mode) : "none") / std::to_string(seed) /
         (std::string(set) + ".jsonl");
}

std::optional<LidMode> main_lid_mode(const ExperimentConfig& cfg, ArchitectureKind k) {
  if (!is_lid_gated(k)) return std::nullopt;
  if (std::find(cfg.lid_modes.begin(), cfg.lid_modes.end(), LidMode::predicted) != cfg.lid_modes.end())
    return LidMode::predicted;
  return LidMode::oracle;
}

// ---------------------------------------------------------------------------
// Scoring

std::vector<MetricSpec> table_metrics(bool expanded) {
  if (!expanded) return {{MetricName::WER, false}, {MetricName::BLEU, true}};
  return {{MetricName::WER, false},
          {MetricName::CER, false},
          {MetricName::BLEU, true},
          {MetricName::CharCut, true}};
}

SegmentStats segment_stats(const OutputRecord& out, const Utterance& ref) {
  const std::string hyp_tr = strip_punctuation(out.transcript);
  const std::string ref_tr = strip_punctuation(ref.transcript.text());
  const std::string hyp_st = strip_punctuation(out.translation);
  const std::string ref_st = strip_punctuation(ref.translation);
  SegmentStats s;
  s.words = word_edits(hyp_tr, ref_tr);
  s.chars = char_edits(hyp_tr, ref_tr);
  s.bleu = bleu_stats(hyp_st, ref_st);
  s.charcut = charcut_stats(hyp_st, ref_st);
  return s;
}

double corpus_score(MetricName m, std::span<const SegmentStats> segs,
                    std::span<const std::size_t> idx) {
  SegmentStats total;
  for (std::size_t i : idx) {
    const SegmentStats& s = segs[i];
    switch (m) {
      case MetricName::WER: total.words += s.words; break;
      case MetricName::CER: total.chars += s.chars; break;
      case MetricName::BLEU: total.bleu += s.bleu; break;
      case MetricName::CharCut: total.charcut += s.charcut; break;
    }
  }
  switch (m) {
    case MetricName::WER: return total.words.rate();
    case MetricName::CER: return total.chars.rate();
    case MetricName::BLEU: return bleu_from_stats(total.bleu);
    case MetricName::CharCut: return total.charcut.score();
  }
  return 0.0;
}

double corpus_score(MetricName m, std::span<const SegmentStats> segs) {
  std::vector<std::size_t> idx(segs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return corpus_score(m, segs, idx);
}

namespace {

// Outputs of one system on one test set, aligned with the references.
std::vector<OutputRecord> load_aligned(const std::filesystem::path& path,
                                       const std::vector<Utterance>& refs) {
  if (!std::filesystem::exists(path)) throw Error("missing outputs '" + path.string() + "'");
  std::vector<OutputRecord> recs = read_outputs(path);
  if (recs.size() != refs.size())
    throw Error("'" + path.string() + "': " + std::to_string(recs.size()) + " records for " +
                std::to_string(refs.size()) + " references");
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (recs[i].id != refs[i].id)
      throw Error("'" + path.string() + "': record " + std::to_string(i) + " has id '" + recs[i].id +
                  "', expected '" + refs[i].id + "'");
  return recs;
}

struct PooledScores {
  std::vector<SegmentStats> segs;       // all seeds, seed-major
  std::vector<std::size_t> seed_bounds;  // segs index where each seed starts
};

PooledScores pooled(const ExperimentConfig& cfg, const ToyCorpus& corpus, ArchitectureKind k,
                    Condition c, std::optional<LidMode> mode, std::string_view set) {
  const RunLayout layout{cfg.out_dir};
  const auto& refs = test_set(corpus, set);
  PooledScores p;
  for (std::uint64_t seed : cfg.seeds) {
    p.seed_bounds.push_back(p.segs.size());
    const auto recs = load_aligned(layout.outputs(k, c, mode, seed, set), refs);
    for (std::size_t i = 0; i < recs.size(); ++i) p.segs.push_back(segment_stats(recs[i], refs[i]));
  }
  p.seed_bounds.push_back(p.segs.size());
  return p;
}

double seed_sd(MetricName m, const PooledScores& p) {
  std::vector<double> vals;
  for (std::size_t s = 0; s + 1 < p.seed_bounds.size(); ++s) {
    std::vector<std::size_t> idx;
    for (std::size_t i = p.seed_bounds[s]; i < p.seed_bounds[s + 1]; ++i) idx.push_back(i);
    if (!idx.empty()) vals.push_back(corpus_score(m, p.segs, idx));
  }
  if (vals.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(vals.size() - 1));
}

double display_scale(MetricName m) {
  return (m == MetricName::WER || m == MetricName::CER) ? 100.0 : 1.0;
}

std::string format_fixed(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  std::string s = os.str();
  if (s == "-0.0" || s == "-0.000") s = s.substr(1);
  return s;
}

std::string format_display(MetricName m, double raw) {
  return format_fixed(raw * display_scale(m), m == MetricName::CharCut ? 3 : 1);
}

std::string aligned_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], text::utf8_decode(r[i]).size());
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) line += "  ";
      const std::size_t pad = width[i] - text::utf8_decode(r[i]).size();
      line += i == 0 ? r[i] + std::string(pad, ' ') : std::string(pad, ' ') + r[i];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string seeds_label(const std::vector<std::uint64_t>& seeds) {
  return join_list(seeds, [](std::uint64_t s) { return std::to_string(s); });
}

}  // namespace

ReportTable build_report(const ExperimentConfig& cfg, const ToyCorpus& corpus) {
  ReportTable t;
  t.rows = cfg.architectures;
  t.seeds = cfg.seeds;
  for (Condition c : cfg.conditions)
    for (std::string_view set : kTestSets)
      for (const MetricSpec& m : table_metrics(cfg.expanded)) t.columns.push_back({c, std::string(set), m.name});
  t.cells.assign(t.rows.size(), std::vector<ReportCell>(t.columns.size()));

  std::map<std::tuple<ArchitectureKind, Condition, std::string>, PooledScores> cache;
  auto scores = [&](ArchitectureKind k, Condition c, const std::string& set) -> const PooledScores& {
    auto key = std::make_tuple(k, c, set);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, pooled(cfg, corpus, k, c, main_lid_mode(cfg, k), set)).first;
    return it->second;
  };

  for (std::size_t col = 0; col < t.columns.size(); ++col) {
    const ReportColumn& column = t.columns[col];
    const Direction dir = direction_of(column.metric);
    std::size_t best = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const PooledScores& p = scores(t.rows[r], column.condition, column.set);
      ReportCell& cell = t.cells[r][col];
      cell.value = corpus_score(column.metric, p.segs);
      cell.seed_sd = seed_sd(column.metric, p);
      if (r > 0 && at_least_as_good(cell.value, t.cells[best][col].value, dir) &&
          cell.value != t.cells[best][col].value)
        best = r;
    }
    const PooledScores& best_scores = scores(t.rows[best], column.condition, column.set);
    const std::uint64_t seed = sub_seed(cfg, "bootstrap/" + std::string(to_string(column.condition)) +
                                                 "/" + column.set + "/" + std::string(to_string(column.metric)));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      ReportCell& cell = t.cells[r][col];
      cell.bold = cell.value == t.cells[best][col].value;
      if (r == best) {
        cell.significance.p_value = 1.0;
        cell.significance.n_resamples = 0;
        cell.significance.verdict = Verdict::best;
        continue;
      }
      const PooledScores& other = scores(t.rows[r], column.condition, column.set);
      const MetricName m = column.metric;
      cell.significance = bootstrap_significance(
          best_scores.segs.size(),
          [&](std::span<const std::size_t> idx) { return corpus_score(m, best_scores.segs, idx); },
          [&](std::span<const std::size_t> idx) { return corpus_score(m, other.segs, idx); }, dir,
          cfg.bootstrap_resamples, seed);
    }
  }
  return t;
}

std::string ReportTable::to_text() const {
  std::string out = "Test set scores. Values pool the per-utterance outputs of seeds " +
                    seeds_label(seeds) +
                    " (multi-seed pooling is an extension; sd columns in the TSV give the spread).\n"
                    "**x** = best in column; x* = statistically similar to the best "
                    "(paired bootstrap, p >= 0.05). WER/CER in percent.\n\n";
  std::vector<std::vector<std::string>> rows_text;
  std::vector<std::string> header{"Architecture"};
  for (const auto& c : columns)
    header.push_back(std::string(display(c.condition)) + " " + std::string(display_set(c.set)) + " " +
                     std::string(to_string(c.metric)));
  rows_text.push_back(header);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<std::string> line{std::string(to_string(rows[r]))};
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const ReportCell& cell = cells[r][c];
      std::string v = format_display(columns[c].metric, cell.value);
      if (cell.bold) v = "**" + v + "**";
      if (cell.significance.verdict == Verdict::similar_to_best) v += "*";
      line.push_back(v);
    }
    rows_text.push_back(line);
  }
  return out + aligned_table(rows_text);
}

std::string ReportTable::to_tsv() const {
  std::string out = "architecture\tcondition\tset\tmetric\tvalue\tseed_sd\tp_value\tverdict\tbold\n";
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const ReportCell& cell = cells[r][c];
      out += std::string(to_string(rows[r])) + '\t' + std::string(to_string(columns[c].condition)) + '\t' +
             columns[c].set + '\t' + std::string(to_string(columns[c].metric)) + '\t' +
             format_double(cell.value) + '\t' + format_double(cell.seed_sd) + '\t' +
             format_double(cell.significance.p_value) + '\t' +
             std::string(to_string(cell.significance.verdict)) + '\t' + (cell.bold ? "1" : "0") + '\n';
    }
  return out;
}

std::vector<LidComparisonRow> compare_lid_modes(const ExperimentConfig& cfg,
                                                const ToyCorpus& corpus) {
  std::vector<LidComparisonRow> rows;
  for (ArchitectureKind k : cfg.architectures) {
    if (!is_lid_gated(k)) continue;
    for (LidMode mode : {LidMode::predicted, LidMode::oracle})
      if (std::find(cfg.lid_modes.begin(), cfg.lid_modes.end(), mode) == cfg.lid_modes.end())
        throw Error("compare_lid_modes: lid mode '" + std::string(to_string(mode)) +
                    "' was not evaluated");
    for (Condition c : cfg.conditions)
      for (std::string_view set : kTestSets) {
        const PooledScores pred = pooled(cfg, corpus, k, c, LidMode::predicted, set);
        const PooledScores orac = pooled(cfg, corpus, k, c, LidMode::oracle, set);
        for (const MetricSpec& m : table_metrics(cfg.expanded)) {
          LidComparisonRow row{k, c, std::string(set), m.name, 0.0, 0.0};
          row.predicted = corpus_score(m.name, pred.segs);
          row.oracle_delta = corpus_score(m.name, orac.segs) - row.predicted;
          rows.push_back(row);
        }
      }
  }
  return rows;
}

std::string lid_comparison_text(const std::vector<LidComparisonRow>& rows) {
  std::string out =
      "Oracle vs predicted LID. Cells show the predicted-LID score and, in parentheses, "
      "the oracle-LID score minus it. WER/CER in percent.\n\n";
  std::vector<std::string> columns;
  std::vector<std::string> archs;
  std::map<std::pair<std::string, std::string>, std::string> cell;
  for (const auto& r : rows) {
    const std::string col = std::string(display(r.condition)) + " " + std::string(display_set(r.set)) +
                            " " + std::string(to_string(r.metric));
    const std::string arch(to_string(r.kind));
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    if (std::find(archs.begin(), archs.end(), arch) == archs.end()) archs.push_back(arch);
    std::string delta = format_display(r.metric, r.oracle_delta);
    if (delta != "0.0" && delta != "0.000" && delta[0] != '-') delta = "+" + delta;
    cell[{arch, col}] = format_display(r.metric, r.predicted) + " (" + delta + ")";
  }
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"Architecture"};
  header.insert(header.end(), columns.begin(), columns.end());
  table.push_back(header);
  for (const auto& a : archs) {
    std::vector<std::string> line{a};
    for (const auto& c : columns) line.push_back(cell[{a, c}]);
    table.push_back(line);
  }
  return out + aligned_table(table);
}

std::string lid_comparison_tsv(const std::vector<LidComparisonRow>& rows) {
  std::string out = "architecture\tcondition\tset\tmetric\tpredicted\toracle_minus_predicted\n";
  for (const auto& r : rows)
    out += std::string(to_string(r.kind)) + '\t' + std::string(to_string(r.condition)) + '\t' + r.set +
           '\t' + std::string(to_string(r.metric)) + '\t' + format_double(r.predicted) + '\t' +
           format_double(r.oracle_delta) + '\n';
  return out;
}

std::string analysis_report(const ExperimentConfig& cfg, const ToyCorpus& corpus) {
  const RunLayout layout{cfg.out_dir};
  const auto& refs = corpus.test_cs;
  std::vector<SpanReference> span_refs;
  std::vector<double> proportion, count;
  for (const auto& u : refs) {
    span_refs.push_back({u.transcript, u.matrix_lang});
    proportion.push_back(cs_proportion(u.transcript, u.matrix_lang));
    count.push_back(static_cast<double>(u.transcript.count(other(u.matrix_lang))));
  }

  std::string out = "CS test set analyses. Span accuracy reads the " +
                    std::string(cfg.span_mode == SpanMode::transcript ? "transcript" : "translation") +
                    " output and is a lower bound (near misses count as misses). R^2 fits per-utterance "
                    "scores on the CS proportion and on the CS word count; outputs of all seeds are pooled.\n\n";
  std::vector<std::vector<std::string>> table{{"Architecture", "Condition", "SpanAcc", "R2 WER~prop",
                                               "R2 WER~count", "R2 CharCut~prop", "R2 CharCut~count"}};
  auto r2 = [](const std::vector<double>& y, const std::vector<double>& x) -> std::string {
    try {
      return format_fixed(score_vs_proportion(y, x).r_squared, 4);
    } catch (const Error&) {
      return "n/a";
    }
  };
  for (ArchitectureKind k : cfg.architectures)
    for (Condition c : cfg.conditions) {
      std::vector<std::string> outputs;
      std::vector<SpanReference> all_refs;
      std::vector<double> wer_y, cct_y, xp, xc;
      for (std::uint64_t seed : cfg.seeds) {
        const auto recs = load_aligned(layout.outputs(k, c, main_lid_mode(cfg, k), seed, "test_cs"), refs);
        for (std::size_t i = 0; i < recs.size(); ++i) {
          outputs.push_back(cfg.span_mode == SpanMode::transcript ? recs[i].transcript : recs[i].translation);
          all_refs.push_back(span_refs[i]);
          const SegmentStats s = segment_stats(recs[i], refs[i]);
          wer_y.push_back(s.words.rate());
          cct_y.push_back(s.charcut.score());
          xp.push_back(proportion[i]);
          xc.push_back(count[i]);
        }
      }
      std::string acc = "n/a";
      try {
        acc = format_fixed(cs_span_accuracy(outputs, all_refs).accuracy(), 4);
      } catch (const Error&) {
      }
      table.push_back({std::string(to_string(k)), std::string(to_string(c)), acc, r2(wer_y, xp),
                       r2(wer_y, xc), r2(cct_y, xp), r2(cct_y, xc)});
    }
  out += aligned_table(table);

  CorpusSplit split;
  split.cs_set = corpus.test_cs;
  split.mono_set = corpus.test_mono;
  const CorpusStats stats = corpus_stats(split);
  out += "\nCS proportion histogram (test_cs), bucket upper edge: count\n";
  for (int b = 0; b < CorpusStats::kBuckets; ++b)
    out += format_fixed(0.05 * (b + 1), 2) + ": " + std::to_string(stats.histogram[static_cast<std::size_t>(b)]) + '\n';
  return out;
}

void write_reports(const ExperimentConfig& cfg, const ToyCorpus& corpus) {
  const RunLayout layout{cfg.out_dir};
  const ReportTable table = build_report(cfg, corpus);
  write_file_atomic(layout.reports() / "table.txt", table.to_text());
  write_file_atomic(layout.reports() / "table.tsv", table.to_tsv());
  const bool gated = std::any_of(cfg.architectures.begin(), cfg.architectures.end(), is_lid_gated);
  const bool both_modes = std::find(cfg.lid_modes.begin(), cfg.lid_modes.end(), LidMode::predicted) != cfg.lid_modes.end() &&
                          std::find(cfg.lid_modes.begin(), cfg.lid_modes.end(), LidMode::oracle) != cfg.lid_modes.end();
  if (gated && both_modes) {
    const auto rows = compare_lid_modes(cfg, corpus);
    write_file_atomic(layout.reports() / "lid.txt", lid_comparison_text(rows));
    write_file_atomic(layout.reports() / "lid.tsv", lid_comparison_tsv(rows));
  }
  write_file_atomic(layout.reports() / "analysis.txt", analysis_report(cfg, corpus));
}

// ---------------------------------------------------------------------------
// Running

ToyCorpus prepare_corpus(const ExperimentConfig& cfg) {
  const RunLayout layout{cfg.out_dir};
  ToyCorpus corpus;
  if (cfg.corpus_dir) {
    corpus = load_toy_corpus(*cfg.corpus_dir);
  } else {
    ToyCorpusConfig cc = cfg.corpus;
    if (!cfg.corpus_seed_set) cc.seed = sub_seed(cfg, "corpus");
    corpus = generate_toy_corpus(cc);
  }
  save_toy_corpus(corpus, layout.corpus());
  return corpus;
}

LidDatasets lid_datasets(const ToyCorpus& corpus, Condition c) {
  LidDatasets d;
  d.others.resize(2);
  for (const auto& u : corpus.train_mono) d.others[static_cast<std::size_t>(index_of(u.matrix_lang))].push_back(u);
  d.dev = corpus.dev_mono;
  if (c == Condition::ft) {
    d.cs = corpus.train_cs;
    d.dev.insert(d.dev.end(), corpus.dev_cs.begin(), corpus.dev_cs.end());
  }
  return d;
}

namespace {

void save_cell(const std::filesystem::path& dir, const TrainResult& r) {
  save_checkpoint(dir / "model.ckpt", r.best);
  write_file_atomic(dir / "trace.jsonl", r.trace.to_jsonl());
}

void evaluate_cell(const ExperimentConfig& cfg, const ToyCorpus& corpus, const Vocabulary& vocab,
                   const Model& m, const LidClassifier* lid, Condition c, std::uint64_t seed) {
  const RunLayout layout{cfg.out_dir};
  std::vector<std::optional<LidMode>> modes;
  if (is_lid_gated(m.kind))
    for (LidMode mode : cfg.lid_modes) modes.push_back(mode);
  else
    modes.push_back(std::nullopt);
  for (const auto& mode : modes)
    for (std::string_view set : kTestSets) {
      System sys{&m, &vocab, mode == LidMode::predicted ? lid : nullptr};
      std::vector<OutputRecord> recs;
      for (const auto& u : test_set(corpus, set))
        recs.push_back(to_record(u.id, run_system(sys, u, mode.value_or(LidMode::oracle), cfg.decode)));
      write_outputs(layout.outputs(m.kind, c, mode, seed, set), recs);
    }
}

bool wants(const ExperimentConfig& cfg, Condition c) {
  return std::find(cfg.conditions.begin(), cfg.conditions.end(), c) != cfg.conditions.end();
}

}  // namespace

ReportTable run_matrix(const ExperimentConfig& cfg_in) {
  cfg_in.validate();
  ExperimentConfig cfg = cfg_in;
  const RunLayout layout{cfg.out_dir};
  const ToyCorpus corpus = prepare_corpus(cfg);
  const Vocabulary vocab = Vocabulary::from_lexicon(corpus.lexicon);
  cfg.dims.vocab = vocab.size();
  write_file_atomic(cfg.out_dir / "config.txt", cfg_in.to_text());

  const bool gated = std::any_of(cfg.architectures.begin(), cfg.architectures.end(), is_lid_gated);
  const bool predicted = std::find(cfg.lid_modes.begin(), cfg.lid_modes.end(), LidMode::predicted) != cfg.lid_modes.end();
  for (std::uint64_t seed : cfg.seeds) {
    std::map<Condition, LidClassifier> lids;
    if (gated && predicted)
      for (Condition c : cfg.conditions) {
        const std::string label = "lid/" + std::string(to_string(c)) + "/" + std::to_string(seed);
        try {
          spdlog::info("training {}", label);
          LidClassifier lid = LidClassifier::build(cfg.lid_dims, sub_seed(cfg, "init/" + label));
          TrainPlan plan = cfg.lid_plan;
          plan.seed = sub_seed(cfg, "train/" + label);
          const TrainResult r = train_lid(lid, lid_datasets(corpus, c), cfg.lid_upsample, plan);
          save_cell(layout.lid_dir(c, seed), r);
          lids.emplace(c, std::move(lid));
        } catch (const std::exception& e) {
          throw Error("cell " + label + ": " + e.what());
        }
      }
    auto lid_for = [&lids](Condition c) -> const LidClassifier* {
      auto it = lids.find(c);
      return it == lids.end() ? nullptr : &it->second;
    };
    for (ArchitectureKind k : cfg.architectures) {
      const std::string arch(to_string(k));
      const std::string base_label = arch + "/no_ft/" + std::to_string(seed);
      Checkpoint base_ckpt;
      try {
        spdlog::info("training {}", base_label);
        Model m = build_model(k, cfg.dims, sub_seed(cfg, "init/" + arch + "/" + std::to_string(seed)));
        TrainPlan plan = cfg.base_plan;
        plan.seed = sub_seed(cfg, "train/" + base_label);
        const TrainResult r = train(m, vocab, corpus.train_mono, corpus.dev_mono, plan);
        save_cell(layout.model_dir(k, Condition::no_ft, seed), r);
        base_ckpt = r.best;
        if (wants(cfg, Condition::no_ft)) evaluate_cell(cfg, corpus, vocab, m, lid_for(Condition::no_ft), Condition::no_ft, seed);
      } catch (const std::exception& e) {
        throw Error("cell " + base_label + ": " + e.what());
      }
      if (!wants(cfg, Condition::ft)) continue;
      const std::string ft_label = arch + "/ft/" + std::to_string(seed);
      try {
        spdlog::info("fine-tuning {}", ft_label);
        TrainPlan plan = cfg.ft_plan;
        plan.seed = sub_seed(cfg, "train/" + ft_label);
        const TrainResult r = finetune(base_ckpt, k, vocab, corpus.train_cs, corpus.dev_cs, plan);
        save_cell(layout.model_dir(k, Condition::ft, seed), r);
        const Model m = model_from_checkpoint(r.best);
        evaluate_cell(cfg, corpus, vocab, m, lid_for(Condition::ft), Condition::ft, seed);
      } catch (const std::exception& e) {
        throw Error("cell " + ft_label + ": " + e.what());
      }
    }
  }
  write_reports(cfg, corpus);
  return build_report(cfg, corpus);
}

}  // namespace csst
