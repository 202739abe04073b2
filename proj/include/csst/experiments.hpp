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

// Orchestration of the experiment matrix: configuration, training every
// (architecture, condition, seed) cell, evaluation under each LID mode,
// significance-annotated report tables, the oracle-vs-predicted LID
// comparison, and the CS analyses. Reports are pure reductions over the
// per-utterance outputs persisted under the run directory:
//
//   corpus/                              the toy corpus
//   ckpt/<arch>/<condition>/<seed>/      model.ckpt, trace.jsonl
//   ckpt/lid/<condition>/<seed>/         LID classifier
//   outputs/<arch>/<condition>/<lid>/<seed>/{test_cs,test_mono}.jsonl
//   reports/                             tables (.txt aligned, .tsv)

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csst/corpus.hpp"
#include "csst/inference.hpp"
#include "csst/metrics.hpp"
#include "csst/model.hpp"
#include "csst/training.hpp"

namespace csst {

enum class Condition { no_ft, ft };
std::string_view to_string(Condition c);
Condition condition_from_string(std::string_view s);

// Which output the CS-span check reads.
enum class SpanMode { transcript, translation };

inline constexpr std::string_view kExperimentHeader = "#cs-exp v1";

struct ExperimentConfig {
  // A saved corpus to use; when empty the toy corpus is generated.
  std::optional<std::filesystem::path> corpus_dir;
  ToyCorpusConfig corpus;
  bool corpus_seed_set = false;
  std::vector<ArchitectureKind> architectures{kAllArchitectures.begin(), kAllArchitectures.end()};
  ModelDims dims;
  ModelDims lid_dims;
  TrainPlan base_plan;
  TrainPlan ft_plan;
  TrainPlan lid_plan;
  int lid_upsample = 2;
  DecodeConfig decode;
  std::vector<LidMode> lid_modes{LidMode::predicted, LidMode::oracle};
  std::vector<Condition> conditions{Condition::no_ft, Condition::ft};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t root_seed = 1;
  std::filesystem::path out_dir = "run";
  std::size_t bootstrap_resamples = kDefaultResamples;
  // Adds CER and CharCut columns to the main table.
  bool expanded = false;
  SpanMode span_mode = SpanMode::transcript;

  ExperimentConfig();
  void validate() const;
  std::string to_text() const;
  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Labeled sub-seed of the run's root seed.
std::uint64_t sub_seed(const ExperimentConfig& cfg, std::string_view label);

struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path model_dir(ArchitectureKind k, Condition c, std::uint64_t seed) const;
  std::filesystem::path lid_dir(Condition c, std::uint64_t seed) const;
  std::filesystem::path outputs(ArchitectureKind k, Condition c, std::optional<LidMode> mode,
                                std::uint64_t seed, std::string_view set) const;
  std::filesystem::path reports() const { return root / "reports"; }
};

// LID mode used by the main table for a kind: predicted when evaluated,
// otherwise oracle; std::nullopt for kinds without LID.
std::optional<LidMode> main_lid_mode(const ExperimentConfig& cfg, ArchitectureKind k);

// ---------------------------------------------------------------------------
// Scoring

// Per-segment sufficient statistics for every metric, so corpus scores and
// bootstrap resamples are sums over segments.
struct SegmentStats {
  EditCounts words;
  EditCounts chars;
  BleuStats bleu;
  CharCutStats charcut;
};

struct MetricSpec {
  MetricName name;
  bool on_translation;  // WER/CER read transcripts, BLEU/CharCut translations
};
std::vector<MetricSpec> table_metrics(bool expanded);

// Punctuation is stripped from hypothesis and reference before scoring.
SegmentStats segment_stats(const OutputRecord& out, const Utterance& ref);
double corpus_score(MetricName m, std::span<const SegmentStats> segs,
                    std::span<const std::size_t> idx);
double corpus_score(MetricName m, std::span<const SegmentStats> segs);

struct ReportCell {
  double value = 0.0;
  double seed_sd = 0.0;  // spread of the per-seed corpus scores
  SignificanceResult significance;
  bool bold = false;
};

struct ReportColumn {
  Condition condition;
  std::string set;  // "test_cs" or "test_mono"
  MetricName metric;
};

struct ReportTable {
  std::vector<ArchitectureKind> rows;
  std::vector<ReportColumn> columns;
  std::vector<std::vector<ReportCell>> cells;  // [row][column]
  std::vector<std::uint64_t> seeds;

  std::string to_text() const;
  std::string to_tsv() const;
};

// Significance per column against the column's best value: bold marks the
// best, an asterisk marks p >= alpha.
ReportTable build_report(const ExperimentConfig& cfg, const ToyCorpus& corpus);

struct LidComparisonRow {
  ArchitectureKind kind;
  Condition condition;
  std::string set;
  MetricName metric;
  double predicted = 0.0;
  double oracle_delta = 0.0;  // oracle - predicted
};

// Oracle-vs-predicted table for LID-gated kinds.
std::vector<LidComparisonRow> compare_lid_modes(const ExperimentConfig& cfg,
                                                const ToyCorpus& corpus);
std::string lid_comparison_text(const std::vector<LidComparisonRow>& rows);
std::string lid_comparison_tsv(const std::vector<LidComparisonRow>& rows);

// CS-span accuracy, R^2 of per-utterance scores against CS proportion and
// CS word count, and the CS proportion histogram of the CS test set.
std::string analysis_report(const ExperimentConfig& cfg, const ToyCorpus& corpus);

// Regenerates everything under reports/ from persisted artifacts.
void write_reports(const ExperimentConfig& cfg, const ToyCorpus& corpus);

// ---------------------------------------------------------------------------
// Running

// Generates or loads the corpus and saves it under the run directory.
ToyCorpus prepare_corpus(const ExperimentConfig& cfg);

// Splits mono training data by language for the LID mixture.
LidDatasets lid_datasets(const ToyCorpus& corpus, Condition c);

// Trains, fine-tunes and evaluates every cell, then writes the reports.
ReportTable run_matrix(const ExperimentConfig& cfg);

}  // namespace csst
