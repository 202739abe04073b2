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

// Evaluation and analysis: WER/CER, BLEU (lowercased, 13a tokenization,
// smoothing method 4), CharCut, punctuation stripping, code-switched span
// accuracy, paired bootstrap significance and score-vs-proportion
// regression. Everything here is a pure function.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csst/corpus.hpp"

namespace csst {

enum class MetricName { WER, CER, BLEU, CharCut };
enum class Direction { lower_better, higher_better };

std::string_view to_string(MetricName m);
MetricName metric_from_string(std::string_view s);
Direction direction_of(MetricName m);
// True when a is at least as good as b.
bool at_least_as_good(double a, double b, Direction d);

struct MetricValue {
  MetricName name;
  double value;
  Direction direction;
};

// Removes every character whose Unicode general category is P* (the ASCII
// apostrophe included), then collapses whitespace.
std::string strip_punctuation(std::string_view text);
bool is_stripped_punctuation(char32_t cp);

// ---------------------------------------------------------------------------
// Edit distance

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_length = 0;

  std::size_t edits() const { return substitutions + insertions + deletions; }
  double rate() const;
  EditCounts& operator+=(const EditCounts& o);
};

// Minimum-edit alignment with unit costs. Ties prefer substitution, then
// deletion, then insertion when splitting the total into its parts.
template <typename T>
EditCounts edit_counts(std::span<const T> hyp, std::span<const T> ref);

EditCounts word_edits(std::string_view hyp, std::string_view ref);
EditCounts char_edits(std::string_view hyp, std::string_view ref);

double wer(const std::vector<std::string>& hyp_words, const std::vector<std::string>& ref_words);
double wer(std::string_view hyp, std::string_view ref);
// Characters are code points of the whitespace-normalized strings (spaces count).
double cer(std::string_view hyp, std::string_view ref);

// ---------------------------------------------------------------------------
// BLEU

// WMT 13a tokenization as used by sacreBLEU's default tokenizer.
std::string tokenize_13a(std::string_view line);

struct BleuStats {
  static constexpr int kOrder = 4;
  std::array<std::size_t, kOrder> matches{};
  std::array<std::size_t, kOrder> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  BleuStats& operator+=(const BleuStats& o);
};

// Lowercases, applies 13a tokenization and counts clipped n-grams.
BleuStats bleu_stats(std::string_view hyp, std::string_view ref);
// Geometric mean of modified precisions with Chen & Cherry smoothing 4
// (K = 5) and the brevity penalty, on a 0..100 scale.
double bleu_from_stats(const BleuStats& s);
double bleu(std::string_view hyp, std::string_view ref);
double corpus_bleu(std::span<const std::string> hyps, std::span<const std::string> refs);

// ---------------------------------------------------------------------------
// CharCut

inline constexpr int kCharCutMinMatch = 3;

struct CharCutStats {
  std::size_t unmatched = 0;  // characters left uncovered in hyp and ref
  std::size_t total = 0;      // |hyp| + |ref|
  CharCutStats& operator+=(const CharCutStats& o);
  double score() const { return total == 0 ? 0.0 : static_cast<double>(unmatched) / total; }
};

// Greedy longest-first common substring matching over code points: the
// longest common run of unmatched characters (length >= min_match) is
// matched, earliest hyp start then earliest ref start on ties, until no
// run remains.
CharCutStats charcut_stats(std::string_view hyp, std::string_view ref,
                           int min_match = kCharCutMinMatch);
double charcut(std::string_view hyp, std::string_view ref);

// ---------------------------------------------------------------------------
// Code-switched span accuracy

struct SpanReference {
  TaggedTranscript transcript;
  Lang matrix;
};

// Maximal runs of embedded-language tokens.
std::vector<std::vector<std::string>> cs_spans(const TaggedTranscript& t, Lang matrix);
// Word-boundary-aligned containment after punctuation stripping and lowercasing.
bool contains_span(std::string_view output, const std::vector<std::string>& span);

struct SpanAccuracy {
  std::size_t matched = 0;
  std::size_t total = 0;
  double accuracy() const;
};

// Exact-match accuracy of reference CS spans in model outputs. This is a
// lower bound: near misses ("fallbreak" for "fall break") count as misses.
SpanAccuracy cs_span_accuracy(std::span<const std::string> outputs,
                              std::span<const SpanReference> references);

// ---------------------------------------------------------------------------
// Significance

enum class Verdict { best, similar_to_best, worse };
std::string_view to_string(Verdict v);

struct SignificanceResult {
  double p_value = 1.0;
  double alpha = 0.05;
  std::size_t n_resamples = 0;
  Verdict verdict = Verdict::similar_to_best;
};

inline constexpr double kSignificanceAlpha = 0.05;
inline constexpr std::size_t kDefaultResamples = 1000;

// Corpus metric computed from a resample (segment indices, with repeats).
using CorpusMetric = std::function<double(std::span<const std::size_t>)>;

// Paired bootstrap: p is the fraction of resamples where `other` scores at
// least as well as `best`. Verdict is similar_to_best iff p >= alpha.
SignificanceResult bootstrap_significance(std::size_t n_segments, const CorpusMetric& best,
                                          const CorpusMetric& other, Direction direction,
                                          std::size_t n_resamples, std::uint64_t seed,
                                          double alpha = kSignificanceAlpha);
// Corpus metric = mean of per-segment scores.
SignificanceResult bootstrap_significance(std::span<const double> seg_scores_best,
                                          std::span<const double> seg_scores_other,
                                          Direction direction,
                                          std::size_t n_resamples = kDefaultResamples,
                                          std::uint64_t seed = 0,
                                          double alpha = kSignificanceAlpha);

// ---------------------------------------------------------------------------
// Regression

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares of per-utterance scores on a regressor (CS
// proportion or CS word count).
RegressionResult score_vs_proportion(std::span<const double> scores,
                                     std::span<const double> regressor);

}  // namespace csst
