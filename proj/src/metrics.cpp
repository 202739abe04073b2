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

#include "csst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <regex>
#include <tuple>

#include "csst/text.hpp"

namespace csst {

std::string_view to_string(MetricName m) {
  switch (m) {
    case MetricName::WER: return "WER";
    case MetricName::CER: return "CER";
    case MetricName::BLEU: return "BLEU";
    case MetricName::CharCut: return "CharCut";
  }
  return "?";
}

MetricName metric_from_string(std::string_view s) {
  if (s == "WER") return MetricName::WER;
  if (s == "CER") return MetricName::CER;
  if (s == "BLEU") return MetricName::BLEU;
  if (s == "CharCut") return MetricName::CharCut;
  throw Error("unknown metric '" + std::string(s) + "'");
}

Direction direction_of(MetricName m) {
  return m == MetricName::BLEU ? Direction::higher_better : Direction::lower_better;
}

bool at_least_as_good(double a, double b, Direction d) {
  return d == Direction::lower_better ? a <= b : a >= b;
}

bool is_stripped_punctuation(char32_t cp) { return cp == U'\'' || text::is_unicode_punctuation(cp); }

std::string strip_punctuation(std::string_view s) {
  std::u32string u = text::utf8_decode(s);
  std::erase_if(u, is_stripped_punctuation);
  return text::normalize_whitespace(text::utf8_encode(u));
}

// ---------------------------------------------------------------------------
// Edit distance

double EditCounts::rate() const {
  if (ref_length == 0) throw Error("error rate: empty reference");
  return static_cast<double>(edits()) / static_cast<double>(ref_length);
}

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  ref_length += o.ref_length;
  return *this;
}

template <typename T>
EditCounts edit_counts(std::span<const T> hyp, std::span<const T> ref) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  // cost[i][j]: edits turning ref[:i] into hyp[:j]
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 0; i <= n; ++i) cost[at(i, 0)] = i;
  for (std::size_t j = 0; j <= m; ++j) cost[at(0, j)] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cost[at(i, j)] = std::min({sub, cost[at(i - 1, j)] + 1, cost[at(i, j - 1)] + 1});
    }
  EditCounts e;
  e.ref_length = n;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[at(i, j)] == cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++e.substitutions;
      --i;
      --j;
    } else if (i > 0 && cost[at(i, j)] == cost[at(i - 1, j)] + 1) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

template EditCounts edit_counts<std::string>(std::span<const std::string>, std::span<const std::string>);
template EditCounts edit_counts<char32_t>(std::span<const char32_t>, std::span<const char32_t>);
template EditCounts edit_counts<int>(std::span<const int>, std::span<const int>);

EditCounts word_edits(std::string_view hyp, std::string_view ref) {
  const auto h = text::split_whitespace(hyp);
  const auto r = text::split_whitespace(ref);
  return edit_counts<std::string>(h, r);
}

EditCounts char_edits(std::string_view hyp, std::string_view ref) {
  const std::u32string h = text::utf8_decode(text::normalize_whitespace(hyp));
  const std::u32string r = text::utf8_decode(text::normalize_whitespace(ref));
  return edit_counts<char32_t>(std::span<const char32_t>(h.data(), h.size()),
                               std::span<const char32_t>(r.data(), r.size()));
}

double wer(const std::vector<std::string>& hyp_words, const std::vector<std::string>& ref_words) {
  if (ref_words.empty()) throw Error("wer: empty reference");
  return edit_counts<std::string>(hyp_words, ref_words).rate();
}

double wer(std::string_view hyp, std::string_view ref) {
  return wer(text::split_whitespace(hyp), text::split_whitespace(ref));
}

double cer(std::string_view hyp, std::string_view ref) {
  const EditCounts e = char_edits(hyp, ref);
  if (e.ref_length == 0) throw Error("cer: empty reference");
  return e.rate();
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

bool is_13a_symbol(char c) {
  // {-~  [-`  space-&  (-+  :-@  /
  return (c >= '{' && c <= '~') || (c >= '[' && c <= '`') || (c >= ' ' && c <= '&') ||
         (c >= '(' && c <= '+') || (c >= ':' && c <= '@') || c == '/';
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::string tokenize_13a(std::string_view input) {
  std::string line(input);
  replace_all(line, "<skipped>", "");
  replace_all(line, "-\n", "");
  std::replace(line.begin(), line.end(), '\n', ' ');
  if (line.find('&') != std::string::npos) {
    replace_all(line, "&quot;", "\"");
    replace_all(line, "&amp;", "&");
    replace_all(line, "&lt;", "<");
    replace_all(line, "&gt;", ">");
  }
  std::string spaced = " ";
  for (char c : line) {
    if (is_13a_symbol(c)) {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else {
      spaced += c;
    }
  }
  spaced += ' ';
  static const std::regex period_comma_unless_preceded_by_digit(R"(([^0-9])([\.,]))");
  static const std::regex period_comma_unless_followed_by_digit(R"(([\.,])([^0-9]))");
  static const std::regex dash_preceded_by_digit(R"(([0-9])(-))");
  spaced = std::regex_replace(spaced, period_comma_unless_preceded_by_digit, "$1 $2 ");
  spaced = std::regex_replace(spaced, period_comma_unless_followed_by_digit, " $1 $2");
  spaced = std::regex_replace(spaced, dash_preceded_by_digit, "$1 $2 ");
  return text::normalize_whitespace(spaced);
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int n = 0; n < kOrder; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_length += o.hyp_length;
  ref_length += o.ref_length;
  return *this;
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& w,
                                                            std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  if (w.size() < n) return out;
  for (std::size_t i = 0; i + n <= w.size(); ++i)
    ++out[std::vector<std::string>(w.begin() + static_cast<long>(i),
                                   w.begin() + static_cast<long>(i + n))];
  return out;
}

}  // namespace

BleuStats bleu_stats(std::string_view hyp, std::string_view ref) {
  const auto h = text::split_whitespace(tokenize_13a(text::lowercase(hyp)));
  const auto r = text::split_whitespace(tokenize_13a(text::lowercase(ref)));
  BleuStats s;
  s.hyp_length = h.size();
  s.ref_length = r.size();
  for (int n = 1; n <= BleuStats::kOrder; ++n) {
    const auto hc = ngram_counts(h, static_cast<std::size_t>(n));
    const auto rc = ngram_counts(r, static_cast<std::size_t>(n));
    for (const auto& [g, c] : hc) {
      auto it = rc.find(g);
      if (it != rc.end()) s.matches[n - 1] += std::min(c, it->second);
    }
    s.totals[n - 1] = h.size() >= static_cast<std::size_t>(n) ? h.size() - n + 1 : 0;
  }
  return s;
}

double bleu_from_stats(const BleuStats& s) {
  if (s.hyp_length == 0) return 0.0;
  constexpr double kSmoothK = 5.0;
  double invcnt = 1.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < BleuStats::kOrder; ++n) {
    if (s.totals[n] == 0) continue;  // hypothesis shorter than n: effective order
    ++orders;
    double p;
    if (s.matches[n] > 0) {
      p = static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    } else {
      const double log_len = std::log(static_cast<double>(s.hyp_length));
      if (log_len <= 0.0) return 0.0;
      invcnt *= kSmoothK / log_len;
      p = 1.0 / (invcnt * static_cast<double>(s.totals[n]));
    }
    log_sum += std::log(p);
  }
  double log_bp = 0.0;
  if (s.hyp_length < s.ref_length)
    log_bp = 1.0 - static_cast<double>(s.ref_length) / static_cast<double>(s.hyp_length);
  return 100.0 * std::exp(log_bp + log_sum / orders);
}

double bleu(std::string_view hyp, std::string_view ref) {
  if (text::split_whitespace(ref).empty()) throw Error("bleu: empty reference");
  return bleu_from_stats(bleu_stats(hyp, ref));
}

double corpus_bleu(std::span<const std::string> hyps, std::span<const std::string> refs) {
  if (hyps.size() != refs.size()) throw Error("corpus_bleu: segment count mismatch");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (text::split_whitespace(refs[i]).empty()) throw Error("bleu: empty reference");
    total += bleu_stats(hyps[i], refs[i]);
  }
  return bleu_from_stats(total);
}

// ---------------------------------------------------------------------------
// CharCut

CharCutStats& CharCutStats::operator+=(const CharCutStats& o) {
  unmatched += o.unmatched;
  total += o.total;
  return *this;
}

CharCutStats charcut_stats(std::string_view hyp_in, std::string_view ref_in, int min_match) {
  const std::u32string hyp = text::utf8_decode(text::normalize_whitespace(hyp_in));
  const std::u32string ref = text::utf8_decode(text::normalize_whitespace(ref_in));
  const std::size_t n = hyp.size();
  const std::size_t m = ref.size();
  std::vector<char> hyp_used(n, 0);
  std::vector<char> ref_used(m, 0);
  std::vector<std::size_t> run((n + 1) * (m + 1), 0);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  while (true) {
    std::size_t best_len = 0;
    std::size_t best_h = 0;
    std::size_t best_r = 0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 1; j <= m; ++j) {
        const bool ok = !hyp_used[i - 1] && !ref_used[j - 1] && hyp[i - 1] == ref[j - 1];
        const std::size_t len = ok ? run[at(i - 1, j - 1)] + 1 : 0;
        run[at(i, j)] = len;
        if (len == 0) continue;
        const std::size_t hs = i - len;
        const std::size_t rs = j - len;
        if (len > best_len || (len == best_len && std::tie(hs, rs) < std::tie(best_h, best_r))) {
          best_len = len;
          best_h = hs;
          best_r = rs;
        }
      }
    if (best_len < static_cast<std::size_t>(min_match)) break;
    for (std::size_t k = 0; k < best_len; ++k) {
      hyp_used[best_h + k] = 1;
      ref_used[best_r + k] = 1;
    }
  }
  CharCutStats s;
  s.total = n + m;
  s.unmatched = static_cast<std::size_t>(std::count(hyp_used.begin(), hyp_used.end(), 0) +
                                         std::count(ref_used.begin(), ref_used.end(), 0));
  return s;
}

double charcut(std::string_view hyp, std::string_view ref) {
  return charcut_stats(hyp, ref).score();
}

// ---------------------------------------------------------------------------
// Span accuracy

std::vector<std::vector<std::string>> cs_spans(const TaggedTranscript& t, Lang matrix) {
  std::vector<std::vector<std::string>> spans;
  std::vector<std::string> cur;
  for (const auto& tok : t.tokens) {
    if (tok.lang != matrix) {
      cur.push_back(tok.surface);
    } else if (!cur.empty()) {
      spans.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) spans.push_back(std::move(cur));
  return spans;
}

bool contains_span(std::string_view output, const std::vector<std::string>& span) {
  const auto words = text::split_whitespace(text::lowercase(strip_punctuation(output)));
  std::vector<std::string> needle;
  for (const auto& w : span) {
    for (auto& piece : text::split_whitespace(text::lowercase(strip_punctuation(w))))
      needle.push_back(std::move(piece));
  }
  if (needle.empty()) return false;
  return std::search(words.begin(), words.end(), needle.begin(), needle.end()) != words.end();
}

double SpanAccuracy::accuracy() const {
  if (total == 0) throw Error("cs_span_accuracy: no code-switched spans in the set");
  return static_cast<double>(matched) / static_cast<double>(total);
}

SpanAccuracy cs_span_accuracy(std::span<const std::string> outputs,
                              std::span<const SpanReference> references) {
  if (outputs.size() != references.size())
    throw Error("cs_span_accuracy: output and reference counts differ");
  SpanAccuracy acc;
  for (std::size_t i = 0; i < outputs.size(); ++i)
    for (const auto& span : cs_spans(references[i].transcript, references[i].matrix)) {
      ++acc.total;
      if (contains_span(outputs[i], span)) ++acc.matched;
    }
  if (acc.total == 0) throw Error("cs_span_accuracy: no code-switched spans in the set");
  return acc;
}

// ---------------------------------------------------------------------------
// Significance

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::best: return "best";
    case Verdict::similar_to_best: return "similar_to_best";
    case Verdict::worse: return "worse";
  }
  return "?";
}

SignificanceResult bootstrap_significance(std::size_t n_segments, const CorpusMetric& best,
                                          const CorpusMetric& other, Direction direction,
                                          std::size_t n_resamples, std::uint64_t seed,
                                          double alpha) {
  if (n_segments < 2) throw Error("bootstrap_significance: need at least 2 segments");
  if (n_resamples == 0) throw Error("bootstrap_significance: n_resamples must be positive");
  Rng rng(seed);
  std::vector<std::size_t> idx(n_segments);
  std::size_t as_good = 0;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_segments) - 1));
    if (at_least_as_good(other(idx), best(idx), direction)) ++as_good;
  }
  SignificanceResult res;
  res.alpha = alpha;
  res.n_resamples = n_resamples;
  res.p_value = static_cast<double>(as_good) / static_cast<double>(n_resamples);
  res.verdict = res.p_value >= alpha ? Verdict::similar_to_best : Verdict::worse;
  return res;
}

SignificanceResult bootstrap_significance(std::span<const double> seg_scores_best,
                                          std::span<const double> seg_scores_other,
                                          Direction direction, std::size_t n_resamples,
                                          std::uint64_t seed, double alpha) {
  if (seg_scores_best.size() != seg_scores_other.size())
    throw Error("bootstrap_significance: systems must have paired segments");
  // Canonical segment order, so the result does not depend on input order.
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < seg_scores_best.size(); ++i)
    pairs.emplace_back(seg_scores_best[i], seg_scores_other[i]);
  std::sort(pairs.begin(), pairs.end());
  auto mean_of = [&pairs](bool first) {
    return [&pairs, first](std::span<const std::size_t> idx) {
      double s = 0.0;
      for (std::size_t i : idx) s += first ? pairs[i].first : pairs[i].second;
      return s / static_cast<double>(idx.size());
    };
  };
  return bootstrap_significance(pairs.size(), mean_of(true), mean_of(false), direction,
                                n_resamples, seed, alpha);
}

// ---------------------------------------------------------------------------
// Regression

RegressionResult score_vs_proportion(std::span<const double> scores,
                                     std::span<const double> regressor) {
  if (scores.size() != regressor.size())
    throw Error("score_vs_proportion: scores and regressor differ in length");
  if (scores.size() < 3) throw Error("score_vs_proportion: need at least 3 points");
  const double n = static_cast<double>(scores.size());
  const double mx = std::accumulate(regressor.begin(), regressor.end(), 0.0) / n;
  const double my = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double dx = regressor[i] - mx;
    const double dy = scores[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) throw Error("score_vs_proportion: regressor has zero variance");
  RegressionResult r;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  if (syy <= 0.0) {
    r.r_squared = 0.0;
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double e = scores[i] - (r.intercept + r.slope * regressor[i]);
      ss_res += e * e;
    }
    r.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return r;
}

}  // namespace csst
