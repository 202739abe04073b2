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

// Code-switched corpus handling: annotation parsers (Fisher inline foreign
// tags, CHAT language suffixes), matrix-language labeling, CS/monolingual
// splitting, duration filtering, statistics, and the synthetic bilingual
// toy-speech corpus used for desk-scale training.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "csst/common.hpp"
#include "csst/matrix.hpp"

namespace csst {

// Binds the two abstract languages to the names used in annotations.
struct LanguageNames {
  std::string l1 = "spanish";
  std::string l2 = "english";
  std::string l1_chat = "spa";
  std::string l2_chat = "eng";

  const std::string& display(Lang l) const { return l == Lang::L1 ? l1 : l2; }
};

struct TaggedToken {
  std::string surface;
  Lang lang;
  bool operator==(const TaggedToken&) const = default;
};

struct TaggedTranscript {
  std::vector<TaggedToken> tokens;

  std::vector<std::string> surfaces() const;
  // Whitespace-joined surfaces (the clean transcript).
  std::string text() const;
  std::size_t count(Lang l) const;
  bool empty() const { return tokens.empty(); }
  bool operator==(const TaggedTranscript&) const = default;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Fisher-style inline spans: `<foreign lang="English"> show </foreign>`.
// The closing tag is accepted as `</foreign>` or `<\foreign>`. Punctuation
// glued to a closing tag attaches to the preceding token and takes its tag.
TaggedTranscript parse_fisher_annotation(std::string_view raw, Lang matrix_default,
                                         const LanguageNames& names = {});

// CHAT subset: `word@s:eng` language suffixes, `[/]` retracing and `(.)`
// pause markers. Any other CHAT construct is rejected.
TaggedTranscript parse_chat_annotation(std::string_view raw, Lang matrix_default,
                                       const LanguageNames& names = {});

// Fraction of minority-language tokens, in [0, 0.5].
double cs_proportion(const TaggedTranscript& t);
// Fraction of tokens not tagged `matrix`.
double cs_proportion(const TaggedTranscript& t, Lang matrix);

// Majority tag; an exact tie is broken by a coin seeded with `seed`.
Lang matrix_language(const TaggedTranscript& t, std::uint64_t seed);
bool is_tie(const TaggedTranscript& t);
// Coin seed used for an utterance id.
std::uint64_t tie_break_seed(std::string_view utterance_id);

struct Utterance {
  std::string id;
  Mat frames;  // T x D
  TaggedTranscript transcript;
  std::string translation;
  Lang matrix_lang = Lang::L1;
  int duration_frames = 0;
  std::uint64_t frames_seed = 0;

  bool is_code_switched() const { return transcript.count(other(matrix_lang)) > 0; }
};

struct SplitProvenance {
  // source id -> split name ("cs" or "mono"), in input order
  std::vector<std::pair<std::string, std::string>> mapping;
  // ids whose matrix language came from the tie-break coin
  std::map<std::string, Lang> tie_breaks;
};

struct CorpusSplit {
  std::vector<Utterance> cs_set;
  std::vector<Utterance> mono_set;
  SplitProvenance provenance;
};

// Labels every utterance's matrix language and partitions the input: any
// utterance with at least one embedded-language token goes to cs_set.
CorpusSplit split_corpus(std::vector<Utterance> utts);

// Keeps utterances with duration_frames <= max_frames (inclusive).
std::vector<Utterance> filter_by_duration(std::vector<Utterance> utts, int max_frames);

struct CorpusStats {
  static constexpr int kBuckets = 10;
  static constexpr double kNominalFrameRate = 100.0;  // frames per second

  std::size_t n_cs = 0;
  std::size_t n_mono = 0;
  std::size_t frames_cs = 0;
  std::size_t frames_mono = 0;
  double hours_cs = 0.0;
  double hours_mono = 0.0;
  std::array<double, 2> matrix_distribution{};  // fraction L1, L2
  // Bucket b counts cs_set proportions in (0.05 b, 0.05 (b + 1)].
  std::array<std::size_t, kBuckets> histogram{};
};

CorpusStats corpus_stats(const CorpusSplit& split);
// Histogram bucket for k embedded tokens out of n, or -1 when k == 0.
int proportion_bucket(std::size_t k, std::size_t n);

// ---------------------------------------------------------------------------
// Synthetic bilingual toy speech.

struct ToyCorpusConfig {
  int vocab_size_per_lang = 16;
  int phoneme_dim = 16;
  double noise_sigma = 0.3;
  double cs_rate = 0.25;
  double max_cs_proportion = 0.5;
  int sentence_len_min = 3;
  int sentence_len_max = 6;
  int word_len_min = 2;
  int word_len_max = 3;
  // Each character lasts 1..max_stretch frames.
  int max_stretch = 3;
  double l1_matrix_rate = 0.5;
  int n_train = 2400;
  int n_dev = 400;
  int n_test = 800;
  // 0 disables the filter.
  int max_frames = 2000;
  std::uint64_t seed = 1;
  LanguageNames names;

  void validate() const;
  KeyValues to_kv() const;
  // Missing keys keep their defaults unless require_all; unknown keys are errors.
  static ToyCorpusConfig from_kv(const KeyValues& kv, bool require_all = false);
  std::string to_text() const;
  static ToyCorpusConfig from_text(std::string_view text);
};

// Character inventories are disjoint: L1 uses 'a'..'m', L2 uses 'n'..'z'.
// Word i of L1 translates to word i of L2 and back.
struct ToyLexicon {
  std::array<std::vector<std::string>, 2> words;

  static ToyLexicon generate(const ToyCorpusConfig& cfg);
  const std::string& word(Lang l, int concept_id) const { return words[index_of(l)][concept_id]; }
  // Concept id and language of a surface form, or {-1, L1} if unknown.
  std::pair<int, Lang> lookup(std::string_view surface) const;
  std::string translate(const TaggedTranscript& t, Lang target) const;
};

std::string_view toy_inventory(Lang l);

// Fixed per-character embeddings; a space is a silence symbol.
class ToyPhonetics {
 public:
  explicit ToyPhonetics(const ToyCorpusConfig& cfg);
  const Eigen::RowVectorXd& embedding(char c) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  std::map<char, Eigen::RowVectorXd> table_;
};

// Frames for the whitespace-joined transcript: each character's embedding
// repeated 1..max_stretch times plus Gaussian noise. Frame count lies in
// [chars, max_stretch * chars].
Mat synthesize_features(const TaggedTranscript& t, const ToyCorpusConfig& cfg,
                        std::uint64_t seed);
Mat synthesize_features(const TaggedTranscript& t, const ToyCorpusConfig& cfg,
                        const ToyPhonetics& phon, std::uint64_t seed);

struct ToyCorpus {
  ToyCorpusConfig config;
  ToyLexicon lexicon;
  std::vector<Utterance> train_mono;
  std::vector<Utterance> train_cs;
  std::vector<Utterance> dev_cs;
  std::vector<Utterance> dev_mono;
  std::vector<Utterance> test_cs;
  std::vector<Utterance> test_mono;
  SplitProvenance provenance;

  std::uint64_t hash() const;
};

ToyCorpus generate_toy_corpus(const ToyCorpusConfig& cfg);

// ---------------------------------------------------------------------------
// On-disk formats (header line `#cs-corpus v1`).

inline constexpr std::string_view kCorpusHeader = "#cs-corpus v1";

struct CorpusRecord {
  Utterance utt;
  std::string split;
};

void write_corpus_records(const std::filesystem::path& path,
                          const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_corpus_records(const std::filesystem::path& path);
void write_split_mapping(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, std::string>>& mapping);
std::vector<std::pair<std::string, std::string>> read_split_mapping(
    const std::filesystem::path& path);

// Writes config.txt, lexicon.txt, corpus.jsonl and splits.tsv into dir.
void save_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir);
// Reads a saved toy corpus and regenerates its frames from the recorded seeds.
ToyCorpus load_toy_corpus(const std::filesystem::path& dir);

}  // namespace csst
