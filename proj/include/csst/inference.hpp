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

// Running a trained system on utterances: LID routing (predicted or
// oracle), autoregressive decoding, the two-pass E2E flow and the cascade
// text hand-off, plus the per-utterance output record format.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csst/model.hpp"

namespace csst {

enum class LidMode { predicted, oracle };
std::string_view to_string(LidMode m);
LidMode lid_mode_from_string(std::string_view s);

enum class DecodeStrategy { greedy, beam };

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::greedy;
  int beam_size = 5;
  // Maximum generated tokens, eos included.
  int max_len = 32;
  // Hypotheses are ranked by log_prob / length^length_penalty.
  double length_penalty = 1.0;

  void validate() const;
  int effective_beam() const { return strategy == DecodeStrategy::greedy ? 1 : beam_size; }
};

struct DecodeResult {
  std::vector<int> tokens;  // generated tokens without eos
  double log_prob = 0.0;    // eos included
  double score = 0.0;
  bool truncated = false;   // max_len reached before eos
};

// Next-token logits given the full decoder input (controls ++ generated).
using LogitsFn = std::function<Eigen::RowVectorXd(std::span<const int> prefix)>;

// Greedy decoding is beam search with one hypothesis. Candidates are ranked
// by cumulative log-probability (earlier hypothesis, then lower token id, on
// ties); a candidate ending in eos is finished and still occupies a beam
// slot. The returned hypothesis has the best length-normalized score among
// finished and truncated ones.
DecodeResult decode_sequence(const LogitsFn& logits_fn, std::span<const int> controls,
                             const DecodeConfig& cfg);

struct SystemOutput {
  std::string transcript;
  std::string translation;
  // Route chosen by LID for gated kinds; empty for bidirectional kinds.
  std::optional<Lang> lid_used;
  Lang target = Lang::L2;
  double transcript_log_prob = 0.0;
  double translation_log_prob = 0.0;
  bool truncated = false;
  std::vector<int> transcript_tokens;
  std::vector<int> translation_tokens;
  // Hash of the first-decoder states (or MT encoder states for cascades)
  // the translation pass attended to.
  std::uint64_t first_states_hash = 0;
};

struct System {
  const Model* model = nullptr;
  const Vocabulary* vocab = nullptr;
  const LidClassifier* lid = nullptr;
};

SystemOutput run_system(const System& sys, const Utterance& u, LidMode mode,
                        const DecodeConfig& cfg);

// First pass only: the route's transcript decoder over its encoder states.
DecodeResult transcribe(const Route& r, const Mat& frames, const DecodeConfig& cfg);

// Hidden states of the transcript decoder over controls ++ tokens.
Mat transcript_states(const Decoder& d, const Mat& encoder_states, std::span<const int> tokens);

// Text-to-text translation with a cascade route's MT encoder and decoder.
// An empty transcript yields an empty translation and a warning.
std::string cascade_translate(const Route& mt, const Vocabulary& vocab,
                              std::string_view transcript_text, Lang target,
                              const DecodeConfig& cfg, DecodeResult* detail = nullptr);

// ---------------------------------------------------------------------------
// Output records (header line `#cs-outputs v1`).

inline constexpr std::string_view kOutputsHeader = "#cs-outputs v1";

struct OutputRecord {
  std::string id;
  std::string transcript;
  std::string translation;
  std::string lid_used;  // "L1", "L2" or "none"
  double transcript_log_prob = 0.0;
  double translation_log_prob = 0.0;
};

OutputRecord to_record(const std::string& id, const SystemOutput& o);
void write_outputs(const std::filesystem::path& path, const std::vector<OutputRecord>& records);
std::vector<OutputRecord> read_outputs(const std::filesystem::path& path);

}  // namespace csst
