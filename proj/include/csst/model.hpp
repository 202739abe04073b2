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

// The seven joint transcription+translation architectures, their
// parameter-sharing plans, the vocabulary with its control tokens, and the
// utterance-level language-identification classifier.
//
// Every architecture is described as a set of routes. A route is the chain
// of components an utterance passes through: speech encoder, transcript
// (or ASR) decoder, and translation decoder, plus a text encoder for
// cascades. LID-gated kinds have one route per source language; the
// bidirectional kinds have a single route serving both languages. Logical
// parameter names are "<route>.<slot>.<param>"; the registry's alias table
// maps each one to the canonical storage that realizes the sharing plan.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "csst/common.hpp"
#include "csst/corpus.hpp"
#include "csst/layers.hpp"

namespace csst {

// ---------------------------------------------------------------------------
// Vocabulary

enum class ControlToken : int {
  pad = 0,
  bos = 1,
  eos = 2,
  task_transcribe = 3,
  task_translate = 4,
  lang_L1 = 5,
  lang_L2 = 6,
};
inline constexpr int kNumControlTokens = 7;

inline constexpr int token_id(ControlToken c) { return static_cast<int>(c); }
inline int lang_token(Lang l) {
  return token_id(l == Lang::L1 ? ControlToken::lang_L1 : ControlToken::lang_L2);
}

// Word-level vocabulary. Ids below kNumControlTokens are reserved.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, std::vector<Lang> langs);
  static Vocabulary from_lexicon(const ToyLexicon& lex);

  int size() const { return kNumControlTokens + static_cast<int>(words_.size()); }
  bool contains(std::string_view word) const;
  int id(std::string_view word) const;
  const std::string& word(int id) const;
  Lang lang(int id) const;
  static bool is_control(int id) { return id >= 0 && id < kNumControlTokens; }

  std::vector<int> encode(std::string_view text) const;
  // Control ids are skipped.
  std::string decode(std::span<const int> ids) const;
  // Majority language of word tokens; ties go to the first word's
  // language, and an empty sequence to L1.
  Lang majority_lang(std::span<const int> ids) const;

 private:
  std::vector<std::string> words_;
  std::vector<Lang> langs_;
  std::unordered_map<std::string, int> index_;
};

std::vector<int> transcript_controls();
std::vector<int> translation_controls(Lang target);

// ---------------------------------------------------------------------------
// Architectures

enum class ArchitectureKind {
  CascadeUnidirect,
  CascadeUniSharedEnc,
  CascadeBidirect,
  E2EUnidirect,
  E2EBidirectByLang,
  E2EBidirectByTask,
  E2EBidirectShared,
};
inline constexpr std::array<ArchitectureKind, 7> kAllArchitectures = {
    ArchitectureKind::CascadeUnidirect,  ArchitectureKind::CascadeUniSharedEnc,
    ArchitectureKind::CascadeBidirect,   ArchitectureKind::E2EUnidirect,
    ArchitectureKind::E2EBidirectByLang, ArchitectureKind::E2EBidirectByTask,
    ArchitectureKind::E2EBidirectShared,
};

std::string_view to_string(ArchitectureKind k);
ArchitectureKind architecture_from_string(std::string_view s);
bool is_cascade(ArchitectureKind k);
// Kinds with one sub-system per language, selected by LID.
bool is_lid_gated(ArchitectureKind k);

struct ModelDims {
  int feat_dim = 16;
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int ffn_dim = 128;
  int vocab = 0;
  double dropout = 0.1;
  std::vector<int> bridge_strides{2, 2};

  void validate() const;
  KeyValues to_kv() const;
  static ModelDims from_kv(const KeyValues& kv);
};

struct SpeechEncoder {
  Linear input;
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;
  Bridge bridge;

  static SpeechEncoder make(ParameterRegistry& reg, const std::string& name,
                            const ModelDims& dims, Rng& rng);
  // T x feat_dim frames -> T' x d_model states, T' = Bridge::output_length(T).
  Var forward(Ctx& c, const Mat& frames) const;
};

struct TextEncoder {
  Embedding embed;
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;

  static TextEncoder make(ParameterRegistry& reg, const std::string& name, const ModelDims& dims,
                          Rng& rng);
  Var forward(Ctx& c, std::span<const int> ids) const;
};

struct Decoder {
  Embedding embed;
  std::vector<DecoderLayer> layers;
  LayerNorm final_norm;
  Linear out;

  struct Output {
    Var hidden;  // |ids| x d_model, after the final normalization
    Var logits;  // |ids| x vocab
  };

  static Decoder make(ParameterRegistry& reg, const std::string& name, const ModelDims& dims,
                      bool triangle, Rng& rng);
  bool triangle() const { return !layers.empty() && layers.front().triangle(); }
  // Causal over ids. `first` supplies first-decoder states to triangle
  // blocks; without it those sublayers are bypassed.
  Output forward(Ctx& c, std::span<const int> ids, Var memory, std::optional<Var> first) const;
};

// Components one utterance passes through.
struct Route {
  std::string name;  // "L1", "L2" or "bi"
  const SpeechEncoder* encoder = nullptr;
  const Decoder* transcript = nullptr;   // ASR decoder for cascades
  const Decoder* translation = nullptr;  // MT decoder for cascades
  const TextEncoder* mt_encoder = nullptr;
};

class Model {
 public:
  ArchitectureKind kind{};
  ModelDims dims;
  std::uint64_t seed = 0;
  ParameterRegistry registry;

  Model() = default;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Route taken by an utterance whose source language is `source`.
  const Route& route(Lang source) const;
  // Distinct routes, in L1, L2 order.
  std::vector<const Route*> routes() const;
  // Logical slot prefixes ("L1.speech_encoder", ...) of the model.
  std::vector<std::string> logical_slots() const;

  friend Model build_model(ArchitectureKind kind, const ModelDims& dims, std::uint64_t seed);

 private:
  std::map<std::string, SpeechEncoder> encoders_;
  std::map<std::string, TextEncoder> text_encoders_;
  std::map<std::string, Decoder> decoders_;
  std::map<std::string, Route> routes_;
  std::array<std::string, 2> route_of_lang_;
};

Model build_model(ArchitectureKind kind, const ModelDims& dims, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward passes

Var encode(Ctx& c, const Route& r, const Mat& frames);
Decoder::Output decode_transcript(Ctx& c, const Decoder& d, Var encoder_states,
                                  std::span<const int> prefix);
Decoder::Output decode_translation(Ctx& c, const Decoder& d, Var encoder_states,
                                   Var first_decoder_states, std::span<const int> prefix);

struct TokenizedUtterance {
  std::vector<int> transcript;
  std::vector<int> translation;
  Lang source = Lang::L1;  // gold matrix language
  Lang target = Lang::L2;  // language of the translation
};
TokenizedUtterance tokenize(const Vocabulary& vocab, const Utterance& u);

struct LossWeights {
  double transcript = 1.0;
  double translation = 1.0;
};

struct JointOutput {
  Var transcript_logits;
  Var translation_logits;
  Var transcript_states;  // first-decoder states fed to the translation pass
  Var loss_transcript;
  Var loss_translation;
  Var loss;  // weighted sum
};

// Decoder input is controls ++ tokens; the logits at positions
// |controls| - 1 .. end predict tokens ++ [eos]. For E2E kinds the
// translation pass attends to the transcript pass's hidden states over
// controls ++ transcript, computed from the gold transcript unless
// `realized_transcript` is given. For cascades the two losses belong to the
// independent ASR and MT components, and the MT encoder reads the gold (or
// realized) transcript.
JointOutput forward_joint(Ctx& c, const Model& m, const Route& r, const Mat& frames,
                          const TokenizedUtterance& tok, const LossWeights& w = {},
                          const std::vector<int>* realized_transcript = nullptr);

// ---------------------------------------------------------------------------
// Language identification

class LidClassifier {
 public:
  ModelDims dims;
  std::uint64_t seed = 0;
  ParameterRegistry registry;

  LidClassifier() = default;
  LidClassifier(LidClassifier&&) = default;
  LidClassifier& operator=(LidClassifier&&) = default;

  static LidClassifier build(const ModelDims& dims, std::uint64_t seed);
  // 1 x 2 logits, column i scoring Lang i.
  Var logits(Ctx& c, const Mat& frames) const;
  std::array<double, 2> probabilities(const Mat& frames) const;
  Lang predict(const Mat& frames) const;

  Linear& head() { return head_; }

 private:
  Linear input_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
  Linear head_;
};

}  // namespace csst
