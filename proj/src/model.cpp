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

#include "csst/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csst/text.hpp"

namespace csst {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<Lang> langs)
    : words_(std::move(words)), langs_(std::move(langs)) {
  if (words_.size() != langs_.size()) throw Error("vocabulary: words and languages differ in size");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty() || text::split_whitespace(words_[i]).size() != 1)
      throw Error("vocabulary: invalid word '" + words_[i] + "'");
    if (!index_.emplace(words_[i], kNumControlTokens + static_cast<int>(i)).second)
      throw Error("vocabulary: duplicate word '" + words_[i] + "'");
  }
}

Vocabulary Vocabulary::from_lexicon(const ToyLexicon& lex) {
  std::vector<std::string> words;
  std::vector<Lang> langs;
  for (Lang l : {Lang::L1, Lang::L2})
    for (const auto& w : lex.words[index_of(l)]) {
      words.push_back(w);
      langs.push_back(l);
    }
  return Vocabulary(std::move(words), std::move(langs));
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.count(std::string(word)) > 0;
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) throw Error("vocabulary: unknown word '" + std::string(word) + "'");
  return it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < kNumControlTokens || id >= size())
    throw Error("vocabulary: id " + std::to_string(id) + " is not a word");
  return words_[static_cast<std::size_t>(id - kNumControlTokens)];
}

Lang Vocabulary::lang(int id) const {
  if (id < kNumControlTokens || id >= size())
    throw Error("vocabulary: id " + std::to_string(id) + " is not a word");
  return langs_[static_cast<std::size_t>(id - kNumControlTokens)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : text::split_whitespace(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> words;
  for (int i : ids) {
    if (i < 0 || i >= size()) throw Error("vocabulary: id " + std::to_string(i) + " out of range");
    if (!is_control(i)) words.push_back(word(i));
  }
  return text::join(words);
}

Lang Vocabulary::majority_lang(std::span<const int> ids) const {
  std::array<int, 2> counts{};
  std::optional<Lang> first;
  for (int i : ids) {
    if (is_control(i)) continue;
    const Lang l = lang(i);
    if (!first) first = l;
    ++counts[static_cast<std::size_t>(index_of(l))];
  }
  if (counts[0] > counts[1]) return Lang::L1;
  if (counts[1] > counts[0]) return Lang::L2;
  return first.value_or(Lang::L1);
}

std::vector<int> transcript_controls() {
  return {token_id(ControlToken::bos), token_id(ControlToken::task_transcribe)};
}

std::vector<int> translation_controls(Lang target) {
  return {token_id(ControlToken::bos), token_id(ControlToken::task_translate), lang_token(target)};
}

// ---------------------------------------------------------------------------
// Kinds and dims

std::string_view to_string(ArchitectureKind k) {
  switch (k) {
    case ArchitectureKind::CascadeUnidirect: return "CascadeUnidirect";
    case ArchitectureKind::CascadeUniSharedEnc: return "CascadeUniSharedEnc";
    case ArchitectureKind::CascadeBidirect: return "CascadeBidirect";
    case ArchitectureKind::E2EUnidirect: return "E2EUnidirect";
    case ArchitectureKind::E2EBidirectByLang: return "E2EBidirectByLang";
    case ArchitectureKind::E2EBidirectByTask: return "E2EBidirectByTask";
    case ArchitectureKind::E2EBidirectShared: return "E2EBidirectShared";
  }
  return "?";
}

ArchitectureKind architecture_from_string(std::string_view s) {
  for (ArchitectureKind k : kAllArchitectures)
    if (to_string(k) == s) return k;
  throw Error("unknown architecture '" + std::string(s) + "'");
}

bool is_cascade(ArchitectureKind k) {
  return k == ArchitectureKind::CascadeUnidirect || k == ArchitectureKind::CascadeUniSharedEnc ||
         k == ArchitectureKind::CascadeBidirect;
}

bool is_lid_gated(ArchitectureKind k) {
  return k == ArchitectureKind::CascadeUnidirect || k == ArchitectureKind::CascadeUniSharedEnc ||
         k == ArchitectureKind::E2EUnidirect || k == ArchitectureKind::E2EBidirectByLang;
}

void ModelDims::validate() const {
  if (feat_dim < 1) throw Error("dims: feat_dim must be positive");
  if (d_model < 1 || n_heads < 1) throw Error("dims: d_model and n_heads must be positive");
  if (d_model % n_heads != 0) throw Error("dims: d_model must be divisible by n_heads");
  if (n_enc_layers < 1 || n_dec_layers < 1) throw Error("dims: layer counts must be positive");
  if (ffn_dim < 1) throw Error("dims: ffn_dim must be positive");
  if (vocab <= kNumControlTokens) throw Error("dims: vocab must include the control tokens and words");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dims: dropout must lie in [0, 1)");
  for (int s : bridge_strides)
    if (s < 1) throw Error("dims: bridge strides must be positive");
}

KeyValues ModelDims::to_kv() const {
  KeyValues kv;
  kv["feat_dim"] = std::to_string(feat_dim);
  kv["d_model"] = std::to_string(d_model);
  kv["n_heads"] = std::to_string(n_heads);
  kv["n_enc_layers"] = std::to_string(n_enc_layers);
  kv["n_dec_layers"] = std::to_string(n_dec_layers);
  kv["ffn_dim"] = std::to_string(ffn_dim);
  kv["vocab"] = std::to_string(vocab);
  kv["dropout"] = format_double(dropout);
  std::string strides;
  for (std::size_t i = 0; i < bridge_strides.size(); ++i)
    strides += (i ? "," : "") + std::to_string(bridge_strides[i]);
  kv["bridge_strides"] = strides;
  return kv;
}

ModelDims ModelDims::from_kv(const KeyValues& kv) {
  auto get = [&kv](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(std::string("dims: missing key '") + key + "'");
    return it->second;
  };
  auto geti = [&](const char* key) { return static_cast<int>(parse_int(get(key), key)); };
  ModelDims d;
  d.feat_dim = geti("feat_dim");
  d.d_model = geti("d_model");
  d.n_heads = geti("n_heads");
  d.n_enc_layers = geti("n_enc_layers");
  d.n_dec_layers = geti("n_dec_layers");
  d.ffn_dim = geti("ffn_dim");
  d.vocab = geti("vocab");
  d.dropout = parse_double(get("dropout"), "dropout");
  d.bridge_strides.clear();
  std::stringstream ss(get("bridge_strides"));
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) d.bridge_strides.push_back(static_cast<int>(parse_int(item, "bridge_strides")));
  return d;
}

// ---------------------------------------------------------------------------
// Components

namespace {

Var add_positions(Ctx& c, Var x) {
  const Mat& v = c.tape.value(x);
  return ops::add(c.tape, x, c.tape.constant(sinusoidal_positions(static_cast<int>(v.rows()),
                                                                  static_cast<int>(v.cols()))));
}

void check_states(const Var& v, const Tape& t, int d_model, const char* what) {
  if (t.value(v).cols() != d_model)
    throw Error(std::string(what) + ": state width " + std::to_string(t.value(v).cols()) +
                " does not match d_model " + std::to_string(d_model));
}

}  // namespace

SpeechEncoder SpeechEncoder::make(ParameterRegistry& reg, const std::string& name,
                                  const ModelDims& dims, Rng& rng) {
  SpeechEncoder e;
  e.input = Linear::make(reg, name + ".input", kGroupSpeechEncoder, dims.feat_dim, dims.d_model, rng);
  for (int i = 0; i < dims.n_enc_layers; ++i)
    e.layers.push_back(EncoderLayer::make(reg, name + ".layer" + std::to_string(i),
                                          kGroupSpeechEncoder, dims.d_model, dims.n_heads,
                                          dims.ffn_dim, rng));
  e.final_norm = LayerNorm::make(reg, name + ".final_norm", kGroupSpeechEncoder, dims.d_model);
  e.bridge = Bridge::make(reg, name + ".bridge", dims.d_model, dims.bridge_strides, rng);
  return e;
}

Var SpeechEncoder::forward(Ctx& c, const Mat& frames) const {
  if (frames.rows() < 1) throw Error("encode: utterance has no frames");
  if (frames.cols() != input.w->value.rows())
    throw Error("encode: frame width " + std::to_string(frames.cols()) + " does not match feat_dim " +
                std::to_string(input.w->value.rows()));
  Var x = c.drop(add_positions(c, input.forward(c, c.tape.constant(frames))));
  for (const auto& l : layers) x = l.forward(c, x);
  return bridge.forward(c, final_norm.forward(c, x));
}

TextEncoder TextEncoder::make(ParameterRegistry& reg, const std::string& name,
                              const ModelDims& dims, Rng& rng) {
  TextEncoder e;
  e.embed = Embedding::make(reg, name + ".embed", kGroupTextEncoder, dims.vocab, dims.d_model, rng);
  for (int i = 0; i < dims.n_enc_layers; ++i)
    e.layers.push_back(EncoderLayer::make(reg, name + ".layer" + std::to_string(i),
                                          kGroupTextEncoder, dims.d_model, dims.n_heads,
                                          dims.ffn_dim, rng));
  e.final_norm = LayerNorm::make(reg, name + ".final_norm", kGroupTextEncoder, dims.d_model);
  return e;
}

Var TextEncoder::forward(Ctx& c, std::span<const int> ids) const {
  if (ids.empty()) throw Error("text encoder: empty input");
  Var x = c.drop(add_positions(c, embed.forward(c, ids)));
  for (const auto& l : layers) x = l.forward(c, x);
  return final_norm.forward(c, x);
}

Decoder Decoder::make(ParameterRegistry& reg, const std::string& name, const ModelDims& dims,
                      bool triangle, Rng& rng) {
  Decoder d;
  d.embed = Embedding::make(reg, name + ".embed", kGroupDecoder, dims.vocab, dims.d_model, rng);
  for (int i = 0; i < dims.n_dec_layers; ++i)
    d.layers.push_back(DecoderLayer::make(reg, name + ".layer" + std::to_string(i), dims.d_model,
                                          dims.n_heads, dims.ffn_dim, triangle, rng));
  d.final_norm = LayerNorm::make(reg, name + ".final_norm", kGroupDecoder, dims.d_model);
  d.out = Linear::make(reg, name + ".out", kGroupDecoder, dims.d_model, dims.vocab, rng);
  return d;
}

Decoder::Output Decoder::forward(Ctx& c, std::span<const int> ids, Var memory,
                                 std::optional<Var> first) const {
  if (ids.empty()) throw Error("decoder: empty prefix");
  const int vocab = static_cast<int>(embed.table->value.rows());
  const int d_model = static_cast<int>(embed.table->value.cols());
  for (int i : ids)
    if (i < 0 || i >= vocab) throw Error("decoder: unknown token id " + std::to_string(i));
  check_states(memory, c.tape, d_model, "decoder encoder-attention");
  if (first) check_states(*first, c.tape, d_model, "decoder first-decoder-attention");
  Var x = c.drop(add_positions(c, embed.forward(c, ids)));
  for (const auto& l : layers) x = l.forward(c, x, memory, first);
  Output o;
  o.hidden = final_norm.forward(c, x);
  o.logits = out.forward(c, o.hidden);
  return o;
}

// ---------------------------------------------------------------------------
// Model construction

const Route& Model::route(Lang source) const {
  return routes_.at(route_of_lang_[static_cast<std::size_t>(index_of(source))]);
}

std::vector<const Route*> Model::routes() const {
  std::vector<const Route*> out{&route(Lang::L1)};
  if (&route(Lang::L2) != out.front()) out.push_back(&route(Lang::L2));
  return out;
}

std::vector<std::string> Model::logical_slots() const {
  std::vector<std::string> slots;
  for (const Route* r : routes()) {
    slots.push_back(r->name + ".speech_encoder");
    if (is_cascade(kind)) {
      slots.push_back(r->name + ".asr_decoder");
      slots.push_back(r->name + ".mt_encoder");
      slots.push_back(r->name + ".mt_decoder");
    } else {
      slots.push_back(r->name + ".transcript_decoder");
      slots.push_back(r->name + ".translation_decoder");
    }
  }
  return slots;
}

namespace {

void alias_slot(ParameterRegistry& reg, const std::string& logical, const std::string& canonical) {
  const std::string prefix = canonical + ".";
  bool any = false;
  for (const auto& [name, p] : reg.params())
    if (name.compare(0, prefix.size(), prefix) == 0) {
      reg.alias(logical + name.substr(canonical.size()), name);
      any = true;
    }
  if (!any) throw Error("alias_slot: no parameters under '" + canonical + "'");
}

}  // namespace

Model build_model(ArchitectureKind kind, const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Model m;
  m.kind = kind;
  m.dims = dims;
  m.seed = seed;
  Rng rng(seed);
  auto& reg = m.registry;

  auto encoder = [&](const std::string& canonical) -> const SpeechEncoder* {
    auto it = m.encoders_.find(canonical);
    if (it == m.encoders_.end())
      it = m.encoders_.emplace(canonical, SpeechEncoder::make(reg, canonical, dims, rng)).first;
    return &it->second;
  };
  auto decoder = [&](const std::string& canonical, bool triangle) -> const Decoder* {
    auto it = m.decoders_.find(canonical);
    if (it == m.decoders_.end())
      it = m.decoders_.emplace(canonical, Decoder::make(reg, canonical, dims, triangle, rng)).first;
    return &it->second;
  };
  auto text_encoder = [&](const std::string& canonical) -> const TextEncoder* {
    auto it = m.text_encoders_.find(canonical);
    if (it == m.text_encoders_.end())
      it = m.text_encoders_.emplace(canonical, TextEncoder::make(reg, canonical, dims, rng)).first;
    return &it->second;
  };

  // Canonical storage per logical slot of one route.
  struct Plan {
    std::string encoder, transcript, translation, mt_encoder;
  };
  auto add_route = [&](const std::string& name, const Plan& p) {
    Route r;
    r.name = name;
    r.encoder = encoder(p.encoder);
    alias_slot(reg, name + ".speech_encoder", p.encoder);
    if (is_cascade(kind)) {
      r.transcript = decoder(p.transcript, false);
      r.mt_encoder = text_encoder(p.mt_encoder);
      r.translation = decoder(p.translation, false);
      alias_slot(reg, name + ".asr_decoder", p.transcript);
      alias_slot(reg, name + ".mt_encoder", p.mt_encoder);
      alias_slot(reg, name + ".mt_decoder", p.translation);
    } else {
      // The shared decoder serves both passes, so it is a triangle decoder.
      const bool shared = p.transcript == p.translation;
      r.transcript = decoder(p.transcript, shared);
      r.translation = decoder(p.translation, true);
      alias_slot(reg, name + ".transcript_decoder", p.transcript);
      alias_slot(reg, name + ".translation_decoder", p.translation);
    }
    m.routes_.emplace(name, std::move(r));
  };
  auto own = [&](const std::string& r) {
    if (is_cascade(kind))
      return Plan{r + ".speech_encoder", r + ".asr_decoder", r + ".mt_decoder", r + ".mt_encoder"};
    return Plan{r + ".speech_encoder", r + ".transcript_decoder", r + ".translation_decoder", ""};
  };

  switch (kind) {
    case ArchitectureKind::CascadeUnidirect:
    case ArchitectureKind::E2EUnidirect:
      for (const char* r : {"L1", "L2"}) add_route(r, own(r));
      m.route_of_lang_ = {"L1", "L2"};
      break;
    case ArchitectureKind::CascadeUniSharedEnc:
    case ArchitectureKind::E2EBidirectByLang:
      for (const char* r : {"L1", "L2"}) {
        Plan p = own(r);
        p.encoder = "shared.speech_encoder";
        add_route(r, p);
      }
      m.route_of_lang_ = {"L1", "L2"};
      break;
    case ArchitectureKind::CascadeBidirect:
    case ArchitectureKind::E2EBidirectByTask:
      add_route("bi", own("bi"));
      m.route_of_lang_ = {"bi", "bi"};
      break;
    case ArchitectureKind::E2EBidirectShared: {
      Plan p = own("bi");
      p.transcript = p.translation = "bi.joint_decoder";
      add_route("bi", p);
      m.route_of_lang_ = {"bi", "bi"};
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward passes

Var encode(Ctx& c, const Route& r, const Mat& frames) { return r.encoder->forward(c, frames); }

Decoder::Output decode_transcript(Ctx& c, const Decoder& d, Var encoder_states,
                                  std::span<const int> prefix) {
  return d.forward(c, prefix, encoder_states, std::nullopt);
}

Decoder::Output decode_translation(Ctx& c, const Decoder& d, Var encoder_states,
                                   Var first_decoder_states, std::span<const int> prefix) {
  return d.forward(c, prefix, encoder_states, first_decoder_states);
}

TokenizedUtterance tokenize(const Vocabulary& vocab, const Utterance& u) {
  TokenizedUtterance t;
  t.transcript = vocab.encode(u.transcript.text());
  t.translation = vocab.encode(u.translation);
  t.source = u.matrix_lang;
  t.target = other(u.matrix_lang);
  return t;
}

namespace {

std::vector<int> concat(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Cross-entropy of the logits that predict `tokens ++ [eos]`.
Var sequence_loss(Tape& t, Var logits, std::size_t n_controls, const std::vector<int>& tokens) {
  std::vector<int> rows(tokens.size() + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(n_controls - 1 + i);
  std::vector<int> targets = tokens;
  targets.push_back(token_id(ControlToken::eos));
  return ops::cross_entropy(t, ops::gather_rows(t, logits, rows), targets);
}

}  // namespace

JointOutput forward_joint(Ctx& c, const Model& m, const Route& r, const Mat& frames,
                          const TokenizedUtterance& tok, const LossWeights& w,
                          const std::vector<int>* realized_transcript) {
  Tape& t = c.tape;
  JointOutput o;
  const Var enc = encode(c, r, frames);
  const std::vector<int> tr_controls = transcript_controls();
  const Decoder::Output tr = decode_transcript(c, *r.transcript, enc, concat(tr_controls, tok.transcript));
  o.transcript_logits = tr.logits;
  o.loss_transcript = sequence_loss(t, tr.logits, tr_controls.size(), tok.transcript);

  const std::vector<int>& first_tokens = realized_transcript ? *realized_transcript : tok.transcript;
  const std::vector<int> st_controls = translation_controls(tok.target);
  const std::vector<int> st_input = concat(st_controls, tok.translation);
  Decoder::Output st;
  if (is_cascade(m.kind)) {
    std::vector<int> src = first_tokens;
    src.push_back(token_id(ControlToken::eos));
    const Var mt_states = r.mt_encoder->forward(c, src);
    o.transcript_states = mt_states;
    st = r.translation->forward(c, st_input, mt_states, std::nullopt);
  } else {
    o.transcript_states =
        realized_transcript
            ? decode_transcript(c, *r.transcript, enc, concat(tr_controls, *realized_transcript)).hidden
            : tr.hidden;
    st = decode_translation(c, *r.translation, enc, o.transcript_states, st_input);
  }
  o.translation_logits = st.logits;
  o.loss_translation = sequence_loss(t, st.logits, st_controls.size(), tok.translation);
  const std::array<Var, 2> parts{o.loss_transcript, o.loss_translation};
  const std::array<double, 2> weights{w.transcript, w.translation};
  o.loss = ops::weighted_sum(t, parts, weights);
  return o;
}

// ---------------------------------------------------------------------------
// Language identification

LidClassifier LidClassifier::build(const ModelDims& dims, std::uint64_t seed) {
  if (dims.feat_dim < 1 || dims.d_model < 1 || dims.n_heads < 1 || dims.d_model % dims.n_heads != 0)
    throw Error("lid: invalid dims");
  if (dims.n_enc_layers < 0 || dims.ffn_dim < 1) throw Error("lid: invalid dims");
  LidClassifier lid;
  lid.dims = dims;
  lid.seed = seed;
  Rng rng(seed);
  auto& reg = lid.registry;
  lid.input_ = Linear::make(reg, "lid.input", kGroupLid, dims.feat_dim, dims.d_model, rng);
  for (int i = 0; i < dims.n_enc_layers; ++i)
    lid.layers_.push_back(EncoderLayer::make(reg, "lid.layer" + std::to_string(i), kGroupLid,
                                             dims.d_model, dims.n_heads, dims.ffn_dim, rng));
  lid.final_norm_ = LayerNorm::make(reg, "lid.final_norm", kGroupLid, dims.d_model);
  lid.head_ = Linear::make(reg, "lid.head", kGroupLid, dims.d_model, 2, rng);
  return lid;
}

Var LidClassifier::logits(Ctx& c, const Mat& frames) const {
  if (frames.rows() < 1) throw Error("lid: utterance has no frames");
  Var x = c.drop(add_positions(c, input_.forward(c, c.tape.constant(frames))));
  for (const auto& l : layers_) x = l.forward(c, x);
  return head_.forward(c, ops::mean_rows(c.tape, final_norm_.forward(c, x)));
}

std::array<double, 2> LidClassifier::probabilities(const Mat& frames) const {
  Tape t(false);
  Ctx c{t};
  const Mat lp = log_softmax_rows(t.value(logits(c, frames)));
  return {std::exp(lp(0, 0)), std::exp(lp(0, 1))};
}

Lang LidClassifier::predict(const Mat& frames) const {
  const auto p = probabilities(frames);
  return p[1] > p[0] ? Lang::L2 : Lang::L1;
}

}  // namespace csst
