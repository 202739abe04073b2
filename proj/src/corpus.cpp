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

#include "csst/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "csst/text.hpp"
#include "json.hpp"

namespace csst {

using json = nlohmann::json;

std::vector<std::string> TaggedTranscript::surfaces() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

std::string TaggedTranscript::text() const { return text::join(surfaces()); }

std::size_t TaggedTranscript::count(Lang l) const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [l](const TaggedToken& t) { return t.lang == l; }));
}

// ---------------------------------------------------------------------------
// Parsers

namespace {

bool all_punctuation(std::string_view s) {
  const std::u32string u = text::utf8_decode(s);
  return !u.empty() && std::all_of(u.begin(), u.end(), text::is_unicode_punctuation);
}

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_ascii_space(s[b])) ++b;
  while (e > b && is_ascii_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Maps a language name or CHAT code to a tag, case-insensitively.
std::optional<Lang> resolve_language(std::string_view value, const LanguageNames& names) {
  const std::string v = text::lowercase(value);
  if (v == text::lowercase(names.l1) || v == text::lowercase(names.l1_chat)) return Lang::L1;
  if (v == text::lowercase(names.l2) || v == text::lowercase(names.l2_chat)) return Lang::L2;
  return std::nullopt;
}

}  // namespace

TaggedTranscript parse_fisher_annotation(std::string_view raw, Lang matrix_default,
                                         const LanguageNames& names) {
  TaggedTranscript out;
  bool in_foreign = false;
  Lang foreign_lang = matrix_default;
  std::size_t open_offset = 0;
  bool glued = false;  // previous item was a closing tag with no whitespace after it

  std::size_t i = 0;
  while (i < raw.size()) {
    const char c = raw[i];
    if (c == '<') {
      const std::size_t close = raw.find('>', i);
      if (close == std::string_view::npos) throw ParseError("unterminated tag", i);
      const std::string tag = trim(raw.substr(i + 1, close - i - 1));
      if (tag == "/foreign" || tag == "\\foreign") {
        if (!in_foreign) throw ParseError("closing foreign tag without an open span", i);
        in_foreign = false;
        glued = true;
      } else if (tag.rfind("foreign", 0) == 0 &&
                 (tag.size() == 7 || is_ascii_space(tag[7]))) {
        if (in_foreign) throw ParseError("nested foreign tag", i);
        const std::size_t attr = tag.find("lang=\"");
        if (attr == std::string::npos) throw ParseError("foreign tag without lang attribute", i);
        const std::size_t vb = attr + 6;
        const std::size_t ve = tag.find('"', vb);
        if (ve == std::string::npos) throw ParseError("unterminated lang attribute", i);
        const std::string value = tag.substr(vb, ve - vb);
        const auto lang = resolve_language(value, names);
        if (!lang) throw ParseError("unknown lang attribute \"" + value + "\"", i);
        in_foreign = true;
        foreign_lang = *lang;
        open_offset = i;
        glued = false;
      } else {
        throw ParseError("unsupported tag <" + tag + ">", i);
      }
      i = close + 1;
      continue;
    }
    if (is_ascii_space(c)) {
      glued = false;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && raw[j] != '<' && !is_ascii_space(raw[j])) ++j;
    const std::string word(raw.substr(i, j - i));
    if (glued && !out.tokens.empty()) {
      if (!all_punctuation(word))
        throw ParseError("text '" + word + "' glued to a closing tag (intra-word mixing)", i);
      out.tokens.back().surface += word;
    } else {
      out.tokens.push_back({word, in_foreign ? foreign_lang : matrix_default});
    }
    glued = false;
    i = j;
  }
  if (in_foreign) throw ParseError("unclosed foreign tag", open_offset);
  return out;
}

TaggedTranscript parse_chat_annotation(std::string_view raw, Lang matrix_default,
                                       const LanguageNames& names) {
  TaggedTranscript out;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (is_ascii_space(raw[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && !is_ascii_space(raw[j])) ++j;
    const std::string tok(raw.substr(i, j - i));
    const std::size_t at = i;
    i = j;

    if (tok == "[/]" || tok == "(.)") continue;
    const std::size_t suffix = tok.find("@s:");
    if (suffix != std::string::npos) {
      const std::string word = tok.substr(0, suffix);
      const std::string code = tok.substr(suffix + 3);
      if (word.empty()) throw ParseError("language suffix without a word", at);
      const auto lang = resolve_language(code, names);
      if (!lang || code.empty()) throw ParseError("unrecognized @s: code '" + code + "'", at);
      out.tokens.push_back({word, *lang});
      continue;
    }
    if (tok.find_first_of("[]()<>@&+=*%") != std::string::npos || all_punctuation(tok))
      throw ParseError("unsupported CHAT construct '" + tok + "'", at);
    out.tokens.push_back({tok, matrix_default});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labeling and splitting

double cs_proportion(const TaggedTranscript& t) {
  if (t.empty()) throw Error("cs_proportion: empty transcript");
  const std::size_t minority = std::min(t.count(Lang::L1), t.count(Lang::L2));
  return static_cast<double>(minority) / static_cast<double>(t.tokens.size());
}

double cs_proportion(const TaggedTranscript& t, Lang matrix) {
  if (t.empty()) throw Error("cs_proportion: empty transcript");
  return static_cast<double>(t.count(other(matrix))) / static_cast<double>(t.tokens.size());
}

bool is_tie(const TaggedTranscript& t) { return t.count(Lang::L1) == t.count(Lang::L2); }

Lang matrix_language(const TaggedTranscript& t, std::uint64_t seed) {
  if (t.empty()) throw Error("matrix_language: empty transcript");
  const std::size_t n1 = t.count(Lang::L1);
  const std::size_t n2 = t.count(Lang::L2);
  if (n1 > n2) return Lang::L1;
  if (n2 > n1) return Lang::L2;
  return (splitmix64(seed) & 1ULL) ? Lang::L2 : Lang::L1;
}

std::uint64_t tie_break_seed(std::string_view utterance_id) { return fnv1a(utterance_id); }

CorpusSplit split_corpus(std::vector<Utterance> utts) {
  CorpusSplit split;
  std::set<std::string> seen;
  for (auto& u : utts) {
    if (!seen.insert(u.id).second) throw Error("split_corpus: duplicate utterance id '" + u.id + "'");
    if (u.transcript.empty()) throw Error("split_corpus: utterance '" + u.id + "' has no tokens");
    u.matrix_lang = matrix_language(u.transcript, tie_break_seed(u.id));
    if (is_tie(u.transcript)) split.provenance.tie_breaks.emplace(u.id, u.matrix_lang);
    const bool cs = u.is_code_switched();
    split.provenance.mapping.emplace_back(u.id, cs ? "cs" : "mono");
    (cs ? split.cs_set : split.mono_set).push_back(std::move(u));
  }
  return split;
}

std::vector<Utterance> filter_by_duration(std::vector<Utterance> utts, int max_frames) {
  if (max_frames <= 0) throw Error("filter_by_duration: max_frames must be positive");
  const auto before = utts.size();
  std::erase_if(utts, [max_frames](const Utterance& u) { return u.duration_frames > max_frames; });
  spdlog::debug("filter_by_duration: removed {} of {} utterances longer than {} frames",
                before - utts.size(), before, max_frames);
  return utts;
}

int proportion_bucket(std::size_t k, std::size_t n) {
  if (n == 0) throw Error("proportion_bucket: empty transcript");
  if (k == 0) return -1;
  // ceil(20 k / n) - 1, exact in integers
  const std::size_t b = (20 * k + n - 1) / n - 1;
  return static_cast<int>(std::min<std::size_t>(b, CorpusStats::kBuckets - 1));
}

CorpusStats corpus_stats(const CorpusSplit& split) {
  CorpusStats s;
  s.n_cs = split.cs_set.size();
  s.n_mono = split.mono_set.size();
  std::array<std::size_t, 2> matrix{};
  for (const auto& u : split.cs_set) {
    s.frames_cs += static_cast<std::size_t>(u.duration_frames);
    ++matrix[static_cast<std::size_t>(index_of(u.matrix_lang))];
    const std::size_t k = u.transcript.count(other(u.matrix_lang));
    const int b = proportion_bucket(k, u.transcript.tokens.size());
    if (b >= 0) ++s.histogram[static_cast<std::size_t>(b)];
  }
  for (const auto& u : split.mono_set) {
    s.frames_mono += static_cast<std::size_t>(u.duration_frames);
    ++matrix[static_cast<std::size_t>(index_of(u.matrix_lang))];
  }
  const double total = static_cast<double>(s.n_cs + s.n_mono);
  if (total > 0)
    for (int l = 0; l < 2; ++l) s.matrix_distribution[l] = static_cast<double>(matrix[l]) / total;
  s.hours_cs = static_cast<double>(s.frames_cs) / CorpusStats::kNominalFrameRate / 3600.0;
  s.hours_mono = static_cast<double>(s.frames_mono) / CorpusStats::kNominalFrameRate / 3600.0;
  return s;
}

// ---------------------------------------------------------------------------
// Toy corpus

std::string_view toy_inventory(Lang l) {
  return l == Lang::L1 ? std::string_view("abcdefghijklm") : std::string_view("nopqrstuvwxyz");
}

void ToyCorpusConfig::validate() const {
  if (max_cs_proportion > 0.5)
    throw Error("toy config: max_cs_proportion must be <= 0.5 (minority language)");
  if (max_cs_proportion < 0.0) throw Error("toy config: max_cs_proportion must be >= 0");
  if (cs_rate < 0.0 || cs_rate > 1.0) throw Error("toy config: cs_rate must be a probability");
  if (l1_matrix_rate < 0.0 || l1_matrix_rate > 1.0)
    throw Error("toy config: l1_matrix_rate must be a probability");
  if (vocab_size_per_lang < 1) throw Error("toy config: vocab_size_per_lang must be >= 1");
  if (phoneme_dim < 1) throw Error("toy config: phoneme_dim must be >= 1");
  if (noise_sigma < 0.0) throw Error("toy config: noise_sigma must be >= 0");
  if (sentence_len_min < 1 || sentence_len_max < sentence_len_min)
    throw Error("toy config: bad sentence length range");
  if (word_len_min < 1 || word_len_max < word_len_min)
    throw Error("toy config: bad word length range");
  if (max_stretch < 1) throw Error("toy config: max_stretch must be >= 1");
  if (n_train < 0 || n_dev < 0 || n_test < 0) throw Error("toy config: negative split size");
  if (max_frames < 0) throw Error("toy config: max_frames must be >= 0");
  double capacity = 0.0;
  const double letters = static_cast<double>(toy_inventory(Lang::L1).size());
  for (int len = word_len_min; len <= word_len_max; ++len) capacity += std::pow(letters, len);
  if (capacity < vocab_size_per_lang) throw Error("toy config: word lengths too short for vocabulary");
}

KeyValues ToyCorpusConfig::to_kv() const {
  KeyValues kv;
  kv["vocab_size_per_lang"] = std::to_string(vocab_size_per_lang);
  kv["phoneme_dim"] = std::to_string(phoneme_dim);
  kv["noise_sigma"] = format_double(noise_sigma);
  kv["cs_rate"] = format_double(cs_rate);
  kv["max_cs_proportion"] = format_double(max_cs_proportion);
  kv["sentence_len_min"] = std::to_string(sentence_len_min);
  kv["sentence_len_max"] = std::to_string(sentence_len_max);
  kv["word_len_min"] = std::to_string(word_len_min);
  kv["word_len_max"] = std::to_string(word_len_max);
  kv["max_stretch"] = std::to_string(max_stretch);
  kv["l1_matrix_rate"] = format_double(l1_matrix_rate);
  kv["n_train"] = std::to_string(n_train);
  kv["n_dev"] = std::to_string(n_dev);
  kv["n_test"] = std::to_string(n_test);
  kv["max_frames"] = std::to_string(max_frames);
  kv["seed"] = std::to_string(seed);
  kv["l1_name"] = names.l1;
  kv["l2_name"] = names.l2;
  kv["l1_chat"] = names.l1_chat;
  kv["l2_chat"] = names.l2_chat;
  return kv;
}

ToyCorpusConfig ToyCorpusConfig::from_kv(const KeyValues& kv, bool require_all) {
  ToyCorpusConfig c;
  const KeyValues defaults = c.to_kv();
  for (const auto& [k, v] : kv) {
    if (!defaults.count(k)) throw Error("toy config: unknown key '" + k + "'");
    auto to_int = [&] { return static_cast<int>(parse_int(v, k)); };
    if (k == "vocab_size_per_lang") c.vocab_size_per_lang = to_int();
    else if (k == "phoneme_dim") c.phoneme_dim = to_int();
    else if (k == "noise_sigma") c.noise_sigma = parse_double(v, k);
    else if (k == "cs_rate") c.cs_rate = parse_double(v, k);
    else if (k == "max_cs_proportion") c.max_cs_proportion = parse_double(v, k);
    else if (k == "sentence_len_min") c.sentence_len_min = to_int();
    else if (k == "sentence_len_max") c.sentence_len_max = to_int();
    else if (k == "word_len_min") c.word_len_min = to_int();
    else if (k == "word_len_max") c.word_len_max = to_int();
    else if (k == "max_stretch") c.max_stretch = to_int();
    else if (k == "l1_matrix_rate") c.l1_matrix_rate = parse_double(v, k);
    else if (k == "n_train") c.n_train = to_int();
    else if (k == "n_dev") c.n_dev = to_int();
    else if (k == "n_test") c.n_test = to_int();
    else if (k == "max_frames") c.max_frames = to_int();
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_int(v, k));
    else if (k == "l1_name") c.names.l1 = v;
    else if (k == "l2_name") c.names.l2 = v;
    else if (k == "l1_chat") c.names.l1_chat = v;
    else if (k == "l2_chat") c.names.l2_chat = v;
  }
  if (require_all)
    for (const auto& [k, v] : defaults)
      if (!kv.count(k)) throw Error("toy config: missing key '" + k + "'");
  c.validate();
  return c;
}

std::string ToyCorpusConfig::to_text() const { return format_key_values(to_kv(), "#cs-toy-config v1"); }

ToyCorpusConfig ToyCorpusConfig::from_text(std::string_view text) {
  return from_kv(parse_key_values(text, "#cs-toy-config v1"), true);
}

ToyLexicon ToyLexicon::generate(const ToyCorpusConfig& cfg) {
  ToyLexicon lex;
  for (Lang l : {Lang::L1, Lang::L2}) {
    Rng rng(derive_seed(cfg.seed, std::string("lexicon:") + std::string(to_string(l))));
    const std::string_view inv = toy_inventory(l);
    std::set<std::string> used;
    auto& words = lex.words[static_cast<std::size_t>(index_of(l))];
    while (static_cast<int>(words.size()) < cfg.vocab_size_per_lang) {
      const auto len = rng.uniform_int(cfg.word_len_min, cfg.word_len_max);
      std::string w;
      for (std::int64_t k = 0; k < len; ++k)
        w.push_back(inv[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(inv.size()) - 1))]);
      if (used.insert(w).second) words.push_back(w);
    }
  }
  return lex;
}

std::pair<int, Lang> ToyLexicon::lookup(std::string_view surface) const {
  for (Lang l : {Lang::L1, Lang::L2}) {
    const auto& ws = words[static_cast<std::size_t>(index_of(l))];
    auto it = std::find(ws.begin(), ws.end(), surface);
    if (it != ws.end()) return {static_cast<int>(it - ws.begin()), l};
  }
  return {-1, Lang::L1};
}

std::string ToyLexicon::translate(const TaggedTranscript& t, Lang target) const {
  std::vector<std::string> out;
  for (const auto& tok : t.tokens) {
    const auto [id, lang] = lookup(tok.surface);
    if (id < 0) throw Error("toy lexicon: unknown word '" + tok.surface + "'");
    out.push_back(word(target, id));
  }
  return text::join(out);
}

ToyPhonetics::ToyPhonetics(const ToyCorpusConfig& cfg) : dim_(cfg.phoneme_dim) {
  std::string symbols = " ";
  symbols += toy_inventory(Lang::L1);
  symbols += toy_inventory(Lang::L2);
  for (char c : symbols) {
    Rng rng(derive_seed(cfg.seed, std::string("phone:") + c));
    Eigen::RowVectorXd e(dim_);
    for (int k = 0; k < dim_; ++k) e(k) = rng.normal();
    table_.emplace(c, std::move(e));
  }
}

const Eigen::RowVectorXd& ToyPhonetics::embedding(char c) const {
  auto it = table_.find(c);
  if (it == table_.end())
    throw Error(std::string("synthesize_features: character '") + c + "' is in no toy inventory");
  return it->second;
}

Mat synthesize_features(const TaggedTranscript& t, const ToyCorpusConfig& cfg,
                        std::uint64_t seed) {
  return synthesize_features(t, cfg, ToyPhonetics(cfg), seed);
}

Mat synthesize_features(const TaggedTranscript& t, const ToyCorpusConfig& cfg,
                        const ToyPhonetics& phon, std::uint64_t seed) {
  const std::string chars = t.text();
  if (chars.empty()) throw Error("synthesize_features: empty transcript");
  Rng rng(seed);
  std::vector<int> reps(chars.size());
  int total = 0;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    phon.embedding(chars[i]);  // validates the character
    reps[i] = static_cast<int>(rng.uniform_int(1, cfg.max_stretch));
    total += reps[i];
  }
  Mat frames(total, phon.dim());
  int row = 0;
  for (std::size_t i = 0; i < chars.size(); ++i)
    for (int r = 0; r < reps[i]; ++r) frames.row(row++) = phon.embedding(chars[i]);
  if (cfg.noise_sigma > 0.0)
    for (Eigen::Index k = 0; k < frames.size(); ++k) frames.data()[k] += cfg.noise_sigma * rng.normal();
  return frames;
}

namespace {

std::string pad_id(std::string_view pool, int i) {
  std::ostringstream os;
  os << pool << '-';
  os.width(5);
  os.fill('0');
  os << i;
  return os.str();
}

std::vector<Utterance> generate_pool(const ToyCorpusConfig& cfg, const ToyLexicon& lex,
                                     const ToyPhonetics& phon, std::string_view pool, int n) {
  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Utterance u;
    u.id = pad_id(pool, i);
    Rng rng(derive_seed(cfg.seed, "utt:" + u.id));
    const int len = static_cast<int>(rng.uniform_int(cfg.sentence_len_min, cfg.sentence_len_max));
    std::vector<int> concepts(static_cast<std::size_t>(len));
    for (int& c : concepts) c = static_cast<int>(rng.uniform_int(0, cfg.vocab_size_per_lang - 1));
    const Lang base = rng.bernoulli(cfg.l1_matrix_rate) ? Lang::L1 : Lang::L2;
    const bool switched = rng.bernoulli(cfg.cs_rate);
    std::vector<Lang> langs(static_cast<std::size_t>(len), base);
    // Largest span that keeps the embedded language at or below the cap.
    const int max_span = static_cast<int>(std::floor(cfg.max_cs_proportion * len + 1e-9));
    if (switched && max_span >= 1) {
      const int k = static_cast<int>(rng.uniform_int(1, max_span));
      const int start = static_cast<int>(rng.uniform_int(0, len - k));
      for (int j = start; j < start + k; ++j) langs[static_cast<std::size_t>(j)] = other(base);
    }
    for (int j = 0; j < len; ++j) {
      const Lang l = langs[static_cast<std::size_t>(j)];
      u.transcript.tokens.push_back({lex.word(l, concepts[static_cast<std::size_t>(j)]), l});
    }
    u.matrix_lang = matrix_language(u.transcript, tie_break_seed(u.id));
    u.translation = lex.translate(u.transcript, other(u.matrix_lang));
    u.frames_seed = derive_seed(cfg.seed, "frames:" + u.id);
    u.frames = synthesize_features(u.transcript, cfg, phon, u.frames_seed);
    u.duration_frames = static_cast<int>(u.frames.rows());
    out.push_back(std::move(u));
  }
  if (cfg.max_frames > 0) out = filter_by_duration(std::move(out), cfg.max_frames);
  return out;
}

void merge_provenance(SplitProvenance& into, const SplitProvenance& from, std::string_view pool) {
  for (const auto& [id, s] : from.mapping) into.mapping.emplace_back(id, std::string(pool) + "_" + s);
  for (const auto& kv : from.tie_breaks) into.tie_breaks.insert(kv);
}

}  // namespace

ToyCorpus generate_toy_corpus(const ToyCorpusConfig& cfg) {
  cfg.validate();
  ToyCorpus c;
  c.config = cfg;
  c.lexicon = ToyLexicon::generate(cfg);
  const ToyPhonetics phon(cfg);

  CorpusSplit train = split_corpus(generate_pool(cfg, c.lexicon, phon, "train", cfg.n_train));
  CorpusSplit dev = split_corpus(generate_pool(cfg, c.lexicon, phon, "dev", cfg.n_dev));
  CorpusSplit test = split_corpus(generate_pool(cfg, c.lexicon, phon, "test", cfg.n_test));
  c.train_mono = std::move(train.mono_set);
  c.train_cs = std::move(train.cs_set);
  c.dev_cs = std::move(dev.cs_set);
  c.dev_mono = std::move(dev.mono_set);
  c.test_cs = std::move(test.cs_set);
  c.test_mono = std::move(test.mono_set);
  merge_provenance(c.provenance, train.provenance, "train");
  merge_provenance(c.provenance, dev.provenance, "dev");
  merge_provenance(c.provenance, test.provenance, "test");
  return c;
}

std::uint64_t ToyCorpus::hash() const {
  std::uint64_t h = fnv1a(config.to_text());
  for (const auto& ws : lexicon.words)
    for (const auto& w : ws) h = hash_combine(h, fnv1a(w));
  for (const auto* set : {&train_mono, &train_cs, &dev_cs, &dev_mono, &test_cs, &test_mono}) {
    h = hash_combine(h, set->size());
    for (const auto& u : *set) {
      h = hash_combine(h, fnv1a(u.id));
      h = hash_combine(h, fnv1a(u.transcript.text()));
      for (const auto& t : u.transcript.tokens) h = hash_combine(h, static_cast<std::uint64_t>(t.lang));
      h = hash_combine(h, fnv1a(u.translation));
      h = hash_combine(h, static_cast<std::uint64_t>(u.matrix_lang));
      h = hash_combine(h, hash_matrix(u.frames));
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json record_to_json(const CorpusRecord& r) {
  json tokens = json::array();
  for (const auto& t : r.utt.transcript.tokens)
    tokens.push_back({{"surface", t.surface}, {"lang", std::string(to_string(t.lang))}});
  json j;
  j["id"] = r.utt.id;
  j["split"] = r.split;
  j["frames_seed"] = r.utt.frames_seed;
  j["duration_frames"] = r.utt.duration_frames;
  j["tokens"] = std::move(tokens);
  j["translation"] = r.utt.translation;
  j["matrix_lang"] = std::string(to_string(r.utt.matrix_lang));
  return j;
}

CorpusRecord record_from_json(const json& j) {
  CorpusRecord r;
  r.utt.id = j.at("id").get<std::string>();
  r.split = j.at("split").get<std::string>();
  if (j.contains("frames_seed") && !j.at("frames_seed").is_null())
    r.utt.frames_seed = j.at("frames_seed").get<std::uint64_t>();
  r.utt.duration_frames = j.value("duration_frames", 0);
  for (const auto& t : j.at("tokens"))
    r.utt.transcript.tokens.push_back(
        {t.at("surface").get<std::string>(), lang_from_string(t.at("lang").get<std::string>())});
  r.utt.translation = j.at("translation").get<std::string>();
  r.utt.matrix_lang = lang_from_string(j.at("matrix_lang").get<std::string>());
  return r;
}

std::vector<std::string> read_versioned_lines(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kCorpusHeader)
    throw Error("'" + path.string() + "': expected header '" + std::string(kCorpusHeader) + "'");
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace

void write_corpus_records(const std::filesystem::path& path,
                          const std::vector<CorpusRecord>& records) {
  std::string out(kCorpusHeader);
  out += '\n';
  for (const auto& r : records) out += record_to_json(r).dump() + '\n';
  write_file_atomic(path, out);
}

std::vector<CorpusRecord> read_corpus_records(const std::filesystem::path& path) {
  std::vector<CorpusRecord> out;
  int lineno = 1;
  for (const auto& line : read_versioned_lines(path)) {
    ++lineno;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error("'" + path.string() + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_split_mapping(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, std::string>>& mapping) {
  std::string out(kCorpusHeader);
  out += '\n';
  for (const auto& [id, split] : mapping) out += id + '\t' + split + '\n';
  write_file_atomic(path, out);
}

std::vector<std::pair<std::string, std::string>> read_split_mapping(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& line : read_versioned_lines(path)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("split mapping: missing tab in '" + line + "'");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

namespace {

std::string lexicon_text(const ToyLexicon& lex) {
  std::string out = "#cs-lexicon v1\n";
  for (std::size_t i = 0; i < lex.words[0].size(); ++i)
    out += lex.words[0][i] + '\t' + lex.words[1][i] + '\n';
  return out;
}

}  // namespace

void save_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "config.txt", corpus.config.to_text());
  write_file_atomic(dir / "lexicon.txt", lexicon_text(corpus.lexicon));

  std::vector<CorpusRecord> records;
  auto add = [&records](const std::vector<Utterance>& set, const char* name) {
    for (const auto& u : set) records.push_back({u, name});
  };
  add(corpus.train_mono, "train_mono");
  add(corpus.train_cs, "train_cs");
  add(corpus.dev_cs, "dev_cs");
  add(corpus.dev_mono, "dev_mono");
  add(corpus.test_cs, "test_cs");
  add(corpus.test_mono, "test_mono");
  write_corpus_records(dir / "corpus.jsonl", records);
  write_split_mapping(dir / "splits.tsv", corpus.provenance.mapping);
  std::vector<std::pair<std::string, std::string>> ties;
  for (const auto& [id, l] : corpus.provenance.tie_breaks) ties.emplace_back(id, std::string(to_string(l)));
  write_split_mapping(dir / "tie_breaks.tsv", ties);
}

ToyCorpus load_toy_corpus(const std::filesystem::path& dir) {
  ToyCorpus c;
  c.config = ToyCorpusConfig::from_text(read_file(dir / "config.txt"));
  c.lexicon = ToyLexicon::generate(c.config);
  if (read_file(dir / "lexicon.txt") != lexicon_text(c.lexicon))
    throw Error("lexicon.txt does not match the lexicon generated from config.txt");
  const ToyPhonetics phon(c.config);
  for (auto& r : read_corpus_records(dir / "corpus.jsonl")) {
    r.utt.frames = synthesize_features(r.utt.transcript, c.config, phon, r.utt.frames_seed);
    if (r.utt.duration_frames != r.utt.frames.rows())
      throw Error("corpus record '" + r.utt.id + "': regenerated frame count does not match");
    std::vector<Utterance>* target = nullptr;
    if (r.split == "train_mono") target = &c.train_mono;
    else if (r.split == "train_cs") target = &c.train_cs;
    else if (r.split == "dev_cs") target = &c.dev_cs;
    else if (r.split == "dev_mono") target = &c.dev_mono;
    else if (r.split == "test_cs") target = &c.test_cs;
    else if (r.split == "test_mono") target = &c.test_mono;
    else throw Error("corpus record '" + r.utt.id + "': unknown split '" + r.split + "'");
    target->push_back(std::move(r.utt));
  }
  c.provenance.mapping = read_split_mapping(dir / "splits.tsv");
  for (const auto& [id, l] : read_split_mapping(dir / "tie_breaks.tsv"))
    c.provenance.tie_breaks.emplace(id, lang_from_string(l));
  return c;
}

}  // namespace csst
