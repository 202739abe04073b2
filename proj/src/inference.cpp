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

#include "csst/inference.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "csst/text.hpp"
#include "json.hpp"

namespace csst {

using json = nlohmann::json;

std::string_view to_string(LidMode m) { return m == LidMode::oracle ? "oracle" : "predicted"; }

LidMode lid_mode_from_string(std::string_view s) {
  if (s == "oracle") return LidMode::oracle;
  if (s == "predicted") return LidMode::predicted;
  throw Error("unknown lid mode '" + std::string(s) + "'");
}

void DecodeConfig::validate() const {
  if (beam_size < 1) throw Error("decode: beam_size must be >= 1");
  if (max_len < 1) throw Error("decode: max_len must be >= 1");
  if (!std::isfinite(length_penalty)) throw Error("decode: length_penalty must be finite");
}

namespace {

struct Hyp {
  std::vector<int> tokens;
  double log_prob = 0.0;
};

double normalized(double log_prob, std::size_t length, double penalty) {
  return log_prob / std::pow(static_cast<double>(length), penalty);
}

}  // namespace

DecodeResult decode_sequence(const LogitsFn& logits_fn, std::span<const int> controls,
                             const DecodeConfig& cfg) {
  cfg.validate();
  if (controls.empty()) throw Error("decode: empty control prefix");
  const int eos = token_id(ControlToken::eos);
  const std::size_t beam = static_cast<std::size_t>(cfg.effective_beam());
  std::vector<Hyp> alive{Hyp{}};
  std::optional<DecodeResult> best;
  auto offer = [&](const Hyp& h, bool finished_by_eos) {
    DecodeResult r;
    r.tokens = h.tokens;
    r.log_prob = h.log_prob;
    r.truncated = !finished_by_eos;
    r.score = normalized(h.log_prob, h.tokens.size() + (finished_by_eos ? 1 : 0), cfg.length_penalty);
    if (!best || r.score > best->score) best = std::move(r);
  };

  for (int step = 0; step < cfg.max_len && !alive.empty(); ++step) {
    struct Cand {
      std::size_t hyp;
      int token;
      double log_prob;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      std::vector<int> prefix(controls.begin(), controls.end());
      prefix.insert(prefix.end(), alive[h].tokens.begin(), alive[h].tokens.end());
      const Eigen::RowVectorXd logits = logits_fn(prefix);
      const double mx = logits.maxCoeff();
      const double lse = mx + std::log((logits.array() - mx).exp().sum());
      for (Eigen::Index v = 0; v < logits.size(); ++v) {
        const double lp = logits(v) - lse;
        if (std::isinf(lp) && lp < 0) continue;
        cands.push_back({h, static_cast<int>(v), alive[h].log_prob + lp});
      }
    }
    // Stable sort keeps (hypothesis, token) order among equal scores.
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.log_prob > b.log_prob; });
    if (cands.size() > beam) cands.resize(beam);
    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      Hyp h{alive[c.hyp].tokens, c.log_prob};
      if (c.token == eos) {
        offer(h, true);
      } else {
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
  }
  for (const Hyp& h : alive) offer(h, false);
  if (!best) throw Error("decode: no hypothesis survived");
  return *best;
}

// ---------------------------------------------------------------------------
// Systems

namespace {

// Last-row logits with every control token except eos masked out.
Eigen::RowVectorXd next_token_logits(const Decoder& d, const Mat& memory, const Mat* first,
                                     std::span<const int> prefix) {
  Tape t(false);
  Ctx c{t};
  const Var mem = t.constant(memory);
  std::optional<Var> f;
  if (first) f = t.constant(*first);
  const Decoder::Output o = d.forward(c, prefix, mem, f);
  const Mat& logits = t.value(o.logits);
  Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
  for (int i = 0; i < kNumControlTokens; ++i)
    if (i != token_id(ControlToken::eos)) row(i) = -std::numeric_limits<double>::infinity();
  return row;
}

std::vector<int> with_controls(const std::vector<int>& controls, std::span<const int> tokens) {
  std::vector<int> out = controls;
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

Mat mt_encoder_states(const Route& mt, std::span<const int> tokens) {
  std::vector<int> src(tokens.begin(), tokens.end());
  src.push_back(token_id(ControlToken::eos));
  Tape t(false);
  Ctx c{t};
  return t.value(mt.mt_encoder->forward(c, src));
}

}  // namespace

Mat transcript_states(const Decoder& d, const Mat& encoder_states, std::span<const int> tokens) {
  Tape t(false);
  Ctx c{t};
  const auto o = decode_transcript(c, d, t.constant(encoder_states),
                                   with_controls(transcript_controls(), tokens));
  return t.value(o.hidden);
}

DecodeResult transcribe(const Route& r, const Mat& frames, const DecodeConfig& cfg) {
  Mat enc;
  {
    Tape t(false);
    Ctx c{t};
    enc = t.value(encode(c, r, frames));
  }
  const Decoder& d = *r.transcript;
  return decode_sequence(
      [&](std::span<const int> prefix) { return next_token_logits(d, enc, nullptr, prefix); },
      transcript_controls(), cfg);
}

std::string cascade_translate(const Route& mt, const Vocabulary& vocab,
                              std::string_view transcript_text, Lang target,
                              const DecodeConfig& cfg, DecodeResult* detail) {
  if (!mt.mt_encoder || !mt.translation) throw Error("cascade_translate: route has no MT component");
  const std::vector<int> src = vocab.encode(transcript_text);
  if (src.empty()) {
    spdlog::debug("cascade_translate: empty transcript, returning empty translation");
    if (detail) *detail = DecodeResult{};
    return "";
  }
  const Mat states = mt_encoder_states(mt, src);
  const Decoder& dec = *mt.translation;
  const DecodeResult r = decode_sequence(
      [&](std::span<const int> prefix) { return next_token_logits(dec, states, nullptr, prefix); },
      translation_controls(target), cfg);
  if (detail) *detail = r;
  return vocab.decode(r.tokens);
}

SystemOutput run_system(const System& sys, const Utterance& u, LidMode mode,
                        const DecodeConfig& cfg) {
  if (!sys.model || !sys.vocab) throw Error("run_system: model and vocabulary are required");
  const Model& m = *sys.model;
  const Vocabulary& vocab = *sys.vocab;
  SystemOutput out;

  const Route* route = &m.route(Lang::L1);
  if (is_lid_gated(m.kind)) {
    Lang source;
    if (mode == LidMode::oracle) {
      source = u.matrix_lang;
    } else {
      if (!sys.lid) throw Error("run_system: predicted LID mode requires an LID classifier");
      source = sys.lid->predict(u.frames);
    }
    out.lid_used = source;
    route = &m.route(source);
  }

  Mat enc;
  {
    Tape t(false);
    Ctx c{t};
    enc = t.value(encode(c, *route, u.frames));
  }
  const Decoder& tr_dec = *route->transcript;
  const DecodeResult tr = decode_sequence(
      [&](std::span<const int> prefix) { return next_token_logits(tr_dec, enc, nullptr, prefix); },
      transcript_controls(), cfg);
  out.transcript_tokens = tr.tokens;
  out.transcript = vocab.decode(tr.tokens);
  out.transcript_log_prob = tr.log_prob;
  out.truncated = tr.truncated;
  out.target = out.lid_used ? other(*out.lid_used) : other(vocab.majority_lang(tr.tokens));

  DecodeResult st;
  if (is_cascade(m.kind)) {
    if (!tr.tokens.empty()) out.first_states_hash = hash_matrix(mt_encoder_states(*route, tr.tokens));
    out.translation = cascade_translate(*route, vocab, out.transcript, out.target, cfg, &st);
  } else {
    const Mat first = transcript_states(tr_dec, enc, tr.tokens);
    out.first_states_hash = hash_matrix(first);
    const Decoder& st_dec = *route->translation;
    st = decode_sequence(
        [&](std::span<const int> prefix) { return next_token_logits(st_dec, enc, &first, prefix); },
        translation_controls(out.target), cfg);
    out.translation = vocab.decode(st.tokens);
  }
  out.translation_tokens = st.tokens;
  out.translation_log_prob = st.log_prob;
  out.truncated = out.truncated || st.truncated;
  return out;
}

// ---------------------------------------------------------------------------
// Output records

OutputRecord to_record(const std::string& id, const SystemOutput& o) {
  OutputRecord r;
  r.id = id;
  r.transcript = o.transcript;
  r.translation = o.translation;
  r.lid_used = o.lid_used ? std::string(to_string(*o.lid_used)) : "none";
  r.transcript_log_prob = o.transcript_log_prob;
  r.translation_log_prob = o.translation_log_prob;
  return r;
}

void write_outputs(const std::filesystem::path& path, const std::vector<OutputRecord>& records) {
  std::string out(kOutputsHeader);
  out += '\n';
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["transcript"] = r.transcript;
    j["translation"] = r.translation;
    j["lid_used"] = r.lid_used;
    j["log_probs"] = {r.transcript_log_prob, r.translation_log_prob};
    out += j.dump() + '\n';
  }
  write_file_atomic(path, out);
}

std::vector<OutputRecord> read_outputs(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kOutputsHeader)
    throw Error("'" + path.string() + "': expected header '" + std::string(kOutputsHeader) + "'");
  std::vector<OutputRecord> records;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      OutputRecord r;
      r.id = j.at("id").get<std::string>();
      r.transcript = j.at("transcript").get<std::string>();
      r.translation = j.at("translation").get<std::string>();
      r.lid_used = j.at("lid_used").get<std::string>();
      r.transcript_log_prob = j.at("log_probs").at(0).get<double>();
      r.translation_log_prob = j.at("log_probs").at(1).get<double>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error("'" + path.string() + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace csst
