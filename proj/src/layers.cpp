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

#include "csst/layers.hpp"

#include <cmath>

namespace csst {

Parameter& ParameterRegistry::create(const std::string& canonical, const std::string& group,
                                     Mat init) {
  auto [it, inserted] = params_.try_emplace(canonical, canonical, group, std::move(init));
  if (!inserted) throw Error("duplicate parameter '" + canonical + "'");
  return it->second;
}

Parameter& ParameterRegistry::get(const std::string& canonical) {
  auto it = params_.find(canonical);
  if (it == params_.end()) throw Error("unknown parameter '" + canonical + "'");
  return it->second;
}

const Parameter& ParameterRegistry::get(const std::string& canonical) const {
  auto it = params_.find(canonical);
  if (it == params_.end()) throw Error("unknown parameter '" + canonical + "'");
  return it->second;
}

void ParameterRegistry::alias(const std::string& logical, const std::string& canonical) {
  if (!contains(canonical)) throw Error("alias to unknown parameter '" + canonical + "'");
  auto [it, inserted] = aliases_.emplace(logical, canonical);
  if (!inserted && it->second != canonical)
    throw Error("logical parameter '" + logical + "' already aliased to '" + it->second + "'");
}

std::string ParameterRegistry::canonical_of(const std::string& logical) const {
  auto it = aliases_.find(logical);
  if (it == aliases_.end()) throw Error("unknown logical parameter '" + logical + "'");
  return it->second;
}

std::size_t ParameterRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

void ParameterRegistry::zero_grad() {
  for (auto& [name, p] : params_) {
    p.grad.setZero();
    p.used = false;
  }
}

std::uint64_t ParameterRegistry::hash() const {
  std::uint64_t h = 0;
  for (const auto& [name, p] : params_) h = hash_combine(hash_combine(h, fnv1a(name)), hash_matrix(p.value));
  return h;
}

std::uint64_t ParameterRegistry::hash_group(const std::string& group) const {
  std::uint64_t h = 0;
  for (const auto& [name, p] : params_)
    if (p.group == group) h = hash_combine(hash_combine(h, fnv1a(name)), hash_matrix(p.value));
  return h;
}

std::uint64_t ParameterRegistry::hash_logical_prefix(const std::string& prefix) const {
  std::uint64_t h = 0;
  for (const auto& [logical, canonical] : aliases_)
    if (logical.compare(0, prefix.size(), prefix) == 0)
      h = hash_combine(hash_combine(h, fnv1a(logical.substr(prefix.size()))),
                       hash_matrix(get(canonical).value));
  return h;
}

namespace {

Mat uniform_init(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

Linear Linear::make(ParameterRegistry& reg, const std::string& name, const std::string& group,
                    int in, int out, Rng& rng) {
  Linear l;
  l.w = &reg.create(name + ".w", group, uniform_init(in, out, 1.0 / std::sqrt(in), rng));
  l.b = &reg.create(name + ".b", group, Mat::Zero(1, out));
  return l;
}

Var Linear::forward(Ctx& c, Var x) const {
  return ops::add_row(c.tape, ops::matmul(c.tape, x, c.tape.param(*w)), c.tape.param(*b));
}

LayerNorm LayerNorm::make(ParameterRegistry& reg, const std::string& name,
                          const std::string& group, int dim) {
  LayerNorm ln;
  ln.gamma = &reg.create(name + ".gamma", group, Mat::Ones(1, dim));
  ln.beta = &reg.create(name + ".beta", group, Mat::Zero(1, dim));
  return ln;
}

Var LayerNorm::forward(Ctx& c, Var x) const {
  return ops::layer_norm(c.tape, x, c.tape.param(*gamma), c.tape.param(*beta));
}

Embedding Embedding::make(ParameterRegistry& reg, const std::string& name,
                          const std::string& group, int vocab, int dim, Rng& rng) {
  Embedding e;
  e.table = &reg.create(name + ".table", group, uniform_init(vocab, dim, 1.0 / std::sqrt(dim), rng));
  return e;
}

Var Embedding::forward(Ctx& c, std::span<const int> ids) const {
  const double s = std::sqrt(static_cast<double>(table->value.cols()));
  return ops::scale(c.tape, ops::gather_rows(c.tape, c.tape.param(*table), ids), s);
}

MultiHeadAttention MultiHeadAttention::make(ParameterRegistry& reg, const std::string& name,
                                            const std::string& group, int dim, int heads,
                                            Rng& rng) {
  if (heads <= 0 || dim % heads != 0) throw Error("attention: dim must be divisible by heads");
  MultiHeadAttention a;
  a.heads = heads;
  a.q = Linear::make(reg, name + ".q", group, dim, dim, rng);
  a.k = Linear::make(reg, name + ".k", group, dim, dim, rng);
  a.v = Linear::make(reg, name + ".v", group, dim, dim, rng);
  a.o = Linear::make(reg, name + ".o", group, dim, dim, rng);
  return a;
}

void MultiHeadAttention::copy_from(const MultiHeadAttention& other) {
  const Linear* src[] = {&other.q, &other.k, &other.v, &other.o};
  Linear* dst[] = {&q, &k, &v, &o};
  for (int i = 0; i < 4; ++i) {
    dst[i]->w->value = src[i]->w->value;
    dst[i]->b->value = src[i]->b->value;
  }
}

Var MultiHeadAttention::forward(Ctx& c, Var query, Var memory, bool causal) const {
  Tape& t = c.tape;
  const Var Q = q.forward(c, query);
  const Var K = k.forward(c, memory);
  const Var V = v.forward(c, memory);
  const int dim = static_cast<int>(t.value(Q).cols());
  const int dh = dim / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = heads == 1 ? Q : ops::col_slice(t, Q, h * dh, dh);
    const Var kh = heads == 1 ? K : ops::col_slice(t, K, h * dh, dh);
    const Var vh = heads == 1 ? V : ops::col_slice(t, V, h * dh, dh);
    const Var scores = ops::scale(t, ops::matmul_nt(t, qh, kh), inv);
    const Var probs = ops::softmax_rows(t, scores, causal);
    outs.push_back(ops::matmul(t, probs, vh));
  }
  const Var joined = heads == 1 ? outs[0] : ops::concat_cols(t, outs);
  return o.forward(c, joined);
}

FeedForward FeedForward::make(ParameterRegistry& reg, const std::string& name,
                              const std::string& group, int dim, int hidden, Rng& rng) {
  FeedForward f;
  f.in = Linear::make(reg, name + ".in", group, dim, hidden, rng);
  f.out = Linear::make(reg, name + ".out", group, hidden, dim, rng);
  return f;
}

Var FeedForward::forward(Ctx& c, Var x) const {
  return out.forward(c, c.drop(ops::gelu(c.tape, in.forward(c, x))));
}

EncoderLayer EncoderLayer::make(ParameterRegistry& reg, const std::string& name,
                                const std::string& group, int dim, int heads, int hidden,
                                Rng& rng) {
  EncoderLayer l;
  l.ln_self = LayerNorm::make(reg, name + ".ln_self", group, dim);
  l.self_attn = MultiHeadAttention::make(reg, name + ".self_attn", group, dim, heads, rng);
  l.ln_ffn = LayerNorm::make(reg, name + ".ln_ffn", group, dim);
  l.ffn = FeedForward::make(reg, name + ".ffn", group, dim, hidden, rng);
  return l;
}

Var EncoderLayer::forward(Ctx& c, Var x) const {
  Tape& t = c.tape;
  const Var h = ln_self.forward(c, x);
  x = ops::add(t, x, c.drop(self_attn.forward(c, h, h, false)));
  return ops::add(t, x, c.drop(ffn.forward(c, ln_ffn.forward(c, x))));
}

DecoderLayer DecoderLayer::make(ParameterRegistry& reg, const std::string& name, int dim,
                                int heads, int hidden, bool triangle, Rng& rng) {
  DecoderLayer l;
  l.ln_self = LayerNorm::make(reg, name + ".ln_self", kGroupDecoder, dim);
  l.self_attn = MultiHeadAttention::make(reg, name + ".self_attn", kGroupDecoder, dim, heads, rng);
  l.ln_enc = LayerNorm::make(reg, name + ".ln_enc", kGroupDecoder, dim);
  l.enc_attn = MultiHeadAttention::make(reg, name + ".enc_attn", kGroupDecoder, dim, heads, rng);
  if (triangle) {
    l.ln_first = LayerNorm::make(reg, name + ".ln_first", kGroupFirstDecoderAttention, dim);
    l.first_attn = MultiHeadAttention::make(reg, name + ".first_attn",
                                            kGroupFirstDecoderAttention, dim, heads, rng);
    // The added sublayer starts as a copy of the encoder attention.
    l.first_attn->copy_from(l.enc_attn);
  }
  l.ln_ffn = LayerNorm::make(reg, name + ".ln_ffn", kGroupDecoder, dim);
  l.ffn = FeedForward::make(reg, name + ".ffn", kGroupDecoder, dim, hidden, rng);
  return l;
}

Var DecoderLayer::forward(Ctx& c, Var x, Var enc, std::optional<Var> first) const {
  Tape& t = c.tape;
  Var h = ln_self.forward(c, x);
  x = ops::add(t, x, c.drop(self_attn.forward(c, h, h, true)));
  h = ln_enc.forward(c, x);
  x = ops::add(t, x, c.drop(enc_attn.forward(c, h, enc, false)));
  if (first && first_attn) {
    h = ln_first->forward(c, x);
    x = ops::add(t, x, c.drop(first_attn->forward(c, h, *first, false)));
  }
  return ops::add(t, x, c.drop(ffn.forward(c, ln_ffn.forward(c, x))));
}

Bridge Bridge::make(ParameterRegistry& reg, const std::string& name, int dim,
                    const std::vector<int>& strides, Rng& rng) {
  Bridge b;
  b.strides = strides;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (strides[i] < 1) throw Error("bridge: stride must be >= 1");
    b.convs.push_back(
        Linear::make(reg, name + ".conv" + std::to_string(i), kGroupBridge, 3 * dim, dim, rng));
  }
  return b;
}

Var Bridge::forward(Ctx& c, Var x) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const Var cols = ops::unfold(c.tape, x, 3, strides[i], 1);
    x = ops::gelu(c.tape, convs[i].forward(c, cols));
  }
  return x;
}

int Bridge::output_length(int frames, const std::vector<int>& strides) {
  int t = frames;
  for (int s : strides) t = (t + 2 - 3) / s + 1;
  return t;
}

Mat sinusoidal_positions(int length, int dim) {
  Mat p(length, dim);
  for (int pos = 0; pos < length; ++pos)
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      p(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  return p;
}

}  // namespace csst
