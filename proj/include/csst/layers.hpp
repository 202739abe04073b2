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

// Transformer layer library shared by every architecture and the LID
// classifier. Layers do not own storage: they hold pointers into a
// ParameterRegistry, which is what makes parameter sharing between
// sub-systems a matter of handing the same layer object to two slots.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csst/autograd.hpp"

namespace csst {

// Freeze groups.
inline constexpr const char* kGroupSpeechEncoder = "speech_encoder";
inline constexpr const char* kGroupBridge = "bridge";
inline constexpr const char* kGroupTextEncoder = "text_encoder";
inline constexpr const char* kGroupDecoder = "decoder";
inline constexpr const char* kGroupFirstDecoderAttention = "first_decoder_attention";
inline constexpr const char* kGroupLid = "lid";

class ParameterRegistry {
 public:
  ParameterRegistry() = default;
  ParameterRegistry(const ParameterRegistry&) = delete;
  ParameterRegistry& operator=(const ParameterRegistry&) = delete;
  ParameterRegistry(ParameterRegistry&&) = default;
  ParameterRegistry& operator=(ParameterRegistry&&) = default;

  Parameter& create(const std::string& canonical, const std::string& group, Mat init);
  Parameter& get(const std::string& canonical);
  const Parameter& get(const std::string& canonical) const;
  bool contains(const std::string& canonical) const { return params_.count(canonical) > 0; }

  // Records that a logical parameter name resolves to canonical storage.
  void alias(const std::string& logical, const std::string& canonical);
  const std::map<std::string, std::string>& aliases() const { return aliases_; }
  std::string canonical_of(const std::string& logical) const;

  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }

  // Scalar count over canonical storage.
  std::size_t scalar_count() const;
  void zero_grad();
  std::uint64_t hash() const;
  std::uint64_t hash_group(const std::string& group) const;
  // Hash of the canonical tensors that the given logical prefix resolves to,
  // keyed by the name relative to the prefix: two routes that resolve to
  // the same storage hash equal.
  std::uint64_t hash_logical_prefix(const std::string& prefix) const;

 private:
  std::map<std::string, Parameter> params_;
  std::map<std::string, std::string> aliases_;
};

// Forward-pass context: the tape plus optional dropout.
struct Ctx {
  Tape& tape;
  Rng* rng = nullptr;
  double dropout = 0.0;
  Var drop(Var x) const {
    return (rng && dropout > 0.0) ? ops::dropout(tape, x, dropout, *rng) : x;
  }
};

struct Linear {
  Parameter* w = nullptr;  // in x out
  Parameter* b = nullptr;  // 1 x out

  static Linear make(ParameterRegistry& reg, const std::string& name, const std::string& group,
                     int in, int out, Rng& rng);
  Var forward(Ctx& c, Var x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm make(ParameterRegistry& reg, const std::string& name, const std::string& group,
                        int dim);
  Var forward(Ctx& c, Var x) const;
};

struct Embedding {
  Parameter* table = nullptr;  // vocab x d

  static Embedding make(ParameterRegistry& reg, const std::string& name, const std::string& group,
                        int vocab, int dim, Rng& rng);
  Var forward(Ctx& c, std::span<const int> ids) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention make(ParameterRegistry& reg, const std::string& name,
                                 const std::string& group, int dim, int heads, Rng& rng);
  // Copies values of another attention block into this one's storage.
  void copy_from(const MultiHeadAttention& other);
  Var forward(Ctx& c, Var query, Var memory, bool causal) const;
};

struct FeedForward {
  Linear in, out;

  static FeedForward make(ParameterRegistry& reg, const std::string& name,
                          const std::string& group, int dim, int hidden, Rng& rng);
  Var forward(Ctx& c, Var x) const;
};

// Pre-norm encoder block.
struct EncoderLayer {
  LayerNorm ln_self, ln_ffn;
  MultiHeadAttention self_attn;
  FeedForward ffn;

  static EncoderLayer make(ParameterRegistry& reg, const std::string& name,
                           const std::string& group, int dim, int heads, int hidden, Rng& rng);
  Var forward(Ctx& c, Var x) const;
};

// Pre-norm decoder block. A triangle block carries an extra cross-attention
// over first-decoder states placed after the encoder attention:
//   self-attention -> encoder-attention -> first-decoder-attention -> FFN.
// When no first-decoder states are supplied the extra sublayer is bypassed.
struct DecoderLayer {
  LayerNorm ln_self, ln_enc, ln_ffn;
  MultiHeadAttention self_attn, enc_attn;
  std::optional<LayerNorm> ln_first;
  std::optional<MultiHeadAttention> first_attn;
  FeedForward ffn;

  static DecoderLayer make(ParameterRegistry& reg, const std::string& name, int dim, int heads,
                           int hidden, bool triangle, Rng& rng);
  bool triangle() const { return first_attn.has_value(); }
  Var forward(Ctx& c, Var x, Var enc, std::optional<Var> first) const;
};

// Strided 1-D convolutions (kernel 3, padding 1) with GELU, subsampling
// encoder frames to the decoder's rate. Output length is ceil(T / stride)
// per stage.
struct Bridge {
  std::vector<Linear> convs;
  std::vector<int> strides;

  static Bridge make(ParameterRegistry& reg, const std::string& name, int dim,
                     const std::vector<int>& strides, Rng& rng);
  Var forward(Ctx& c, Var x) const;
  static int output_length(int frames, const std::vector<int>& strides);
};

Mat sinusoidal_positions(int length, int dim);

}  // namespace csst
