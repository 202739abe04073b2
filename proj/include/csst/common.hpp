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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace csst {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Either of the two languages of a bilingual corpus.
enum class Lang : std::uint8_t { L1 = 0, L2 = 1 };

inline Lang other(Lang l) { return l == Lang::L1 ? Lang::L2 : Lang::L1; }
inline int index_of(Lang l) { return static_cast<int>(l); }
inline std::string_view to_string(Lang l) { return l == Lang::L1 ? "L1" : "L2"; }
Lang lang_from_string(std::string_view s);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);

// Labeled sub-seed of a root seed; every random stream in a run is derived
// this way so components can be reproduced independently.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);

// Thin wrapper over mt19937_64. Distributions are implemented here rather
// than through <random> distributions, whose output is library-specific.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }
  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

template <typename Container>
void shuffle(Container& c, Rng& rng) {
  for (std::size_t i = c.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(c[i - 1], c[j]);
  }
}

// Flat `key=value` text with a required first-line version header. Blank
// lines and lines starting with "# " are ignored.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::string_view text, std::string_view header);
std::string format_key_values(const KeyValues& kv, std::string_view header);
// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, std::string_view what);
long long parse_int(const std::string& s, std::string_view what);

std::string read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace csst
