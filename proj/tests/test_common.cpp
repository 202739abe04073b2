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

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "csst/common.hpp"
#include "csst/matrix.hpp"
#include "csst/text.hpp"

namespace csst {
namespace {

TEST(Seeds, DerivedSeedsAreStableAndLabelSensitive) {
  EXPECT_EQ(derive_seed(1, "init"), derive_seed(1, "init"));
  EXPECT_NE(derive_seed(1, "init"), derive_seed(1, "train"));
  EXPECT_NE(derive_seed(1, "init"), derive_seed(2, "init"));
  // FNV-1a reference values.
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, StateRoundTripReplaysTheStream) {
  Rng a(42);
  a.normal();
  const std::string s = a.state();
  const double x = a.uniform();
  Rng b(0);
  b.set_state(s);
  EXPECT_EQ(b.uniform(), x);
  EXPECT_THROW(b.set_state("not a state"), Error);
}

TEST(Rng, UniformIntCoversRangeWithoutBias) {
  Rng r(7);
  std::array<int, 5> counts{};
  for (int i = 0; i < 50000; ++i) ++counts[static_cast<std::size_t>(r.uniform_int(0, 4))];
  for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
  EXPECT_THROW(r.uniform_int(3, 2), Error);
}

TEST(Rng, NormalMoments) {
  Rng r(9);
  double s = 0, s2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Shuffle, IsAPermutation) {
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
  Rng r(3);
  shuffle(v, r);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 100u);
  EXPECT_NE(v[0] + v[1] * 100, 0 + 100);
}

TEST(KeyValues, RoundTripAndErrors) {
  const KeyValues kv = {{"a", "1"}, {"b", "x=y"}};
  EXPECT_EQ(parse_key_values(format_key_values(kv, "#h v1"), "#h v1"), kv);
  EXPECT_EQ(parse_key_values("#h v1\n# comment\n\na=1\n", "#h v1").at("a"), "1");
  EXPECT_THROW(parse_key_values("#h v2\na=1\n", "#h v1"), Error);
  EXPECT_THROW(parse_key_values("#h v1\na=1\na=2\n", "#h v1"), Error);
  EXPECT_THROW(parse_key_values("#h v1\nnovalue\n", "#h v1"), Error);
  EXPECT_THROW(parse_key_values("#h v1\n = 3\n", "#h v1"), Error);
  const KeyValues spaced = parse_key_values("#h v1\n  a = 1 \nb\t=x y\n", "#h v1");
  EXPECT_EQ(spaced, (KeyValues{{"a", "1"}, {"b", "x y"}}));
}

TEST(Numbers, ShortestRoundTrip) {
  for (double v : {0.1, 1e-300, 5e-4, 123456.789, -0.0}) EXPECT_EQ(parse_double(format_double(v), "v"), v);
  EXPECT_THROW(parse_double("1.5x", "v"), Error);
  EXPECT_EQ(parse_int("-12", "v"), -12);
  EXPECT_THROW(parse_int("1.0", "v"), Error);
}

TEST(Files, AtomicWriteAndRead) {
  const auto p = std::filesystem::temp_directory_path() / "csst_common" / "sub" / "f.txt";
  write_file_atomic(p, "hello\n");
  EXPECT_EQ(read_file(p), "hello\n");
  EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
  EXPECT_THROW(read_file(p.string() + ".missing"), Error);
}

TEST(MatrixHash, SensitiveToValuesAndShape) {
  Mat a = Mat::Zero(2, 3), b = Mat::Zero(3, 2);
  EXPECT_NE(hash_matrix(a), hash_matrix(b));
  Mat c = a;
  c(1, 2) = 1e-300;
  EXPECT_NE(hash_matrix(a), hash_matrix(c));
  EXPECT_EQ(hash_matrix(a), hash_matrix(Mat::Zero(2, 3)));
}

TEST(Text, Utf8RoundTripAndInvalidBytes) {
  const std::string s = "mañana ¿qué? 日本";
  EXPECT_EQ(text::utf8_encode(text::utf8_decode(s)), s);
  EXPECT_EQ(text::utf8_decode("a\xff").back(), U'�');
}

TEST(Text, WhitespaceAndCase) {
  EXPECT_EQ(text::normalize_whitespace("  a \t b\n c  "), "a b c");
  EXPECT_EQ(text::split_whitespace(" a  b "), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(text::join({"a", "b"}), "a b");
  EXPECT_EQ(text::lowercase("ÁbC Ñ"), "ábc ñ");
}

TEST(Text, PunctuationCategories) {
  for (char32_t cp : {U'.', U',', U'!', U'¿', U'¡', U'«', U'»', U'—', U'。', U'-', U'(', U'_'})
    EXPECT_TRUE(text::is_unicode_punctuation(cp)) << static_cast<unsigned>(cp);
  for (char32_t cp : {U'a', U'1', U'$', U'+', U' ', U'ñ', U'^'})
    EXPECT_FALSE(text::is_unicode_punctuation(cp)) << static_cast<unsigned>(cp);
}

}  // namespace
}  // namespace csst
