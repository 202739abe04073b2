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

#include "csst/corpus.hpp"
#include "csst/text.hpp"

namespace csst {
namespace {

constexpr Lang S = Lang::L1;  // spanish
constexpr Lang E = Lang::L2;  // english

std::vector<Lang> tags(const TaggedTranscript& t) {
  std::vector<Lang> out;
  for (const auto& tok : t.tokens) out.push_back(tok.lang);
  return out;
}

TEST(FisherParser, RawAndCleanGolden) {
  const std::string raw =
      "un <foreign lang=\"English\"> show <\\foreign>, a mi me gusta ver mucho estos "
      "<foreign lang=\"English\"> shows <\\foreign> de la medicina forense";
  const TaggedTranscript t = parse_fisher_annotation(raw, Lang::L1);
  EXPECT_EQ(t.text(), "un show, a mi me gusta ver mucho estos shows de la medicina forense");
  EXPECT_EQ(tags(t), (std::vector<Lang>{S, E, S, S, S, S, S, S, S, E, S, S, S, S}));
  EXPECT_EQ(t.tokens[1].surface, "show,");
}

TEST(FisherParser, ForwardSlashClosingTag) {
  const auto a = parse_fisher_annotation("un <foreign lang=\"English\"> show </foreign> bueno", Lang::L1);
  const auto b = parse_fisher_annotation("un <foreign lang=\"English\"> show <\\foreign> bueno", Lang::L1);
  EXPECT_EQ(a, b);
}

TEST(FisherParser, MultiWordSpanAndDefaultMatrix) {
  const auto t = parse_fisher_annotation("I said <foreign lang=\"Spanish\"> muy bien </foreign>", Lang::L2);
  EXPECT_EQ(t.text(), "I said muy bien");
  EXPECT_EQ(tags(t), (std::vector<Lang>{E, E, S, S}));
}

TEST(FisherParser, MalformedInputsAreStructuredErrors) {
  const std::vector<std::string> bad = {
      "un <foreign lang=\"English\"> show",                     // unclosed
      "un show </foreign>",                                     // close without open
      "<foreign lang=\"English\"> <foreign lang=\"English\"> a </foreign>",  // nested
      "un <foreign> show </foreign>",                           // no lang
      "un <foreign lang=\"Klingon\"> show </foreign>",          // unknown lang
      "un <foreign lang=\"English\"> show </foreign>s",         // intra-word mixing
      "un <b> show </b>",                                       // unsupported tag
      "un <foreign lang=\"English\"",                           // unterminated tag
  };
  for (const auto& raw : bad) {
    try {
      parse_fisher_annotation(raw, Lang::L1);
      ADD_FAILURE() << "accepted: " << raw;
    } catch (const ParseError& e) {
      EXPECT_LE(e.offset(), raw.size()) << raw;
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
  }
}

TEST(ChatParser, RawAndCleanGolden) {
  const std::string raw = "hay una [/] una que dice (.) it's@s:eng five@s:eng o'clock@s:eng somewhere@s:eng";
  const TaggedTranscript t = parse_chat_annotation(raw, Lang::L1);
  EXPECT_EQ(t.text(), "hay una una que dice it's five o'clock somewhere");
  EXPECT_EQ(tags(t), (std::vector<Lang>{S, S, S, S, S, E, E, E, E}));
}

TEST(ChatParser, MalformedInputsAreStructuredErrors) {
  for (const std::string raw : {"hola @s:eng", "hola word@s:xyz", "hola [+ foo] bien", "&=laughs hola"}) {
    EXPECT_THROW(parse_chat_annotation(raw, Lang::L1), ParseError) << raw;
  }
}

TEST(Proportion, MinorityOverTotal) {
  const auto t = parse_chat_annotation("a b c d@s:eng", Lang::L1);
  EXPECT_DOUBLE_EQ(cs_proportion(t), 0.25);
  EXPECT_DOUBLE_EQ(cs_proportion(t, Lang::L2), 0.75);
  EXPECT_THROW(cs_proportion(TaggedTranscript{}), Error);
}

TEST(Proportion, BucketEdgesAreExact) {
  // Bucket b holds (0.05 b, 0.05 (b + 1)].
  EXPECT_EQ(proportion_bucket(0, 5), -1);
  EXPECT_EQ(proportion_bucket(1, 20), 0);
  EXPECT_EQ(proportion_bucket(1, 10), 1);
  EXPECT_EQ(proportion_bucket(1, 2), 9);
  EXPECT_EQ(proportion_bucket(1, 3), 6);  // 0.333 in (0.30, 0.35]
  for (std::size_t n = 1; n <= 40; ++n)
    for (std::size_t k = 1; k <= n; ++k) {
      const int b = proportion_bucket(k, n);
      const double p = static_cast<double>(k) / static_cast<double>(n);
      if (p <= 0.5) {
        EXPECT_GT(p, 0.05 * b - 1e-12);
        EXPECT_LE(p, 0.05 * (b + 1) + 1e-12);
      }
    }
}

Utterance utt(std::string id, const std::string& chat) {
  Utterance u;
  u.id = std::move(id);
  u.transcript = parse_chat_annotation(chat, Lang::L1);
  u.duration_frames = 10;
  return u;
}

TEST(Split, RoutesByEmbeddedTokensAndRecordsTies) {
  std::vector<Utterance> us = {utt("a", "x y z"), utt("b", "x y z@s:eng"), utt("c", "x y@s:eng"),
                               utt("d", "x@s:eng y@s:eng")};
  const CorpusSplit s = split_corpus(us);
  ASSERT_EQ(s.cs_set.size(), 2u);
  ASSERT_EQ(s.mono_set.size(), 2u);
  EXPECT_EQ(s.mono_set[1].matrix_lang, Lang::L2);
  EXPECT_EQ(s.provenance.tie_breaks.size(), 1u);
  EXPECT_EQ(s.provenance.tie_breaks.count("c"), 1u);
  // The coin is a pure function of the id.
  EXPECT_EQ(split_corpus(us).provenance.tie_breaks.at("c"), s.provenance.tie_breaks.at("c"));
  us.push_back(utt("a", "x"));
  EXPECT_THROW(split_corpus(us), Error);
}

TEST(Split, TieBreakCoinIsRoughlyFair) {
  TaggedTranscript t = parse_chat_annotation("a b@s:eng", Lang::L1);
  int l2 = 0;
  for (int i = 0; i < 2000; ++i) l2 += matrix_language(t, tie_break_seed("u" + std::to_string(i))) == Lang::L2;
  EXPECT_NEAR(l2 / 2000.0, 0.5, 0.05);
}

TEST(Split, DurationFilter) {
  std::vector<Utterance> us = {utt("a", "x"), utt("b", "y")};
  us[1].duration_frames = 100;
  EXPECT_EQ(filter_by_duration(us, 50).size(), 1u);
  EXPECT_THROW(filter_by_duration(us, 0), Error);
}

ToyCorpusConfig small_config(std::uint64_t seed = 3) {
  ToyCorpusConfig c;
  c.n_train = 200;
  c.n_dev = 40;
  c.n_test = 80;
  c.seed = seed;
  return c;
}

TEST(ToyCorpus, DeterministicAndSeedSensitive) {
  EXPECT_EQ(generate_toy_corpus(small_config()).hash(), generate_toy_corpus(small_config()).hash());
  EXPECT_NE(generate_toy_corpus(small_config()).hash(), generate_toy_corpus(small_config(4)).hash());
}

TEST(ToyCorpus, Invariants) {
  const ToyCorpus c = generate_toy_corpus(small_config());
  EXPECT_FALSE(c.train_cs.empty());
  EXPECT_FALSE(c.test_mono.empty());
  for (const auto* set : {&c.train_cs, &c.dev_cs, &c.test_cs}) {
    for (const auto& u : *set) {
      EXPECT_TRUE(u.is_code_switched());
      EXPECT_LE(cs_proportion(u.transcript, u.matrix_lang), 0.5);
      // Translation is word-for-word into the other language.
      EXPECT_EQ(text::split_whitespace(u.translation).size(), u.transcript.tokens.size());
      EXPECT_EQ(u.translation, c.lexicon.translate(u.transcript, other(u.matrix_lang)));
      EXPECT_EQ(u.frames.rows(), u.duration_frames);
      EXPECT_EQ(u.frames.cols(), c.config.phoneme_dim);
    }
  }
  for (const auto& u : c.train_mono) EXPECT_FALSE(u.is_code_switched());
  CorpusSplit test{c.test_cs, c.test_mono, {}};
  const CorpusStats st = corpus_stats(test);
  std::size_t mass = 0;
  for (auto h : st.histogram) mass += h;
  EXPECT_EQ(mass, c.test_cs.size());
}

TEST(ToyCorpus, WordsStayInTheirInventory) {
  const ToyCorpus c = generate_toy_corpus(small_config());
  for (Lang l : {Lang::L1, Lang::L2})
    for (const auto& w : c.lexicon.words[static_cast<std::size_t>(index_of(l))])
      for (char ch : w) EXPECT_NE(toy_inventory(l).find(ch), std::string_view::npos);
}

TEST(ToyCorpus, SaveLoadRoundTrip) {
  const ToyCorpus c = generate_toy_corpus(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "csst_corpus_rt";
  std::filesystem::remove_all(dir);
  save_toy_corpus(c, dir);
  const ToyCorpus back = load_toy_corpus(dir);
  EXPECT_EQ(back.hash(), c.hash());
  ASSERT_EQ(back.test_cs.size(), c.test_cs.size());
  EXPECT_EQ(back.test_cs[0].frames, c.test_cs[0].frames);
  EXPECT_EQ(back.provenance.mapping, c.provenance.mapping);
}

TEST(ToyCorpus, ConfigRoundTripAndUnknownKeys) {
  ToyCorpusConfig c = small_config(9);
  c.cs_rate = 0.4;
  const ToyCorpusConfig back = ToyCorpusConfig::from_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_THROW(ToyCorpusConfig::from_kv({{"bogus", "1"}}), Error);
  ToyCorpusConfig bad;
  bad.max_cs_proportion = 0.7;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(ToyCorpus, FeatureSynthesisIsDeterministic) {
  const ToyCorpusConfig cfg = small_config();
  const auto t = parse_chat_annotation("abc nop@s:eng", Lang::L1);
  EXPECT_EQ(synthesize_features(t, cfg, 5), synthesize_features(t, cfg, 5));
  EXPECT_NE(synthesize_features(t, cfg, 5), synthesize_features(t, cfg, 6));
}

}  // namespace
}  // namespace csst
