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

#include <array>
#include <cstdio>
#include <filesystem>

#include "csst/experiments.hpp"
#include "json.hpp"

#ifndef CSST_BIN
#error "CSST_BIN must name the csst executable"
#endif

namespace csst {
namespace {

namespace fs = std::filesystem;

struct Result {
  int status = -1;
  std::string out;
};

// Runs the tool with stderr folded into the captured output.
Result run(const std::string& args) {
  Result r;
  const std::string cmd = std::string(CSST_BIN) + " -q " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "csst_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path tiny_config() {
  const fs::path p = work() / "exp.txt";
  if (fs::exists(p)) return p;
  ExperimentConfig c;
  c.corpus.n_train = 64;
  c.corpus.n_dev = 16;
  c.corpus.n_test = 24;
  c.dims.d_model = 16;
  c.dims.n_heads = 2;
  c.dims.n_enc_layers = 1;
  c.dims.n_dec_layers = 1;
  c.dims.ffn_dim = 32;
  c.lid_dims.d_model = 16;
  c.lid_dims.n_heads = 2;
  c.lid_dims.ffn_dim = 32;
  c.base_plan = TrainPlan::desk_scale(8, 8, 3e-3);
  c.ft_plan = TrainPlan::desk_scale(4, 8, 1e-3);
  c.lid_plan = TrainPlan::desk_scale(4, 8, 3e-3);
  for (TrainPlan* t : {&c.base_plan, &c.ft_plan, &c.lid_plan}) t->dev_limit = 6;
  c.decode.max_len = 8;
  c.seeds = {1};
  c.bootstrap_resamples = 100;
  c.architectures = {ArchitectureKind::E2EBidirectShared, ArchitectureKind::E2EUnidirect};
  write_file_atomic(p, c.to_text());
  return p;
}

fs::path corpus_dir() {
  const fs::path d = work() / "corpus";
  if (fs::exists(d / "corpus.jsonl")) return d;
  ToyCorpusConfig cc;
  cc.n_train = 64;
  cc.n_dev = 16;
  cc.n_test = 24;
  write_file_atomic(work() / "corpus.txt", cc.to_text());
  const Result r = run("gen-corpus --config " + (work() / "corpus.txt").string() + " --seed 4 --out " + d.string());
  EXPECT_EQ(r.status, 0) << r.out;
  return d;
}

TEST(Cli, GenCorpusIsDeterministic) {
  const fs::path a = corpus_dir();
  const Result r = run("gen-corpus --config " + (work() / "corpus.txt").string() + " --seed 4 --out " +
                       (work() / "corpus2").string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("corpus hash"), std::string::npos);
  for (const char* f : {"corpus.jsonl", "lexicon.txt", "splits.tsv", "tie_breaks.tsv", "config.txt"})
    EXPECT_EQ(read_file(a / f), read_file(work() / "corpus2" / f)) << f;
}

TEST(Cli, ParseFisherAnnotations) {
  const fs::path in = work() / "raw.txt";
  write_file_atomic(in, "yo quiero <foreign lang=\"English\"> the car </foreign> rojo\n");
  const Result r = run("parse --in " + in.string() + " --format fisher --matrix L1");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("clean"), "yo quiero the car rojo");
  EXPECT_EQ(j.at("tags"), nlohmann::json({"L1", "L1", "L2", "L2", "L1"}));
  EXPECT_DOUBLE_EQ(j.at("cs_proportion").get<double>(), 0.4);
  write_file_atomic(in, "bien\nun <foreign lang=\"English\"> show\n");
  const Result bad = run("parse --in " + in.string() + " --format fisher");
  EXPECT_EQ(bad.status, 1);
  EXPECT_NE(bad.out.find("error: line 2:"), std::string::npos) << bad.out;
}

TEST(Cli, TrainFinetuneLidEvaluate) {
  const std::string cfg = " --config " + tiny_config().string();
  const std::string corpus = " --corpus " + corpus_dir().string();
  const fs::path base = work() / "base", ft = work() / "ft", lid = work() / "lid";
  Result r = run("train" + cfg + corpus + " --arch E2EUnidirect --out " + base.string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(fs::exists(base / "trace.jsonl"));
  r = run("finetune" + cfg + corpus + " --ckpt " + (base / "model.ckpt").string() + " --out " + ft.string());
  ASSERT_EQ(r.status, 0) << r.out;
  r = run("train-lid" + cfg + corpus + " --condition ft --out " + lid.string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("LID accuracy"), std::string::npos);

  const std::string eval = "evaluate" + cfg + corpus + " --ckpt " + (ft / "model.ckpt").string() + " --set test_cs";
  r = run(eval + " --lid-mode predicted --out " + (work() / "pred.jsonl").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("--lid-ckpt"), std::string::npos);
  r = run(eval + " --lid-mode predicted --lid-ckpt " + (lid / "model.ckpt").string() + " --out " +
          (work() / "pred.jsonl").string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("test_cs WER"), std::string::npos);
  EXPECT_EQ(read_outputs(work() / "pred.jsonl").size(), load_toy_corpus(corpus_dir()).test_cs.size());
}

TEST(Cli, ScoreRanksSystems) {
  write_file_atomic(work() / "ref.txt", "a b c d\ne f g h\ni j k l\n");
  write_file_atomic(work() / "good.txt", "a b c d\ne f g h\ni j k l\n");
  write_file_atomic(work() / "bad.txt", "a x c d\ne f y h\ni z k l\n");
  const Result r = run("score --ref " + (work() / "ref.txt").string() + " --hyp " + (work() / "bad.txt").string() +
                       " " + (work() / "good.txt").string() + " --metric WER --resamples 200");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_DOUBLE_EQ(j[0].at("value").get<double>(), 0.25);
  EXPECT_EQ(j[1].at("verdict"), "best");
  EXPECT_EQ(j[1].at("value").get<double>(), 0.0);
}

TEST(Cli, RunThenReportReproducesTable) {
  const fs::path dir = work() / "run";
  Result r = run("run --config " + tiny_config().string() + " --out " + dir.string());
  ASSERT_EQ(r.status, 0) << r.out;
  const std::string table = read_file(dir / "reports" / "table.txt");
  EXPECT_EQ(r.out, table);
  r = run("report --run " + dir.string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.out, table);
  r = run("analyze --run " + dir.string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("histogram"), std::string::npos);
}

TEST(Cli, ErrorsExitNonZero) {
  Result r = run("train --corpus /nonexistent --arch E2EUnidirect --out " + (work() / "x").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("error: corpus '/nonexistent' does not exist"), std::string::npos);
  r = run("train --corpus " + corpus_dir().string() + " --arch Bogus --out " + (work() / "x").string());
  EXPECT_EQ(r.status, 1);
  r = run("");
  EXPECT_NE(r.status, 0);
}

}  // namespace
}  // namespace csst
