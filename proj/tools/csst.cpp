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

// Command-line front end: corpus generation and parsing, training,
// fine-tuning, LID training, evaluation, analyses, reports, full runs and
// standalone metric scoring.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "csst/experiments.hpp"

namespace fs = std::filesystem;
using namespace csst;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> config;
  std::optional<fs::path> out;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--seed", c.seed, "Seed (root or per-cell, see subcommand help)");
  app->add_option("--config", c.config, "Configuration file")->check(CLI::ExistingFile);
  auto* out = app->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

ExperimentConfig experiment_config(const Common& c) {
  return c.config ? ExperimentConfig::load(*c.config) : ExperimentConfig{};
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

const std::vector<Utterance>& named_set(const ToyCorpus& c, const std::string& name) {
  if (name == "train_mono") return c.train_mono;
  if (name == "train_cs") return c.train_cs;
  if (name == "dev_cs") return c.dev_cs;
  if (name == "dev_mono") return c.dev_mono;
  if (name == "test_cs") return c.test_cs;
  if (name == "test_mono") return c.test_mono;
  throw Error("unknown split '" + name + "'");
}

void save_result(const fs::path& dir, const TrainResult& r) {
  save_checkpoint(dir / "model.ckpt", r.best);
  write_file_atomic(dir / "trace.jsonl", r.trace.to_jsonl());
  spdlog::info("wrote {} (best step {}, metric {})", (dir / "model.ckpt").string(), r.best_step,
               r.best_metric);
}

fs::path existing(const fs::path& p, std::string_view what) {
  if (!fs::exists(p)) throw Error(std::string(what) + " '" + p.string() + "' does not exist");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Code-switched joint speech transcription and translation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  // gen-corpus
  Common gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate the synthetic bilingual toy corpus");
  add_common(gen_cmd, gen, true);

  // parse
  Common parse;
  std::string parse_format = "fisher", parse_matrix = "L1";
  fs::path parse_in;
  auto* parse_cmd = app.add_subcommand("parse", "Parse raw annotated transcripts (one per line) to JSONL");
  add_common(parse_cmd, parse, false);
  parse_cmd->add_option("--in", parse_in, "Raw transcript file")->required()->check(CLI::ExistingFile);
  parse_cmd->add_option("--format", parse_format, "fisher or chat")->check(CLI::IsMember({"fisher", "chat"}));
  parse_cmd->add_option("--matrix", parse_matrix, "Default matrix language (L1 or L2)")
      ->check(CLI::IsMember({"L1", "L2"}));

  // train / finetune / train-lid share corpus + seed conventions with `run`.
  Common train;
  fs::path train_corpus;
  std::string train_arch;
  auto* train_cmd = app.add_subcommand("train", "Train a model on the monolingual training split");
  add_common(train_cmd, train, true);
  train_cmd->add_option("--corpus", train_corpus, "Corpus directory")->required();
  train_cmd->add_option("--arch", train_arch, "Architecture kind")->required();

  Common ft;
  fs::path ft_corpus, ft_ckpt;
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune a checkpoint on the code-switched split");
  add_common(ft_cmd, ft, true);
  ft_cmd->add_option("--corpus", ft_corpus, "Corpus directory")->required();
  ft_cmd->add_option("--ckpt", ft_ckpt, "Base checkpoint")->required();

  Common lid;
  fs::path lid_corpus;
  std::string lid_condition = "no_ft";
  auto* lid_cmd = app.add_subcommand("train-lid", "Train the utterance-level LID classifier");
  add_common(lid_cmd, lid, true);
  lid_cmd->add_option("--corpus", lid_corpus, "Corpus directory")->required();
  lid_cmd->add_option("--condition", lid_condition, "no_ft or ft (ft adds CS data)")
      ->check(CLI::IsMember({"no_ft", "ft"}));

  Common eval;
  fs::path eval_corpus, eval_ckpt;
  std::optional<fs::path> eval_lid;
  std::string eval_set = "test_cs", eval_mode = "oracle";
  auto* eval_cmd = app.add_subcommand("evaluate", "Decode a split and write per-utterance outputs");
  add_common(eval_cmd, eval, true);
  eval_cmd->add_option("--corpus", eval_corpus, "Corpus directory")->required();
  eval_cmd->add_option("--ckpt", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--lid-ckpt", eval_lid, "LID checkpoint (predicted mode)");
  eval_cmd->add_option("--set", eval_set, "Split to decode");
  eval_cmd->add_option("--lid-mode", eval_mode, "oracle or predicted")
      ->check(CLI::IsMember({"oracle", "predicted"}));

  Common analyze;
  fs::path analyze_run;
  auto* analyze_cmd = app.add_subcommand("analyze", "Span accuracy, R^2 and histogram of a finished run");
  add_common(analyze_cmd, analyze, false);
  analyze_cmd->add_option("--run", analyze_run, "Run directory")->required();

  Common report;
  fs::path report_run;
  auto* report_cmd = app.add_subcommand("report", "Rebuild report tables from a finished run");
  add_common(report_cmd, report, false);
  report_cmd->add_option("--run", report_run, "Run directory")->required();

  Common run;
  auto* run_cmd = app.add_subcommand("run", "Run the full experiment matrix and write reports");
  add_common(run_cmd, run, false);

  Common score;
  fs::path score_ref;
  std::vector<fs::path> score_hyps;
  std::string score_metric = "BLEU";
  std::size_t score_resamples = kDefaultResamples;
  auto* score_cmd = app.add_subcommand("score", "Score hypothesis files against a reference file");
  add_common(score_cmd, score, false);
  score_cmd->add_option("--ref", score_ref, "Reference file, one segment per line")
      ->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--hyp", score_hyps, "Hypothesis files (one per system)")
      ->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--metric", score_metric, "WER, CER, BLEU or CharCut")
      ->check(CLI::IsMember({"WER", "CER", "BLEU", "CharCut"}));
  score_cmd->add_option("--resamples", score_resamples, "Bootstrap resamples");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (gen_cmd->parsed()) {
      ToyCorpusConfig cfg = gen.config ? ToyCorpusConfig::from_text(read_file(*gen.config)) : ToyCorpusConfig{};
      if (gen.seed) cfg.seed = *gen.seed;
      const ToyCorpus corpus = generate_toy_corpus(cfg);
      save_toy_corpus(corpus, *gen.out);
      std::cout << "corpus hash " << corpus.hash() << " train_mono=" << corpus.train_mono.size()
                << " train_cs=" << corpus.train_cs.size() << " test_cs=" << corpus.test_cs.size()
                << " test_mono=" << corpus.test_mono.size() << '\n';
    } else if (parse_cmd->parsed()) {
      const Lang matrix = lang_from_string(parse_matrix);
      std::string out;
      int lineno = 0;
      for (const auto& raw : read_lines(parse_in)) {
        ++lineno;
        if (raw.empty()) continue;
        TaggedTranscript t;
        try {
          t = parse_format == "fisher" ? parse_fisher_annotation(raw, matrix) : parse_chat_annotation(raw, matrix);
        } catch (const ParseError& e) {
          throw Error("line " + std::to_string(lineno) + ": " + e.what());
        }
        nlohmann::json j;
        j["raw"] = raw;
        j["clean"] = t.text();
        j["tags"] = nlohmann::json::array();
        for (const auto& tok : t.tokens) j["tags"].push_back(std::string(to_string(tok.lang)));
        j["cs_proportion"] = cs_proportion(t);
        out += j.dump() + '\n';
      }
      if (parse.out) write_file_atomic(*parse.out, out);
      else std::cout << out;
    } else if (train_cmd->parsed()) {
      const ExperimentConfig cfg = experiment_config(train);
      const ToyCorpus corpus = load_toy_corpus(existing(train_corpus, "corpus"));
      const Vocabulary vocab = Vocabulary::from_lexicon(corpus.lexicon);
      const ArchitectureKind kind = architecture_from_string(train_arch);
      const std::uint64_t seed = train.seed.value_or(1);
      ModelDims dims = cfg.dims;
      dims.vocab = vocab.size();
      Model m = build_model(kind, dims, sub_seed(cfg, "init/" + train_arch + "/" + std::to_string(seed)));
      TrainPlan plan = cfg.base_plan;
      plan.seed = sub_seed(cfg, "train/" + train_arch + "/no_ft/" + std::to_string(seed));
      save_result(*train.out, csst::train(m, vocab, corpus.train_mono, corpus.dev_mono, plan));
    } else if (ft_cmd->parsed()) {
      const ExperimentConfig cfg = experiment_config(ft);
      const ToyCorpus corpus = load_toy_corpus(existing(ft_corpus, "corpus"));
      const Vocabulary vocab = Vocabulary::from_lexicon(corpus.lexicon);
      const Checkpoint base = load_checkpoint(existing(ft_ckpt, "checkpoint"));
      const ArchitectureKind kind = architecture_from_string(base.model_type);
      TrainPlan plan = cfg.ft_plan;
      plan.seed = sub_seed(cfg, "train/" + base.model_type + "/ft/" + std::to_string(ft.seed.value_or(1)));
      save_result(*ft.out, finetune(base, kind, vocab, corpus.train_cs, corpus.dev_cs, plan));
    } else if (lid_cmd->parsed()) {
      const ExperimentConfig cfg = experiment_config(lid);
      const ToyCorpus corpus = load_toy_corpus(existing(lid_corpus, "corpus"));
      const std::string label = "lid/" + lid_condition + "/" + std::to_string(lid.seed.value_or(1));
      LidClassifier clf = LidClassifier::build(cfg.lid_dims, sub_seed(cfg, "init/" + label));
      TrainPlan plan = cfg.lid_plan;
      plan.seed = sub_seed(cfg, "train/" + label);
      const TrainResult r =
          train_lid(clf, lid_datasets(corpus, condition_from_string(lid_condition)), cfg.lid_upsample, plan);
      save_result(*lid.out, r);
      std::cout << "test_cs LID accuracy " << lid_accuracy(clf, corpus.test_cs) << '\n';
    } else if (eval_cmd->parsed()) {
      const ExperimentConfig cfg = experiment_config(eval);
      const Model m = model_from_checkpoint(load_checkpoint(existing(eval_ckpt, "checkpoint")));
      const ToyCorpus corpus = load_toy_corpus(existing(eval_corpus, "corpus"));
      const Vocabulary vocab = Vocabulary::from_lexicon(corpus.lexicon);
      if (vocab.size() != m.dims.vocab) throw Error("checkpoint vocabulary does not match the corpus");
      const LidMode mode = lid_mode_from_string(eval_mode);
      std::optional<LidClassifier> clf;
      if (mode == LidMode::predicted && is_lid_gated(m.kind)) {
        if (!eval_lid) throw Error("predicted LID mode needs --lid-ckpt");
        clf = lid_from_checkpoint(load_checkpoint(existing(*eval_lid, "LID checkpoint")));
      }
      const System sys{&m, &vocab, clf ? &*clf : nullptr};
      std::vector<OutputRecord> recs;
      std::vector<SegmentStats> segs;
      for (const auto& u : named_set(corpus, eval_set)) {
        recs.push_back(to_record(u.id, run_system(sys, u, mode, cfg.decode)));
        segs.push_back(segment_stats(recs.back(), u));
      }
      write_outputs(*eval.out, recs);
      std::cout << eval_set << " WER " << corpus_score(MetricName::WER, segs) << " BLEU "
                << corpus_score(MetricName::BLEU, segs) << '\n';
    } else if (analyze_cmd->parsed() || report_cmd->parsed()) {
      const bool is_report = report_cmd->parsed();
      const fs::path dir = is_report ? report_run : analyze_run;
      ExperimentConfig cfg = ExperimentConfig::load(existing(dir / "config.txt", "run config"));
      cfg.out_dir = dir;
      const ToyCorpus corpus = load_toy_corpus(RunLayout{dir}.corpus());
      const Common& c = is_report ? report : analyze;
      std::string text;
      if (is_report) {
        write_reports(cfg, corpus);
        text = read_file(RunLayout{dir}.reports() / "table.txt");
      } else {
        text = analysis_report(cfg, corpus);
      }
      if (c.out) write_file_atomic(*c.out, text);
      else std::cout << text;
    } else if (run_cmd->parsed()) {
      ExperimentConfig cfg = experiment_config(run);
      if (run.seed) cfg.root_seed = *run.seed;
      if (run.out) cfg.out_dir = *run.out;
      std::cout << run_matrix(cfg).to_text();
    } else if (score_cmd->parsed()) {
      const MetricName metric = metric_from_string(score_metric);
      const auto refs = read_lines(score_ref);
      if (refs.empty()) throw Error("reference file is empty");
      std::vector<std::vector<SegmentStats>> systems;
      for (const auto& h : score_hyps) {
        const auto hyps = read_lines(h);
        if (hyps.size() != refs.size())
          throw Error("'" + h.string() + "' has " + std::to_string(hyps.size()) + " lines, reference has " +
                      std::to_string(refs.size()));
        std::vector<SegmentStats> segs;
        for (std::size_t i = 0; i < refs.size(); ++i) {
          const std::string hyp = strip_punctuation(hyps[i]), ref = strip_punctuation(refs[i]);
          segs.push_back({word_edits(hyp, ref), char_edits(hyp, ref), bleu_stats(hyp, ref),
                          charcut_stats(hyp, ref)});
        }
        systems.push_back(std::move(segs));
      }
      const Direction dir = direction_of(metric);
      std::vector<double> values;
      std::size_t best = 0;
      for (std::size_t s = 0; s < systems.size(); ++s) {
        values.push_back(corpus_score(metric, systems[s]));
        if (s > 0 && values[s] != values[best] && at_least_as_good(values[s], values[best], dir)) best = s;
      }
      nlohmann::json out = nlohmann::json::array();
      for (std::size_t s = 0; s < systems.size(); ++s) {
        SignificanceResult sig;
        sig.verdict = Verdict::best;
        if (s != best)
          sig = bootstrap_significance(
              refs.size(), [&](std::span<const std::size_t> idx) { return corpus_score(metric, systems[best], idx); },
              [&](std::span<const std::size_t> idx) { return corpus_score(metric, systems[s], idx); }, dir,
              score_resamples, score.seed.value_or(0));
        out.push_back({{"system", score_hyps[s].string()},
                       {"metric", std::string(to_string(metric))},
                       {"value", values[s]},
                       {"p_value", sig.p_value},
                       {"verdict", std::string(to_string(sig.verdict))}});
      }
      const std::string text = out.dump(2) + '\n';
      if (score.out) write_file_atomic(*score.out, text);
      else std::cout << text;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
