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

// Optimization: the tri-stage learning-rate schedule, the freeze plan,
// Adam, the training loop with dev-based model selection and early
// stopping, CS fine-tuning, the LID recipe and the warm-start ablation.
// Checkpoints and metric traces live here too.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "csst/corpus.hpp"
#include "csst/inference.hpp"
#include "csst/model.hpp"

namespace csst {

// Step counts are (64 / batch_size) * {500, 500, 3000}, multiplied by
// step_scale (1 reproduces the published schedule; smaller values shrink
// it for desk-scale runs).
struct TriStageSchedule {
  double peak_lr = 5e-4;
  int batch_size = 64;
  double step_scale = 1.0;
  double floor_ratio = 0.01;

  double warmup_steps() const { return base() * 500.0; }
  double hold_steps() const { return base() * 500.0; }
  double decay_steps() const { return base() * 3000.0; }
  double floor_lr() const { return peak_lr * floor_ratio; }
  void validate() const;

 private:
  double base() const { return 64.0 / batch_size * step_scale; }
};

// Linear 0 -> peak over warmup, peak during hold, linear peak -> floor over
// decay, floor afterwards.
double lr_at(double step, const TriStageSchedule& s);

inline const std::set<std::string>& all_parameter_groups() {
  static const std::set<std::string> groups{kGroupSpeechEncoder, kGroupBridge, kGroupTextEncoder,
                                            kGroupDecoder, kGroupFirstDecoderAttention, kGroupLid};
  return groups;
}

struct FreezePlan {
  int batch_size = 64;
  double step_scale = 1.0;
  std::set<std::string> exempt{kGroupBridge, kGroupFirstDecoderAttention};

  double freeze_steps() const { return 500.0 * (64.0 / batch_size) * step_scale; }
};

// Trainable groups at a step: only the exempt groups while frozen.
std::set<std::string> freeze_mask(double step, const FreezePlan& plan);

enum class SelectionMetric { dev_loss, dev_wer };

struct TrainPlan {
  TriStageSchedule schedule;
  FreezePlan freeze;
  long max_steps = 3000;
  long eval_every = 100;
  int early_stop_patience = 5;
  std::uint64_t seed = 0;
  LossWeights weights;
  SelectionMetric selection = SelectionMetric::dev_loss;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  // Dev utterances used per evaluation (0 = all).
  int dev_limit = 0;
  DecodeConfig dev_decode;

  void validate() const;
  KeyValues to_kv() const;
  static TrainPlan from_kv(const KeyValues& kv);
  // Schedule and freeze plan scaled so the decay ends at max_steps.
  static TrainPlan desk_scale(long max_steps, int batch_size, double peak_lr = 5e-4);
};

// Adam over every parameter that received a gradient since the last step
// and belongs to a trainable group. Untouched parameters keep their values
// and moments bitwise.
void adam_step(ParameterRegistry& reg, double lr, const std::set<std::string>& trainable,
               const TrainPlan& plan);

// ---------------------------------------------------------------------------
// Checkpoints (header line `#cs-ckpt v1`, then key=value lines, then tensor
// blobs of little-endian doubles).

inline constexpr std::string_view kCheckpointHeader = "#cs-ckpt v1";
inline constexpr std::string_view kLidModelType = "LID";

struct Checkpoint {
  struct Tensor {
    std::string group;
    Mat value, m, v;
    long updates = 0;
  };
  std::string model_type;  // architecture name or "LID"
  ModelDims dims;
  std::uint64_t init_seed = 0;
  long step = 0;
  std::string rng_state;
  KeyValues config;
  std::map<std::string, Tensor> tensors;
};

Checkpoint capture(const ParameterRegistry& reg, std::string model_type, const ModelDims& dims,
                   std::uint64_t init_seed, long step);
Checkpoint capture(const Model& m, long step = 0);
Checkpoint capture(const LidClassifier& lid, long step = 0);
// Copies tensors into a registry with the same names and shapes.
void restore(ParameterRegistry& reg, const Checkpoint& ckpt);
Model model_from_checkpoint(const Checkpoint& ckpt);
LidClassifier lid_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Metric trace: one JSON object per line {step, split, metric, value}.

struct TraceRecord {
  long step = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
  bool operator==(const TraceRecord&) const = default;
};

struct MetricTrace {
  std::vector<TraceRecord> records;
  void add(long step, std::string split, std::string metric, double value);
  std::string to_jsonl() const;
  void append_to(const std::filesystem::path& path) const;
  static MetricTrace read(const std::filesystem::path& path);
};

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  Checkpoint best;
  MetricTrace trace;
  long steps_run = 0;
  long best_step = 0;
  double best_metric = 0.0;
  bool early_stopped = false;
};

// Early stopping on a sequence of dev evaluations (lower is better):
// stops once `patience` consecutive evaluations fail to improve the best.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  // Returns true when the value is a new best.
  bool observe(double value);
  bool should_stop() const { return patience_ > 0 && bad_ >= patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int bad_ = 0;
  double best_ = 0.0;
  bool any_ = false;
};

// Mean joint loss over utterances (no dropout).
double mean_loss(const Model& m, const Vocabulary& vocab, const std::vector<Utterance>& utts,
                 const LossWeights& w = {});
// Corpus WER of greedy/beam transcripts, routing LID-gated kinds by gold label.
double transcript_wer(const Model& m, const Vocabulary& vocab, const std::vector<Utterance>& utts,
                      const DecodeConfig& cfg);

// Trains in place; the model ends in its best (selected) state. LID-gated
// kinds route each utterance to the sub-system of its gold matrix language.
TrainResult train(Model& m, const Vocabulary& vocab, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& dev_set, const TrainPlan& plan);

// Continues training a checkpoint on CS data with fresh optimizer moments
// and a restarted schedule.
TrainResult finetune(const Checkpoint& ckpt, ArchitectureKind expected, const Vocabulary& vocab,
                     const std::vector<Utterance>& cs_train, const std::vector<Utterance>& cs_dev,
                     const TrainPlan& plan);

struct LidDatasets {
  std::vector<Utterance> cs;  // empty for the No-FT condition
  // Other sources (here: monolingual L1 and L2 speech).
  std::vector<std::vector<Utterance>> others;
  std::vector<Utterance> dev;
};

// One epoch of the LID mixture as (source, index) pairs: every CS example
// `upsample_cs` times, and each other source sampled to 2x the CS set size
// (without replacement while it lasts). Without CS data each other source
// contributes all of its examples once.
std::vector<std::pair<int, std::size_t>> lid_epoch_mixture(const LidDatasets& data,
                                                          int upsample_cs, Rng& rng);

TrainResult train_lid(LidClassifier& lid, const LidDatasets& data, int upsample_cs,
                      const TrainPlan& plan);
double lid_accuracy(const LidClassifier& lid, const std::vector<Utterance>& utts);

struct WarmStartResult {
  TrainResult base;  // monolingual stage
  TrainResult warm;  // base, then CS fine-tuning
  TrainResult cold;  // CS only, from random init
};

WarmStartResult warmstart_ablation(ArchitectureKind kind, const ModelDims& dims,
                                   std::uint64_t init_seed, const Vocabulary& vocab,
                                   const ToyCorpus& corpus, const TrainPlan& base_plan,
                                   const TrainPlan& ft_plan);

}  // namespace csst
