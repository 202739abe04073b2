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

#include "csst/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "csst/metrics.hpp"
#include "json.hpp"

namespace csst {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in host order, which must be little-endian");

// ---------------------------------------------------------------------------
// Schedule and freezing

void TriStageSchedule::validate() const {
  if (!(peak_lr > 0.0)) throw Error("schedule: peak_lr must be positive");
  if (batch_size < 1) throw Error("schedule: batch_size must be positive");
  if (!(step_scale > 0.0)) throw Error("schedule: step_scale must be positive");
  if (!(floor_ratio >= 0.0 && floor_ratio <= 1.0)) throw Error("schedule: floor_ratio must lie in [0, 1]");
}

double lr_at(double step, const TriStageSchedule& s) {
  if (step < 0) throw Error("lr_at: negative step");
  const double w = s.warmup_steps();
  const double h = s.hold_steps();
  const double d = s.decay_steps();
  if (step < w) return s.peak_lr * (step / w);
  if (step < w + h) return s.peak_lr;
  if (step < w + h + d) {
    const double f = (step - w - h) / d;
    return s.peak_lr * (1.0 - f) + s.floor_lr() * f;
  }
  return s.floor_lr();
}

std::set<std::string> freeze_mask(double step, const FreezePlan& plan) {
  if (step < 0) throw Error("freeze_mask: negative step");
  return step < plan.freeze_steps() ? plan.exempt : all_parameter_groups();
}

void TrainPlan::validate() const {
  schedule.validate();
  if (freeze.batch_size < 1 || !(freeze.step_scale > 0.0)) throw Error("plan: invalid freeze plan");
  if (max_steps < 0) throw Error("plan: max_steps must be >= 0");
  if (eval_every < 1) throw Error("plan: eval_every must be positive");
  if (max_steps > 0 && eval_every > max_steps) throw Error("plan: eval_every exceeds max_steps");
  if (early_stop_patience < 0) throw Error("plan: patience must be >= 0");
  if (dev_limit < 0) throw Error("plan: dev_limit must be >= 0");
  dev_decode.validate();
}

namespace {

std::string join_set(const std::set<std::string>& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
  return out;
}

std::set<std::string> split_set(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

}  // namespace

KeyValues TrainPlan::to_kv() const {
  KeyValues kv;
  kv["peak_lr"] = format_double(schedule.peak_lr);
  kv["batch_size"] = std::to_string(schedule.batch_size);
  kv["step_scale"] = format_double(schedule.step_scale);
  kv["floor_ratio"] = format_double(schedule.floor_ratio);
  kv["freeze_step_scale"] = format_double(freeze.step_scale);
  kv["freeze_exempt"] = join_set(freeze.exempt);
  kv["max_steps"] = std::to_string(max_steps);
  kv["eval_every"] = std::to_string(eval_every);
  kv["patience"] = std::to_string(early_stop_patience);
  kv["seed"] = std::to_string(seed);
  kv["w_transcript"] = format_double(weights.transcript);
  kv["w_translation"] = format_double(weights.translation);
  kv["selection"] = selection == SelectionMetric::dev_wer ? "dev_wer" : "dev_loss";
  kv["beta1"] = format_double(beta1);
  kv["beta2"] = format_double(beta2);
  kv["eps"] = format_double(eps);
  kv["dev_limit"] = std::to_string(dev_limit);
  kv["dev_beam_size"] = std::to_string(dev_decode.effective_beam());
  kv["dev_max_len"] = std::to_string(dev_decode.max_len);
  return kv;
}

TrainPlan TrainPlan::from_kv(const KeyValues& kv) {
  TrainPlan p;
  for (const auto& [k, v] : kv) {
    if (k == "peak_lr") p.schedule.peak_lr = parse_double(v, k);
    else if (k == "batch_size") p.schedule.batch_size = p.freeze.batch_size = static_cast<int>(parse_int(v, k));
    else if (k == "step_scale") p.schedule.step_scale = parse_double(v, k);
    else if (k == "floor_ratio") p.schedule.floor_ratio = parse_double(v, k);
    else if (k == "freeze_step_scale") p.freeze.step_scale = parse_double(v, k);
    else if (k == "freeze_exempt") {
      p.freeze.exempt = split_set(v);
      const auto groups = all_parameter_groups();
      for (const auto& g : p.freeze.exempt)
        if (!groups.count(g)) throw Error("train plan: unknown parameter group '" + g + "'");
    }
    else if (k == "max_steps") p.max_steps = parse_int(v, k);
    else if (k == "eval_every") p.eval_every = parse_int(v, k);
    else if (k == "patience") p.early_stop_patience = static_cast<int>(parse_int(v, k));
    else if (k == "seed") p.seed = static_cast<std::uint64_t>(parse_int(v, k));
    else if (k == "w_transcript") p.weights.transcript = parse_double(v, k);
    else if (k == "w_translation") p.weights.translation = parse_double(v, k);
    else if (k == "selection") {
      if (v == "dev_loss") p.selection = SelectionMetric::dev_loss;
      else if (v == "dev_wer") p.selection = SelectionMetric::dev_wer;
      else throw Error("plan: unknown selection metric '" + v + "'");
    } else if (k == "beta1") p.beta1 = parse_double(v, k);
    else if (k == "beta2") p.beta2 = parse_double(v, k);
    else if (k == "eps") p.eps = parse_double(v, k);
    else if (k == "dev_limit") p.dev_limit = static_cast<int>(parse_int(v, k));
    else if (k == "dev_beam_size") {
      p.dev_decode.beam_size = static_cast<int>(parse_int(v, k));
      p.dev_decode.strategy = p.dev_decode.beam_size == 1 ? DecodeStrategy::greedy : DecodeStrategy::beam;
    } else if (k == "dev_max_len") p.dev_decode.max_len = static_cast<int>(parse_int(v, k));
    else throw Error("plan: unknown key '" + k + "'");
  }
  p.validate();
  return p;
}

TrainPlan TrainPlan::desk_scale(long max_steps, int batch_size, double peak_lr) {
  TrainPlan p;
  p.max_steps = max_steps;
  p.schedule.peak_lr = peak_lr;
  p.schedule.batch_size = batch_size;
  p.freeze.batch_size = batch_size;
  const double full = 4000.0 * 64.0 / batch_size;
  p.schedule.step_scale = static_cast<double>(std::max<long>(max_steps, 1)) / full;
  p.freeze.step_scale = p.schedule.step_scale;
  p.eval_every = std::max<long>(1, max_steps / 20);
  return p;
}

void adam_step(ParameterRegistry& reg, double lr, const std::set<std::string>& trainable,
               const TrainPlan& plan) {
  for (auto& [name, p] : reg.params()) {
    if (!p.used) continue;
    p.used = false;
    if (!trainable.count(p.group)) continue;
    ++p.updates;
    const double c1 = 1.0 - std::pow(plan.beta1, static_cast<double>(p.updates));
    const double c2 = 1.0 - std::pow(plan.beta2, static_cast<double>(p.updates));
    p.m = plan.beta1 * p.m + (1.0 - plan.beta1) * p.grad;
    p.v = plan.beta2 * p.v + (1.0 - plan.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + plan.eps);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint capture(const ParameterRegistry& reg, std::string model_type, const ModelDims& dims,
                   std::uint64_t init_seed, long step) {
  Checkpoint c;
  c.model_type = std::move(model_type);
  c.dims = dims;
  c.init_seed = init_seed;
  c.step = step;
  for (const auto& [name, p] : reg.params()) c.tensors[name] = {p.group, p.value, p.m, p.v, p.updates};
  return c;
}

Checkpoint capture(const Model& m, long step) {
  return capture(m.registry, std::string(to_string(m.kind)), m.dims, m.seed, step);
}

Checkpoint capture(const LidClassifier& lid, long step) {
  return capture(lid.registry, std::string(kLidModelType), lid.dims, lid.seed, step);
}

void restore(ParameterRegistry& reg, const Checkpoint& ckpt) {
  if (reg.params().size() != ckpt.tensors.size())
    throw Error("restore: checkpoint has " + std::to_string(ckpt.tensors.size()) +
                " tensors, model has " + std::to_string(reg.params().size()));
  for (auto& [name, p] : reg.params()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw Error("restore: checkpoint lacks tensor '" + name + "'");
    const auto& t = it->second;
    if (t.value.rows() != p.value.rows() || t.value.cols() != p.value.cols())
      throw Error("restore: shape mismatch for '" + name + "'");
    p.value = t.value;
    p.m = t.m;
    p.v = t.v;
    p.updates = t.updates;
    p.grad.setZero();
    p.used = false;
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model m = build_model(architecture_from_string(ckpt.model_type), ckpt.dims, ckpt.init_seed);
  restore(m.registry, ckpt);
  return m;
}

LidClassifier lid_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_type != kLidModelType)
    throw Error("checkpoint holds a '" + ckpt.model_type + "' model, not an LID classifier");
  LidClassifier lid = LidClassifier::build(ckpt.dims, ckpt.init_seed);
  restore(lid.registry, ckpt);
  return lid;
}

namespace {

void append_blob(std::string& out, const Mat& m) {
  const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
  const std::size_t at = out.size();
  out.resize(at + bytes);
  if (bytes) std::memcpy(out.data() + at, m.data(), bytes);
}

Mat read_blob(const std::string& in, std::size_t& pos, long rows, long cols) {
  Mat m(rows, cols);
  const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
  if (pos + bytes > in.size()) throw Error("checkpoint: truncated tensor data");
  if (bytes) std::memcpy(m.data(), in.data() + pos, bytes);
  pos += bytes;
  return m;
}

std::string next_line(const std::string& in, std::size_t& pos) {
  const std::size_t nl = in.find('\n', pos);
  if (nl == std::string::npos) throw Error("checkpoint: unexpected end of header");
  std::string line = in.substr(pos, nl - pos);
  pos = nl + 1;
  return line;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kCheckpointHeader);
  out += '\n';
  out += "model=" + ckpt.model_type + '\n';
  out += "init_seed=" + std::to_string(ckpt.init_seed) + '\n';
  out += "step=" + std::to_string(ckpt.step) + '\n';
  out += "rng_state=" + ckpt.rng_state + '\n';
  for (const auto& [k, v] : ckpt.dims.to_kv()) out += "dims." + k + "=" + v + '\n';
  for (const auto& [k, v] : ckpt.config) {
    if (v.find('\n') != std::string::npos) throw Error("checkpoint: config value contains a newline");
    out += "config." + k + "=" + v + '\n';
  }
  out += "tensors=" + std::to_string(ckpt.tensors.size()) + '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    out += name + '\t' + t.group + '\t' + std::to_string(t.value.rows()) + '\t' +
           std::to_string(t.value.cols()) + '\t' + std::to_string(t.updates) + '\n';
    append_blob(out, t.value);
    append_blob(out, t.m);
    append_blob(out, t.v);
    out += '\n';
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  std::size_t pos = 0;
  if (next_line(in, pos) != kCheckpointHeader)
    throw Error("'" + path.string() + "': not a checkpoint (expected '" +
                std::string(kCheckpointHeader) + "')");
  Checkpoint c;
  KeyValues dims;
  long n_tensors = -1;
  while (n_tensors < 0) {
    const std::string line = next_line(in, pos);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("checkpoint: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "model") c.model_type = value;
    else if (key == "init_seed") c.init_seed = std::stoull(value);
    else if (key == "step") c.step = parse_int(value, key);
    else if (key == "rng_state") c.rng_state = value;
    else if (key.rfind("dims.", 0) == 0) dims[key.substr(5)] = value;
    else if (key.rfind("config.", 0) == 0) c.config[key.substr(7)] = value;
    else if (key == "tensors") n_tensors = parse_int(value, key);
    else throw Error("checkpoint: unknown header key '" + key + "'");
  }
  c.dims = ModelDims::from_kv(dims);
  for (long i = 0; i < n_tensors; ++i) {
    std::istringstream fields(next_line(in, pos));
    std::string name, group;
    long rows = 0, cols = 0, updates = 0;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, group, '\t') ||
        !(fields >> rows >> cols >> updates) || rows < 0 || cols < 0)
      throw Error("checkpoint: malformed tensor header");
    Checkpoint::Tensor t;
    t.group = group;
    t.updates = updates;
    t.value = read_blob(in, pos, rows, cols);
    t.m = read_blob(in, pos, rows, cols);
    t.v = read_blob(in, pos, rows, cols);
    if (pos >= in.size() || in[pos] != '\n') throw Error("checkpoint: corrupt tensor '" + name + "'");
    ++pos;
    c.tensors.emplace(name, std::move(t));
  }
  if (pos != in.size()) throw Error("checkpoint: trailing data");
  return c;
}

// ---------------------------------------------------------------------------
// Metric trace

void MetricTrace::add(long step, std::string split, std::string metric, double value) {
  records.push_back({step, std::move(split), std::move(metric), value});
}

std::string MetricTrace::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["step"] = r.step;
    j["split"] = r.split;
    j["metric"] = r.metric;
    j["value"] = r.value;
    out += j.dump() + '\n';
  }
  return out;
}

void MetricTrace::append_to(const std::filesystem::path& path) const {
  std::string existing;
  if (std::filesystem::exists(path)) existing = read_file(path);
  write_file_atomic(path, existing + to_jsonl());
}

MetricTrace MetricTrace::read(const std::filesystem::path& path) {
  MetricTrace t;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    t.add(j.at("step").get<long>(), j.at("split").get<std::string>(),
          j.at("metric").get<std::string>(), j.at("value").get<double>());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Training loop

bool EarlyStopper::observe(double value) {
  if (!any_ || value < best_) {
    any_ = true;
    best_ = value;
    bad_ = 0;
    return true;
  }
  ++bad_;
  return false;
}

namespace {

struct LoopHooks {
  ParameterRegistry* reg = nullptr;
  double dropout = 0.0;
  // Batches of example indices for one epoch.
  std::function<std::vector<std::vector<std::size_t>>(Rng&)> epoch;
  std::function<Var(Ctx&, std::size_t)> loss;
  // Named dev metrics; the first is the selection metric (lower is better).
  std::function<std::vector<std::pair<std::string, double>>()> evaluate;
  std::function<Checkpoint(long)> snapshot;
};

TrainResult run_loop(const TrainPlan& plan, const LoopHooks& hooks) {
  plan.validate();
  TrainResult res;
  Rng data_rng(derive_seed(plan.seed, "data"));
  Rng drop_rng(derive_seed(plan.seed, "dropout"));
  EarlyStopper stopper(plan.early_stop_patience);

  auto evaluate = [&](long step) {
    const auto metrics = hooks.evaluate();
    for (const auto& [name, value] : metrics) res.trace.add(step, "dev", name, value);
    const double sel = metrics.front().second;
    if (!std::isfinite(sel)) throw Error("training diverged: non-finite dev metric at step " + std::to_string(step));
    if (stopper.observe(sel)) {
      res.best = hooks.snapshot(step);
      res.best.rng_state = data_rng.state();
      res.best.config = plan.to_kv();
      res.best_step = step;
      res.best_metric = sel;
    }
  };
  evaluate(0);

  std::vector<std::vector<std::size_t>> batches;
  std::size_t next_batch = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  long step = 0;
  while (step < plan.max_steps) {
    if (next_batch >= batches.size()) {
      batches = hooks.epoch(data_rng);
      next_batch = 0;
      if (batches.empty()) throw Error("training: empty training set");
    }
    const auto& batch = batches[next_batch++];
    hooks.reg->zero_grad();
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t idx : batch) {
      Tape t;
      Ctx c{t, &drop_rng, hooks.dropout};
      const Var l = hooks.loss(c, idx);
      const double v = t.scalar(l);
      if (!std::isfinite(v))
        throw Error("training diverged: non-finite loss at step " + std::to_string(step));
      t.backward(ops::scale(t, l, inv));
      loss_sum += v;
      ++loss_count;
    }
    const double lr = lr_at(static_cast<double>(step + 1), plan.schedule);
    adam_step(*hooks.reg, lr, freeze_mask(static_cast<double>(step), plan.freeze), plan);
    ++step;
    if (step % plan.eval_every == 0 || step == plan.max_steps) {
      res.trace.add(step, "train", "loss", loss_sum / static_cast<double>(loss_count));
      res.trace.add(step, "train", "lr", lr);
      loss_sum = 0.0;
      loss_count = 0;
      evaluate(step);
      spdlog::debug("step {} dev {:.4f} best {:.4f} at {}", step, res.trace.records.back().value,
                    res.best_metric, res.best_step);
      if (stopper.should_stop()) {
        res.early_stopped = true;
        break;
      }
    }
  }
  res.steps_run = step;
  restore(*hooks.reg, res.best);
  return res;
}

// Seeded shuffle, then length-sorted pools of 16 batches, then shuffled
// batch order.
std::vector<std::vector<std::size_t>> bucketed_batches(const std::vector<int>& lengths,
                                                       int batch_size, Rng& rng) {
  std::vector<std::size_t> order(lengths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  const std::size_t pool = 16 * bs;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    const auto end = order.begin() + static_cast<long>(std::min(order.size(), start + pool));
    std::stable_sort(order.begin() + static_cast<long>(start), end,
                     [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
    for (auto it = order.begin() + static_cast<long>(start); it < end;) {
      const auto stop = it + std::min<long>(static_cast<long>(bs), end - it);
      batches.emplace_back(it, stop);
      it = stop;
    }
  }
  shuffle(batches, rng);
  return batches;
}

std::vector<Utterance> limited(const std::vector<Utterance>& utts, int limit) {
  if (limit <= 0 || static_cast<std::size_t>(limit) >= utts.size()) return utts;
  return {utts.begin(), utts.begin() + limit};
}

}  // namespace

double mean_loss(const Model& m, const Vocabulary& vocab, const std::vector<Utterance>& utts,
                 const LossWeights& w) {
  if (utts.empty()) throw Error("mean_loss: empty set");
  double sum = 0.0;
  for (const auto& u : utts) {
    Tape t(false);
    Ctx c{t};
    const TokenizedUtterance tok = tokenize(vocab, u);
    sum += t.scalar(forward_joint(c, m, m.route(tok.source), u.frames, tok, w).loss);
  }
  return sum / static_cast<double>(utts.size());
}

double transcript_wer(const Model& m, const Vocabulary& vocab, const std::vector<Utterance>& utts,
                      const DecodeConfig& cfg) {
  if (utts.empty()) throw Error("transcript_wer: empty set");
  EditCounts total;
  for (const auto& u : utts) {
    const DecodeResult r = transcribe(m.route(u.matrix_lang), u.frames, cfg);
    total += word_edits(vocab.decode(r.tokens), u.transcript.text());
  }
  return total.rate();
}

TrainResult train(Model& m, const Vocabulary& vocab, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& dev_set, const TrainPlan& plan) {
  if (train_set.empty()) throw Error("train: empty training set");
  if (dev_set.empty()) throw Error("train: empty dev set");
  if (vocab.size() != m.dims.vocab)
    throw Error("train: vocabulary size does not match the model's vocab dimension");
  std::vector<TokenizedUtterance> toks;
  std::vector<int> lengths;
  for (const auto& u : train_set) {
    toks.push_back(tokenize(vocab, u));
    lengths.push_back(u.duration_frames);
  }
  const std::vector<Utterance> dev = limited(dev_set, plan.dev_limit);

  LoopHooks hooks;
  hooks.reg = &m.registry;
  hooks.dropout = m.dims.dropout;
  hooks.epoch = [&](Rng& rng) { return bucketed_batches(lengths, plan.schedule.batch_size, rng); };
  hooks.loss = [&](Ctx& c, std::size_t i) {
    return forward_joint(c, m, m.route(toks[i].source), train_set[i].frames, toks[i], plan.weights).loss;
  };
  hooks.evaluate = [&]() {
    std::vector<std::pair<std::string, double>> out;
    const double loss = mean_loss(m, vocab, dev, plan.weights);
    if (plan.selection == SelectionMetric::dev_wer) {
      out.emplace_back("wer", transcript_wer(m, vocab, dev, plan.dev_decode));
      out.emplace_back("loss", loss);
    } else {
      out.emplace_back("loss", loss);
    }
    return out;
  };
  hooks.snapshot = [&](long step) { return capture(m, step); };
  return run_loop(plan, hooks);
}

TrainResult finetune(const Checkpoint& ckpt, ArchitectureKind expected, const Vocabulary& vocab,
                     const std::vector<Utterance>& cs_train, const std::vector<Utterance>& cs_dev,
                     const TrainPlan& plan) {
  if (ckpt.model_type != to_string(expected))
    throw Error("finetune: checkpoint holds '" + ckpt.model_type + "', expected '" +
                std::string(to_string(expected)) + "'");
  Model m = model_from_checkpoint(ckpt);
  for (auto& [name, p] : m.registry.params()) {
    p.m.setZero();
    p.v.setZero();
    p.updates = 0;
  }
  return train(m, vocab, cs_train, cs_dev, plan);
}

std::vector<std::pair<int, std::size_t>> lid_epoch_mixture(const LidDatasets& data,
                                                          int upsample_cs, Rng& rng) {
  if (upsample_cs < 1) throw Error("lid mixture: upsample factor must be >= 1");
  std::vector<std::pair<int, std::size_t>> mix;
  for (int k = 0; k < upsample_cs; ++k)
    for (std::size_t i = 0; i < data.cs.size(); ++i) mix.emplace_back(-1, i);
  for (std::size_t s = 0; s < data.others.size(); ++s) {
    const std::size_t n = data.others[s].size();
    if (n == 0) continue;
    const std::size_t want = data.cs.empty() ? n : 2 * data.cs.size();
    std::vector<std::size_t> idx;
    while (idx.size() < want) {
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      shuffle(perm, rng);
      for (std::size_t i = 0; i < n && idx.size() < want; ++i) idx.push_back(perm[i]);
    }
    for (std::size_t i : idx) mix.emplace_back(static_cast<int>(s), i);
  }
  return mix;
}

double lid_accuracy(const LidClassifier& lid, const std::vector<Utterance>& utts) {
  if (utts.empty()) throw Error("lid_accuracy: empty set");
  std::size_t ok = 0;
  for (const auto& u : utts) ok += lid.predict(u.frames) == u.matrix_lang ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(utts.size());
}

TrainResult train_lid(LidClassifier& lid, const LidDatasets& data, int upsample_cs,
                      const TrainPlan& plan) {
  if (data.dev.empty()) throw Error("train_lid: empty dev set");
  std::array<bool, 2> seen{};
  auto note = [&seen](const std::vector<Utterance>& set) {
    for (const auto& u : set) seen[static_cast<std::size_t>(index_of(u.matrix_lang))] = true;
  };
  note(data.cs);
  for (const auto& s : data.others) note(s);
  if (!seen[0] || !seen[1]) throw Error("train_lid: training data contains a single class");

  auto example = [&data](int source, std::size_t i) -> const Utterance& {
    return source < 0 ? data.cs[i] : data.others[static_cast<std::size_t>(source)][i];
  };
  std::vector<std::pair<int, std::size_t>> mix;
  const std::vector<Utterance> dev = limited(data.dev, plan.dev_limit);

  LoopHooks hooks;
  hooks.reg = &lid.registry;
  hooks.dropout = lid.dims.dropout;
  hooks.epoch = [&](Rng& rng) {
    mix = lid_epoch_mixture(data, upsample_cs, rng);
    std::vector<int> lengths;
    for (const auto& [s, i] : mix) lengths.push_back(example(s, i).duration_frames);
    return bucketed_batches(lengths, plan.schedule.batch_size, rng);
  };
  hooks.loss = [&](Ctx& c, std::size_t k) {
    const Utterance& u = example(mix[k].first, mix[k].second);
    const int label = index_of(u.matrix_lang);
    return ops::cross_entropy(c.tape, lid.logits(c, u.frames), std::span<const int>(&label, 1));
  };
  hooks.evaluate = [&]() {
    double loss = 0.0;
    for (const auto& u : dev) {
      Tape t(false);
      Ctx c{t};
      const int label = index_of(u.matrix_lang);
      loss += t.scalar(ops::cross_entropy(t, lid.logits(c, u.frames), std::span<const int>(&label, 1)));
    }
    return std::vector<std::pair<std::string, double>>{
        {"lid_loss", loss / static_cast<double>(dev.size())}, {"lid_accuracy", lid_accuracy(lid, dev)}};
  };
  hooks.snapshot = [&](long step) { return capture(lid, step); };
  TrainPlan p = plan;
  p.freeze.exempt = all_parameter_groups();
  return run_loop(p, hooks);
}

WarmStartResult warmstart_ablation(ArchitectureKind kind, const ModelDims& dims,
                                   std::uint64_t init_seed, const Vocabulary& vocab,
                                   const ToyCorpus& corpus, const TrainPlan& base_plan,
                                   const TrainPlan& ft_plan) {
  WarmStartResult r;
  Model base = build_model(kind, dims, init_seed);
  r.base = train(base, vocab, corpus.train_mono, corpus.dev_mono, base_plan);
  r.warm = finetune(r.base.best, kind, vocab, corpus.train_cs, corpus.dev_cs, ft_plan);
  Model cold = build_model(kind, dims, init_seed);
  r.cold = train(cold, vocab, corpus.train_cs, corpus.dev_cs, ft_plan);
  return r;
}

}  // namespace csst
