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

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records one forward computation. Every op appends a node holding
// its value and, when gradients are enabled, a closure that propagates the
// node's gradient to its inputs. Parameters enter the tape as leaves that
// alias the parameter storage; backward() adds the leaf gradients into
// Parameter::grad, so a parameter used several times in one forward pass
// (shared modules) accumulates all contributions.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "csst/common.hpp"
#include "csst/matrix.hpp"

namespace csst {

struct Parameter {
  std::string name;   // canonical name
  std::string group;  // freeze group, e.g. "bridge", "decoder"
  Mat value;
  Mat grad;
  // Adam moments and per-parameter update count.
  Mat m;
  Mat v;
  long updates = 0;
  // Set when backward() delivered a gradient since the last optimizer step.
  bool used = false;

  Parameter() = default;
  Parameter(std::string n, std::string g, Mat init)
      : name(std::move(n)), group(std::move(g)), value(std::move(init)) {
    grad = Mat::Zero(value.rows(), value.cols());
    m = grad;
    v = grad;
  }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat value);
  Var param(Parameter& p);

  const Mat& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.external ? *n.external : n.value;
  }
  double scalar(Var v) const { return value(v)(0, 0); }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  // Seeds d(out)/d(out) = 1 for a 1x1 node and runs the reverse sweep.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Building blocks for ops.
  using Backward = std::function<void(Tape&, int self)>;
  Var push(Mat value, bool requires_grad, Backward back);
  // Gradient slot of a node, zero-initialized on first access.
  Mat& grad(int id);
  Mat& grad(Var v) { return grad(v.id); }
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() > 0; }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool requires_grad = false;
    Backward back;
  };
  bool grad_enabled_;
  std::vector<Node> nodes_;
};

namespace ops {

Var matmul(Tape& t, Var a, Var b);
// a * b^T
Var matmul_nt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
// Adds a 1 x n row to every row of a.
Var add_row(Tape& t, Var a, Var row);
Var scale(Tape& t, Var a, double s);
Var gelu(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
// Row-wise softmax; with causal=true entry (i, j) is masked for j > i + offset.
Var softmax_rows(Tape& t, Var a, bool causal, int offset = 0);
Var col_slice(Tape& t, Var a, int start, int len);
Var concat_cols(Tape& t, std::span<const Var> parts);
// Rows of `table` selected by ids.
Var gather_rows(Tape& t, Var table, std::span<const int> ids);
// Convolution unfold: output row r concatenates input rows
// r*stride - pad .. r*stride - pad + kernel - 1 (zeros outside range).
Var unfold(Tape& t, Var x, int kernel, int stride, int pad);
Var mean_rows(Tape& t, Var x);
// Mean token cross-entropy; rows of logits score targets[i]. Result is 1x1.
Var cross_entropy(Tape& t, Var logits, std::span<const int> targets);
Var dropout(Tape& t, Var x, double p, Rng& rng);
// Weighted sum of 1x1 nodes.
Var weighted_sum(Tape& t, std::span<const Var> scalars, std::span<const double> weights);

}  // namespace ops

Mat log_softmax_rows(const Mat& logits);

}  // namespace csst
