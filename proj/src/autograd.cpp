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

#include "csst/autograd.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace csst {

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t h) {
  return splitmix64(seed ^ (h + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

std::uint64_t hash_matrix(const Mat& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t shape[2] = {m.rows(), m.cols()};
  mix(shape, sizeof(shape));
  mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  return h;
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.requires_grad = grad_enabled_;
  if (grad_enabled_) {
    Parameter* target = &p;
    n.back = [target](Tape& t, int self) {
      target->grad += t.grad(self);
      target->used = true;
    };
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Mat value, bool requires_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Mat& v = n.external ? *n.external : n.value;
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var out) {
  if (!grad_enabled_) throw Error("Tape::backward: gradients are disabled");
  const Mat& v = value(out);
  if (v.rows() != 1 || v.cols() != 1) throw Error("Tape::backward: output must be 1x1");
  grad(out)(0, 0) += 1.0;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.back || n.grad.size() == 0) continue;
    n.back(*this, i);
  }
}

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

namespace ops {
namespace {

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (t.requires_grad(v)) return true;
  return false;
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Mat& A = t.value(a);
  const Mat& B = t.value(b);
  if (A.cols() != B.rows()) throw Error("matmul: inner dimension mismatch");
  Mat C = A * B;
  return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape& t, int self) {
    const Mat& G = t.grad(self);
    if (t.requires_grad(a)) t.grad(a).noalias() += G * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * G;
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  const Mat& A = t.value(a);
  const Mat& B = t.value(b);
  if (A.cols() != B.cols()) throw Error("matmul_nt: inner dimension mismatch");
  Mat C = A * B.transpose();
  return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape& t, int self) {
    const Mat& G = t.grad(self);
    if (t.requires_grad(a)) t.grad(a).noalias() += G * t.value(b);
    if (t.requires_grad(b)) t.grad(b).noalias() += G.transpose() * t.value(a);
  });
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  Mat C = t.value(a) + t.value(b);
  return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape& t, int self) {
    if (t.requires_grad(a)) t.grad(a) += t.grad(self);
    if (t.requires_grad(b)) t.grad(b) += t.grad(self);
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Mat& A = t.value(a);
  const Mat& R = t.value(row);
  if (R.rows() != 1 || R.cols() != A.cols()) throw Error("add_row: bias shape mismatch");
  Mat C = A.rowwise() + R.row(0);
  return t.push(std::move(C), any_grad(t, {a, row}), [a, row](Tape& t, int self) {
    const Mat& G = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += G;
    if (t.requires_grad(row)) t.grad(row) += G.colwise().sum();
  });
}

Var scale(Tape& t, Var a, double s) {
  Mat C = t.value(a) * s;
  return t.push(std::move(C), t.requires_grad(a), [a, s](Tape& t, int self) {
    t.grad(a) += t.grad(self) * s;
  });
}

Var gelu(Tape& t, Var a) {
  const Mat& X = t.value(a);
  Mat Y = X.unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
  });
  return t.push(std::move(Y), t.requires_grad(a), [a](Tape& t, int self) {
    const Mat& X = t.value(a);
    Mat d = X.unaryExpr([](double x) {
      const double u = kGeluC * (x + 0.044715 * x * x * x);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
    });
    t.grad(a).array() += t.grad(self).array() * d.array();
  });
}

Var tanh(Tape& t, Var a) {
  Mat Y = t.value(a).array().tanh().matrix();
  return t.push(std::move(Y), t.requires_grad(a), [a](Tape& t, int self) {
    const Mat& Y = t.value(Var{self});
    t.grad(a).array() += t.grad(self).array() * (1.0 - Y.array().square());
  });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Mat& X = t.value(x);
  const Mat& g = t.value(gamma);
  const Mat& b = t.value(beta);
  const Eigen::Index n = X.cols();
  if (g.cols() != n || b.cols() != n) throw Error("layer_norm: parameter width mismatch");
  Mat xhat(X.rows(), n);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mean = X.row(r).mean();
    const double var = (X.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mean) * inv_std(r);
  }
  Mat Y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  return t.push(std::move(Y), any_grad(t, {x, gamma, beta}),
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& t, int self) {
                  const Mat& G = t.grad(self);
                  if (t.requires_grad(gamma))
                    t.grad(gamma) += (G.array() * xhat.array()).colwise().sum().matrix();
                  if (t.requires_grad(beta)) t.grad(beta) += G.colwise().sum();
                  if (t.requires_grad(x)) {
                    const Mat& g = t.value(gamma);
                    Mat gx = G.array().rowwise() * g.row(0).array();
                    const double n = static_cast<double>(gx.cols());
                    Mat& dx = t.grad(x);
                    for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                      const double s1 = gx.row(r).sum();
                      const double s2 = gx.row(r).dot(xhat.row(r));
                      dx.row(r).array() += inv_std(r) / n *
                                           (n * gx.row(r).array() - s1 - xhat.row(r).array() * s2);
                    }
                  }
                });
}

Var softmax_rows(Tape& t, Var a, bool causal, int offset) {
  const Mat& S = t.value(a);
  Mat P = Mat::Zero(S.rows(), S.cols());
  for (Eigen::Index r = 0; r < S.rows(); ++r) {
    Eigen::Index width = S.cols();
    if (causal) width = std::min<Eigen::Index>(S.cols(), r + offset + 1);
    if (width <= 0) continue;
    auto row = S.row(r).head(width);
    const double mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    P.row(r).head(width) = e / e.sum();
  }
  return t.push(std::move(P), t.requires_grad(a), [a](Tape& t, int self) {
    const Mat& P = t.value(Var{self});
    const Mat& G = t.grad(self);
    Eigen::VectorXd dot = (G.array() * P.array()).rowwise().sum();
    t.grad(a).array() += P.array() * (G.array().colwise() - dot.array());
  });
}

Var col_slice(Tape& t, Var a, int start, int len) {
  const Mat& A = t.value(a);
  if (start < 0 || len < 0 || start + len > A.cols()) throw Error("col_slice: out of range");
  Mat C = A.middleCols(start, len);
  return t.push(std::move(C), t.requires_grad(a), [a, start, len](Tape& t, int self) {
    t.grad(a).middleCols(start, len) += t.grad(self);
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw Error("concat_cols: row mismatch");
    cols += t.value(p).cols();
    rg = rg || t.requires_grad(p);
  }
  Mat C(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    C.middleCols(off, t.value(p).cols()) = t.value(p);
    off += t.value(p).cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(C), rg, [inputs = std::move(inputs)](Tape& t, int self) {
    Eigen::Index off = 0;
    for (Var p : inputs) {
      const Eigen::Index w = t.value(p).cols();
      if (t.requires_grad(p)) t.grad(p) += t.grad(self).middleCols(off, w);
      off += w;
    }
  });
}

Var gather_rows(Tape& t, Var table, std::span<const int> ids) {
  const Mat& T = t.value(table);
  Mat C(static_cast<Eigen::Index>(ids.size()), T.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= T.rows())
      throw Error("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                  std::to_string(T.rows()) + " rows");
    C.row(static_cast<Eigen::Index>(i)) = T.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return t.push(std::move(C), t.requires_grad(table),
                [table, idx = std::move(idx)](Tape& t, int self) {
                  Mat& g = t.grad(table);
                  const Mat& G = t.grad(self);
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    g.row(idx[i]) += G.row(static_cast<Eigen::Index>(i));
                });
}

Var unfold(Tape& t, Var x, int kernel, int stride, int pad) {
  const Mat& X = t.value(x);
  const Eigen::Index T = X.rows();
  const Eigen::Index d = X.cols();
  const Eigen::Index out_rows = (T + 2 * pad - kernel) / stride + 1;
  if (out_rows < 1) throw Error("unfold: input too short for kernel");
  Mat C = Mat::Zero(out_rows, kernel * d);
  for (Eigen::Index r = 0; r < out_rows; ++r)
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = r * stride - pad + k;
      if (src >= 0 && src < T) C.row(r).segment(k * d, d) = X.row(src);
    }
  return t.push(std::move(C), t.requires_grad(x), [x, kernel, stride, pad](Tape& t, int self) {
    Mat& g = t.grad(x);
    const Mat& G = t.grad(self);
    const Eigen::Index T = g.rows();
    const Eigen::Index d = g.cols();
    for (Eigen::Index r = 0; r < G.rows(); ++r)
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = r * stride - pad + k;
        if (src >= 0 && src < T) g.row(src) += G.row(r).segment(k * d, d);
      }
  });
}

Var mean_rows(Tape& t, Var x) {
  const Mat& X = t.value(x);
  Mat C = X.colwise().mean();
  return t.push(std::move(C), t.requires_grad(x), [x](Tape& t, int self) {
    Mat& g = t.grad(x);
    const double inv = 1.0 / static_cast<double>(g.rows());
    g.rowwise() += t.grad(self).row(0) * inv;
  });
}

Var cross_entropy(Tape& t, Var logits, std::span<const int> targets) {
  const Mat& L = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != L.rows())
    throw Error("cross_entropy: target count does not match logit rows");
  Mat logp = log_softmax_rows(L);
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= L.cols())
      throw Error("cross_entropy: label " + std::to_string(targets[i]) + " exceeds vocabulary of " +
                  std::to_string(L.cols()));
    loss -= logp(static_cast<Eigen::Index>(i), targets[i]);
  }
  loss /= static_cast<double>(targets.size());
  Mat out(1, 1);
  out(0, 0) = loss;
  std::vector<int> tg(targets.begin(), targets.end());
  return t.push(std::move(out), t.requires_grad(logits),
                [logits, tg = std::move(tg), logp = std::move(logp)](Tape& t, int self) {
                  const double g = t.grad(self)(0, 0) / static_cast<double>(tg.size());
                  Mat d = logp.array().exp();
                  for (std::size_t i = 0; i < tg.size(); ++i)
                    d(static_cast<Eigen::Index>(i), tg[i]) -= 1.0;
                  t.grad(logits) += d * g;
                });
}

Var dropout(Tape& t, Var x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  const Mat& X = t.value(x);
  Mat mask(X.rows(), X.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  Mat Y = X.cwiseProduct(mask);
  return t.push(std::move(Y), t.requires_grad(x), [x, mask = std::move(mask)](Tape& t, int self) {
    t.grad(x) += t.grad(self).cwiseProduct(mask);
  });
}

Var weighted_sum(Tape& t, std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) throw Error("weighted_sum: size mismatch");
  double total = 0.0;
  bool rg = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    total += weights[i] * t.scalar(scalars[i]);
    rg = rg || t.requires_grad(scalars[i]);
  }
  Mat out(1, 1);
  out(0, 0) = total;
  std::vector<Var> in(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  return t.push(std::move(out), rg, [in = std::move(in), w = std::move(w)](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    for (std::size_t i = 0; i < in.size(); ++i)
      if (t.requires_grad(in[i])) t.grad(in[i])(0, 0) += g * w[i];
  });
}

}  // namespace ops
}  // namespace csst
