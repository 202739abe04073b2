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

#include <cmath>
#include <functional>

#include "csst/autograd.hpp"
#include "csst/layers.hpp"

namespace csst {
namespace {

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Reduces a matrix output to a scalar through a fixed nonlinear functional
// so every entry receives a distinct gradient.
Var reduce(Tape& t, Var out) {
  Rng rng(99);
  const Mat& v = t.value(out);
  if (v.rows() == 1 && v.cols() == 1) return out;
  const Var c1 = t.constant(random_mat(static_cast<int>(v.cols()), 3, rng));
  const Var c2 = t.constant(random_mat(3, 1, rng));
  return ops::matmul(t, ops::mean_rows(t, ops::tanh(t, ops::matmul(t, out, c1))), c2);
}

// Max relative error between analytic and central-difference gradients.
double gradcheck(std::vector<Parameter>& params, const Builder& f) {
  auto loss = [&](bool grad) {
    Tape t(grad);
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(t.param(p));
    const Var l = reduce(t, f(t, vars));
    if (grad) t.backward(l);
    return t.scalar(l);
  };
  for (auto& p : params) p.grad.setZero();
  loss(true);
  double worst = 0.0;
  const double h = 1e-5;
  for (auto& p : params)
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double orig = p.value.data()[i];
      p.value.data()[i] = orig + h;
      const double up = loss(false);
      p.value.data()[i] = orig - h;
      const double down = loss(false);
      p.value.data()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = p.grad.data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)));
    }
  return worst;
}

std::vector<Parameter> params(std::initializer_list<std::pair<int, int>> shapes, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<Parameter> ps;
  int i = 0;
  for (auto [r, c] : shapes) ps.emplace_back("p" + std::to_string(i++), "g", random_mat(r, c, rng));
  return ps;
}

constexpr double kTol = 1e-6;

TEST(OpGradients, Matmul) {
  auto ps = params({{3, 4}, {4, 2}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::matmul(t, v[0], v[1]); }), kTol);
  auto qs = params({{3, 4}, {5, 4}});
  EXPECT_LT(gradcheck(qs, [](Tape& t, auto& v) { return ops::matmul_nt(t, v[0], v[1]); }), kTol);
}

TEST(OpGradients, Elementwise) {
  auto ps = params({{3, 4}, {3, 4}, {1, 4}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) {
              return ops::scale(t, ops::add_row(t, ops::add(t, v[0], v[1]), v[2]), -1.7);
            }),
            kTol);
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::gelu(t, v[0]); }), kTol);
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::tanh(t, v[1]); }), kTol);
}

TEST(OpGradients, LayerNorm) {
  auto ps = params({{3, 5}, {1, 5}, {1, 5}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::layer_norm(t, v[0], v[1], v[2]); }), kTol);
}

TEST(OpGradients, Softmax) {
  auto ps = params({{4, 4}, {3, 5}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::softmax_rows(t, v[0], false); }), kTol);
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::softmax_rows(t, v[0], true); }), kTol);
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::softmax_rows(t, v[1], true, 2); }), kTol);
}

TEST(OpGradients, SlicingAndGathering) {
  auto ps = params({{3, 6}, {3, 2}, {5, 3}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) {
              const Var s = ops::col_slice(t, v[0], 2, 3);
              const std::vector<Var> parts = {s, v[1]};
              return ops::concat_cols(t, parts);
            }),
            kTol);
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) {
              const std::vector<int> ids = {4, 0, 4, 2};  // repeats accumulate
              return ops::gather_rows(t, v[2], ids);
            }),
            kTol);
}

TEST(OpGradients, UnfoldAndMean) {
  auto ps = params({{7, 2}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::unfold(t, v[0], 3, 2, 1); }), kTol);
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) { return ops::mean_rows(t, v[0]); }), kTol);
}

TEST(OpGradients, CrossEntropyAndWeightedSum) {
  auto ps = params({{4, 6}, {1, 1}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) {
              const std::vector<int> targets = {0, 5, 2, 2};
              const Var ce = ops::cross_entropy(t, v[0], targets);
              const std::vector<Var> s = {ce, v[1]};
              const std::vector<double> w = {0.7, 1.3};
              return ops::weighted_sum(t, s, w);
            }),
            kTol);
}

TEST(OpGradients, DropoutWithFixedMask) {
  auto ps = params({{4, 5}});
  EXPECT_LT(gradcheck(ps, [](Tape& t, auto& v) {
              Rng rng(4);
              return ops::dropout(t, v[0], 0.3, rng);
            }),
            kTol);
}

TEST(Ops, CrossEntropyValue) {
  Tape t(false);
  Mat logits(1, 3);
  logits << 1.0, 2.0, 3.0;
  const std::vector<int> target = {2};
  const double expected = -(3.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  EXPECT_NEAR(t.scalar(ops::cross_entropy(t, t.constant(logits), target)), expected, 1e-12);
}

TEST(Ops, CausalSoftmaxMasksFuture) {
  Tape t(false);
  const Mat& s = t.value(ops::softmax_rows(t, t.constant(Mat::Zero(3, 3)), true));
  EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(2, 1), 1.0 / 3.0);
}

TEST(Ops, UnfoldZeroPadsOutsideRange) {
  Tape t(false);
  Mat x(3, 1);
  x << 1, 2, 3;
  const Mat& u = t.value(ops::unfold(t, t.constant(x), 3, 2, 1));
  ASSERT_EQ(u.rows(), 2);
  EXPECT_EQ(u.row(0), (Eigen::RowVector3d(0, 1, 2)));
  EXPECT_EQ(u.row(1), (Eigen::RowVector3d(2, 3, 0)));
}

TEST(Tape, SharedParameterAccumulatesBothUses) {
  Parameter p("p", "g", Mat::Constant(1, 1, 2.0));
  Tape t;
  const Var a = t.param(p);
  const Var b = t.param(p);
  t.backward(ops::matmul(t, a, b));  // p^2
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 4.0);
  EXPECT_TRUE(p.used);
}

TEST(Tape, NoGradTapeRecordsNoGradients) {
  Parameter p("p", "g", Mat::Constant(1, 1, 2.0));
  Tape t(false);
  const Var a = t.param(p);
  EXPECT_FALSE(t.requires_grad(ops::scale(t, a, 3.0)));
}

TEST(Registry, AliasesHashesAndZeroGrad) {
  ParameterRegistry reg;
  Parameter& p = reg.create("shared.w", "decoder", Mat::Ones(2, 2));
  reg.alias("L1.dec.w", "shared.w");
  reg.alias("L2.dec.w", "shared.w");
  EXPECT_EQ(reg.canonical_of("L2.dec.w"), "shared.w");
  EXPECT_THROW(reg.canonical_of("nope"), Error);
  EXPECT_THROW(reg.create("shared.w", "decoder", Mat::Ones(1, 1)), Error);
  EXPECT_EQ(reg.hash_logical_prefix("L1."), reg.hash_logical_prefix("L2."));
  const auto before = reg.hash();
  p.value(0, 0) = 5.0;
  EXPECT_NE(reg.hash(), before);
  EXPECT_EQ(reg.scalar_count(), 4u);
  p.grad.setOnes();
  p.used = true;
  reg.zero_grad();
  EXPECT_TRUE(p.grad.isZero());
  EXPECT_FALSE(p.used);
}

TEST(Layers, LayerNormNormalizesRows) {
  ParameterRegistry reg;
  LayerNorm ln = LayerNorm::make(reg, "ln", "g", 6);
  Rng rng(1);
  Tape t(false);
  Ctx c{t};
  const Mat& y = t.value(ln.forward(c, t.constant(random_mat(4, 6, rng) * 3.0)));
  for (int r = 0; r < 4; ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-9);
    EXPECT_NEAR((y.row(r).array() - y.row(r).mean()).square().mean(), 1.0, 1e-3);
  }
}

TEST(Layers, CausalSelfAttentionIgnoresLaterPositions) {
  ParameterRegistry reg;
  Rng rng(2);
  const MultiHeadAttention att = MultiHeadAttention::make(reg, "att", "g", 8, 2, rng);
  Mat x = random_mat(5, 8, rng);
  Tape t1(false), t2(false);
  Ctx c1{t1}, c2{t2};
  const Var a = t1.constant(x);
  const Mat y1 = t1.value(att.forward(c1, a, a, true));
  x.row(4).setConstant(9.0);
  const Var b = t2.constant(x);
  const Mat y2 = t2.value(att.forward(c2, b, b, true));
  EXPECT_TRUE(y1.topRows(4).isApprox(y2.topRows(4), 1e-14));
  EXPECT_FALSE(y1.row(4).isApprox(y2.row(4)));
}

TEST(Layers, CopyFromMakesIdenticalAttention) {
  ParameterRegistry reg;
  Rng rng(3);
  MultiHeadAttention a = MultiHeadAttention::make(reg, "a", "g", 4, 2, rng);
  MultiHeadAttention b = MultiHeadAttention::make(reg, "b", "g", 4, 2, rng);
  EXPECT_NE(a.q.w->value, b.q.w->value);
  b.copy_from(a);
  for (auto [x, y] : {std::pair{a.q, b.q}, {a.k, b.k}, {a.v, b.v}, {a.o, b.o}}) {
    EXPECT_EQ(x.w->value, y.w->value);
    EXPECT_EQ(x.b->value, y.b->value);
    EXPECT_NE(x.w, y.w);  // distinct storage
  }
}

TEST(Layers, BridgeSubsamplesByCeilPerStage) {
  for (int frames = 1; frames < 40; ++frames) {
    const int expected = (((frames + 1) / 2) + 1) / 2;
    EXPECT_EQ(Bridge::output_length(frames, {2, 2}), expected);
  }
  ParameterRegistry reg;
  Rng rng(4);
  const Bridge br = Bridge::make(reg, "br", 4, {2, 2}, rng);
  Tape t(false);
  Ctx c{t};
  EXPECT_EQ(t.value(br.forward(c, t.constant(random_mat(13, 4, rng)))).rows(), 4);
  EXPECT_THROW(Bridge::make(reg, "bad", 4, {0}, rng), Error);
}

TEST(Layers, SinusoidalPositions) {
  const Mat p = sinusoidal_positions(3, 4);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(p(0, 1), 1.0);
  EXPECT_NEAR(p(1, 0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(p(2, 3), std::cos(2.0 / 100.0), 1e-15);  // 10000^(2/4)
}

}  // namespace
}  // namespace csst
