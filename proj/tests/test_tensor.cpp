#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "support.hpp"
#include "ustar/kernels.hpp"
#include "ustar/nn.hpp"
#include "ustar/optim.hpp"
#include "ustar/tensor.hpp"

using namespace ustar;
using namespace ustar::testing;
using ad::Tensor;
using T64 = Tensor<double>;

namespace {

std::vector<double> normals(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

T64 var(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return T64::variable(std::move(shape), normals(rng, n, scale));
}

// Largest relative error between backward() and central differences over
// every scalar of every input. The output is contracted with fixed random
// weights so each element contributes a distinct amount.
double op_gradient_error(std::vector<T64> inputs, const std::function<T64(const std::vector<T64>&)>& fn,
                         double h = 1e-5) {
  Rng rng(99);
  const T64 probe = fn(inputs);
  const T64 weights = T64::constant(probe.shape(), normals(rng, probe.size()));
  auto loss = [&] { return ad::sum(ad::mul(fn(inputs), weights)); };
  for (auto& x : inputs) x.zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto& x : inputs) {
    if (!x.requires_grad()) continue;  // fixed targets carry no gradient
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    auto values = x.mutable_value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = loss().item();
      values[i] = orig - h;
      const double down = loss().item();
      values[i] = orig;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("linear: zero and identity weights, triple-loop oracle, shape errors") {
  Rng rng(1);
  const T64 x = var(rng, {3, 4});
  const T64 zero = ad::linear(x, T64::zeros({4, 2}), T64::zeros({2}));
  for (double v : zero.value()) CHECK(v == 0.0);

  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  const T64 same = ad::linear(x, T64::constant({4, 4}, eye), T64::zeros({4}));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.value()[i] == x.value()[i]);

  const T64 w = var(rng, {4, 2}), b = var(rng, {2});
  const T64 y = ad::linear(x, w, b);
  REQUIRE(y.shape() == std::vector<std::size_t>{3, 2});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = b.value()[j];
      for (std::size_t p = 0; p < 4; ++p) acc += x.at(i, p) * w.at(p, j);
      CHECK(std::abs(y.at(i, j) - acc) < 1e-12);
    }
  CHECK_THROWS_AS(ad::linear(x, var(rng, {3, 2}), b), std::invalid_argument);
  CHECK_THROWS_AS(ad::linear(x, w, var(rng, {3})), std::invalid_argument);
}

TEST_CASE("gelu: exact Gaussian-CDF values") {
  const T64 x = T64::constant({4}, {0.0, 1.0, 10.0, -1.0});
  const T64 y = ad::gelu(x);
  CHECK(y.value()[0] == 0.0);
  CHECK(std::abs(y.value()[1] - 0.8413447460685429) < 1e-12);
  CHECK(std::abs(y.value()[2] - 10.0) < 1e-6);
  CHECK(std::abs(y.value()[3] + 0.15865525393145707) < 1e-12);
}

TEST_CASE("softmax: closed forms, shift invariance and simplex rows") {
  const T64 eq = ad::softmax(T64::constant({1, 4}, {2, 2, 2, 2}));
  for (double v : eq.value()) CHECK(std::abs(v - 0.25) < 1e-15);

  const T64 two = ad::softmax(T64::constant({1, 2}, {0.0, std::log(3.0)}));
  CHECK(std::abs(two.value()[0] - 0.25) < 1e-15);
  CHECK(std::abs(two.value()[1] - 0.75) < 1e-15);

  Rng rng(2);
  const T64 x = var(rng, {5, 7}, 3.0);
  std::vector<double> shifted(x.value().begin(), x.value().end());
  for (auto& v : shifted) v += 123.0;
  const T64 a = ad::softmax(x), b = ad::softmax(T64::constant({5, 7}, shifted));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.value()[i] - b.value()[i]) < 1e-12);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(a.at(r, c) >= 0.0);
      s += a.at(r, c);
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("smooth_l1: branch values, zero iff equal, continuity at beta") {
  auto loss1 = [](double d) {
    return ad::smooth_l1(T64::constant({1}, {d}), T64::constant({1}, {0.0})).item();
  };
  CHECK(loss1(0.0) == 0.0);
  CHECK(loss1(0.5) == 0.125);
  CHECK(loss1(2.0) == 1.5);
  CHECK(loss1(-2.0) == 1.5);
  CHECK(std::abs(loss1(1.0 - 1e-9) - loss1(1.0 + 1e-9)) < 1e-8);

  // Gradient magnitude is |d| inside the quadratic zone and 1 outside.
  for (double d : {0.3, 1.0 - 1e-9, 1.0 + 1e-9, 7.0, -7.0}) {
    const T64 p = T64::variable({1}, {d});
    ad::smooth_l1(p, T64::constant({1}, {0.0})).backward();
    CHECK(std::abs(p.grad()[0] - std::clamp(d, -1.0, 1.0)) < 1e-8);
  }

  Rng rng(3);
  const T64 a = var(rng, {4, 6}), b = var(rng, {4, 6});
  CHECK(ad::smooth_l1(a, a).item() == 0.0);
  CHECK(ad::smooth_l1(a, b).item() > 0.0);
  CHECK_THROWS_AS(ad::smooth_l1(a, var(rng, {4, 5})), std::invalid_argument);
}

TEST_CASE("action_smooth_l1: rotation wrap and mask averaging") {
  std::vector<double> pred(2 * 12, 0.0), target(2 * 12, 0.0);
  pred[3] = 179.5;
  target[3] = -179.5;  // wrapped gap 1 deg -> 0.5
  pred[12 + 0] = 3.0;  // masked out
  const std::vector<double> mask = {1.0, 1.0, 0.0, 1.0};
  const double got = ad::action_smooth_l1(T64::constant({2, 12}, pred), T64::constant({2, 12}, target),
                                          std::span<const double>(mask))
                         .item();
  CHECK(std::abs(got - 0.5 / 6.0 / 3.0) < 1e-15);
}

TEST_CASE("backward: linear gradient structure, zero for unused parameters, accumulation") {
  Rng rng(4);
  const T64 x = T64::constant({1, 3}, {1.0, 2.0, 3.0});
  const T64 w = var(rng, {3, 2}), b = var(rng, {2}), unused = var(rng, {5});
  const T64 loss = ad::sum(ad::linear(x, w, b));
  loss.backward();
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t j = 0; j < 2; ++j) CHECK(w.grad()[p * 2 + j] == x.value()[p]);
  for (double g : b.grad()) CHECK(g == 1.0);
  for (double g : unused.grad()) CHECK(g == 0.0);

  loss.backward();
  for (std::size_t p = 0; p < 3; ++p) CHECK(w.grad()[p * 2] == 2.0 * x.value()[p]);

  const T64 zero_loss = ad::scale(ad::sum(ad::linear(x, w, b)), 0.0);
  T64 fresh = var(rng, {2});
  fresh.zero_grad();
  ad::add(zero_loss, ad::scale(ad::sum(fresh), 0.0)).backward();
  for (double g : fresh.mutable_grad()) CHECK(g == 0.0);
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  Rng rng(5);
  const double tol = 1e-4;
  CHECK(op_gradient_error({var(rng, {3, 4}), var(rng, {4, 2})},
                          [](const auto& in) { return ad::matmul(in[0], in[1]); }) < tol);
  CHECK(op_gradient_error({var(rng, {3, 4}), var(rng, {4, 5}), var(rng, {5})},
                          [](const auto& in) { return ad::linear(in[0], in[1], in[2]); }) < tol);
  CHECK(op_gradient_error({var(rng, {2, 3}), var(rng, {2, 3})},
                          [](const auto& in) { return ad::add(in[0], in[1]); }) < tol);
  CHECK(op_gradient_error({var(rng, {2, 3}), var(rng, {2, 3})},
                          [](const auto& in) { return ad::mul(in[0], in[1]); }) < tol);
  CHECK(op_gradient_error({var(rng, {2, 3})}, [](const auto& in) { return ad::scale(in[0], -1.7); }) < tol);
  CHECK(op_gradient_error({var(rng, {3, 5}, 2.0)}, [](const auto& in) { return ad::gelu(in[0]); }) < tol);
  CHECK(op_gradient_error({var(rng, {3, 5}, 2.0)}, [](const auto& in) { return ad::softmax(in[0]); }) < tol);
  CHECK(op_gradient_error({var(rng, {3, 2}), var(rng, {3, 4})},
                          [](const auto& in) { return ad::concat_cols(in[0], in[1]); }) < tol);
  CHECK(op_gradient_error({var(rng, {4, 3})},
                          [](const auto& in) { return ad::gather_rows(in[0], {3, 0, 3}); }) < tol);
  CHECK(op_gradient_error({var(rng, {3, 6}), var(rng, {6}), var(rng, {6})},
                          [](const auto& in) { return ad::layer_norm(in[0], in[1], in[2]); }) < tol);
  CHECK(op_gradient_error({var(rng, {5, 4}), var(rng, {3, 4, 2}), var(rng, {3, 2})},
                          [](const auto& in) { return ad::grouped_linear(in[0], in[1], in[2], true); }) < tol);
  CHECK(op_gradient_error({var(rng, {5, 12}), var(rng, {3, 4, 2}), var(rng, {3, 2})},
                          [](const auto& in) { return ad::grouped_linear(in[0], in[1], in[2], false); }) < tol);
  CHECK(op_gradient_error({var(rng, {5, 8}), var(rng, {7, 8}), var(rng, {7, 8})}, [](const auto& in) {
          return ad::attention(in[0], in[1], in[2], 2, {0, 2, 5}, {0, 4, 7});
        }) < tol);
  // Keep every element away from the |d| = 1 kink so central differences are valid.
  CHECK(op_gradient_error({var(rng, {2, 3}, 0.3), T64::constant({2, 3}, {0.1, 3, -4, 0.2, -0.3, 5})},
                          [](const auto& in) { return ad::smooth_l1(in[0], in[1]); }) < tol);
}

TEST_CASE("attention: single key, permutation invariance, hand-unrolled oracle") {
  Rng rng(6);
  const T64 q = var(rng, {3, 4}), k = var(rng, {1, 4}), v = var(rng, {1, 4});
  const T64 one = ad::attention(q, k, v, 2, {0, 3}, {0, 1});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(one.at(i, c) == doctest::Approx(v.value()[c]).epsilon(1e-14));

  const T64 q2 = var(rng, {2, 8}), k2 = var(rng, {5, 8}), v2 = var(rng, {5, 8});
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  const T64 base = ad::attention(q2, k2, v2, 2, {0, 2}, {0, 5});
  const T64 shuffled = ad::attention(q2, ad::gather_rows(k2, perm), ad::gather_rows(v2, perm), 2, {0, 2}, {0, 5});
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(base.value()[i] - shuffled.value()[i]) < 1e-12);

  // C = 4, two heads of width 2, one query, two keys; projections are identity.
  const std::vector<double> qv = {1.0, 0.5, -0.3, 2.0};
  const std::vector<double> kv = {0.2, -1.0, 1.5, 0.4, -0.7, 0.3, 0.9, -1.2};
  const std::vector<double> vv = {1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.25, 8.0};
  const T64 out = ad::attention(T64::constant({1, 4}, qv), T64::constant({2, 4}, kv), T64::constant({2, 4}, vv), 2,
                                {0, 1}, {0, 2});
  const double s = 1.0 / std::sqrt(2.0);
  for (int h = 0; h < 2; ++h) {
    const double l0 = (qv[2 * h] * kv[2 * h] + qv[2 * h + 1] * kv[2 * h + 1]) * s;
    const double l1 = (qv[2 * h] * kv[4 + 2 * h] + qv[2 * h + 1] * kv[4 + 2 * h + 1]) * s;
    const double p0 = std::exp(l0) / (std::exp(l0) + std::exp(l1)), p1 = 1.0 - p0;
    for (int d = 0; d < 2; ++d) {
      CHECK(std::abs(out.value()[2 * h + d] - (p0 * vv[2 * h + d] + p1 * vv[4 + 2 * h + d])) < 1e-12);
    }
  }
  CHECK_THROWS_AS(ad::attention(q2, k2, v2, 3, {0, 2}, {0, 5}), std::invalid_argument);
}

TEST_CASE("multi-head attention module: one key returns the projected value row") {
  nn::ParameterStore<double> store(3);
  nn::MultiHeadAttention<double> mha(store, "mha", 4, 2);
  Rng rng(7);
  const T64 q = var(rng, {3, 4}), kv = var(rng, {1, 4});
  const T64 out = mha(q, kv, {0, 3}, {0, 1});
  const T64 expect = mha.out(mha.v(kv));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(out.at(i, c) - expect.at(0, c)) < 1e-12);
  CHECK_THROWS_AS(nn::MultiHeadAttention<double>(store, "bad", 6, 4), std::invalid_argument);
}

TEST_CASE("adamw_step: hand-computed recurrence, no-op and pure decay") {
  auto single = [](double value, double grad, double lr, double wd) {
    nn::ParameterStore<double> store;
    store.filled("p", {1}, value);
    auto& p = store.params()[0];
    p.tensor.mutable_grad()[0] = grad;
    TrainConfig c;
    c.weight_decay = wd;
    adamw_step(std::span(store.params()), c, lr);
    return p.tensor.value()[0];
  };
  CHECK(std::abs(single(1.0, 1.0, 0.1, 0.0) - (1.0 - 0.1 / (1.0 + 1e-8))) < 1e-15);
  CHECK(single(1.0, 0.0, 0.1, 0.0) == 1.0);
  CHECK(std::abs(single(1.0, 0.0, 0.1, 0.01) - (1.0 - 0.001)) < 1e-15);
}

TEST_CASE("adamw_step is bitwise deterministic") {
  auto run = [] {
    nn::ParameterStore<float> store(11);
    store.uniform("w", {4, 3}, 4);
    Rng rng(12);
    TrainConfig c;
    for (int s = 0; s < 5; ++s) {
      for (auto& g : store.params()[0].tensor.mutable_grad()) g = static_cast<float>(rng.normal());
      adamw_step(std::span(store.params()), c, 1e-2);
    }
    const auto v = store.params()[0].tensor.value();
    return std::vector<float>(v.begin(), v.end());
  };
  CHECK(run() == run());
}

TEST_CASE("cosine_lr: endpoints, midpoint and range errors") {
  CHECK(cosine_lr(0, 100, 1e-3) == 1e-3);
  CHECK(cosine_lr(100, 100, 1e-3) == 0.0);
  CHECK(std::abs(cosine_lr(50, 100, 1e-3) - 5e-4) < 1e-18);
  for (std::size_t s = 0; s < 100; ++s) CHECK(cosine_lr(s + 1, 100, 1.0) <= cosine_lr(s, 100, 1.0));
  CHECK_THROWS_AS(cosine_lr(101, 100, 1.0), std::out_of_range);
  CHECK_THROWS_AS(cosine_lr(0, 0, 1.0), std::out_of_range);
}

TEST_CASE("parameter initialization is bounded and keyed by name") {
  nn::ParameterStore<double> a(5), b(5);
  const auto wa = a.uniform("w", {16, 8}, 16);
  b.uniform("first", {3}, 3);
  const auto wb = b.uniform("w", {16, 8}, 16);
  for (std::size_t i = 0; i < wa.size(); ++i) {
    CHECK(std::abs(wa.value()[i]) <= 0.25);
    CHECK(wa.value()[i] == wb.value()[i]);
  }
  CHECK(a.scalar_count() == 128);
  CHECK_THROWS_AS(a.uniform("w", {2}, 2), std::invalid_argument);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

// --- kernels -----------------------------------------------------------------

TEST_CASE("parallel kernels agree with the serial reference") {
  Rng rng(8);
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 5, 3}, {37, 70, 19}, {130, 33, 260}}) {
    for (int mode = 0; mode < 8; ++mode) {
      const bool ta = mode & 1, tb = mode & 2, acc = mode & 4;
      const auto a = normals(rng, m * k), b = normals(rng, k * n);
      auto c_ref = normals(rng, m * n);
      auto c_par = c_ref;
      kernels::reference::gemm<double>(ta, tb, m, n, k, a, b, c_ref, acc);
      kernels::parallel::gemm<double>(ta, tb, m, n, k, a, b, c_par, acc);
      for (std::size_t i = 0; i < c_ref.size(); ++i) CHECK(std::abs(c_ref[i] - c_par[i]) < 1e-10);
    }
  }

  const auto x = normals(rng, 300, 3.0), dy = normals(rng, 300);
  std::vector<double> y1(300), y2(300), d1(300, 0.0), d2(300, 0.0);
  kernels::reference::gelu_forward<double>(x, y1);
  kernels::parallel::gelu_forward<double>(x, y2);
  kernels::reference::gelu_backward<double>(x, dy, d1);
  kernels::parallel::gelu_backward<double>(x, dy, d2);
  CHECK(y1 == y2);
  CHECK(d1 == d2);

  const std::vector<std::size_t> qo = {0, 3, 4, 9}, ko = {0, 5, 6, 8};
  const kernels::AttentionLayout layout{2, 6, qo, ko};
  const auto q = normals(rng, 9 * 6), k = normals(rng, 8 * 6), v = normals(rng, 8 * 6), go = normals(rng, 9 * 6);
  const std::size_t np = layout.prob_offsets().back();
  std::vector<double> o1(54), o2(54), p1(np), p2(np);
  kernels::reference::attention_forward<double>(layout, q, k, v, o1, p1);
  kernels::parallel::attention_forward<double>(layout, q, k, v, o2, p2);
  for (std::size_t i = 0; i < o1.size(); ++i) CHECK(std::abs(o1[i] - o2[i]) < 1e-12);
  std::vector<double> dq1(54, 0), dk1(48, 0), dv1(48, 0), dq2(54, 0), dk2(48, 0), dv2(48, 0);
  kernels::reference::attention_backward<double>(layout, q, k, v, p1, go, dq1, dk1, dv1);
  kernels::parallel::attention_backward<double>(layout, q, k, v, p2, go, dq2, dk2, dv2);
  for (std::size_t i = 0; i < dq1.size(); ++i) CHECK(std::abs(dq1[i] - dq2[i]) < 1e-12);
  for (std::size_t i = 0; i < dk1.size(); ++i) CHECK(std::abs(dk1[i] - dk2[i]) < 1e-12);
  for (std::size_t i = 0; i < dv1.size(); ++i) CHECK(std::abs(dv1[i] - dv2[i]) < 1e-12);
}

TEST_CASE("FlushDenormals restores the previous mode") {
  volatile double tiny = 1e-310;
  {
    const kernels::FlushDenormals guard;
    CHECK(tiny * 1.0 == 0.0);
  }
  CHECK(tiny * 1.0 != 0.0);
}
