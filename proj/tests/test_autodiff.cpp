#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "visim/autodiff.hpp"
#include "visim/rng.hpp"

using namespace visim;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

namespace {

std::vector<double> random_point(std::int64_t n, SeededRng& rng, double lo = -2.0,
                                 double hi = 2.0, double kink_gap = 0.0) {
  std::vector<double> v(n);
  for (double& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (kink_gap > 0.0 && std::fabs(x) < kink_gap);
  }
  return v;
}

// reduce an op output to a scalar with fixed random weights so the check
// exercises general cotangents
Tensor weighted(Tape& tape, const Tensor& t, SeededRng& rng) {
  std::vector<double> w(t.numel());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  return tape.mean(tape.mul(t, Tensor(t.shape(), std::move(w))));
}

void check_op(const char* name,
              const std::function<Tensor(Tape&, const Tensor&)>& f, Shape shape,
              double lo = -2.0, double hi = 2.0, double kink_gap = 0.0,
              double tol = 1e-6) {
  for (std::uint64_t seed : {101u, 102u, 103u}) {
    SeededRng rng(seed);
    const auto point = random_point(shape.numel(), rng, lo, hi, kink_gap);
    const auto report = ad::grad_check(f, shape, point, 1e-5, tol);
    INFO(name << " seed " << seed << " max rel err " << report.max_rel_err
              << " at coordinate " << report.worst_coordinate);
    CHECK(report.passed);
  }
}

}  // namespace

TEST_CASE("forward values: closed-form spot checks") {
  Tape tape;
  Tensor x = Tensor::row({3.0, 4.0});
  Tensor y = tape.l2_normalize_rows(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  CHECK(tape.softplus(Tensor::scalar(0.0)).value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));

  // 2x3 by 3x2 matmul against a hand-computed product
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = tape.matmul(a, b);
  CHECK(c.at(0, 0) == 58.0);   // 1*7 + 2*9 + 3*11
  CHECK(c.at(0, 1) == 64.0);
  CHECK(c.at(1, 0) == 139.0);
  CHECK(c.at(1, 1) == 154.0);

  CHECK_THROWS_WITH_AS(tape.matmul(a, a), doctest::Contains("matmul"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("incompatible shapes"),
                       std::invalid_argument);
}

TEST_CASE("backward on a polynomial: f(w) = w^2 at w = 3 gives 6") {
  Tape tape;
  Tensor w = tape.leaf(Shape{1, 1}, {3.0});
  Tensor loss = tape.mul(w, w);
  tape.backward(loss);
  CHECK(tape.grad(w)[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward requires a scalar tracked loss") {
  Tape tape;
  Tensor w = tape.leaf(Shape{2, 1}, {1.0, 2.0});
  CHECK_THROWS_AS(tape.backward(w), std::invalid_argument);
  Tensor constant = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(constant), std::invalid_argument);
}

TEST_CASE("every op passes central finite differences, 3 seeds") {
  // the second operand and the reduction weights use fixed local seeds so
  // the function is identical across the checker's repeated evaluations
  check_op("add", [](Tape& t, const Tensor& x) {
    SeededRng o(201);
    Tensor other(x.shape(), random_point(x.numel(), o));
    SeededRng r(1);
    return weighted(t, t.add(x, other), r);
  }, {3, 4});

  check_op("sub", [](Tape& t, const Tensor& x) {
    SeededRng o(202);
    Tensor other(x.shape(), random_point(x.numel(), o));
    SeededRng r(2);
    return weighted(t, t.sub(x, other), r);
  }, {3, 4});

  check_op("mul", [](Tape& t, const Tensor& x) {
    SeededRng o(203);
    Tensor other(x.shape(), random_point(x.numel(), o));
    SeededRng r(3);
    return weighted(t, t.mul(x, other), r);
  }, {3, 4});

  check_op("mul both tracked", [](Tape& t, const Tensor& x) {
    Tensor y = t.slice_cols(x, 0, 2);
    Tensor z = t.slice_cols(x, 2, 4);
    SeededRng r(4);
    return weighted(t, t.mul(y, z), r);
  }, {3, 4});

  check_op("add_rowvec", [](Tape& t, const Tensor& x) {
    Tensor body = t.slice_rows(x, 0, 3);
    Tensor bias = t.slice_rows(x, 3, 4);
    SeededRng r(5);
    return weighted(t, t.add_rowvec(body, bias), r);
  }, {4, 5});

  check_op("scale/add_scalar", [](Tape& t, const Tensor& x) {
    SeededRng r(6);
    return weighted(t, t.add_scalar(t.scale(x, -1.7), 0.3), r);
  }, {2, 6});

  check_op("matmul", [](Tape& t, const Tensor& x) {
    Tensor a = t.slice_rows(x, 0, 3);   // 3 x 4
    Tensor b = t.slice_rows(x, 3, 7);   // 4 x 4
    SeededRng r(7);
    return weighted(t, t.matmul(a, b), r);
  }, {7, 4});

  check_op("relu", [](Tape& t, const Tensor& x) {
    SeededRng r(8);
    return weighted(t, t.relu(x), r);
  }, {3, 5}, -2.0, 2.0, /*kink_gap=*/1e-3);

  check_op("log", [](Tape& t, const Tensor& x) {
    SeededRng r(9);
    return weighted(t, t.log(x), r);
  }, {3, 5}, 0.1, 2.0);

  check_op("exp", [](Tape& t, const Tensor& x) {
    SeededRng r(10);
    return weighted(t, t.exp(x), r);
  }, {3, 5});

  check_op("softplus", [](Tape& t, const Tensor& x) {
    SeededRng r(11);
    return weighted(t, t.softplus(x), r);
  }, {3, 5});

  check_op("lgamma", [](Tape& t, const Tensor& x) {
    SeededRng r(12);
    return weighted(t, t.lgamma(x), r);
  }, {3, 5}, 0.2, 5.0);

  check_op("clamp_min", [](Tape& t, const Tensor& x) {
    SeededRng r(13);
    return weighted(t, t.clamp_min(x, 0.0), r);
  }, {3, 5}, -2.0, 2.0, /*kink_gap=*/1e-3);

  check_op("sum", [&](Tape& t, const Tensor& x) { return t.sum(x); }, {4, 3});
  check_op("mean", [&](Tape& t, const Tensor& x) { return t.mean(x); }, {4, 3});

  check_op("row_sum", [](Tape& t, const Tensor& x) {
    SeededRng r(14);
    return weighted(t, t.row_sum(x), r);
  }, {4, 6});

  check_op("l2_normalize_rows", [](Tape& t, const Tensor& x) {
    SeededRng r(15);
    return weighted(t, t.l2_normalize_rows(x), r);
  }, {4, 6}, 0.2, 2.0);

  check_op("concat_rows/slice", [](Tape& t, const Tensor& x) {
    Tensor a = t.slice_rows(x, 0, 2);
    Tensor b = t.slice_rows(x, 2, 5);
    std::vector<Tensor> parts{a, b};
    SeededRng r(16);
    return weighted(t, t.concat_rows(parts), r);
  }, {5, 3});

  check_op("concat_cols/slice", [](Tape& t, const Tensor& x) {
    Tensor a = t.slice_cols(x, 0, 2);
    Tensor b = t.slice_cols(x, 2, 3);
    std::vector<Tensor> parts{b, a};
    SeededRng r(17);
    return weighted(t, t.concat_cols(parts), r);
  }, {4, 3});

  check_op("batch_standardize train mode", [](Tape& t, const Tensor& x) {
    std::vector<double> rm(x.cols(), 0.0), rv(x.cols(), 1.0);
    SeededRng r(18);
    return weighted(t, t.batch_standardize(x, rm, rv, /*training=*/true), r);
  }, {6, 4});

  check_op("batch_standardize eval mode", [](Tape& t, const Tensor& x) {
    std::vector<double> rm(x.cols(), 0.3), rv(x.cols(), 2.0);
    SeededRng r(19);
    return weighted(t, t.batch_standardize(x, rm, rv, /*training=*/false), r);
  }, {6, 4});
}

TEST_CASE("clamp_min gradient gates at the threshold") {
  // explicit check away from the kink: below the clamp the gradient is 0
  Tape tape;
  Tensor x = tape.leaf(Shape{1, 3}, {-1.0, 0.5, 2.0});
  Tensor loss = tape.sum(tape.clamp_min(x, 0.0));
  tape.backward(loss);
  const auto& g = tape.grad(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("grad_check flags a deliberately wrong gradient") {
  // mean(x * detach(x)) reports d/dx = x/n on the tape, but the true
  // derivative of mean(x^2) is 2x/n; the checker must fail it.
  auto f = [](Tape& t, const Tensor& x) { return t.mean(t.mul(x, x.detach())); };
  SeededRng rng(77);
  const auto point = random_point(6, rng, 0.5, 1.5);
  const auto report = ad::grad_check(f, {2, 3}, point, 1e-5, 1e-6);
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_err > 0.1);
}

TEST_CASE("detach: stop-gradient semantics and value transparency") {
  Tape tape;
  Tensor x = tape.leaf(Shape{2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor w = tape.leaf(Shape{2, 2}, {0.5, -0.5, 1.5, 2.5});

  Tensor detached = x.detach();
  CHECK_FALSE(detached.tracked());
  CHECK(detached.data() == x.data());  // bit-identical forward values

  Tensor loss = tape.sum(tape.mul(detached, w));
  tape.backward(loss);
  for (double g : tape.grad(x)) CHECK(g == 0.0);
  const auto& gw = tape.grad(w);
  for (int i = 0; i < 4; ++i) CHECK(gw[i] == x.data()[i]);
}

TEST_CASE("a loss with every branch detached leaves all leaves at zero gradient") {
  Tape tape;
  Tensor a = tape.leaf(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = tape.leaf(Shape{3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor z = tape.matmul(a, b);
  Tensor loss = tape.sum(tape.mul(z.detach(), z.detach()));
  CHECK_FALSE(loss.tracked());  // nothing to backprop at all
  for (double g : tape.grad(a)) CHECK(g == 0.0);
  for (double g : tape.grad(b)) CHECK(g == 0.0);
}

TEST_CASE("identical tape and inputs give bit-identical gradients") {
  auto run = [] {
    Tape tape;
    SeededRng rng(31415);
    std::vector<double> xv(12), wv(12);
    for (double& v : xv) v = rng.uniform(-1, 1);
    for (double& v : wv) v = rng.uniform(-1, 1);
    Tensor x = tape.leaf(Shape{3, 4}, xv);
    Tensor w = tape.leaf(Shape{4, 3}, wv);
    Tensor z = tape.l2_normalize_rows(tape.relu(tape.matmul(x, tape.softplus(w))));
    Tensor loss = tape.mean(tape.mul(z, z.detach()));
    tape.backward(loss);
    return std::make_pair(tape.grad(x), tape.grad(w));
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("batch_standardize: training output has mean 0 and unit variance") {
  Tape tape;
  SeededRng rng(271);
  const std::int64_t n = 64, m = 8;
  std::vector<double> xv(n * m);
  for (double& v : xv) v = rng.uniform(-3.0, 5.0);
  std::vector<double> rm(m, 0.0), rv(m, 1.0);
  Tensor y = tape.batch_standardize(Tensor({n, m}, xv), rm, rv, /*training=*/true);
  for (std::int64_t j = 0; j < m; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += y.at(i, j);
    mean /= n;
    for (std::int64_t i = 0; i < n; ++i) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
    var /= n;
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps-regularized
  }
  // running statistics moved toward the batch: rm = 0.9*0 + 0.1*batch_mean
  CHECK(rm[0] != 0.0);
  CHECK(rv[0] != 1.0);
}

TEST_CASE("batch_standardize eval mode is per-sample and batch-size independent") {
  std::vector<double> rm{0.5, -1.0}, rv{2.0, 0.5};
  auto eval_row = [&](double a, double b, std::int64_t pad_rows) {
    Tape tape;
    std::vector<double> data{a, b};
    for (std::int64_t i = 0; i < pad_rows; ++i) {
      data.push_back(a + i);
      data.push_back(b - i);
    }
    std::vector<double> rm_copy = rm, rv_copy = rv;
    Tensor y = tape.batch_standardize(Tensor({pad_rows + 1, 2}, data), rm_copy, rv_copy,
                                      /*training=*/false);
    return std::make_pair(y.at(0, 0), y.at(0, 1));
  };
  const auto alone = eval_row(1.3, 0.7, 0);
  const auto padded = eval_row(1.3, 0.7, 7);
  CHECK(alone.first == padded.first);
  CHECK(alone.second == padded.second);
}
