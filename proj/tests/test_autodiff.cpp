#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dancegen/core/tape.hpp"
#include "helpers.hpp"

using namespace dancegen;
namespace tu = testutil;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

Mat rand_mat(int r, int c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = nd(gen);
  return m;
}

Mat rand_pos(int r, int c, std::uint64_t seed) {
  // strictly positive entries for sqrt/inv
  return rand_mat(r, c, seed).array().abs().matrix() + Mat::Constant(r, c, 0.5);
}

void expect_fd(const std::function<Var(Tape&, std::vector<Var>&)>& build,
               std::vector<Mat> inputs, double tol = 2e-6) {
  const auto rep = tu::check_gradients(build, std::move(inputs));
  CHECK(rep.max_rel_err < tol);
}

}  // namespace

TEST_CASE("add/sub/mul/scalar ops match finite differences") {
  Mat a = rand_mat(3, 4, 1), b = rand_mat(3, 4, 2);
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean(ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], v[1])));
  }, {a, b});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::sum(ad::adds(ad::muls(v[0], 2.5), -0.7));
  }, {a});
}

TEST_CASE("matmul and transpose match finite differences") {
  Mat a = rand_mat(3, 4, 3), b = rand_mat(4, 2, 4);
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::matmul(v[0], v[1]));
  }, {a, b});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::matmul(ad::transpose(v[0]), v[0]));
  }, {a});
}

TEST_CASE("slicing and concatenation match finite differences") {
  Mat a = rand_mat(5, 6, 5), b = rand_mat(5, 2, 6);
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::cols(v[0], 1, 3));
  }, {a});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::rows(v[0], 2, 2));
  }, {a});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::hcat(v[0], ad::mul(v[1], v[1])));
  }, {a, b});
}

TEST_CASE("reductions match finite differences") {
  Mat a = rand_mat(4, 3, 7);
  expect_fd([](Tape&, std::vector<Var>& v) { return ad::sum(v[0]); }, {a});
  expect_fd([](Tape&, std::vector<Var>& v) { return ad::mean(v[0]); }, {a});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::rowsum(ad::mul(v[0], v[0])));
  }, {a});
}

TEST_CASE("broadcast ops match finite differences") {
  Mat a = rand_mat(4, 3, 8);
  Mat col = rand_mat(4, 1, 9);
  Mat row = rand_mat(1, 3, 10);
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::mulcol(v[0], v[1]));
  }, {a, col});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::mulrow(v[0], v[1]));
  }, {a, row});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::addrow(v[0], v[1]));
  }, {a, row});
}

TEST_CASE("elementwise nonlinearities match finite differences") {
  Mat a = rand_mat(3, 4, 11);
  Mat p = rand_pos(3, 4, 12);
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean(ad::exp(ad::muls(v[0], 0.5)));
  }, {a});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean(ad::sqrt(v[0]));
  }, {p});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean(ad::inv(v[0]));
  }, {p});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean(ad::gelu(v[0]));
  }, {a});
}

TEST_CASE("softmax_rows matches finite differences and sums to one") {
  Mat a = rand_mat(4, 5, 13, 2.0);
  {
    Tape tape;
    Var x = tape.leaf(a, false);
    Mat y = tape.value(ad::softmax_rows(x));
    for (int i = 0; i < y.rows(); ++i)
      CHECK(y.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  Mat w = rand_mat(4, 5, 14);
  expect_fd([w](Tape& t, std::vector<Var>& v) {
    return ad::mean(ad::mul(ad::softmax_rows(v[0]), t.constant(w)));
  }, {a});
}

TEST_CASE("composites match finite differences") {
  Mat x = rand_mat(4, 3, 15);
  Mat wt = rand_mat(3, 5, 16);
  Mat b = rand_mat(1, 5, 17);
  Mat g = rand_mat(1, 3, 18);
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::affine(v[0], v[1], v[2]));
  }, {x, wt, b});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean(ad::rownorm(v[0]));
  }, {x});
  expect_fd([](Tape&, std::vector<Var>& v) {
    return ad::mean_sq(ad::layernorm_rows(v[0], v[1], v[2]));
  }, {x, g, rand_mat(1, 3, 19)});
}

TEST_CASE("gradients accumulate across reuse of a variable") {
  // f = sum(x .* x) + sum(x) touches x through two paths
  Mat a = rand_mat(3, 3, 20);
  Tape tape;
  Var x = tape.leaf(a, true);
  Var f = ad::add(ad::sum(ad::mul(x, x)), ad::sum(x));
  tape.backward(f);
  const Mat expect = 2.0 * a + Mat::Ones(3, 3);
  CHECK((tape.grad(x) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  Var x = tape.leaf(rand_mat(2, 2, 21), true);
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("constants receive no gradient") {
  Tape tape;
  Var x = tape.leaf(rand_mat(2, 2, 22), true);
  Var c = tape.constant(rand_mat(2, 2, 23));
  Var f = ad::sum(ad::mul(x, c));
  tape.backward(f);
  CHECK(tape.grad(c).size() == 0);
  CHECK(tape.grad(x).size() == 4);
}
