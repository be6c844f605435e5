#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>

#include "kgan/autograd.hpp"

using namespace kgan;
using nn::Var;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// Builds a scalar from the parameters; the weighting matrix makes every
// output entry matter.
using Graph = std::function<Var(nn::Tape&, std::vector<Var>&)>;

double max_relative_error(std::vector<nn::Parameter>& params, const Graph& graph) {
  auto eval = [&](bool grad) {
    nn::Tape tape;
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(tape.parameter(p));
    Var out = graph(tape, leaves);
    if (grad) tape.backward(out);
    return out.value()(0, 0);
  };
  for (auto& p : params) p.zero_grad();
  eval(true);
  double worst = 0.0;
  const double h = 1e-6;
  for (auto& p : params) {
    const Matrix analytic = p.grad;
    Matrix numeric(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + h;
      const double up = eval(false);
      p.value.data()[i] = keep - h;
      const double down = eval(false);
      p.value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-8});
    worst = std::max(worst, (analytic - numeric).norm() / denom);
  }
  return worst;
}

Var weighted_sum(nn::Tape& tape, Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix w = random_matrix(x.rows(), x.cols(), rng);
  return nn::sum_rows(nn::transpose(nn::sum_rows(nn::hadamard(x, tape.constant(w)))));
}

std::vector<nn::Parameter> params_of(std::initializer_list<std::pair<Eigen::Index, Eigen::Index>> shapes,
                                     std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::vector<nn::Parameter> out;
  int k = 0;
  for (auto [r, c] : shapes) out.push_back({"p" + std::to_string(k++), random_matrix(r, c, rng), {}, {}});
  return out;
}

}  // namespace

TEST_CASE("elementwise and linear ops match finite differences") {
  auto ps = params_of({{3, 4}, {4, 2}, {1, 2}});
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          Var y = nn::add_row(nn::matmul(v[0], v[1]), v[2]);
          return weighted_sum(t, nn::tanh(y), 1);
        }) < 1e-6);
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          return weighted_sum(t, nn::sigmoid(nn::transpose(v[0])), 2);
        }) < 1e-6);
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          return weighted_sum(t, nn::softmax_rows(v[0]), 3);
        }) < 1e-6);
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          Var a = nn::hadamard(v[0], v[0]);
          return weighted_sum(t, nn::sub(nn::scale(a, 0.5), v[0]), 4);
        }) < 1e-6);
}

TEST_CASE("shape ops route gradients to the right entries") {
  auto ps = params_of({{3, 2}, {3, 3}, {2, 2}});
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          Var c = nn::concat_cols({v[0], v[1]});
          Var r = nn::concat_rows({c, nn::concat_cols({v[2], nn::slice_rows(v[1], 0, 2)})});
          return weighted_sum(t, nn::flatten(nn::reverse_rows(r)), 5);
        }) < 1e-6);
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          Var m = nn::concat_rows({nn::mean_rows(v[1]), nn::sum_rows(v[1])});
          return weighted_sum(t, m, 6);
        }) < 1e-6);
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          return weighted_sum(t, nn::gather_rows(v[1], {2, 0, 2, 1}), 7);
        }) < 1e-6);
}

TEST_CASE("log, mask, scale_rows and left_multiply") {
  auto ps = params_of({{3, 3}});
  Matrix m(3, 3);
  m << 1, 0, 1, 0, 1, 0, 2, 2, 0;
  Vector w(3);
  w << 0.5, 1.0, 2.0;
  Matrix c(2, 3);
  c << 1, -1, 0.5, 0, 2, 1;
  CHECK(max_relative_error(ps, [&](nn::Tape& t, std::vector<Var>& v) {
          Var p = nn::softmax_rows(v[0]);
          return weighted_sum(t, nn::log(nn::left_multiply(c, nn::scale_rows(nn::mask(p, m), w))), 8);
        }) < 1e-5);
}

TEST_CASE("relu gradient away from the kink") {
  std::vector<nn::Parameter> ps(1);
  ps[0].value = Matrix(2, 2);
  ps[0].value << 1.5, -0.7, -2.0, 0.3;
  CHECK(max_relative_error(ps, [](nn::Tape& t, std::vector<Var>& v) {
          return weighted_sum(t, nn::relu(v[0]), 9);
        }) < 1e-6);
}

TEST_CASE("lstm forward and backward") {
  auto ps = params_of({{5, 3}, {3, 8}, {2, 8}, {1, 8}});
  for (bool reverse : {false, true}) {
    CHECK(max_relative_error(ps, [&](nn::Tape& t, std::vector<Var>& v) {
            return weighted_sum(t, nn::lstm(v[0], v[1], v[2], v[3], reverse), 10);
          }) < 1e-5);
  }
}

TEST_CASE("lstm recurrences at zero stay at zero") {
  nn::Tape tape;
  Var x = tape.constant(Matrix::Zero(4, 3));
  Var h = nn::lstm(x, tape.constant(Matrix::Zero(3, 8)), tape.constant(Matrix::Zero(2, 8)),
                   tape.constant(Matrix::Zero(1, 8)), false);
  CHECK(h.value().isZero(0.0));
}

TEST_CASE("lstm reverse equals forward on reversed input") {
  std::mt19937_64 rng(11);
  nn::Tape tape;
  Var x = tape.constant(random_matrix(5, 3, rng));
  Var wx = tape.constant(random_matrix(3, 8, rng)), wh = tape.constant(random_matrix(2, 8, rng));
  Var b = tape.constant(random_matrix(1, 8, rng));
  Var back = nn::lstm(x, wx, wh, b, true);
  Var fwd_rev = nn::reverse_rows(nn::lstm(nn::reverse_rows(x), wx, wh, b, false));
  CHECK((back.value() - fwd_rev.value()).norm() < 1e-14);
}

TEST_CASE("cross entropy") {
  nn::Tape tape;
  Var uniform = tape.constant(Matrix::Zero(1, 3));
  CHECK(nn::cross_entropy(uniform, 1).value()(0, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  Matrix sharp(1, 3);
  sharp << 800, 0, 0;
  CHECK(nn::cross_entropy(tape.constant(sharp), 0).value()(0, 0) == 0.0);
  CHECK(nn::cross_entropy(tape.constant(sharp), 2).value()(0, 0) == doctest::Approx(800.0));

  auto ps = params_of({{1, 3}});
  CHECK(max_relative_error(ps, [](nn::Tape&, std::vector<Var>& v) { return nn::cross_entropy(v[0], 2); }) < 1e-6);
}

TEST_CASE("constants receive no gradient and leave parameters alone") {
  nn::Tape tape;
  Var c = tape.constant(Matrix::Ones(2, 2));
  Var y = nn::sum_rows(nn::transpose(nn::sum_rows(nn::hadamard(c, c))));
  tape.backward(y);
  CHECK(tape.grad(c).size() == 0);
}

TEST_CASE("gradients accumulate across tapes into the same parameter") {
  nn::Parameter p{"w", Matrix::Constant(1, 1, 2.0), {}, {}};
  p.zero_grad();
  for (int i = 0; i < 3; ++i) {
    nn::Tape tape;
    Var w = tape.parameter(p);
    tape.backward(nn::hadamard(w, w));
  }
  CHECK(p.grad(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("adam step: bias-corrected first step moves by lr, frozen rows stay") {
  std::vector<nn::Parameter> ps(1);
  ps[0].value = Matrix::Ones(2, 2);
  ps[0].frozen_rows = {0};
  ps[0].grad = Matrix::Constant(2, 2, 3.0);
  nn::Adam adam({0.1, 0.9, 0.999, 1e-8});
  adam.step(ps);
  CHECK(ps[0].value(0, 0) == 1.0);
  CHECK(ps[0].value(0, 1) == 1.0);
  CHECK(ps[0].value(1, 0) == doctest::Approx(0.9).epsilon(1e-6));

  std::vector<nn::Parameter> zero_lr(1);
  zero_lr[0].value = Matrix::Constant(2, 2, 0.25);
  zero_lr[0].grad = Matrix::Constant(2, 2, -7.0);
  nn::Adam still({0.0, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 5; ++i) still.step(zero_lr);
  CHECK(zero_lr[0].value == Matrix::Constant(2, 2, 0.25));
}

TEST_CASE("gradient clipping rescales to the global norm") {
  std::vector<nn::Parameter> ps(2);
  ps[0].value = ps[0].grad = Matrix::Constant(1, 1, 3.0);
  ps[1].value = ps[1].grad = Matrix::Constant(1, 1, 4.0);
  CHECK(nn::global_grad_norm(ps) == doctest::Approx(5.0));
  nn::clip_grad_norm(ps, 1.0);
  CHECK(nn::global_grad_norm(ps) == doctest::Approx(1.0));
  CHECK(ps[0].grad(0, 0) == doctest::Approx(0.6));
  nn::clip_grad_norm(ps, 10.0);
  CHECK(ps[1].grad(0, 0) == doctest::Approx(0.8));
}
