#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "op_cases.hpp"
#include "oracles.hpp"
#include "scqa/tensor.hpp"

namespace scqa {
namespace {

using namespace oracle;

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t n, std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i * m + j] += a[i * k + t] * b[t * m + j];
  return c;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor r = matmul(Tensor::identity(2), m);
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, MatchesScalarLoopArithmetic) {
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  const Tensor r = matmul(Tensor::matrix(2, 2, a), Tensor::matrix(2, 2, b));
  const auto expect = naive_matmul(a, b, 2, 2, 2);
  EXPECT_EQ(expect, (std::vector<double>{19, 22, 43, 50}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(r[i], expect[i]);
}

TEST(Matmul, RandomRectangularAgreesWithScalarLoop) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);
    const Tensor a = random_matrix(n, k, rng), b = random_matrix(k, m, rng);
    const auto expect = naive_matmul({a.data().begin(), a.data().end()},
                                     {b.data().begin(), b.data().end()}, n, k, m);
    const Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{n, m}));
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(c[i], expect[i], 1e-12);
  }
}

TEST(Matmul, ZeroTimesAnythingIsZero) {
  std::mt19937_64 rng(1);
  const Tensor r = matmul(Tensor::zeros({2, 3}), random_matrix(3, 4, rng));
  EXPECT_EQ(r.shape(), (Shape{2, 4}));
  for (double x : r.data()) EXPECT_EQ(x, 0.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x5"), std::string::npos) << msg;
  }
}

TEST(Matmul, Associativity) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_matrix(4, 4, rng), b = random_matrix(4, 4, rng), c = random_matrix(4, 4, rng);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(l[i], r[i], 1e-9);
  }
}

TEST(Softmax, SymmetricInputIsUniform) {
  const Tensor p = softmax_temp(Tensor::vector({0, 0}), 2.0);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, ClosedFormQuarterThreeQuarters) {
  const Tensor p = softmax_temp(Tensor::vector({0, std::log(3.0)}), 1.0);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor p = softmax_temp(Tensor::vector({1000, 0}), 1.0);
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_NEAR(p[1], 0.0, 1e-15);
}

TEST(Softmax, NonPositiveTemperatureIsDomainError) {
  EXPECT_THROW(softmax_temp(Tensor::vector({1, 2}), 0.0), DomainError);
  EXPECT_THROW(softmax_temp(Tensor::vector({1, 2}), -1.0), DomainError);
  EXPECT_THROW(log_softmax_temp(Tensor::vector({1, 2}), 0.0), DomainError);
}

TEST(SoftmaxProperty, NormalizedAcrossTemperatures) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  for (double tau : {1e-3, 1e-2, 0.5, 1.0, 2.0, 10.0, 1e3, 1e6}) {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> z(len(rng));
      for (auto& x : z) x = u(rng);
      const Tensor p = softmax_temp(Tensor::vector(z), tau);
      double total = 0.0;
      for (double x : p.data()) {
        EXPECT_GE(x, 0.0);
        EXPECT_TRUE(std::isfinite(x));
        total += x;
      }
      EXPECT_NEAR(total, 1.0, 1e-9) << "tau=" << tau;
    }
  }
}

TEST(SoftmaxProperty, ShiftInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(6), shifted(6);
    const double c = u(rng) * 10.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = u(rng);
      shifted[i] = z[i] + c;
    }
    const double tau = 0.5 + trial * 0.05;
    const Tensor a = softmax_temp(Tensor::vector(z), tau), b = softmax_temp(Tensor::vector(shifted), tau);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(SoftmaxProperty, HighTemperatureApproachesUniform) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(1 + trial % 8);
    for (auto& x : z) x = u(rng);
    const Tensor p = softmax_temp(Tensor::vector(z), 1e6);
    for (double x : p.data()) EXPECT_LE(std::abs(x - 1.0 / static_cast<double>(z.size())), 1e-3);
  }
}

TEST(Relu, Examples) {
  const auto values = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  EXPECT_EQ(values(relu(Tensor::vector({-1, -5}))), (std::vector<double>{0, 0}));
  EXPECT_EQ(values(relu(Tensor::vector({2, 7}))), (std::vector<double>{2, 7}));
  EXPECT_EQ(values(relu(Tensor::vector({-3, 0, 4}))), (std::vector<double>{0, 0, 4}));
}

TEST(Relu, SubgradientAtZeroIsZero) {
  const Tensor x = Tensor::vector({0.0}, true);
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Elementwise, Examples) {
  EXPECT_EQ(concat_last_axis(Tensor::zeros({3, 4}), Tensor::zeros({3, 4})).shape(), (Shape{3, 8}));
  EXPECT_DOUBLE_EQ(mean(Tensor::vector({2, 4, 6})).item(), 4.0);
  EXPECT_DOUBLE_EQ(log(Tensor::vector({1}))[0], 0.0);
  EXPECT_THROW(log(Tensor::vector({1, 0})), DomainError);
  EXPECT_THROW(log(Tensor::vector({-2})), DomainError);
  EXPECT_THROW(concat_last_axis(Tensor::zeros({3, 4}), Tensor::zeros({2, 4})), DimensionError);
  EXPECT_THROW(add(Tensor::zeros({3, 4}), Tensor::zeros({4, 3})), DimensionError);
  EXPECT_EQ(transpose(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6})).at(2, 1), 6.0);
}

TEST(Elementwise, XlogyDefinesZeroTimesLogZero) {
  const Tensor r = xlogy(Tensor::vector({0.0, 2.0}), Tensor::vector({0.0, std::exp(1.0)}));
  EXPECT_EQ(r[0], 0.0);
  EXPECT_NEAR(r[1], 2.0, 1e-15);
}

TEST(Backward, SquareAtThree) {
  const Tensor x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, ConstantFunctionHasZeroGradient) {
  const Tensor x = Tensor::scalar(3.0, true);
  const Tensor c = Tensor::scalar(7.0);
  backward(add(scale(x, 0.0), c));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Backward, SoftmaxOfProductMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const Tensor w = random_matrix(5, 4, rng);
  const Tensor v = random_matrix(4, 1, rng);
  const auto loss = [&] { return weighted_sum(softmax_temp(reshape(matmul(w, v), {5}), 2.0), 1); };
  EXPECT_LE(oracle::gradient_rel_error(loss, {w, v}), 1e-4);
}

TEST(Backward, NonScalarLossIsContractError) {
  const Tensor x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, RepeatedCallsAccumulate) {
  const Tensor x = Tensor::scalar(3.0, true);
  const Tensor y = mul(x, x);
  backward(y);
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  Tensor(x).zero_grad();
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Graph, TopologicalOrderAndSharedSubexpressionsVisitedOnce) {
  const Tensor x = Tensor::vector({1, 2, 3}, true);
  const Tensor h = relu(x);
  const Tensor y = sum(add(mul(h, h), h));
  const Graph g = Graph::trace(y);
  const auto ops = g.ops();
  // x, relu, mul, add, sum: the shared relu node appears once.
  EXPECT_EQ(g.size(), 5u);
  EXPECT_EQ(ops.front(), "leaf");
  EXPECT_EQ(ops.back(), "sum");
  EXPECT_EQ(std::count(ops.begin(), ops.end(), "relu"), 1);
  backward(y);
  // d/dx (h^2 + h) = 2h + 1 on positives.
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 7.0);
}

TEST(Graph, NoGradRecordsNothing) {
  const Tensor x = Tensor::vector({1, 2}, true);
  Tensor y;
  {
    NoGrad guard;
    EXPECT_TRUE(NoGrad::active());
    y = sum(mul(x, x));
  }
  EXPECT_FALSE(NoGrad::active());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(Graph::trace(y).size(), 1u);
}

TEST(FiniteDiff, Examples) {
  const auto square = [](const Tensor& t) { return t[0] * t[0]; };
  EXPECT_NEAR(finite_diff_grad(square, Tensor::scalar(3.0), 1e-5)[0], 6.0, 1e-6);
  const auto linear = [](const Tensor& t) { return 2.5 * t[0] - 1.0; };
  EXPECT_NEAR(finite_diff_grad(linear, Tensor::scalar(0.7), 1e-5)[0], 2.5, 1e-9);
  const auto r = [](const Tensor& t) { return relu(t).item(); };
  EXPECT_NEAR(finite_diff_grad(r, Tensor::scalar(1.0), 1e-5)[0], 1.0, 1e-9);
}

TEST(FiniteDiff, LeavesInputUntouched) {
  const Tensor x = Tensor::vector({0.25, -0.5});
  const auto f = [](const Tensor& t) { return t[0] * t[1]; };
  finite_diff_grad(f, x, 1e-5);
  EXPECT_EQ(x[0], 0.25);
  EXPECT_EQ(x[1], -0.5);
}

// Every differentiable op against central differences, 20 random instances
// each with dimensions up to 8.
class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase c = op_cases()[GetParam()];
  std::mt19937_64 rng(1000 + GetParam());
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inputs = c.make(rng, dim(rng), dim(rng), dim(rng));
    for (const auto& t : inputs) ASSERT_TRUE(t.requires_grad());
    const auto loss = [&] { return weighted_sum(c.apply(inputs), 77 + static_cast<std::uint64_t>(trial)); };
    EXPECT_LE(oracle::gradient_rel_error(loss, inputs), 1e-4) << c.name << " trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return op_cases()[info.param].name; });

}  // namespace
}  // namespace scqa
