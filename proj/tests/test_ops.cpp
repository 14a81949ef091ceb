#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dear/errors.hpp"
#include "dear/ops.hpp"
#include "dear/rng.hpp"

namespace dear {
namespace {

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 0.0) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.at(i), want[i], tol) << "index " << i;
}

TEST(Matmul, IdentityAndOnes) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  expect_values(matmul(a, eye), {1, 2, 3, 4});
  expect_values(matmul(a, Tensor::from_rows({{1}, {1}})), {3, 7});
}

TEST(Matmul, ZerosTimesAnything) {
  Rng rng(1);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.normal();
  const Tensor out = matmul(Tensor::zeros({2, 3}), Tensor({3, 4}, v));
  EXPECT_EQ(out.shape(), (Shape{2, 4}));
  expect_values(out, std::vector<double>(8, 0.0));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, NtAndTransposeAgree) {
  const Tensor a = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  const Tensor b = Tensor::from_rows({{1, 0, 2}, {0, 1, 1}});
  const Tensor x = matmul_nt(a, b);
  const Tensor y = matmul(a, transpose(b));
  expect_values(x, std::vector<double>(y.data().begin(), y.data().end()));
}

TEST(Softmax, Examples) {
  expect_values(softmax(Tensor({2}, {0, 0})), {0.5, 0.5}, 1e-15);
  expect_values(softmax(Tensor({2}, {std::log(2.0), 0})), {2.0 / 3, 1.0 / 3}, 1e-15);
  const Tensor big = softmax(Tensor({2}, {1000, 0}));
  EXPECT_TRUE(std::isfinite(big.at(0)));
  EXPECT_NEAR(big.at(0), 1.0, 1e-15);
  EXPECT_NEAR(big.at(1), 0.0, 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  const Tensor s = softmax(Tensor::from_rows({{1, 2, 3}, {-5, 0, 5}}));
  EXPECT_NEAR(s.at(0, 0) + s.at(0, 1) + s.at(0, 2), 1.0, 1e-12);
  EXPECT_NEAR(s.at(1, 0) + s.at(1, 1) + s.at(1, 2), 1.0, 1e-12);
}

TEST(Softmax, NanIsNumericError) {
  EXPECT_THROW(softmax(Tensor({2}, {NAN, 0})), NumericError);
}

TEST(LayerNorm, ConstantSliceMapsToZero) {
  const Tensor g = Tensor::full({3}, 1.0), b = Tensor::zeros({3});
  expect_values(layer_norm(Tensor({3}, {5, 5, 5}), g, b, 1e-5), {0, 0, 0});
}

TEST(LayerNorm, NormalizedInputUnchanged) {
  const Tensor g = Tensor::full({2}, 1.0), b = Tensor::zeros({2});
  expect_values(layer_norm(Tensor({2}, {1, -1}), g, b, 1e-12), {1, -1}, 1e-9);
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
  Rng rng(3);
  std::vector<double> v(4);
  for (auto& x : v) x = rng.normal(2.0, 3.0);
  const Tensor y = layer_norm(Tensor({4}, v), Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-5);
  const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / 4;
  double var = 0;
  for (double x : y.data()) var += (x - mean) * (x - mean);
  EXPECT_LT(std::abs(mean), 1e-9);
  EXPECT_NEAR(var / 4, 1.0, 1e-4);
}

TEST(LayerNorm, RejectsNonPositiveEps) {
  EXPECT_THROW(layer_norm(Tensor({2}, {1, 2}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0),
               ContractError);
}

TEST(CrossEntropy, Examples) {
  const Tensor y = Tensor::from_rows({{1, 0}});
  EXPECT_NEAR(cross_entropy(y, Tensor::from_rows({{0.7, 0.3}})).item(), -std::log(0.7), 1e-15);
  EXPECT_EQ(cross_entropy(y, Tensor::from_rows({{1.0, 0.0}})).item(), 0.0);
  const Tensor y4 = Tensor::from_rows({{0, 0, 1, 0}, {1, 0, 0, 0}});
  const Tensor u = Tensor::full({2, 4}, 0.25);
  EXPECT_NEAR(cross_entropy(y4, u).item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  const double loss = cross_entropy(Tensor::from_rows({{0, 1}}), Tensor::from_rows({{1, 0}})).item();
  EXPECT_NEAR(loss, -std::log(kProbClamp), 1e-9);
}

TEST(CrossEntropy, RejectsNonOneHot) {
  EXPECT_THROW(cross_entropy(Tensor::from_rows({{0.5, 0.5}}), Tensor::from_rows({{0.5, 0.5}})),
               ContractError);
  EXPECT_THROW(cross_entropy(Tensor::from_rows({{1, 1}}), Tensor::from_rows({{0.5, 0.5}})),
               ContractError);
  EXPECT_THROW(cross_entropy(Tensor::from_rows({{0, 0}}), Tensor::from_rows({{0.5, 0.5}})),
               ContractError);
}

TEST(CrossEntropy, ShapeMismatch) {
  EXPECT_THROW(cross_entropy(Tensor::from_rows({{1, 0}}), Tensor::from_rows({{0.2, 0.3, 0.5}})),
               ShapeError);
}

TEST(Slicing, RowsColsAndRange) {
  const Tensor a = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  expect_values(slice_rows(a, 1, 2), {4, 5, 6, 7, 8, 9});
  expect_values(slice_cols(a, 1, 1), {2, 5, 8});
  expect_values(reverse_rows(a), {7, 8, 9, 4, 5, 6, 1, 2, 3});
  EXPECT_THROW(slice_rows(a, 2, 2), RangeError);
  EXPECT_THROW(slice_cols(a, 0, 4), RangeError);
}

TEST(Concat, ColsAndRows) {
  const Tensor a = Tensor::from_rows({{1}, {2}});
  const Tensor b = Tensor::from_rows({{3, 4}, {5, 6}});
  expect_values(concat_cols({a, b}), {1, 3, 4, 2, 5, 6});
  expect_values(concat_rows({b, b}), {3, 4, 5, 6, 3, 4, 5, 6});
}

TEST(CausalConv, OnlyLooksBackwards) {
  // One channel, kernel [w0, w1, w2] applied to x[t-2], x[t-1], x[t].
  const Tensor x = Tensor::from_rows({{1}, {2}, {3}, {4}});
  const Tensor w = Tensor::from_rows({{0.5, 0.25, 1.0}});
  const Tensor b = Tensor({1}, {0.1});
  expect_values(causal_conv1d(x, w, b), {1.1, 2.35, 4.1, 5.85}, 1e-12);
}

TEST(Activations, KnownValues) {
  expect_values(silu(Tensor({2}, {0, 1})), {0, 1 / (1 + std::exp(-1.0))}, 1e-15);
  expect_values(softplus(Tensor({3}, {0, 800, -800})), {std::log(2.0), 800, 0}, 1e-12);
  EXPECT_NEAR(gelu(Tensor({1}, {1})).item(), 0.8411919906082768, 1e-12);
}

TEST(Linear, AddsBiasPerRow) {
  const Tensor x = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor w = Tensor::from_rows({{1, 0}, {0, 1}});
  expect_values(linear(x, w, Tensor({2}, {10, 20})), {11, 22, 13, 24});
}

TEST(MeanOf, ElementwiseAverage) {
  expect_values(mean_of({Tensor({2}, {1, 2}), Tensor({2}, {3, 6})}), {2, 4});
  EXPECT_THROW(mean_of({Tensor({2}, {1, 2}), Tensor({3}, {1, 2, 3})}), ShapeError);
}

}  // namespace
}  // namespace dear
