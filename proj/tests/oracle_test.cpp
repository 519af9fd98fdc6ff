#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qnt/oracle.hpp"
#include "qnt/rng.hpp"

namespace {

using qnt::Codebook;
using qnt::Norm;
namespace oracle = qnt::oracle;

TEST(OracleBinary, HandComputedExamples) {
  const std::vector<double> w{1.0, -2.0, 3.0};
  const auto r1 = oracle::oracle_binary(w, Norm::l1);
  EXPECT_DOUBLE_EQ(r1.objective, 2.0);
  EXPECT_DOUBLE_EQ(r1.quantized.scale, 2.0);

  const auto r2 = oracle::oracle_binary(w, Norm::l2);
  EXPECT_DOUBLE_EQ(r2.quantized.scale, 2.0);
  EXPECT_NEAR(r2.objective, std::sqrt(2.0), 1e-15);

  for (Norm n : {Norm::l1, Norm::l2}) {
    const std::vector<double> one{5.0};
    EXPECT_EQ(oracle::oracle_binary(one, n).objective, 0.0);
  }
}

TEST(OracleBinary, RejectsOutOfRange) {
  EXPECT_THROW(oracle::oracle_binary(std::vector<double>{}, Norm::l1), qnt::InvalidInput);
  EXPECT_THROW(oracle::oracle_binary(std::vector<double>(13, 1.0), Norm::l1), qnt::InvalidInput);
}

TEST(OracleTernary, HandComputedExamples) {
  const auto r = oracle::oracle_ternary_l1(std::vector<double>{0.1, -0.9, 1.0});
  EXPECT_NEAR(r.objective, 0.2, 1e-15);
  EXPECT_EQ(r.quantized.codes, (std::vector<std::int32_t>{0, -1, 1}));

  EXPECT_EQ(oracle::oracle_ternary_l1(std::vector<double>{2.0, 2.0}).objective, 0.0);

  const auto z = oracle::oracle_ternary_l1(std::vector<double>{0.0, 0.0, 0.0});
  EXPECT_EQ(z.objective, 0.0);
  EXPECT_EQ(z.quantized.codes, (std::vector<std::int32_t>{0, 0, 0}));

  EXPECT_THROW(oracle::oracle_ternary_l1(std::vector<double>(11, 1.0)), qnt::InvalidInput);
}

TEST(OracleTernary, LeastSquaresExample) {
  const auto r = oracle::oracle_ternary_l2(std::vector<double>{0.1, -0.9, 1.0});
  EXPECT_NEAR(r.quantized.scale, 0.95, 1e-15);
  EXPECT_EQ(r.quantized.codes, (std::vector<std::int32_t>{0, -1, 1}));
  EXPECT_NEAR(r.objective, std::sqrt(0.015), 1e-15);
  EXPECT_EQ(oracle::oracle_ternary_l2(std::vector<double>{0.0}).objective, 0.0);
  EXPECT_THROW(oracle::oracle_ternary_l2(std::vector<double>(11, 1.0)), qnt::InvalidInput);
}

TEST(OracleMbit, HandComputedExamples) {
  const Codebook cb({1, 2});
  const auto r = oracle::oracle_mbit_l1(std::vector<double>{0.5, 2.0, -0.8}, cb);
  EXPECT_NEAR(r.objective, 0.7, 1e-15);

  // 0.75 * {+1, -2, +2}
  EXPECT_EQ(oracle::oracle_mbit_l1(std::vector<double>{0.75, -1.5, 1.5}, cb).objective, 0.0);

  const Codebook cb3({1, 2, 3});
  EXPECT_EQ(oracle::oracle_mbit_l1(std::vector<double>{-0.37}, cb3).objective, 0.0);

  EXPECT_THROW(oracle::oracle_mbit_l1(std::vector<double>(7, 1.0), cb), qnt::InvalidInput);
  EXPECT_THROW(oracle::oracle_mbit_l1(std::vector<double>{1.0}, Codebook({1, 2, 3, 4})),
               qnt::InvalidInput);
}

TEST(OracleProperties, ObjectiveRecomputesAndScales) {
  qnt::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.index(6);
    std::vector<double> w(d);
    for (auto& x : w) x = rng.uniform(-2.0, 2.0);
    const double alpha = 4.0;  // power of two: scaling is exact
    std::vector<double> aw(d);
    for (std::size_t j = 0; j < d; ++j) aw[j] = alpha * w[j];

    for (Norm n : {Norm::l1, Norm::l2}) {
      const auto r = oracle::oracle_binary(w, n);
      EXPECT_NEAR(r.objective, qnt::reconstruction_error(r.quantized, w, n), 1e-12);
      EXPECT_NEAR(oracle::oracle_binary(aw, n).objective, alpha * r.objective, 1e-11);
    }
    const auto t = oracle::oracle_ternary_l1(w);
    EXPECT_NEAR(t.objective, qnt::reconstruction_error(t.quantized, w, Norm::l1), 1e-12);
    EXPECT_NEAR(oracle::oracle_ternary_l1(aw).objective, alpha * t.objective, 1e-11);
  }
}

}  // namespace
