// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "servolnn/network.hpp"

using namespace servolnn;
namespace fs = std::filesystem;

namespace {

NetworkConfig cart_config() { return NetworkConfig{1, 1, {64}, 0.01}; }

// Randomized weights and biases so no head is degenerate.
NetworkParams random_params(const NetworkConfig& c, std::uint64_t seed, double scale = 1.0) {
  NetworkParams p = init_params(c, seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> n(0.0, 0.5 * scale);
  for (std::size_t i = 1; i < p.tensors.size(); i += 2)
    for (double& v : p.tensors[i].storage()) v = n(rng);
  return p;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("servolnn_net_" + name);
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
  EXPECT_EQ(init_params(cart_config(), 5), init_params(cart_config(), 5));
  EXPECT_NE(init_params(cart_config(), 5).tensors, init_params(cart_config(), 6).tensors);
}

TEST(Init, CartShapes) {
  const NetworkParams p = init_params(cart_config(), 1);
  ASSERT_EQ(p.tensors.size(), 8u);
  EXPECT_EQ(p.tensors[0].shape(), (Shape{64, 2}));
  EXPECT_EQ(p.tensors[1].shape(), (Shape{64, 1}));
  EXPECT_EQ(p.tensors[2].shape(), (Shape{1, 64}));
  EXPECT_EQ(p.tensors[4].shape(), (Shape{2, 64}));
  EXPECT_EQ(p.tensors[6].shape(), (Shape{1, 64}));
  for (std::size_t i = 1; i < p.tensors.size(); i += 2)
    for (double v : p.tensors[i].values()) EXPECT_EQ(v, 0.0);
  const double bound0 = 1.0 / std::sqrt(2.0);
  for (double v : p.tensors[0].values()) EXPECT_LE(std::abs(v), bound0);
  for (double v : p.tensors[2].values()) EXPECT_LE(std::abs(v), 0.125);
}

TEST(Init, SingleCoordinateHasNoLowerHead) {
  const NetworkParams p = init_params(NetworkConfig{1, 0, {8}, 0.01}, 1);
  EXPECT_EQ(p.tensors.size(), 6u);
}

TEST(Init, InvalidConfig) {
  EXPECT_THROW(init_params(NetworkConfig{0, 1, {8}, 0.01}, 1), ConfigError);
  EXPECT_THROW(init_params(NetworkConfig{1, 1, {8}, 0.0}, 1), ConfigError);
  EXPECT_THROW(init_params(NetworkConfig{1, 1, {}, 0.01}, 1), ConfigError);
}

TEST(Forward, ConstantNetwork) {
  NetworkParams p = init_params(cart_config(), 1);
  for (auto& t : p.tensors) t.fill(0.0);
  p.tensors[3][0] = 0.75;
  NetworkEvaluator eval(p);
  for (double th : {-2.0, 0.0, 1.3}) {
    const double q[2] = {th, -0.4};
    const NetworkOutput out = eval.forward(q);
    EXPECT_EQ(out.V, 0.75);
    EXPECT_EQ(out.dV_dq[0], 0.0);
    EXPECT_EQ(out.dV_dq[1], 0.0);
  }
}

TEST(Forward, NegativeDiagonalPreactivationClampsToZero) {
  NetworkParams p = random_params(cart_config(), 2);
  p.tensors[4].fill(0.0);
  p.tensors[5].fill(-1.0);
  NetworkEvaluator eval(p);
  const double q[2] = {0.3, 0.2};
  const NetworkOutput out = eval.forward(q);
  EXPECT_EQ(out.l_diag[0], 0.0);
  EXPECT_EQ(out.l_diag[1], 0.0);
  const MassData<double> m = eval.mass_data(q);
  EXPECT_NEAR(m.M(0, 0), 0.01, 1e-15);
}

TEST(Forward, DimensionMismatchIsUsageError) {
  NetworkEvaluator eval(init_params(cart_config(), 1));
  const double q[3] = {0, 0, 0};
  EXPECT_THROW(eval.forward(q), UsageError);
}

TEST(Forward, DerivativesMatchCentralDifferences) {
  const double h = 1e-5;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    NetworkEvaluator eval(random_params(cart_config(), seed));
    for (int trial = 0; trial < 10; ++trial) {
      const std::vector<double> q = {u(rng), u(rng)};
      const NetworkOutput out = eval.forward(q);
      const MassData<double> m = eval.mass_data(q);
      for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> qp = q, qm = q;
        qp[k] += h;
        qm[k] -= h;
        const NetworkOutput op = eval.forward(qp), om = eval.forward(qm);
        const double fd = (op.V - om.V) / (2 * h);
        EXPECT_LT(std::abs(out.dV_dq[k] - fd) / (std::abs(fd) + 1e-6), 1e-5);
        const MassData<double> mp = eval.mass_data(qp), mm = eval.mass_data(qm);
        for (std::size_t i = 0; i < 2; ++i)
          for (std::size_t j = 0; j < 2; ++j) {
            const double fdm = (mp.M(i, j) - mm.M(i, j)) / (2 * h);
            EXPECT_NEAR(m.dM_dq[k](i, j), fdm, 1e-5 * (std::abs(fdm) + 1e-3));
          }
      }
    }
  }
}

TEST(Forward, GraphValueHeadPassesFiniteDifferenceCheck) {
  const NetworkParams p = random_params(cart_config(), 3);
  const NetworkGraph g = build_network_graph(p.config, 1);
  autodiff::Bindings b;
  for (std::size_t i = 0; i < g.params.size(); ++i) b.emplace_back(g.params[i], p.tensors[i]);
  b.emplace_back(g.q[0], DenseTensor::scalar(0.4));
  b.emplace_back(g.q[1], DenseTensor::scalar(-1.1));
  for (const auto& qk : g.q)
    EXPECT_LT(autodiff::finite_difference_check(g.V.node(), qk, b, 1e-5), 1e-5);
}

TEST(Forward, DeterministicAndPure) {
  const NetworkParams p = random_params(cart_config(), 4);
  NetworkEvaluator a(p), b(p);
  const double q[2] = {0.7, 0.1};
  const MassData<double> ma = a.mass_data(q);
  a.mass_data(std::vector<double>{-1.0, 2.0});
  const MassData<double> mb = a.mass_data(q);
  const MassData<double> mc = b.mass_data(q);
  EXPECT_EQ(ma.M.data(), mb.M.data());
  EXPECT_EQ(ma.M.data(), mc.M.data());
  EXPECT_EQ(ma.dV_dq, mc.dV_dq);
}

TEST(Cholesky, TwoByTwo) {
  const Matrix<double> L = assemble_cholesky<double>({2.0, 3.0}, {5.0});
  EXPECT_EQ(L(0, 0), 2.0);
  EXPECT_EQ(L(0, 1), 0.0);
  EXPECT_EQ(L(1, 0), 5.0);
  EXPECT_EQ(L(1, 1), 3.0);
}

TEST(Cholesky, ThreeByThreeRowMajorLower) {
  const Matrix<double> L = assemble_cholesky<double>({1, 1, 1}, {7, 8, 9});
  EXPECT_EQ(L(1, 0), 7.0);
  EXPECT_EQ(L(2, 0), 8.0);
  EXPECT_EQ(L(2, 1), 9.0);
  EXPECT_EQ(L(0, 1), 0.0);
  EXPECT_EQ(L(0, 2), 0.0);
  EXPECT_EQ(L(1, 2), 0.0);
}

TEST(Cholesky, ZerosAndErrors) {
  const Matrix<double> L = assemble_cholesky<double>({0, 0}, {0});
  for (double v : L.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(assemble_cholesky<double>({1, 1}, {}), UsageError);
  EXPECT_THROW(assemble_cholesky<double>({1, 1, 1}, {1}), UsageError);
}

TEST(MassMatrix, Examples) {
  const Matrix<double> a = mass_matrix(Matrix<double>::identity(2), 0.01);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.01);
  EXPECT_DOUBLE_EQ(a(1, 1), 1.01);
  EXPECT_EQ(a(0, 1), 0.0);

  const Matrix<double> b = mass_matrix(assemble_cholesky<double>({2, 1}, {1}), 0.0);
  EXPECT_EQ(b(0, 0), 4.0);
  EXPECT_EQ(b(0, 1), 2.0);
  EXPECT_EQ(b(1, 0), 2.0);
  EXPECT_EQ(b(1, 1), 2.0);

  const Matrix<double> c = mass_matrix(Matrix<double>(2, 2), 0.01);
  Eigen::Matrix2d e;
  e << c(0, 0), c(0, 1), c(1, 0), c(1, 1);
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(e).eigenvalues();
  EXPECT_DOUBLE_EQ(ev[0], 0.01);
  EXPECT_DOUBLE_EQ(ev[1], 0.01);
}

TEST(MassMatrix, SymmetricPositiveDefiniteWithFloor) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 1e300;
  for (int draw = 0; draw < 1000; ++draw) {
    NetworkEvaluator eval(random_params(cart_config(), draw, 2.0));
    const double q[2] = {u(rng), u(rng)};
    const MassData<double> m = eval.mass_data(q);
    EXPECT_EQ(m.M(0, 1), m.M(1, 0));
    Eigen::Matrix2d e;
    e << m.M(0, 0), m.M(0, 1), m.M(1, 0), m.M(1, 1);
    worst = std::min(worst, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(e).eigenvalues()[0]);
  }
  EXPECT_GE(worst, 0.01 * (1 - 1e-12));
}

TEST(MassMatrix, KineticEnergyIsQuadraticInVelocity) {
  NetworkEvaluator eval(random_params(cart_config(), 8));
  const double q[2] = {0.2, 0.9};
  const MassData<double> m = eval.mass_data(q);
  const Vec<double> qd = {0.3, -1.7};
  const double T1 = kinetic_energy(m.M, qd);
  EXPECT_GT(T1, 0.0);
  for (double c : {-2.0, 0.5, 3.0}) {
    const double Tc = kinetic_energy(m.M, Vec<double>{c * qd[0], c * qd[1]});
    EXPECT_NEAR(Tc, c * c * T1, 1e-13 * c * c * T1);
  }
}

TEST(Params, SaveLoadRoundTrip) {
  const NetworkParams p = random_params(cart_config(), 9);
  const fs::path path = temp_file("roundtrip.bin");
  save_params(p, path.string());
  EXPECT_EQ(load_params(path.string()), p);
  EXPECT_EQ(load_params(path.string(), cart_config()), p);
  fs::remove(path);
}

TEST(Params, TruncatedFileIsParseError) {
  const NetworkParams p = random_params(cart_config(), 9);
  const fs::path path = temp_file("truncated.bin");
  save_params(p, path.string());
  fs::resize_file(path, fs::file_size(path) - 5);
  EXPECT_THROW(load_params(path.string()), ParseError);
  fs::resize_file(path, 4);
  EXPECT_THROW(load_params(path.string()), ParseError);
  fs::remove(path);
}

TEST(Params, MismatchedConfigIsConfigError) {
  const fs::path path = temp_file("mismatch.bin");
  save_params(init_params(NetworkConfig{1, 1, {32}, 0.01}, 1), path.string());
  EXPECT_THROW(load_params(path.string(), cart_config()), ConfigError);
  fs::remove(path);
}

TEST(Params, MissingFileIsIoError) {
  EXPECT_THROW(load_params((fs::temp_directory_path() / "servolnn_no_such_file.bin").string()),
               IoError);
  EXPECT_THROW(save_params(init_params(cart_config(), 1), "/nonexistent-dir/x.bin"), IoError);
}

TEST(Params, EvaluatorRejectsForeignParams) {
  NetworkEvaluator eval(init_params(cart_config(), 1));
  EXPECT_THROW(eval.set_params(init_params(NetworkConfig{1, 1, {16}, 0.01}, 1)), ConfigError);
}
