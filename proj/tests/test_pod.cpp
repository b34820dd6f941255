#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tmor/pod.hpp"

using namespace tmor::pod;
using tmor::Error;
using tmor::ErrorCode;
using tmor::Rng;
namespace problems = tmor::problems;
namespace la = tmor::linalg;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected tmor::Error";
  return ErrorCode::io;
}

const problems::SplitSets& sets(problems::ProblemKind p) {
  static const problems::SplitSets b =
      problems::split(problems::generate_snapshots(problems::ProblemKind::burgers, problems::default_grid(problems::ProblemKind::burgers)));
  static const problems::SplitSets a = problems::split(
      problems::generate_snapshots(problems::ProblemKind::advection, problems::default_grid(problems::ProblemKind::advection)));
  return p == problems::ProblemKind::burgers ? b : a;
}

/// State-block error computed from the closed-form leading eigenvector of the
/// 2 x 2 Gram matrix of Z.
double oracle_state_block_err(double alpha, double beta) {
  const Matrix z = Matrix::from_rows({{1.0, 2.0}, {alpha, 0.0}, {0.0, beta}});
  const Vector u = oracle::two_column_leading_left_vector(z);
  const double vx0 = u[1], vx1 = u[2];
  // residual of x_i - vx vx^T x_i for x_1 = (alpha, 0), x_2 = (0, beta)
  double s = 0.0;
  const double c1 = vx0 * alpha;
  s += std::pow(alpha - vx0 * c1, 2) + std::pow(vx1 * c1, 2);
  const double c2 = vx1 * beta;
  s += std::pow(vx0 * c2, 2) + std::pow(beta - vx1 * c2, 2);
  return std::sqrt(s);
}

}  // namespace

TEST(PodBasis, ToyMatrix) {
  const Matrix x = Matrix::from_rows({{1, 0}, {0, 0.9}});
  const auto b = pod_basis(x, 1);
  EXPECT_EQ(std::abs(b.V(0, 0)), 1.0);
  EXPECT_EQ(b.V(1, 0), 0.0);
  EXPECT_NEAR(projection_residual(b, x), 0.9, 1e-15);
}

TEST(PodBasis, OrthogonalColumnsFullRank) {
  const Matrix x = Matrix::from_rows({{2, 0, 0}, {0, 0, 2}, {0, 2, 0}, {0, 0, 0}});
  const auto b = pod_basis(x, 3);
  EXPECT_LT(projection_residual(b, x), 1e-14);
}

TEST(PodBasis, RandomResidualMatchesTruncation) {
  Rng rng(2);
  const Matrix x = oracle::random_matrix(8, 5, rng);
  const auto svd = la::snapshot_svd(x);
  const auto b = pod_basis(x, 2);
  EXPECT_NEAR(projection_residual(b, x), la::truncation_error_frobenius(svd, 2), 1e-10);
  const Matrix vtv = la::matmul(la::transpose(b.V), b.V);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(vtv(i, j), i == j ? 1.0 : 0.0, 1e-10);
}

TEST(PodBasis, RankTooLargeNamesAchievableRank) {
  const Matrix x = Matrix::from_rows({{1, 0}, {0, 0}});
  try {
    pod_basis(x, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
    EXPECT_NE(std::string(e.what()).find("rank 1"), std::string::npos) << e.what();
  }
}

TEST(PodBasis, OptimalAgainstRandomProjectors) {
  Rng rng(41);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t n = 3 + tmor::uniform_index(rng, 8);
    const std::size_t m = 2 + tmor::uniform_index(rng, 5);
    const Matrix x = oracle::random_matrix(n, m, rng);
    const std::size_t r = 1 + tmor::uniform_index(rng, std::min(n, m) - 1);
    const double best = projection_residual(pod_basis(x, r), x);
    for (int k = 0; k < 1000; ++k) {
      const Matrix v = oracle::random_orthonormal(n, r, rng);
      const double res = la::frobenius_norm(la::subtract(x, la::project(v, x)));
      ASSERT_GT(res, best - 1e-12);
    }
  }
}

TEST(PodBasis, EncoderIrrelevance) {
  // With decoder V fixed, the least-squares latent for x is V^T x: the normal
  // equations V^T (x - V u) = 0 hold at u = V^T x, and perturbing u only grows
  // the residual.
  Rng rng(5);
  const Matrix x = oracle::random_matrix(9, 6, rng);
  const auto b = pod_basis(x, 3);
  const Matrix u = la::matmul(la::transpose(b.V), x);
  const Matrix res = la::subtract(x, la::matmul(b.V, u));
  const Matrix normal = la::matmul(la::transpose(b.V), res);
  for (double v : normal.data()) EXPECT_LT(std::abs(v), 1e-13);
  const double base = la::frobenius_norm(res);
  for (int k = 0; k < 200; ++k) {
    Matrix up = u;
    for (double& v : up.data()) v += tmor::uniform(rng, -0.1, 0.1);
    EXPECT_GT(la::frobenius_norm(la::subtract(x, la::matmul(b.V, up))), base);
  }
}

TEST(PodTestError, Baselines) {
  const auto& b = sets(problems::ProblemKind::burgers);
  EXPECT_NEAR(pod_test_error(pod_basis(b.train, 1), b.test), 0.4927, 0.02);
  const auto& a = sets(problems::ProblemKind::advection);
  EXPECT_NEAR(pod_test_error(pod_basis(a.train, 1), a.test), 0.9615, 0.02);
}

TEST(PodTestError, FrozenValues) {
  // Train-fit, test-evaluate with the single zero advection test column skipped.
  const auto& b = sets(problems::ProblemKind::burgers);
  EXPECT_NEAR(pod_test_error(pod_basis(b.train, 1), b.test), 0.49267, 5e-5);
  const auto& a = sets(problems::ProblemKind::advection);
  EXPECT_NEAR(pod_test_error(pod_basis(a.train, 1), a.test), 0.96152, 5e-5);
  EXPECT_EQ(code_of([&] { pod_test_error(pod_basis(a.train, 1), a.test, tmor::training::ZeroReference::reject); }),
            ErrorCode::degenerate_reference);
}

TEST(PodTestError, FullRankOnTrainingData) {
  const auto& b = sets(problems::ProblemKind::burgers);
  const auto svd = la::snapshot_svd(b.train.states);
  ASSERT_EQ(svd.rank(), 100u);
  EXPECT_LT(pod_test_error(pod_basis_from_svd(svd, 100), b.train), 1e-10);
}

TEST(MinRank, Baselines) {
  const auto& b = sets(problems::ProblemKind::burgers);
  const auto& a = sets(problems::ProblemKind::advection);
  const std::size_t rb = min_rank_for_error(b.train, b.test, 0.02);
  const std::size_t ra = min_rank_for_error(a.train, a.test, 0.30);
  EXPECT_NEAR(static_cast<double>(rb), 21.0, 2.0);
  EXPECT_NEAR(static_cast<double>(ra), 35.0, 3.0);
  EXPECT_EQ(rb, 21u);
  EXPECT_EQ(ra, 35u);
}

TEST(MinRank, EdgeCases) {
  Rng rng(3);
  problems::SnapshotSet s;
  s.states = oracle::random_matrix(6, 4, rng);
  s.times = {0, 1, 2, 3};
  EXPECT_EQ(min_rank_for_error(s, s, 0.999999), 1u);
  EXPECT_EQ(code_of([&] { min_rank_for_error(s, s, 1.0); }), ErrorCode::invalid_input);
  EXPECT_EQ(code_of([&] { min_rank_for_error(s, s, 0.0); }), ErrorCode::invalid_input);
  problems::SnapshotSet other;
  other.states = oracle::random_matrix(6, 3, rng);
  other.times = {0, 1, 2};
  EXPECT_EQ(code_of([&] { min_rank_for_error(s, other, 1e-9); }), ErrorCode::not_achievable);
}

TEST(ErrorCurve, MonotoneOnTrainingAndCsv) {
  const auto& b = sets(problems::ProblemKind::burgers);
  const auto curve = error_curve(b.train, b.train, 30);
  ASSERT_EQ(curve.size(), 30u);
  for (std::size_t k = 0; k < curve.size(); ++k) EXPECT_EQ(curve[k].r, k + 1);
  const auto path = std::filesystem::temp_directory_path() / "tmor_pod_curve.csv";
  write_error_curve_csv(path.string(), curve);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "r,test_error");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 2), "1,");
  std::filesystem::remove(path);
}

TEST(ExtendedProjection, WorkedExample) {
  const auto e = extended_projection_errors(1.0, 0.9);
  EXPECT_NEAR(e.state_err, 0.9, 1e-12);
  EXPECT_NEAR(e.extended_err, 0.9802, 1e-3);
  EXPECT_NEAR(e.state_block_err, 1.2565, 5e-3);

  const Matrix z = Matrix::from_rows({{1, 2}, {1, 0}, {0, 0.9}});
  EXPECT_NEAR(e.extended_err, oracle::two_column_singular_values(z).second, 1e-12);
  EXPECT_NEAR(e.state_block_err, oracle_state_block_err(1.0, 0.9), 1e-12);
  EXPECT_NEAR(e.extended_err, 0.98021330984108960, 1e-12);
  EXPECT_NEAR(e.state_block_err, 1.2564985352868687, 1e-12);
}

TEST(ExtendedProjection, LowerBoundOnGrid) {
  for (int i = 1; i <= 20; ++i)
    for (int j = 1; j <= 20; ++j) {
      const double alpha = 0.1 * i, beta = 0.1 * j;
      const auto e = extended_projection_errors(alpha, beta);
      EXPECT_GE(e.state_block_err, e.state_err - 1e-12) << alpha << ' ' << beta;
      EXPECT_NEAR(e.state_block_err, oracle_state_block_err(alpha, beta), 1e-10);
      // interlacing on these specific matrices
      const auto sx = la::snapshot_svd(Matrix::from_rows({{alpha, 0}, {0, beta}}), 0.0);
      const auto sz = la::snapshot_svd(Matrix::from_rows({{1, 2}, {alpha, 0}, {0, beta}}), 0.0);
      EXPECT_GE(sz.singular_values.back(), sx.singular_values.back() - 1e-12);
    }
}

TEST(ExtendedProjection, RejectsNonPositive) {
  EXPECT_EQ(code_of([] { extended_projection_errors(0.0, 1.0); }), ErrorCode::invalid_input);
  EXPECT_EQ(code_of([] { extended_projection_errors(1.0, -1.0); }), ErrorCode::invalid_input);
}

TEST(PodAsAutoencoder, MatchesPodTestError) {
  // LNA with encoder V^T and a decoder that outputs V u exactly: the latent is
  // carried through the positive branch of every hidden layer via a +c shift.
  const auto& b = sets(problems::ProblemKind::burgers);
  const auto basis = pod_basis(b.train, 1);
  tmor::ae::Autoencoder a(
      tmor::ae::AutoencoderConfig::for_state_dim(tmor::ae::Kind::lna, tmor::ae::Scenario::A, 512));
  auto enc = a.encoder_params().values_mut();
  for (std::size_t i = 0; i < 512; ++i) enc[i] = basis.V(i, 0);
  const double c = 100.0;
  auto f = a.decoder_params().values_mut();
  const auto& L = a.decoder_params().layers();
  f[L[0].weight_offset] = 1.0;
  f[L[0].bias_offset] = c;
  for (std::size_t l = 1; l + 1 < L.size(); ++l) f[L[l].weight_offset] = 1.0;
  const auto& last = L.back();
  for (std::size_t i = 0; i < 512; ++i) {
    f[last.weight_offset + i * last.in] = basis.V(i, 0);
    f[last.bias_offset + i] = -c * basis.V(i, 0);
  }
  const double ae_err = tmor::training::test_error(a, b.test);
  EXPECT_NEAR(ae_err, pod_test_error(basis, b.test), 1e-10);
  EXPECT_NEAR(ae_err, 0.4927, 0.02);
}
