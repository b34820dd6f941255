#pragma once

// Linear baseline: POD bases from the leading left singular vectors of the
// training snapshots, their test errors, and the rank needed for a target
// error.

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "tmor/error.hpp"
#include "tmor/linalg.hpp"
#include "tmor/problems.hpp"
#include "tmor/training.hpp"

namespace tmor::pod {

using linalg::Matrix;
using linalg::Vector;

struct PodBasis {
  Matrix V;                       // n x r, orthonormal columns
  Vector singular_values;         // full spectrum of the training matrix
  std::size_t r = 0;
};

inline PodBasis pod_basis_from_svd(const linalg::SvdResult& svd, std::size_t r) {
  if (r > svd.rank())
    throw Error(ErrorCode::invalid_input, "requested POD rank " + std::to_string(r) +
                                              " exceeds the numerical rank " + std::to_string(svd.rank()));
  return {linalg::leading_columns(svd.left_vectors, r), svd.singular_values, r};
}

inline PodBasis pod_basis(const Matrix& train, std::size_t r) {
  return pod_basis_from_svd(linalg::snapshot_svd(train), r);
}

inline PodBasis pod_basis(const problems::SnapshotSet& train, std::size_t r) { return pod_basis(train.states, r); }

/// Orthogonal projection V V^T x of every column.
inline Matrix project(const PodBasis& basis, const Matrix& x) {
  if (x.rows() != basis.V.rows()) throw Error(ErrorCode::invalid_input, "POD basis and data dims differ");
  return linalg::project(basis.V, x);
}

inline double pod_test_error(const PodBasis& basis, const problems::SnapshotSet& test,
                             training::ZeroReference policy = training::ZeroReference::skip) {
  return training::mean_relative_error(test.states, project(basis, test.states), policy);
}

/// Frobenius norm of the projection residual X - V V^T X.
inline double projection_residual(const PodBasis& basis, const Matrix& x) {
  return linalg::frobenius_norm(linalg::subtract(x, project(basis, x)));
}

struct ErrorCurvePoint {
  std::size_t r = 0;
  double test_error = 0.0;
};

/// Test error for r = 1 .. min(r_max, numerical rank), one SVD of the training data.
inline std::vector<ErrorCurvePoint> error_curve(const problems::SnapshotSet& train, const problems::SnapshotSet& test,
                                                std::size_t r_max) {
  const auto svd = linalg::snapshot_svd(train.states);
  std::vector<ErrorCurvePoint> out;
  for (std::size_t r = 1; r <= std::min(r_max, svd.rank()); ++r)
    out.push_back({r, pod_test_error(pod_basis_from_svd(svd, r), test)});
  return out;
}

/// Smallest r whose test error is strictly below `tol`.
inline std::size_t min_rank_for_error(const problems::SnapshotSet& train, const problems::SnapshotSet& test,
                                      double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw Error(ErrorCode::invalid_input, "tolerance must lie in (0, 1)");
  const auto svd = linalg::snapshot_svd(train.states);
  for (std::size_t r = 1; r <= svd.rank(); ++r)
    if (pod_test_error(pod_basis_from_svd(svd, r), test) < tol) return r;
  throw Error(ErrorCode::not_achievable,
              "no POD rank up to " + std::to_string(svd.rank()) + " reaches tolerance " + std::to_string(tol));
}

inline void write_error_curve_csv(const std::string& path, const std::vector<ErrorCurvePoint>& curve) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  os << "r,test_error\n";
  for (const auto& p : curve) os << p.r << ',' << problems::format_real(p.test_error) << '\n';
  if (!os) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

struct ExtendedProjectionErrors {
  double state_err = 0.0;        // best rank-1 error of [x1 x2]
  double extended_err = 0.0;     // best rank-1 error of [z1 z2]
  double state_block_err = 0.0;  // state error when projecting with the state block of the extended vector
};

/// Two snapshots x1 = [alpha, 0], x2 = [0, beta] taken at t = 1, 2, and their
/// time extensions z_i = [t_i; x_i].
inline ExtendedProjectionErrors extended_projection_errors(double alpha, double beta) {
  if (!(alpha > 0.0 && beta > 0.0)) throw Error(ErrorCode::invalid_input, "alpha and beta must be positive");
  const Matrix x = Matrix::from_rows({{alpha, 0.0}, {0.0, beta}});
  const Matrix z = Matrix::from_rows({{1.0, 2.0}, {alpha, 0.0}, {0.0, beta}});

  ExtendedProjectionErrors out;
  out.state_err = linalg::truncation_error_frobenius(linalg::snapshot_svd(x), 1);
  const auto zsvd = linalg::snapshot_svd(z);
  out.extended_err = linalg::truncation_error_frobenius(zsvd, 1);

  // The state block of the leading extended vector is not normalized.
  Matrix vx(2, 1);
  vx(0, 0) = zsvd.left_vectors(1, 0);
  vx(1, 0) = zsvd.left_vectors(2, 0);
  out.state_block_err = linalg::frobenius_norm(linalg::subtract(x, linalg::project(vx, x)));
  return out;
}

}  // namespace tmor::pod
