#pragma once

// Analytical benchmark solutions (viscous Burgers, linear advection of a
// sawtooth), snapshot generation, the interleaved train/validation/test
// split and the time extension z = [t; x].

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tmor/error.hpp"
#include "tmor/linalg.hpp"

namespace tmor::problems {

using linalg::Matrix;
using linalg::Vector;

enum class ProblemKind { burgers, advection };

inline std::string_view to_string(ProblemKind p) {
  return p == ProblemKind::burgers ? "burgers" : "advection";
}

inline ProblemKind parse_problem(std::string_view s) {
  if (s == "burgers") return ProblemKind::burgers;
  if (s == "advection") return ProblemKind::advection;
  throw Error(ErrorCode::invalid_input, "unknown problem '" + std::string(s) + "'");
}

/// n values from a to b, both endpoints included.
inline Vector linspace(double a, double b, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {a};
  Vector v(n);
  const double h = (b - a) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + static_cast<double>(i) * h;
  v.back() = b;
  return v;
}

struct SpaceTimeGrid {
  std::size_t n = 512;
  double xi_min = 0.0;
  double xi_max = 1.0;
  std::size_t n_t = 300;
  double t_min = 0.0;
  double t_max = 1.0;

  Vector xi() const { return linspace(xi_min, xi_max, n); }
  Vector t() const { return linspace(t_min, t_max, n_t); }

  void validate() const {
    if (n < 1 || n_t < 1) throw Error(ErrorCode::invalid_input, "grid needs at least one point per axis");
    if (n > 1 && !(xi_max > xi_min)) throw Error(ErrorCode::invalid_input, "empty spatial domain");
    if (n_t > 1 && !(t_max > t_min)) throw Error(ErrorCode::invalid_input, "empty time interval");
  }
};

/// Problem constants. Only the fields of the selected problem are used.
struct ProblemParams {
  double reynolds = 1000.0;
  double speed = 1.0;  // c
  double width = 0.1;  // sigma
  double shift = 0.0;  // beta
};

inline SpaceTimeGrid default_grid(ProblemKind p) {
  SpaceTimeGrid g;
  g.t_max = p == ProblemKind::burgers ? 4.0 : 1.0;
  return g;
}

/// x(t, xi) = xi/(t+1) * (1 + sqrt((t+1)/exp(Re/8)) * exp(Re xi^2/(4t+4)))^{-1}
///
/// The two exponentials are combined into exp(Re xi^2/(4t+4) - Re/16 + ln(t+1)/2).
inline double burgers_solution(double t, double xi, double reynolds) {
  const double exponent = reynolds * xi * xi / (4.0 * t + 4.0) - reynolds / 16.0 + 0.5 * std::log1p(t);
  return xi / (t + 1.0) / (1.0 + std::exp(exponent));
}

/// Sawtooth (xi - beta)/sigma on [beta, beta + sigma], transported with speed c.
inline double advection_solution(double t, double xi, double c, double sigma, double beta) {
  const double y = xi - c * t;
  if (beta <= y && y <= beta + sigma) return (y - beta) / sigma;
  return 0.0;
}

inline double evaluate(ProblemKind p, const ProblemParams& prm, double t, double xi) {
  return p == ProblemKind::burgers ? burgers_solution(t, xi, prm.reynolds)
                                   : advection_solution(t, xi, prm.speed, prm.width, prm.shift);
}

struct SnapshotSet {
  Matrix states;  // n x M, column j sampled at times[j]
  Vector times;
  ProblemKind problem = ProblemKind::burgers;
  SpaceTimeGrid grid;

  std::size_t dim() const noexcept { return states.rows(); }
  std::size_t size() const noexcept { return states.cols(); }
};

/// (1 + n) x M; row 0 carries time. A parameter block would append below the states.
struct ExtendedSnapshotSet {
  Matrix states_ext;
  Vector times;

  std::size_t dim() const noexcept { return states_ext.rows(); }
  std::size_t size() const noexcept { return states_ext.cols(); }
};

enum class ZeroColumnPolicy { allow, reject };

/// Number of identically-zero columns. The advection sawtooth leaves the
/// domain at t = 1, so its last default snapshot is one of these.
inline std::size_t count_zero_columns(const Matrix& m) {
  std::size_t zeros = 0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    bool all_zero = true;
    for (std::size_t i = 0; i < m.rows() && all_zero; ++i) all_zero = m(i, j) == 0.0;
    zeros += all_zero ? 1 : 0;
  }
  return zeros;
}

inline SnapshotSet generate_snapshots(ProblemKind problem, const SpaceTimeGrid& grid,
                                      const ProblemParams& params = {},
                                      ZeroColumnPolicy zero_policy = ZeroColumnPolicy::allow) {
  grid.validate();
  if (problem == ProblemKind::burgers && !(params.reynolds > 0.0))
    throw Error(ErrorCode::invalid_input, "Reynolds number must be positive");
  if (problem == ProblemKind::advection && !(params.width > 0.0))
    throw Error(ErrorCode::invalid_input, "sawtooth width must be positive");
  if (grid.t_min < 0.0) throw Error(ErrorCode::invalid_input, "time interval must start at t >= 0");

  SnapshotSet s;
  s.problem = problem;
  s.grid = grid;
  s.times = grid.t();
  const Vector xi = grid.xi();
  s.states = Matrix(grid.n, grid.n_t);
  for (std::size_t i = 0; i < grid.n; ++i)
    for (std::size_t j = 0; j < grid.n_t; ++j) s.states(i, j) = evaluate(problem, params, s.times[j], xi[i]);

  if (!s.states.all_finite()) throw Error(ErrorCode::invalid_input, "non-finite snapshot values");
  if (zero_policy == ZeroColumnPolicy::reject && count_zero_columns(s.states) > 0)
    throw Error(ErrorCode::degenerate_snapshot, "generated an all-zero snapshot column");
  return s;
}

/// Keep the columns listed in `idx`, in that order.
inline SnapshotSet select_columns(const SnapshotSet& s, const std::vector<std::size_t>& idx) {
  SnapshotSet out;
  out.problem = s.problem;
  out.grid = s.grid;
  out.states = Matrix(s.dim(), idx.size());
  out.times.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    for (std::size_t i = 0; i < s.dim(); ++i) out.states(i, k) = s.states(i, idx[k]);
    out.times.push_back(s.times[idx[k]]);
  }
  return out;
}

struct DataSplit {
  std::vector<std::size_t> train_idx, val_idx, test_idx;
};

/// train = {3i}, val = {3i+1}, test = {3i+2} (0-based).
inline DataSplit split_indices(std::size_t m) {
  if (m == 0 || m % 3 != 0)
    throw Error(ErrorCode::invalid_input, "snapshot count " + std::to_string(m) + " is not divisible by 3");
  DataSplit d;
  for (std::size_t i = 0; i < m / 3; ++i) {
    d.train_idx.push_back(3 * i);
    d.val_idx.push_back(3 * i + 1);
    d.test_idx.push_back(3 * i + 2);
  }
  return d;
}

struct SplitSets {
  SnapshotSet train, val, test;
};

inline SplitSets split(const SnapshotSet& s) {
  const DataSplit d = split_indices(s.size());
  return {select_columns(s, d.train_idx), select_columns(s, d.val_idx), select_columns(s, d.test_idx)};
}

struct ExtendOptions {
  bool normalize_time = false;  // map [t_min, t_max] onto [0, 1]
};

inline ExtendedSnapshotSet extend(const SnapshotSet& s, ExtendOptions opt = {}) {
  ExtendedSnapshotSet e;
  e.times = s.times;
  e.states_ext = Matrix(s.dim() + 1, s.size());
  const double span = s.grid.t_max - s.grid.t_min;
  for (std::size_t j = 0; j < s.size(); ++j) {
    double t = s.times[j];
    if (opt.normalize_time && span > 0.0) t = (t - s.grid.t_min) / span;
    e.states_ext(0, j) = t;
  }
  for (std::size_t i = 0; i < s.dim(); ++i) {
    const auto src = s.states.row(i);
    auto dst = e.states_ext.row(i + 1);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return e;
}

/// Drops the time row.
inline Matrix strip(const ExtendedSnapshotSet& e) {
  Matrix out(e.dim() - 1, e.size());
  for (std::size_t i = 1; i < e.dim(); ++i) {
    const auto src = e.states_ext.row(i);
    std::copy(src.begin(), src.end(), out.row(i - 1).begin());
  }
  return out;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header `t,<label_0>,...` and one row per time stamp. Plain
/// snapshot files label columns by their xi coordinate; extended files
/// label the leading time component `z_t` and the rest by xi.
inline void write_snapshot_csv(const std::string& path, const Matrix& states, const Vector& times,
                               const Vector& xi) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  os << 't';
  if (states.rows() == xi.size() + 1) os << ",z_t";
  for (double x : xi) os << ',' << format_real(x);
  os << '\n';
  for (std::size_t j = 0; j < states.cols(); ++j) {
    os << format_real(times[j]);
    for (std::size_t i = 0; i < states.rows(); ++i) os << ',' << format_real(states(i, j));
    os << '\n';
  }
  if (!os) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

inline void write_snapshot_csv(const std::string& path, const SnapshotSet& s) {
  write_snapshot_csv(path, s.states, s.times, s.grid.xi());
}

inline void write_snapshot_csv(const std::string& path, const ExtendedSnapshotSet& e, const Vector& xi) {
  write_snapshot_csv(path, e.states_ext, e.times, xi);
}

struct SnapshotCsv {
  Vector header;  // column labels; non-numeric labels such as z_t read as NaN
  Vector times;
  Matrix states;  // columns are time stamps
};

inline SnapshotCsv read_snapshot_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  auto parse_row = [&](const std::string& line, bool labels) {
    Vector v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        if (!labels) throw Error(ErrorCode::io, "bad numeric cell '" + cell + "' in '" + path + "'");
        v.push_back(std::nan(""));
      }
    }
    return v;
  };
  std::string line;
  if (!std::getline(is, line) || line.empty() || line[0] != 't')
    throw Error(ErrorCode::io, "missing header in '" + path + "'");
  SnapshotCsv out;
  const auto comma = line.find(',');
  out.header = comma == std::string::npos ? Vector{} : parse_row(line.substr(comma + 1), true);
  std::vector<Vector> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Vector r = parse_row(line, false);
    if (r.size() != out.header.size() + 1) throw Error(ErrorCode::io, "ragged row in '" + path + "'");
    out.times.push_back(r[0]);
    rows.push_back(std::move(r));
  }
  out.states = Matrix(out.header.size(), rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < out.header.size(); ++i) out.states(i, j) = rows[j][i + 1];
  return out;
}

}  // namespace tmor::problems
