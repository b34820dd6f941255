#pragma once

// Experiment runner behind the command-line tool: data generation, training
// campaigns over (kind x scenario), POD reports, per-time approximation files
// and point-projection curves.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmor/autoencoder.hpp"
#include "tmor/error.hpp"
#include "tmor/pod.hpp"
#include "tmor/problems.hpp"
#include "tmor/training.hpp"

namespace tmor::experiment {

namespace fs = std::filesystem;
using linalg::Matrix;
using linalg::Vector;

inline constexpr const char* kGeneratorVersion = "tmor-generate 1";
inline constexpr const char* kOutputRootEnv = "TMOR_OUTPUT_ROOT";

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Default output root: $TMOR_OUTPUT_ROOT if set, else ./results.
inline fs::path default_output_dir() {
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "results";
}

/// Key set of the `key = value` config file (with `#` comments):
///
///   problem        burgers | advection               (burgers)
///   kinds          comma list of NNA, LNA_ext, LNA, LNA_ext_fix, NLA   (all)
///   scenarios      comma list of A, B, C             (all)
///   r              latent dimension                  (1)
///   restarts       restarts per cell                 (100)
///   seed           base seed                         (0)
///   output_dir     result directory                  ($TMOR_OUTPUT_ROOT or results)
///   data_dir       read <problem>-{train,val,test}.csv from here instead of generating
///   batch_size     (20)   patience (100)   max_epochs (20000)   lr (0.001)
///   threads        concurrent restarts               (1)
///   normalize_time map the extended time row onto [0, 1]   (false)
///   log_history    write per-restart epoch logs      (false)
struct ExperimentConfig {
  problems::ProblemKind problem = problems::ProblemKind::burgers;
  std::vector<ae::Kind> kinds{std::begin(ae::kAllKinds), std::end(ae::kAllKinds)};
  std::vector<ae::Scenario> scenarios{std::begin(ae::kAllScenarios), std::end(ae::kAllScenarios)};
  std::size_t r = 1;
  training::TrainConfig train;
  fs::path output_dir = default_output_dir();
  fs::path data_dir;
  bool normalize_time = false;

  void set(const std::string& key, const std::string& value) {
    auto to_size = [&](const std::string& v) {
      try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
      } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_input, "key '" + key + "' expects a non-negative integer, got '" + v + "'");
      }
    };
    auto to_bool = [&](const std::string& v) {
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw Error(ErrorCode::invalid_input, "key '" + key + "' expects a boolean, got '" + v + "'");
    };
    if (key == "problem") {
      problem = problems::parse_problem(value);
    } else if (key == "kinds") {
      kinds.clear();
      for (const auto& k : split_list(value)) kinds.push_back(ae::parse_kind(k));
    } else if (key == "scenarios") {
      scenarios.clear();
      for (const auto& s : split_list(value)) scenarios.push_back(ae::parse_scenario(s));
    } else if (key == "r") {
      r = to_size(value);
    } else if (key == "restarts") {
      train.restarts = to_size(value);
    } else if (key == "seed") {
      train.seed = to_size(value);
    } else if (key == "output_dir") {
      output_dir = value;
    } else if (key == "data_dir") {
      data_dir = value;
    } else if (key == "batch_size") {
      train.batch_size = to_size(value);
    } else if (key == "patience") {
      train.patience = to_size(value);
    } else if (key == "max_epochs") {
      train.max_epochs = to_size(value);
    } else if (key == "lr") {
      try {
        train.lr = std::stod(value);
      } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_input, "key 'lr' expects a real number");
      }
    } else if (key == "threads") {
      train.threads = to_size(value);
    } else if (key == "normalize_time") {
      normalize_time = to_bool(value);
    } else if (key == "log_history") {
      train.record_history = to_bool(value);
    } else {
      throw Error(ErrorCode::invalid_input, "unknown config key '" + key + "'");
    }
  }

  static ExperimentConfig parse(std::istream& is) {
    ExperimentConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::invalid_input, "config line " + std::to_string(lineno) + ": expected key = value");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  static ExperimentConfig load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::io, "cannot open config '" + path.string() + "'");
    return parse(is);
  }
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
}

inline std::string prefix(problems::ProblemKind p) { return std::string(problems::to_string(p)); }

inline problems::SnapshotSet default_snapshots(problems::ProblemKind p) {
  return problems::generate_snapshots(p, problems::default_grid(p));
}

// ---------------------------------------------------------------- generate

struct GeneratedFiles {
  std::vector<fs::path> files;
  fs::path manifest;
};

/// Writes <problem>-{train,val,test}.csv, their -ext variants and manifest.json.
inline GeneratedFiles cmd_generate(problems::ProblemKind problem, const fs::path& out_dir,
                                   problems::ExtendOptions ext = {}) {
  ensure_dir(out_dir);
  const problems::SpaceTimeGrid grid = problems::default_grid(problem);
  const problems::ProblemParams params;
  const auto all = problems::generate_snapshots(problem, grid, params);
  const auto sets = problems::split(all);
  const Vector xi = grid.xi();

  GeneratedFiles out;
  const std::pair<const char*, const problems::SnapshotSet*> parts[] = {
      {"train", &sets.train}, {"val", &sets.val}, {"test", &sets.test}};
  for (const auto& [name, set] : parts) {
    const fs::path plain = out_dir / (prefix(problem) + "-" + name + ".csv");
    problems::write_snapshot_csv(plain.string(), *set);
    const fs::path extended = out_dir / (prefix(problem) + "-" + name + "-ext.csv");
    problems::write_snapshot_csv(extended.string(), problems::extend(*set, ext), xi);
    out.files.push_back(plain);
    out.files.push_back(extended);
  }

  nlohmann::ordered_json m;
  m["generator"] = kGeneratorVersion;
  m["problem"] = prefix(problem);
  m["grid"] = {{"n", grid.n}, {"xi_min", grid.xi_min}, {"xi_max", grid.xi_max},
               {"n_t", grid.n_t}, {"t_min", grid.t_min}, {"t_max", grid.t_max}};
  if (problem == problems::ProblemKind::burgers) {
    m["constants"] = {{"reynolds", params.reynolds}};
  } else {
    m["constants"] = {{"c", params.speed}, {"sigma", params.width}, {"beta", params.shift}};
  }
  m["split"] = "train = 3i, val = 3i+1, test = 3i+2 (0-based)";
  m["normalize_time"] = ext.normalize_time;
  m["zero_columns"] = problems::count_zero_columns(all.states);
  for (const auto& f : out.files) m["files"].push_back(f.filename().string());
  out.manifest = out_dir / (prefix(problem) + "-manifest.json");
  std::ofstream os(out.manifest);
  if (!os) throw Error(ErrorCode::io, "cannot open '" + out.manifest.string() + "' for writing");
  os << m.dump(2) << '\n';
  return out;
}

/// Reads a split written by cmd_generate back into snapshot sets.
inline problems::SplitSets read_split(problems::ProblemKind problem, const fs::path& dir) {
  auto read = [&](const char* name) {
    const auto csv = problems::read_snapshot_csv((dir / (prefix(problem) + "-" + name + ".csv")).string());
    problems::SnapshotSet s;
    s.problem = problem;
    s.grid = problems::default_grid(problem);
    s.grid.n = csv.header.size();
    if (!csv.header.empty()) {
      s.grid.xi_min = csv.header.front();
      s.grid.xi_max = csv.header.back();
    }
    s.states = csv.states;
    s.times = csv.times;
    return s;
  };
  return {read("train"), read("val"), read("test")};
}

// ------------------------------------------------------------------- train

enum class Metric { best, average, epoch_seconds };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::best: return "best";
    case Metric::average: return "average";
    case Metric::epoch_seconds: return "epoch_seconds";
  }
  return "?";
}

/// Methods x scenarios; NaN marks a cell whose restarts all diverged.
struct ResultTable {
  Metric metric = Metric::best;
  std::vector<ae::Kind> rows;
  std::vector<ae::Scenario> cols;
  std::vector<std::vector<double>> cells;

  double at(ae::Kind k, ae::Scenario s) const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j)
        if (rows[i] == k && cols[j] == s) return cells[i][j];
    throw Error(ErrorCode::invalid_input, "no such table cell");
  }
};

inline void write_table_csv(const fs::path& path, const ResultTable& t) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  os << "method";
  for (auto s : t.cols) os << ',' << ae::to_string(s);
  os << '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    os << ae::to_string(t.rows[i]);
    for (double v : t.cells[i]) os << ',' << (std::isnan(v) ? std::string("failed") : problems::format_real(v));
    os << '\n';
  }
}

struct CellResult {
  ae::Kind kind;
  ae::Scenario scenario;
  bool failed = false;
  std::string failure;
  training::MultiRestartResult result;  // meaningful unless failed
  std::size_t encoder_params = 0;
  std::size_t decoder_params = 0;
  fs::path model_file;
};

struct TrainReport {
  ResultTable best, average, epoch_seconds;
  std::vector<CellResult> cells;
};

inline std::string model_filename(problems::ProblemKind p, const ae::AutoencoderConfig& c) {
  return prefix(p) + "-" + std::string(ae::to_string(c.kind)) + "-" + std::string(ae::to_string(c.scenario)) +
         "-r" + std::to_string(c.r) + ".ae";
}

inline problems::SplitSets load_or_generate(const ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) return read_split(cfg.problem, cfg.data_dir);
  return problems::split(default_snapshots(cfg.problem));
}

inline void print_cell(std::ostream& log, const CellResult& c) {
  log << ae::to_string(c.kind) << " (" << ae::to_string(c.scenario) << "): ";
  if (c.failed) {
    log << "FAILED " << c.failure << '\n';
    return;
  }
  log << "best test " << c.result.best.test_error << ", mean test " << c.result.mean_test_error()
      << ", epochs " << c.result.best.epochs_run << ", params " << c.encoder_params << " + " << c.decoder_params;
  if (c.result.failures()) log << ", diverged " << c.result.failures();
  log << '\n';
}

inline TrainReport cmd_train(const ExperimentConfig& cfg, std::ostream& log = std::clog) {
  cfg.train.validate();
  ensure_dir(cfg.output_dir);
  const problems::SplitSets sets = load_or_generate(cfg);
  const std::size_t n = sets.train.dim();

  TrainReport rep;
  for (auto* t : {&rep.best, &rep.average, &rep.epoch_seconds}) {
    t->rows = cfg.kinds;
    t->cols = cfg.scenarios;
    t->cells.assign(cfg.kinds.size(), std::vector<double>(cfg.scenarios.size(), std::nan("")));
  }
  rep.best.metric = Metric::best;
  rep.average.metric = Metric::average;
  rep.epoch_seconds.metric = Metric::epoch_seconds;

  for (std::size_t i = 0; i < cfg.kinds.size(); ++i) {
    const ae::Kind kind = cfg.kinds[i];
    const training::TrainingData data = training::make_training_data(kind, sets, {cfg.normalize_time});
    for (std::size_t j = 0; j < cfg.scenarios.size(); ++j) {
      const auto ac = ae::AutoencoderConfig::for_state_dim(kind, cfg.scenarios[j], n, cfg.r);
      CellResult cell;
      cell.kind = kind;
      cell.scenario = cfg.scenarios[j];
      const ae::Autoencoder shape(ac);
      cell.encoder_params = shape.encoder_param_count();
      cell.decoder_params = shape.decoder_param_count();
      try {
        cell.result = training::multi_restart(ac, data, cfg.train);
        cell.model_file = cfg.output_dir / model_filename(cfg.problem, ac);
        ae::save_file(cell.model_file.string(), cell.result.best.best);
        if (cfg.train.record_history) {
          auto log_path = cell.model_file;
          log_path.replace_extension(".log.csv");
          training::write_restart_log(log_path.string(), cell.result);
        }
        rep.best.cells[i][j] = cell.result.best.test_error;
        rep.average.cells[i][j] = cell.result.mean_test_error();
        rep.epoch_seconds.cells[i][j] = cell.result.mean_epoch_seconds();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::training_divergence) throw;
        cell.failed = true;
        cell.failure = e.what();
      }
      print_cell(log, cell);
      rep.cells.push_back(std::move(cell));
    }
  }

  const std::string p = prefix(cfg.problem);
  write_table_csv(cfg.output_dir / (p + "-best_error.csv"), rep.best);
  write_table_csv(cfg.output_dir / (p + "-average_error.csv"), rep.average);
  write_table_csv(cfg.output_dir / (p + "-epoch_seconds.csv"), rep.epoch_seconds);

  std::ofstream pc(cfg.output_dir / (p + "-param_counts.csv"));
  pc << "method,scenario,encoder_params,decoder_params,total\n";
  for (const auto& c : rep.cells)
    pc << ae::to_string(c.kind) << ',' << ae::to_string(c.scenario) << ',' << c.encoder_params << ','
       << c.decoder_params << ',' << c.encoder_params + c.decoder_params << '\n';
  return rep;
}

// --------------------------------------------------------------------- pod

struct PodReport {
  std::vector<pod::ErrorCurvePoint> curve;
  std::vector<std::pair<std::size_t, double>> errors;     // (r, test error)
  std::vector<std::pair<double, std::size_t>> min_ranks;  // (tol, rank)
};

inline PodReport cmd_pod(const ExperimentConfig& cfg, const std::vector<std::size_t>& r_list,
                         const std::vector<double>& tol_list) {
  ensure_dir(cfg.output_dir);
  const problems::SplitSets sets = load_or_generate(cfg);
  const auto svd = linalg::snapshot_svd(sets.train.states);
  PodReport rep;
  for (std::size_t r = 1; r <= svd.rank(); ++r)
    rep.curve.push_back({r, pod::pod_test_error(pod::pod_basis_from_svd(svd, r), sets.test)});
  for (std::size_t r : r_list) rep.errors.emplace_back(r, pod::pod_test_error(pod::pod_basis_from_svd(svd, r), sets.test));
  for (double tol : tol_list) rep.min_ranks.emplace_back(tol, pod::min_rank_for_error(sets.train, sets.test, tol));

  const std::string p = prefix(cfg.problem);
  pod::write_error_curve_csv((cfg.output_dir / (p + "-pod-curve.csv")).string(), rep.curve);
  std::ofstream os(cfg.output_dir / (p + "-pod-report.csv"));
  os << "query,value,result\n";
  for (const auto& [r, e] : rep.errors) os << "test_error," << r << ',' << problems::format_real(e) << '\n';
  for (const auto& [tol, r] : rep.min_ranks) os << "min_rank," << problems::format_real(tol) << ',' << r << '\n';
  return rep;
}

// ----------------------------------------------------------------- figures

struct LoadedModel {
  fs::path path;
  ae::Autoencoder model;
  std::string label;
};

inline std::vector<LoadedModel> load_models(const std::vector<fs::path>& paths) {
  std::vector<LoadedModel> out;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw Error(ErrorCode::io, "missing model file '" + p.string() + "'");
    LoadedModel m{p, ae::load_file(p.string()), {}};
    m.label = std::string(ae::to_string(m.model.config().kind));
    out.push_back(std::move(m));
  }
  for (auto& m : out) {
    const auto same = std::count_if(out.begin(), out.end(), [&](const LoadedModel& o) {
      return ae::to_string(o.model.config().kind) == ae::to_string(m.model.config().kind);
    });
    if (same > 1) m.label += "-" + std::string(ae::to_string(m.model.config().scenario));
  }
  return out;
}

/// Index of the grid time closest to t; out-of-range requests clamp to the
/// interval end and set `clamped`.
inline std::size_t snap_time(const Vector& times, double t, bool& clamped) {
  clamped = t < times.front() || t > times.back();
  std::size_t best = 0;
  for (std::size_t j = 1; j < times.size(); ++j)
    if (std::abs(times[j] - t) < std::abs(times[best] - t)) best = j;
  return best;
}

/// Ambient input for a model from state x at time t.
inline Vector ambient_input(const ae::Autoencoder& a, double t, const Vector& x, const problems::SnapshotSet& all,
                            bool normalize_time) {
  if (!ae::is_extended(a.config().kind)) return x;
  double tt = t;
  if (normalize_time) tt = (t - all.grid.t_min) / (all.grid.t_max - all.grid.t_min);
  Vector z{tt};
  z.insert(z.end(), x.begin(), x.end());
  return z;
}

struct FigureFiles {
  double requested = 0.0;
  double snapped = 0.0;
  bool clamped = false;
  fs::path approx, error;
};

inline std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

/// Per requested time: `<problem>-approx-t-<t>.csv` (xi, fom, one column per
/// model) and `<problem>-error-t-<t>.csv` with pointwise absolute errors.
inline std::vector<FigureFiles> cmd_figures(const std::vector<fs::path>& model_paths, problems::ProblemKind problem,
                                            const std::vector<double>& times, const fs::path& out_dir,
                                            bool normalize_time = false, std::ostream& log = std::clog) {
  ensure_dir(out_dir);
  const auto models = load_models(model_paths);
  const auto all = default_snapshots(problem);
  const Vector xi = all.grid.xi();
  for (const auto& m : models)
    if (m.model.config().state_dim() != xi.size())
      throw Error(ErrorCode::invalid_input, "model '" + m.path.string() + "' does not match the problem grid");

  std::vector<FigureFiles> out;
  for (double t : times) {
    FigureFiles ff;
    ff.requested = t;
    const std::size_t j = snap_time(all.times, t, ff.clamped);
    ff.snapped = all.times[j];
    if (ff.clamped) log << "warning: t = " << t << " lies outside the time interval; using t = " << ff.snapped << '\n';
    const Vector fom = all.states.column(j);

    std::vector<Vector> approx;
    for (const auto& m : models)
      approx.push_back(ae::state_part(m.model.reconstruct(ambient_input(m.model, ff.snapped, fom, all, normalize_time)),
                                      m.model.config().kind));

    const std::string tag = time_tag(ff.snapped);
    ff.approx = out_dir / (prefix(problem) + "-approx-t-" + tag + ".csv");
    ff.error = out_dir / (prefix(problem) + "-error-t-" + tag + ".csv");
    std::ofstream a(ff.approx), e(ff.error);
    if (!a || !e) throw Error(ErrorCode::io, "cannot write figure files in '" + out_dir.string() + "'");
    a << "xi,fom";
    e << "xi";
    for (const auto& m : models) {
      a << ',' << m.label;
      e << ',' << m.label;
    }
    a << '\n';
    e << '\n';
    for (std::size_t i = 0; i < xi.size(); ++i) {
      a << problems::format_real(xi[i]) << ',' << problems::format_real(fom[i]);
      e << problems::format_real(xi[i]);
      for (const auto& v : approx) {
        a << ',' << problems::format_real(v[i]);
        e << ',' << problems::format_real(std::abs(v[i] - fom[i]));
      }
      a << '\n';
      e << '\n';
    }
    out.push_back(ff);
  }
  return out;
}

// ---------------------------------------------------------------- projprop

struct ProjPropCurve {
  std::string label;
  std::vector<double> u;
  std::vector<double> deviation;
  fs::path file;
};

/// Deviation |encode(decode(u)) - u| over 512 latents spanning the encoded
/// training data of each model. Writes `<problem>-projprop-<label>.csv`
/// (u, deviation) per model and `<problem>-projprop.csv` with a shared
/// abscissa `sampling` in [0, 1].
inline std::vector<ProjPropCurve> cmd_projprop(const std::vector<fs::path>& model_paths, problems::ProblemKind problem,
                                               const fs::path& out_dir, std::size_t samples = 512,
                                               bool normalize_time = false) {
  ensure_dir(out_dir);
  const auto models = load_models(model_paths);
  for (const auto& m : models)
    if (m.model.config().kind == ae::Kind::nla)
      throw Error(ErrorCode::invalid_input, "the point-projection diagnostic is not produced for NLA models");
  const auto sets = problems::split(default_snapshots(problem));

  std::vector<ProjPropCurve> curves;
  for (const auto& m : models) {
    const Matrix train = ae::is_extended(m.model.config().kind)
                             ? problems::extend(sets.train, {normalize_time}).states_ext
                             : sets.train.states;
    const auto grid = ae::latent_sample_grid(m.model, train, samples);
    ProjPropCurve c;
    c.label = m.label;
    c.deviation = ae::point_projection_deviation(m.model, grid);
    for (const auto& u : grid) c.u.push_back(u[0]);
    c.file = out_dir / (prefix(problem) + "-projprop-" + c.label + ".csv");
    std::ofstream os(c.file);
    if (!os) throw Error(ErrorCode::io, "cannot open '" + c.file.string() + "' for writing");
    os << "u,deviation\n";
    for (std::size_t k = 0; k < c.u.size(); ++k)
      os << problems::format_real(c.u[k]) << ',' << problems::format_real(c.deviation[k]) << '\n';
    curves.push_back(std::move(c));
  }

  std::ofstream os(out_dir / (prefix(problem) + "-projprop.csv"));
  os << "sampling";
  for (const auto& c : curves) os << ',' << c.label;
  os << '\n';
  const Vector sampling = problems::linspace(0.0, 1.0, samples);
  for (std::size_t k = 0; k < samples; ++k) {
    os << problems::format_real(sampling[k]);
    for (const auto& c : curves) os << ',' << problems::format_real(c.deviation[k]);
    os << '\n';
  }
  return curves;
}

/// 0 success, 1 usage, 2 data error, 3 training failure.
inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::training_divergence:
    case ErrorCode::convergence_failure: return 3;
    default: return 2;
  }
}

}  // namespace tmor::experiment
