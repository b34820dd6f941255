// tmor: generate snapshot data, train autoencoder campaigns, compute POD
// baselines and emit figure/diagnostic CSVs.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tmor/experiment.hpp"

namespace ex = tmor::experiment;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> restarts;
  std::string out;
  std::string problem;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "key = value experiment config file");
    app->add_option("--seed", seed, "base seed");
    app->add_option("--restarts", restarts, "restarts per configuration");
    app->add_option("--out", out, "output directory (default $TMOR_OUTPUT_ROOT or ./results)");
    app->add_option("--problem", problem, "burgers | advection");
  }

  ex::ExperimentConfig resolve() const {
    ex::ExperimentConfig c = config.empty() ? ex::ExperimentConfig{} : ex::ExperimentConfig::load(config);
    if (seed) c.train.seed = *seed;
    if (restarts) c.train.restarts = *restarts;
    if (!out.empty()) c.output_dir = out;
    if (!problem.empty()) c.problem = tmor::problems::parse_problem(problem);
    return c;
  }
};

std::vector<ex::fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-extended autoencoder model reduction experiments"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, pod_flags, fig_flags, pp_flags;

  auto* gen = app.add_subcommand("generate", "write train/val/test snapshot CSVs and a manifest");
  gen_flags.add_to(gen);
  bool gen_normalize = false;
  gen->add_flag("--normalize-time", gen_normalize, "map the extended time row onto [0, 1]");

  auto* train = app.add_subcommand("train", "train every (kind, scenario) cell and emit result tables");
  train_flags.add_to(train);
  std::vector<std::string> kinds, scenarios;
  std::optional<std::size_t> max_epochs, threads;
  train->add_option("--kinds", kinds, "subset of NNA,LNA_ext,LNA,LNA_ext_fix,NLA")->delimiter(',');
  train->add_option("--scenarios", scenarios, "subset of A,B,C")->delimiter(',');
  train->add_option("--max-epochs", max_epochs, "epoch cap per restart");
  train->add_option("--threads", threads, "concurrent restarts");

  auto* podc = app.add_subcommand("pod", "POD error curve, errors at given ranks, minimal ranks for tolerances");
  pod_flags.add_to(podc);
  std::vector<std::size_t> r_list{1};
  std::vector<double> tol_list;
  podc->add_option("--r", r_list, "ranks to report")->delimiter(',');
  podc->add_option("--tol", tol_list, "relative error tolerances")->delimiter(',');

  auto* fig = app.add_subcommand("figures", "per-time approximations and pointwise errors of trained models");
  fig_flags.add_to(fig);
  std::vector<std::string> fig_models;
  std::vector<double> fig_times;
  bool fig_normalize = false;
  fig->add_option("--models", fig_models, "model files")->delimiter(',')->required();
  fig->add_option("--times", fig_times, "times (snapped to the nearest grid time)")->delimiter(',')->required();
  fig->add_flag("--normalize-time", fig_normalize, "models were trained with a normalized time row");

  auto* pp = app.add_subcommand("projprop", "point-projection deviation curves");
  pp_flags.add_to(pp);
  std::vector<std::string> pp_models;
  std::size_t pp_samples = 512;
  bool pp_normalize = false;
  pp->add_option("--models", pp_models, "model files (not NLA)")->delimiter(',')->required();
  pp->add_option("--samples", pp_samples, "latent samples per curve");
  pp->add_flag("--normalize-time", pp_normalize, "models were trained with a normalized time row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const auto c = gen_flags.resolve();
      const auto files = ex::cmd_generate(c.problem, c.output_dir, {gen_normalize});
      for (const auto& f : files.files) std::cout << f.string() << '\n';
      std::cout << files.manifest.string() << '\n';
    } else if (*train) {
      auto c = train_flags.resolve();
      if (!kinds.empty()) {
        c.kinds.clear();
        for (const auto& k : kinds) c.kinds.push_back(tmor::ae::parse_kind(k));
      }
      if (!scenarios.empty()) {
        c.scenarios.clear();
        for (const auto& s : scenarios) c.scenarios.push_back(tmor::ae::parse_scenario(s));
      }
      if (max_epochs) c.train.max_epochs = *max_epochs;
      if (threads) c.train.threads = *threads;
      const auto rep = ex::cmd_train(c, std::cout);
      for (const auto& cell : rep.cells)
        if (cell.failed) return 3;
    } else if (*podc) {
      const auto c = pod_flags.resolve();
      const auto rep = ex::cmd_pod(c, r_list, tol_list);
      for (const auto& [r, e] : rep.errors) std::cout << "r=" << r << " test_error=" << e << '\n';
      for (const auto& [tol, r] : rep.min_ranks) std::cout << "tol=" << tol << " min_rank=" << r << '\n';
    } else if (*fig) {
      const auto c = fig_flags.resolve();
      for (const auto& f : ex::cmd_figures(as_paths(fig_models), c.problem, fig_times, c.output_dir, fig_normalize))
        std::cout << f.approx.string() << '\n' << f.error.string() << '\n';
    } else if (*pp) {
      const auto c = pp_flags.resolve();
      for (const auto& cv : ex::cmd_projprop(as_paths(pp_models), c.problem, c.output_dir, pp_samples, pp_normalize))
        std::cout << cv.file.string() << '\n';
    }
  } catch (const tmor::Error& e) {
    std::cerr << "tmor: " << e.what() << '\n';
    return ex::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "tmor: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
