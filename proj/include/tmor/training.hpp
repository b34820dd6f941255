#pragma once

// Mini-batch least-squares training with validation early stopping,
// multi-restart selection and the time-averaged relative test error.

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tmor/autoencoder.hpp"
#include "tmor/error.hpp"
#include "tmor/linalg.hpp"
#include "tmor/nn.hpp"
#include "tmor/problems.hpp"
#include "tmor/rng.hpp"

namespace tmor::training {

using ae::Autoencoder;
using ae::AutoencoderConfig;
using linalg::Matrix;
using linalg::Vector;

struct TrainConfig {
  std::size_t batch_size = 20;
  std::size_t patience = 100;
  std::size_t max_epochs = 20000;
  std::size_t restarts = 100;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t threads = 1;  // restarts run concurrently when > 1
  bool record_history = false;

  void validate() const {
    if (batch_size < 1 || patience < 1 || max_epochs < 1 || restarts < 1 || threads < 1)
      throw Error(ErrorCode::invalid_input, "batch_size, patience, max_epochs, restarts and threads must be >= 1");
  }
};

/// Training material for one configuration. Sample matrices hold one ambient
/// vector per row (time row included for the extended kinds); the test set
/// stays in snapshot form because the error is measured on states only.
struct TrainingData {
  Matrix train;
  Matrix val;
  problems::SnapshotSet test;
  problems::ExtendOptions extend;
};

inline TrainingData make_training_data(ae::Kind kind, const problems::SplitSets& sets,
                                       problems::ExtendOptions ext = {}) {
  auto rows = [&](const problems::SnapshotSet& s) {
    return ae::is_extended(kind) ? linalg::transpose(problems::extend(s, ext).states_ext)
                                 : linalg::transpose(s.states);
  };
  return {rows(sets.train), rows(sets.val), sets.test, ext};
}

/// Both branches' optimizer state; Adam is elementwise, so separate states for
/// encoder and decoder equal one state over the concatenated vector.
struct OptimizerState {
  nn::AdamState encoder;
  nn::AdamState decoder;

  OptimizerState() = default;
  OptimizerState(const Autoencoder& a, const TrainConfig& cfg)
      : encoder(a.encoder_param_count()), decoder(a.decoder_param_count()) {
    for (auto* s : {&encoder, &decoder}) {
      s->lr = cfg.lr;
      s->beta1 = cfg.beta1;
      s->beta2 = cfg.beta2;
      s->eps = cfg.eps;
    }
  }
};

struct LossGradient {
  double loss = 0.0;
  Vector encoder;
  Vector decoder;
};

/// Mean over rows of ||v - decode(encode(v))||_2^2 and its gradient with
/// respect to every trainable parameter.
inline LossGradient reconstruction_loss_gradient(const Autoencoder& a, const Matrix& batch) {
  const std::size_t nb = batch.rows();
  if (nb == 0) throw Error(ErrorCode::invalid_input, "empty batch");
  std::optional<nn::ForwardCache> enc_cache;
  Matrix latents;
  if (a.has_trainable_encoder()) {
    enc_cache = nn::forward_batch(*a.encoder_spec(), a.encoder_params(), batch);
    latents = enc_cache->output();
  } else {
    latents = a.select_leading(batch);
  }
  const nn::ForwardCache dec_cache = nn::forward_batch(a.decoder_spec(), a.decoder_params(), std::move(latents));

  const Matrix& out = dec_cache.output();
  Matrix out_grad(nb, out.cols());
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(nb);
  for (std::size_t r = 0; r < nb; ++r) {
    const auto o = out.row(r);
    const auto v = batch.row(r);
    auto g = out_grad.row(r);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double d = o[i] - v[i];
      loss += d * d;
      g[i] = 2.0 * scale * d;
    }
  }

  LossGradient lg;
  lg.loss = loss * scale;
  nn::Gradients dg = nn::backward_batch(a.decoder_spec(), a.decoder_params(), dec_cache, out_grad,
                                        a.has_trainable_encoder());
  lg.decoder = std::move(dg.params);
  if (enc_cache) {
    lg.encoder =
        nn::backward_batch(*a.encoder_spec(), a.encoder_params(), *enc_cache, dg.input, false).params;
  }
  return lg;
}

inline double validation_objective(const Autoencoder& a, const Matrix& val_rows) {
  const Matrix rec = a.reconstruct_batch(val_rows);
  double s = 0.0;
  for (std::size_t r = 0; r < val_rows.rows(); ++r) {
    const auto x = val_rows.row(r);
    const auto y = rec.row(r);
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  }
  return s / static_cast<double>(val_rows.rows());
}

/// One pass over the shuffled training rows, one Adam step per batch. The
/// last batch is short when the row count is not a multiple of batch_size.
/// Returns the sample-weighted mean training loss.
inline double epoch(Autoencoder& a, OptimizerState& opt, const Matrix& train_rows, const TrainConfig& cfg,
                    Rng& rng) {
  const std::size_t m = train_rows.rows();
  const std::size_t width = train_rows.cols();
  if (width != a.config().ambient_dim)
    throw Error(ErrorCode::invalid_input, "training rows do not match the autoencoder ambient dim");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(order), rng);

  double total = 0.0;
  for (std::size_t start = 0; start < m; start += cfg.batch_size) {
    const std::size_t nb = std::min(cfg.batch_size, m - start);
    Matrix batch(nb, width);
    for (std::size_t r = 0; r < nb; ++r) {
      const auto src = train_rows.row(order[start + r]);
      std::copy(src.begin(), src.end(), batch.row(r).begin());
    }
    LossGradient lg = reconstruction_loss_gradient(a, batch);
    if (!std::isfinite(lg.loss)) throw Error(ErrorCode::training_divergence, "non-finite training loss");
    if (a.has_trainable_encoder()) nn::adam_step(a.encoder_params(), lg.encoder, opt.encoder);
    nn::adam_step(a.decoder_params(), lg.decoder, opt.decoder);
    total += lg.loss * static_cast<double>(nb);
  }
  return total / static_cast<double>(m);
}

enum class ZeroReference { skip, reject };

/// (1/M) sum_i ||x_i - y_i||_2 / ||x_i||_2 over columns. With `skip`, columns
/// whose reference is identically zero are left out of the average.
inline double mean_relative_error(const Matrix& reference, const Matrix& approx,
                                  ZeroReference policy = ZeroReference::skip) {
  if (reference.rows() != approx.rows() || reference.cols() != approx.cols())
    throw Error(ErrorCode::invalid_input, "mean_relative_error shape mismatch");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < reference.cols(); ++j) {
    const Vector x = reference.column(j);
    if (linalg::norm2(x) == 0.0) {
      if (policy == ZeroReference::reject)
        throw Error(ErrorCode::degenerate_reference, "reference column " + std::to_string(j) + " is zero");
      continue;
    }
    sum += linalg::relative_l2(x, approx.column(j));
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::degenerate_reference, "every reference column is zero");
  return sum / static_cast<double>(used);
}

/// Columns of state-space approximations x_approx for every test column.
inline Matrix reconstruct_states(const Autoencoder& a, const problems::SnapshotSet& test,
                                 problems::ExtendOptions ext_opt = {}) {
  const bool ext = ae::is_extended(a.config().kind);
  const Matrix rows =
      ext ? linalg::transpose(problems::extend(test, ext_opt).states_ext) : linalg::transpose(test.states);
  const Matrix rec = a.reconstruct_batch(rows);
  Matrix out(test.dim(), test.size());
  const std::size_t off = ext ? 1 : 0;
  for (std::size_t j = 0; j < test.size(); ++j)
    for (std::size_t i = 0; i < test.dim(); ++i) out(i, j) = rec(j, i + off);
  return out;
}

inline double test_error(const Autoencoder& a, const problems::SnapshotSet& test,
                         ZeroReference policy = ZeroReference::skip, problems::ExtendOptions ext = {}) {
  return mean_relative_error(test.states, reconstruct_states(a, test, ext), policy);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_objective = 0.0;
};

struct TrainResult {
  Autoencoder best;
  double val_objective = std::numeric_limits<double>::infinity();
  double test_error = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double mean_epoch_seconds = 0.0;
  std::size_t restart_index = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
};

/// Trains from a fresh initialization seeded with `seed` until the validation
/// objective has not improved for `patience` epochs or `max_epochs` is hit.
/// The returned model is the snapshot at the best validation objective.
inline TrainResult train_once(const AutoencoderConfig& config, const TrainingData& data, const TrainConfig& cfg,
                              std::uint64_t seed, std::size_t restart_index = 0) {
  cfg.validate();
  if (data.train.cols() != config.ambient_dim || data.val.cols() != config.ambient_dim)
    throw Error(ErrorCode::invalid_input, "training data width does not match the configuration");
  Rng rng(seed);
  Autoencoder model = ae::build(config, rng);
  OptimizerState opt(model, cfg);

  TrainResult res;
  res.restart_index = restart_index;
  res.seed = seed;
  res.best = model;
  double seconds = 0.0;
  std::size_t since_best = 0;
  for (std::size_t e = 1; e <= cfg.max_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double train_loss = epoch(model, opt, data.train, cfg, rng);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double val = validation_objective(model, data.val);
    if (!std::isfinite(val)) throw Error(ErrorCode::training_divergence, "non-finite validation objective");
    res.epochs_run = e;
    if (cfg.record_history) res.history.push_back({e, train_loss, val});
    if (val < res.val_objective) {
      res.val_objective = val;
      res.best = model;
      res.best_epoch = e;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  res.mean_epoch_seconds = seconds / static_cast<double>(res.epochs_run);
  res.test_error = test_error(res.best, data.test, ZeroReference::skip, data.extend);
  return res;
}

struct RestartSummary {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string failure;
  double val_objective = std::numeric_limits<double>::infinity();
  double test_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double mean_epoch_seconds = 0.0;
  std::vector<EpochRecord> history;
};

/// Index (into `runs`) of the minimal validation objective among the runs
/// that did not diverge; ties go to the lower restart index. nullopt if all
/// diverged.
inline std::optional<std::size_t> select_best(std::span<const RestartSummary> runs) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& r = runs[k];
    if (r.diverged) continue;
    if (!best) {
      best = k;
      continue;
    }
    const auto& b = runs[*best];
    if (r.val_objective < b.val_objective || (r.val_objective == b.val_objective && r.index < b.index)) best = k;
  }
  return best;
}

struct MultiRestartResult {
  TrainResult best;
  std::vector<RestartSummary> restarts;  // ordered by restart index

  /// Arithmetic mean of the test errors of the runs that did not diverge.
  double mean_test_error() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : restarts)
      if (!r.diverged) {
        s += r.test_error;
        ++n;
      }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }

  double mean_epoch_seconds() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : restarts)
      if (!r.diverged) {
        s += r.mean_epoch_seconds;
        ++n;
      }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }

  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& r : restarts) n += r.diverged ? 1 : 0;
    return n;
  }
};

using Runner = std::function<TrainResult(const AutoencoderConfig&, const TrainingData&, const TrainConfig&,
                                         std::uint64_t seed, std::size_t index)>;

/// Runs restarts with seeds seed + 0 ... seed + restarts - 1 and keeps the
/// best by validation objective. Divergent restarts are recorded and excluded.
/// Only the current best model is retained, so memory stays flat in the
/// number of restarts; the selection is order independent, so the result does
/// not depend on `threads`.
inline MultiRestartResult multi_restart(const AutoencoderConfig& config, const TrainingData& data,
                                        const TrainConfig& cfg, const Runner& runner = train_once) {
  cfg.validate();
  MultiRestartResult out;
  out.restarts.resize(cfg.restarts);
  std::optional<TrainResult> best;
  std::mutex mu;
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t k = next++; k < cfg.restarts; k = next++) {
      RestartSummary s;
      s.index = k;
      s.seed = cfg.seed + k;
      std::optional<TrainResult> r;
      try {
        r = runner(config, data, cfg, s.seed, k);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::training_divergence) throw;
        s.diverged = true;
        s.failure = e.what();
      }
      if (r) {
        s.val_objective = r->val_objective;
        s.test_error = r->test_error;
        s.epochs_run = r->epochs_run;
        s.best_epoch = r->best_epoch;
        s.mean_epoch_seconds = r->mean_epoch_seconds;
        s.history = std::move(r->history);
      }
      std::lock_guard lock(mu);
      if (r) {
        const bool better = !best || r->val_objective < best->val_objective ||
                            (r->val_objective == best->val_objective && k < best->restart_index);
        if (better) best = std::move(*r);
      }
      out.restarts[k] = std::move(s);
    }
  };

  const std::size_t nthreads = std::min(cfg.threads, cfg.restarts);
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mu;
    for (std::size_t t = 0; t < nthreads; ++t)
      pool.emplace_back([&] {
        try {
          work();
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          next = cfg.restarts;
        }
      });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  if (!best) throw Error(ErrorCode::training_divergence, "all " + std::to_string(cfg.restarts) + " restarts diverged");
  out.best = std::move(*best);
  return out;
}

/// CSV `restart,epoch,train_loss,val_objective`; needs record_history.
inline void write_restart_log(const std::string& path, const MultiRestartResult& res) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  os << "restart,epoch,train_loss,val_objective\n";
  for (const auto& r : res.restarts)
    for (const auto& h : r.history)
      os << r.index << ',' << h.epoch << ',' << problems::format_real(h.train_loss) << ','
         << problems::format_real(h.val_objective) << '\n';
  if (!os) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

}  // namespace tmor::training
