#pragma once

// Minimal dense MLP engine: parameter layout, seeded initialization, batched
// forward/backward passes and Adam.
//
// Batches are row-major (batch x features) matrices so that every sample is a
// contiguous row; weights are (out x in) row-major.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tmor/error.hpp"
#include "tmor/linalg.hpp"
#include "tmor/rng.hpp"

namespace tmor::nn {

using linalg::Matrix;
using linalg::Vector;

inline constexpr double kDefaultSlope = 0.01;

enum class Activation { identity, leaky_relu };

inline double leaky_relu(double x, double slope = kDefaultSlope) { return x >= 0.0 ? x : slope * x; }

/// Derivative with the positive branch taken at x = 0.
inline double leaky_relu_derivative(double x, double slope = kDefaultSlope) {
  return x >= 0.0 ? 1.0 : slope;
}

struct MlpSpec {
  std::vector<std::size_t> layer_dims;  // input first
  Activation hidden = Activation::leaky_relu;
  double slope = kDefaultSlope;
  bool bias = true;

  std::size_t num_layers() const noexcept { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  std::size_t param_count() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < num_layers(); ++l)
      total += layer_dims[l + 1] * layer_dims[l] + (bias ? layer_dims[l + 1] : 0);
    return total;
  }

  void validate() const {
    if (layer_dims.size() < 2) throw Error(ErrorCode::invalid_input, "an MLP needs at least two layer dims");
    for (auto d : layer_dims)
      if (d == 0) throw Error(ErrorCode::invalid_input, "layer dims must be positive");
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct LayerSlice {
  std::size_t in = 0, out = 0;
  std::size_t weight_offset = 0, bias_offset = 0;
};

/// Flat trainable vector; layer l holds W_l (out x in) then b_l (out).
///
/// `revision()` changes whenever the values may have been modified through
/// `values_mut()`; forward caches record it so a stale cache is detected.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const MlpSpec& spec) {
    spec.validate();
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      LayerSlice s;
      s.in = spec.layer_dims[l];
      s.out = spec.layer_dims[l + 1];
      s.weight_offset = off;
      off += s.in * s.out;
      s.bias_offset = off;
      if (spec.bias) off += s.out;
      layers_.push_back(s);
    }
    flat_.assign(off, 0.0);
    has_bias_ = spec.bias;
  }

  std::size_t size() const noexcept { return flat_.size(); }
  const std::vector<LayerSlice>& layers() const noexcept { return layers_; }
  bool has_bias() const noexcept { return has_bias_; }

  std::span<const double> values() const noexcept { return flat_; }
  std::span<double> values_mut() noexcept {
    ++revision_;
    return flat_;
  }
  std::uint64_t revision() const noexcept { return revision_; }

  std::span<const double> weights(std::size_t l) const {
    return {flat_.data() + layers_[l].weight_offset, layers_[l].in * layers_[l].out};
  }
  std::span<const double> bias(std::size_t l) const {
    return {flat_.data() + layers_[l].bias_offset, has_bias_ ? layers_[l].out : 0};
  }

  bool all_finite() const {
    for (double v : flat_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) { return a.flat_ == b.flat_; }

 private:
  std::vector<double> flat_;
  std::vector<LayerSlice> layers_;
  bool has_bias_ = true;
  std::uint64_t revision_ = 0;
};

/// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline ModelParams init_params(const MlpSpec& spec, Rng& rng) {
  ModelParams p(spec);
  auto flat = p.values_mut();
  for (const auto& layer : p.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (std::size_t k = 0; k < layer.in * layer.out; ++k)
      flat[layer.weight_offset + k] = uniform(rng, -bound, bound);
    if (p.has_bias())
      for (std::size_t k = 0; k < layer.out; ++k) flat[layer.bias_offset + k] = uniform(rng, -bound, bound);
  }
  return p;
}

namespace detail {

inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double alpha, const double* __restrict x, double* __restrict y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace detail

/// Per-layer inputs (activations[0] is the batch itself) and pre-activations.
struct ForwardCache {
  std::vector<Matrix> activations;      // L + 1 entries, activations[L] is the output
  std::vector<Matrix> pre_activations;  // L entries
  std::uint64_t params_revision = 0;
  const ModelParams* params = nullptr;

  const Matrix& output() const { return activations.back(); }
};

/// Forward pass over a batch (rows are samples).
inline ForwardCache forward_batch(const MlpSpec& spec, const ModelParams& params, Matrix batch) {
  if (batch.cols() != spec.input_dim())
    throw Error(ErrorCode::invalid_input, "input width " + std::to_string(batch.cols()) +
                                              " does not match MLP input dim " +
                                              std::to_string(spec.input_dim()));
  if (params.layers().size() != spec.num_layers())
    throw Error(ErrorCode::contract_violation, "parameters were built for a different MLP");
  const std::size_t nb = batch.rows();
  const std::size_t nl = spec.num_layers();
  ForwardCache cache;
  cache.params = &params;
  cache.params_revision = params.revision();
  cache.activations.reserve(nl + 1);
  cache.pre_activations.reserve(nl);
  cache.activations.push_back(std::move(batch));

  for (std::size_t l = 0; l < nl; ++l) {
    const LayerSlice& s = params.layers()[l];
    const Matrix& x = cache.activations[l];
    Matrix z(nb, s.out);
    const double* w = params.weights(l).data();
    const auto b = params.bias(l);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double* wrow = w + o * s.in;
      const double bo = b.empty() ? 0.0 : b[o];
      for (std::size_t r = 0; r < nb; ++r) z(r, o) = bo + detail::dot(wrow, x.row(r).data(), s.in);
    }
    Matrix a = z;
    if (l + 1 < nl && spec.hidden == Activation::leaky_relu) {
      for (double& v : a.data()) v = leaky_relu(v, spec.slope);
    }
    cache.pre_activations.push_back(std::move(z));
    cache.activations.push_back(std::move(a));
  }
  return cache;
}

struct ForwardResult {
  Vector output;
  ForwardCache cache;
};

inline ForwardResult forward(const MlpSpec& spec, const ModelParams& params, std::span<const double> input) {
  if (input.size() != spec.input_dim())
    throw Error(ErrorCode::invalid_input, "input length does not match MLP input dim");
  Matrix batch(1, input.size(), Vector(input.begin(), input.end()));
  ForwardResult r;
  r.cache = forward_batch(spec, params, std::move(batch));
  const auto out = r.cache.output().row(0);
  r.output.assign(out.begin(), out.end());
  return r;
}

struct Gradients {
  Vector params;  // same layout as ModelParams::values()
  Matrix input;   // d(loss)/d(batch); empty unless requested
};

/// Reverse-mode pass for loss = sum_r output_r . output_grad_r.
inline Gradients backward_batch(const MlpSpec& spec, const ModelParams& params, const ForwardCache& cache,
                                const Matrix& output_grad, bool want_input_grad = true) {
  const std::size_t nl = spec.num_layers();
  if (cache.params != &params || cache.params_revision != params.revision() ||
      cache.pre_activations.size() != nl)
    throw Error(ErrorCode::contract_violation, "forward cache does not belong to these parameters");
  const std::size_t nb = cache.activations.front().rows();
  if (output_grad.rows() != nb || output_grad.cols() != spec.output_dim())
    throw Error(ErrorCode::contract_violation, "output gradient shape does not match the forward cache");

  Gradients g;
  g.params.assign(params.size(), 0.0);
  Matrix delta = output_grad;
  for (std::size_t l = nl; l-- > 0;) {
    const LayerSlice& s = params.layers()[l];
    if (l + 1 < nl && spec.hidden == Activation::leaky_relu) {
      const auto z = cache.pre_activations[l].data();
      auto d = delta.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] *= leaky_relu_derivative(z[k], spec.slope);
    }
    const Matrix& x = cache.activations[l];
    const double* w = params.weights(l).data();
    double* gw = g.params.data() + s.weight_offset;
    double* gb = params.has_bias() ? g.params.data() + s.bias_offset : nullptr;
    const bool need_dx = l > 0 || want_input_grad;
    Matrix dx = need_dx ? Matrix(nb, s.in) : Matrix();
    for (std::size_t o = 0; o < s.out; ++o) {
      const double* wrow = w + o * s.in;
      double* gwrow = gw + o * s.in;
      double bsum = 0.0;
      for (std::size_t r = 0; r < nb; ++r) {
        const double dz = delta(r, o);
        if (dz == 0.0) continue;
        bsum += dz;
        detail::axpy(dz, x.row(r).data(), gwrow, s.in);
        if (need_dx) detail::axpy(dz, wrow, dx.row(r).data(), s.in);
      }
      if (gb) gb[o] += bsum;
    }
    if (l == 0) {
      if (want_input_grad) g.input = std::move(dx);
    } else {
      delta = std::move(dx);
    }
  }
  return g;
}

inline Gradients backward(const MlpSpec& spec, const ModelParams& params, const ForwardCache& cache,
                          std::span<const double> output_grad) {
  Matrix og(1, output_grad.size(), Vector(output_grad.begin(), output_grad.end()));
  return backward_batch(spec, params, cache, og);
}

struct AdamState {
  Vector m, v;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update. A non-finite gradient entry aborts before
/// anything is modified.
inline void adam_step(ModelParams& params, std::span<const double> grad, AdamState& st) {
  if (grad.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw Error(ErrorCode::invalid_input, "adam_step length mismatch");
  for (double gi : grad)
    if (!std::isfinite(gi)) throw Error(ErrorCode::training_divergence, "non-finite gradient");
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  auto p = params.values_mut();
  for (std::size_t i = 0; i < p.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    p[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

// Parameter text format:
//   MLPv1 <num_layers>
//   <out> <in>            (one line per layer)
//   weights row-major, then biases, layer by layer, one value per line

inline void save_params(std::ostream& os, const ModelParams& params) {
  os << "MLPv1 " << params.layers().size() << '\n';
  for (const auto& s : params.layers()) os << s.out << ' ' << s.in << '\n';
  const auto flat = params.values();
  char buf[32];
  for (double v : flat) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << '\n';
  }
}

/// Reads parameters for `spec`; the stored shapes must agree with it.
inline ModelParams load_params(std::istream& is, const MlpSpec& spec) {
  std::string tag;
  std::size_t nl = 0;
  if (!(is >> tag >> nl) || tag != "MLPv1") throw Error(ErrorCode::io, "missing MLPv1 header");
  if (nl != spec.num_layers()) throw Error(ErrorCode::io, "layer count does not match the expected MLP");
  ModelParams p(spec);
  for (const auto& s : p.layers()) {
    std::size_t out = 0, in = 0;
    if (!(is >> out >> in) || out != s.out || in != s.in)
      throw Error(ErrorCode::io, "layer shape does not match the expected MLP");
  }
  auto flat = p.values_mut();
  std::string cell;
  for (double& v : flat) {
    if (!(is >> cell)) throw Error(ErrorCode::io, "parameter file truncated");
    v = std::strtod(cell.c_str(), nullptr);
  }
  return p;
}

}  // namespace tmor::nn
