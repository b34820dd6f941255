#pragma once

// The five encoder/decoder configurations over the decoder layer schedules
// (A), (B), (C), plus save/load and the point-projection diagnostic.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tmor/error.hpp"
#include "tmor/linalg.hpp"
#include "tmor/nn.hpp"
#include "tmor/problems.hpp"
#include "tmor/rng.hpp"

namespace tmor::ae {

using linalg::Matrix;
using linalg::Vector;

enum class Kind {
  nna,          // nonlinear encoder, nonlinear decoder, plain data
  lna_ext,      // linear encoder, nonlinear decoder, time-extended data
  lna,          // linear encoder, nonlinear decoder, plain data
  lna_ext_fix,  // fixed first-unit-vector encoder, nonlinear decoder, time-extended data
  nla,          // nonlinear encoder, linear decoder, plain data
};

inline constexpr Kind kAllKinds[] = {Kind::nna, Kind::lna_ext, Kind::lna, Kind::lna_ext_fix, Kind::nla};

enum class Scenario { A, B, C };

inline constexpr Scenario kAllScenarios[] = {Scenario::A, Scenario::B, Scenario::C};

inline std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::nna: return "NNA";
    case Kind::lna_ext: return "LNA_ext";
    case Kind::lna: return "LNA";
    case Kind::lna_ext_fix: return "LNA_ext_fix";
    case Kind::nla: return "NLA";
  }
  return "?";
}

inline Kind parse_kind(std::string_view s) {
  for (Kind k : kAllKinds)
    if (s == to_string(k)) return k;
  throw Error(ErrorCode::invalid_input, "unknown autoencoder kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::A: return "A";
    case Scenario::B: return "B";
    case Scenario::C: return "C";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  for (Scenario sc : kAllScenarios)
    if (s == to_string(sc)) return sc;
  throw Error(ErrorCode::invalid_input, "unknown scenario '" + std::string(s) + "'");
}

inline bool is_extended(Kind k) { return k == Kind::lna_ext || k == Kind::lna_ext_fix; }

/// Decoder schedule from latent dim r to ambient dim N.
inline std::vector<std::size_t> decoder_dims(Scenario s, std::size_t r, std::size_t ambient) {
  std::vector<std::size_t> hidden;
  switch (s) {
    case Scenario::A: hidden = {3, 9, 27, 81, 243}; break;
    case Scenario::B: hidden = {4, 16, 64, 256}; break;
    case Scenario::C: hidden = {5, 25, 125}; break;
  }
  std::vector<std::size_t> dims{r};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(ambient);
  return dims;
}

struct AutoencoderConfig {
  Kind kind = Kind::nna;
  Scenario scenario = Scenario::A;
  std::size_t r = 1;
  std::size_t ambient_dim = 512;  // n, or 1 + n for the extended kinds

  /// Config for state dimension n; the ambient dim follows from the kind.
  static AutoencoderConfig for_state_dim(Kind kind, Scenario scenario, std::size_t n, std::size_t r = 1) {
    return {kind, scenario, r, is_extended(kind) ? n + 1 : n};
  }

  std::size_t state_dim() const { return is_extended(kind) ? ambient_dim - 1 : ambient_dim; }

  void validate() const {
    if (r == 0) throw Error(ErrorCode::invalid_input, "latent dimension must be positive");
    if (ambient_dim < (is_extended(kind) ? 2u : 1u))
      throw Error(ErrorCode::invalid_input, "ambient dimension too small for this kind");
    if (kind == Kind::lna_ext_fix && r > ambient_dim)
      throw Error(ErrorCode::invalid_input, "selector encoder needs r <= ambient dim");
  }

  friend bool operator==(const AutoencoderConfig&, const AutoencoderConfig&) = default;
};

enum class EncoderType { mlp, linear, selector };

inline EncoderType encoder_type(Kind k) {
  switch (k) {
    case Kind::nna:
    case Kind::nla: return EncoderType::mlp;
    case Kind::lna:
    case Kind::lna_ext: return EncoderType::linear;
    case Kind::lna_ext_fix: return EncoderType::selector;
  }
  return EncoderType::mlp;
}

inline nn::MlpSpec decoder_spec(const AutoencoderConfig& c) {
  nn::MlpSpec s;
  s.layer_dims = decoder_dims(c.scenario, c.r, c.ambient_dim);
  if (c.kind == Kind::nla) {
    // Linear (not affine) decoder: identity activations and no biases.
    s.hidden = nn::Activation::identity;
    s.bias = false;
  }
  return s;
}

/// Mirrored decoder schedule for nonlinear encoders; a bias-free single layer
/// (r x N) for linear ones; nullopt for the fixed selector.
inline std::optional<nn::MlpSpec> encoder_spec(const AutoencoderConfig& c) {
  nn::MlpSpec s;
  switch (encoder_type(c.kind)) {
    case EncoderType::mlp: {
      s.layer_dims = decoder_dims(c.scenario, c.r, c.ambient_dim);
      std::reverse(s.layer_dims.begin(), s.layer_dims.end());
      return s;
    }
    case EncoderType::linear:
      s.layer_dims = {c.ambient_dim, c.r};
      s.hidden = nn::Activation::identity;
      s.bias = false;
      return s;
    case EncoderType::selector: return std::nullopt;
  }
  return std::nullopt;
}

class Autoencoder {
 public:
  Autoencoder() = default;

  /// Zero-initialized autoencoder.
  explicit Autoencoder(const AutoencoderConfig& config) : config_(config) {
    config_.validate();
    dec_spec_ = ae::decoder_spec(config_);
    dec_ = nn::ModelParams(dec_spec_);
    enc_spec_ = ae::encoder_spec(config_);
    if (enc_spec_) enc_ = nn::ModelParams(*enc_spec_);
  }

  const AutoencoderConfig& config() const noexcept { return config_; }
  const nn::MlpSpec& decoder_spec() const noexcept { return dec_spec_; }
  const std::optional<nn::MlpSpec>& encoder_spec() const noexcept { return enc_spec_; }
  bool has_trainable_encoder() const noexcept { return enc_spec_.has_value(); }

  nn::ModelParams& decoder_params() noexcept { return dec_; }
  const nn::ModelParams& decoder_params() const noexcept { return dec_; }
  nn::ModelParams& encoder_params() noexcept { return enc_; }
  const nn::ModelParams& encoder_params() const noexcept { return enc_; }

  std::size_t encoder_param_count() const noexcept { return enc_spec_ ? enc_.size() : 0; }
  std::size_t decoder_param_count() const noexcept { return dec_.size(); }
  std::size_t param_count() const noexcept { return encoder_param_count() + decoder_param_count(); }

  /// Rows of `batch` are ambient vectors; returns latents row by row.
  Matrix encode_batch(const Matrix& batch) const {
    check_width(batch.cols(), config_.ambient_dim, "encode");
    if (!enc_spec_) return select_leading(batch);
    return nn::forward_batch(*enc_spec_, enc_, batch).output();
  }

  Matrix decode_batch(const Matrix& latents) const {
    check_width(latents.cols(), config_.r, "decode");
    return nn::forward_batch(dec_spec_, dec_, latents).output();
  }

  Matrix reconstruct_batch(const Matrix& batch) const { return decode_batch(encode_batch(batch)); }

  Vector encode(std::span<const double> v) const { return as_vector(encode_batch(as_row(v))); }
  Vector decode(std::span<const double> u) const { return as_vector(decode_batch(as_row(u))); }
  Vector reconstruct(std::span<const double> v) const { return decode(encode(v)); }

  /// Leading r components of each row; this is the fixed first-unit-vector encoder.
  Matrix select_leading(const Matrix& batch) const {
    Matrix out(batch.rows(), config_.r);
    for (std::size_t i = 0; i < batch.rows(); ++i)
      for (std::size_t k = 0; k < config_.r; ++k) out(i, k) = batch(i, k);
    return out;
  }

 private:
  static Matrix as_row(std::span<const double> v) { return Matrix(1, v.size(), Vector(v.begin(), v.end())); }
  static Vector as_vector(const Matrix& m) {
    const auto r = m.row(0);
    return Vector(r.begin(), r.end());
  }
  static void check_width(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
      throw Error(ErrorCode::invalid_input, std::string(what) + ": expected length " + std::to_string(want) +
                                                ", got " + std::to_string(got));
  }

  AutoencoderConfig config_;
  nn::MlpSpec dec_spec_;
  nn::ModelParams dec_;
  std::optional<nn::MlpSpec> enc_spec_;
  nn::ModelParams enc_;
};

/// Builds and initializes every trainable branch from `rng` (encoder first).
inline Autoencoder build(const AutoencoderConfig& config, Rng& rng) {
  Autoencoder a(config);
  if (a.encoder_spec()) a.encoder_params() = nn::init_params(*a.encoder_spec(), rng);
  a.decoder_params() = nn::init_params(a.decoder_spec(), rng);
  return a;
}

/// Removes the time component for the extended kinds; identity otherwise.
inline Vector state_part(std::span<const double> v, Kind kind) {
  if (!is_extended(kind)) return Vector(v.begin(), v.end());
  if (v.empty()) throw Error(ErrorCode::invalid_input, "extended vector is empty");
  return Vector(v.begin() + 1, v.end());
}

/// ||encode(decode(u)) - u|| for every latent sample (absolute value when r = 1).
inline Vector point_projection_deviation(const Autoencoder& a, const std::vector<Vector>& latents) {
  Vector out;
  out.reserve(latents.size());
  for (const auto& u : latents) {
    const Vector back = a.encode(a.decode(u));
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += (back[k] - u[k]) * (back[k] - u[k]);
    out.push_back(std::sqrt(s));
  }
  return out;
}

/// `count` equidistant scalar latents over [min, max] of the encoded columns
/// of `data` (columns are ambient vectors). Only meaningful for r = 1.
inline std::vector<Vector> latent_sample_grid(const Autoencoder& a, const Matrix& data, std::size_t count = 512) {
  if (a.config().r != 1) throw Error(ErrorCode::invalid_input, "latent grid is defined for r = 1 only");
  const Matrix codes = a.encode_batch(linalg::transpose(data));
  double lo = codes(0, 0), hi = codes(0, 0);
  for (std::size_t i = 0; i < codes.rows(); ++i) {
    lo = std::min(lo, codes(i, 0));
    hi = std::max(hi, codes(i, 0));
  }
  std::vector<Vector> grid;
  for (double u : problems::linspace(lo, hi, count)) grid.push_back({u});
  return grid;
}

// Save format: `AE <kind> <scenario> <r> <N>`, then the encoder parameters in
// MLPv1 format when the encoder is trainable, then the decoder parameters.

inline void save(std::ostream& os, const Autoencoder& a) {
  const auto& c = a.config();
  os << "AE " << to_string(c.kind) << ' ' << to_string(c.scenario) << ' ' << c.r << ' ' << c.ambient_dim << '\n';
  if (a.has_trainable_encoder()) nn::save_params(os, a.encoder_params());
  nn::save_params(os, a.decoder_params());
}

inline Autoencoder load(std::istream& is) {
  std::string tag, kind, scenario;
  AutoencoderConfig c;
  if (!(is >> tag >> kind >> scenario >> c.r >> c.ambient_dim) || tag != "AE")
    throw Error(ErrorCode::io, "missing AE header");
  c.kind = parse_kind(kind);
  c.scenario = parse_scenario(scenario);
  Autoencoder a(c);
  if (a.encoder_spec()) a.encoder_params() = nn::load_params(is, *a.encoder_spec());
  a.decoder_params() = nn::load_params(is, a.decoder_spec());
  return a;
}

inline void save_file(const std::string& path, const Autoencoder& a) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  save(os, a);
  if (!os) throw Error(ErrorCode::io, "write to '" + path + "' failed");
}

inline Autoencoder load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io, "cannot open model file '" + path + "'");
  return load(is);
}

}  // namespace tmor::ae
