#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "tmor/nn.hpp"

using namespace tmor::nn;
using tmor::Error;
using tmor::ErrorCode;
using tmor::Rng;

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

void set_values(ModelParams& p, const Vector& v) {
  auto dst = p.values_mut();
  std::copy(v.begin(), v.end(), dst.begin());
}

MlpSpec random_spec(Rng& rng, bool linear) {
  MlpSpec s;
  const std::size_t depth = 2 + tmor::uniform_index(rng, 3);
  for (std::size_t k = 0; k < depth; ++k) s.layer_dims.push_back(1 + tmor::uniform_index(rng, 16));
  if (linear) s.hidden = Activation::identity;
  s.bias = tmor::uniform_index(rng, 4) != 0;
  return s;
}

}  // namespace

TEST(LeakyRelu, Examples) {
  EXPECT_EQ(leaky_relu(0.0, 0.01), 0.0);
  EXPECT_EQ(leaky_relu(2.0, 0.01), 2.0);
  EXPECT_DOUBLE_EQ(leaky_relu(-1.0, 0.01), -0.01);
  EXPECT_EQ(leaky_relu_derivative(0.0), 1.0);
  EXPECT_EQ(leaky_relu_derivative(3.0), 1.0);
  EXPECT_EQ(leaky_relu_derivative(-3.0), 0.01);
  EXPECT_EQ(kDefaultSlope, 0.01);
}

TEST(MlpSpec, ParamCountAndValidation) {
  MlpSpec s{{4, 8, 2}};
  EXPECT_EQ(s.param_count(), 4u * 8 + 8 + 8 * 2 + 2);
  s.bias = false;
  EXPECT_EQ(s.param_count(), 48u);
  EXPECT_EQ(ModelParams(s).size(), 48u);
  EXPECT_EQ(code_of([] { MlpSpec{{3}}.validate(); }), ErrorCode::invalid_input);
  EXPECT_EQ(code_of([] { MlpSpec{{3, 0, 2}}.validate(); }), ErrorCode::invalid_input);
}

TEST(InitParams, DeterministicAndBounded) {
  const MlpSpec s{{4, 8}};
  Rng a(42), b(42);
  const auto pa = init_params(s, a);
  const auto pb = init_params(s, b);
  EXPECT_TRUE(pa == pb);
  ASSERT_EQ(pa.size(), 40u);
  for (double v : pa.values()) EXPECT_LE(std::abs(v), 0.5);
}

TEST(InitParams, UniformMoments) {
  const MlpSpec s{{25, 400}};  // 10^4 weights, bound 0.2
  Rng rng(7);
  const auto p = init_params(s, rng);
  const auto w = p.weights(0);
  ASSERT_EQ(w.size(), 10000u);
  double mean = 0.0, sq = 0.0;
  for (double v : w) {
    mean += v;
    sq += v * v;
  }
  mean /= 1e4;
  sq /= 1e4;
  const double a = 0.2;
  const double var_u = a * a / 3.0;
  // 3 sigma bands for the sample mean and sample second moment
  EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var_u / 1e4));
  const double var_sq = std::pow(a, 4) / 5.0 - var_u * var_u;
  EXPECT_LT(std::abs(sq - var_u), 3.0 * std::sqrt(var_sq / 1e4));
}

TEST(Forward, ZeroNetAndIdentity) {
  const MlpSpec s{{3, 4, 2}};
  const ModelParams zero(s);
  EXPECT_EQ(forward(s, zero, Vector{1, 2, 3}).output, (Vector{0, 0}));

  MlpSpec id{{3, 3}};
  id.hidden = Activation::identity;
  ModelParams p(id);
  set_values(p, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
  EXPECT_EQ(forward(id, p, Vector{1.5, -2, 3}).output, (Vector{1.5, -2, 3}));
}

TEST(Forward, HandExample) {
  // dims 1,2,1: h = lrelu(W1 x + b1), y = W2 h + b2
  const MlpSpec s{{1, 2, 1}};
  ModelParams p(s);
  set_values(p, {0.5, -0.25, 0.1, 0.2, 2.0, -3.0, 0.05});
  // x = 0.8: h = (0.5, 0), y = 2*0.5 - 3*0 + 0.05
  EXPECT_NEAR(forward(s, p, Vector{0.8}).output[0], 1.05, 1e-15);
  // x = 2: h = (1.1, 0.01*(-0.3)), y = 2.2 + 0.009 + 0.05
  EXPECT_NEAR(forward(s, p, Vector{2.0}).output[0], 2.259, 1e-15);
}

TEST(Forward, DimensionMismatch) {
  const MlpSpec s{{3, 2}};
  EXPECT_EQ(code_of([&] { forward(s, ModelParams(s), Vector{1, 2}); }), ErrorCode::invalid_input);
}

TEST(Forward, LinearNetIsLinear) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpSpec s = [&] {
      MlpSpec m = random_spec(rng, true);
      m.bias = false;
      return m;
    }();
    const auto p = init_params(s, rng);
    Vector xv(s.input_dim()), yv(s.input_dim());
    for (auto& v : xv) v = tmor::uniform(rng, -1, 1);
    for (auto& v : yv) v = tmor::uniform(rng, -1, 1);
    const double a = 1.7, b = -0.6;
    Vector comb(s.input_dim());
    for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = a * xv[i] + b * yv[i];
    const Vector fx = forward(s, p, xv).output, fy = forward(s, p, yv).output, fc = forward(s, p, comb).output;
    for (std::size_t i = 0; i < fc.size(); ++i) EXPECT_NEAR(fc[i], a * fx[i] + b * fy[i], 1e-12);
  }
}

TEST(Forward, BatchRowsMatchSingleSamples) {
  Rng rng(13);
  const MlpSpec s{{5, 7, 3}};
  const auto p = init_params(s, rng);
  const Matrix batch = oracle::random_matrix(4, 5, rng);
  const auto cache = forward_batch(s, p, batch);
  for (std::size_t r = 0; r < 4; ++r) {
    const auto row = batch.row(r);
    const Vector single = forward(s, p, row).output;
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(cache.output()(r, k), single[k]);
  }
}

TEST(Backward, ZeroOutputGradient) {
  Rng rng(1);
  const MlpSpec s{{2, 3, 2}};
  const auto p = init_params(s, rng);
  const auto fr = forward(s, p, Vector{0.3, -0.4});
  const auto g = backward(s, p, fr.cache, Vector{0, 0});
  for (double v : g.params) EXPECT_EQ(v, 0.0);
}

TEST(Backward, StaleCacheIsContractViolation) {
  Rng rng(1);
  const MlpSpec s{{2, 3, 2}};
  auto p = init_params(s, rng);
  const auto fr = forward(s, p, Vector{0.3, -0.4});
  p.values_mut()[0] += 1.0;
  EXPECT_EQ(code_of([&] { backward(s, p, fr.cache, Vector{1, 0}); }), ErrorCode::contract_violation);
  const auto other = init_params(s, rng);
  const auto fr2 = forward(s, p, Vector{0.3, -0.4});
  EXPECT_EQ(code_of([&] { backward(s, other, fr2.cache, Vector{1, 0}); }), ErrorCode::contract_violation);
  EXPECT_EQ(code_of([&] { backward(s, p, fr2.cache, Vector{1, 0, 0}); }), ErrorCode::contract_violation);
}

namespace {

struct GradCheck {
  double worst = 0.0;
  std::size_t checked = 0;
};

/// Normwise relative deviation max|a - b| / max|b|. Entrywise ratios blow up
/// on near-zero gradient entries, where the difference quotient is all
/// round-off.
double rel_dev(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, 1e-300);
}

/// Compares reverse-mode parameter and input gradients with central
/// differences, skipping entries whose perturbation crosses a kink.
GradCheck check_gradients(const MlpSpec& s, const ModelParams& p, const Vector& x, const Vector& og, double h) {
  GradCheck out;
  const auto fr = forward(s, p, x);
  const auto g = backward(s, p, fr.cache, og);

  auto loss_params = [&](const Vector& theta) {
    ModelParams q(s);
    set_values(q, theta);
    const Vector y = forward(s, q, x).output;
    double acc = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) acc += y[k] * og[k];
    return acc;
  };
  // Kink proximity: any hidden pre-activation within 1e-3 of zero at the base point.
  auto near_kink = [&](const ModelParams& q, const Vector& input) {
    const auto c = forward(s, q, input).cache;
    for (std::size_t l = 0; l + 1 < s.num_layers(); ++l)
      for (double z : c.pre_activations[l].data())
        if (std::abs(z) < 1e-3) return true;
    return false;
  };
  if (s.hidden == Activation::leaky_relu && near_kink(p, x)) return out;

  const Vector theta(p.values().begin(), p.values().end());
  const Vector fd = oracle::central_differences(loss_params, theta, h);
  out.worst = std::max(out.worst, rel_dev(g.params, fd));
  out.checked += fd.size();
  auto loss_input = [&](const Vector& in) {
    const Vector y = forward(s, p, in).output;
    double acc = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) acc += y[k] * og[k];
    return acc;
  };
  const Vector fdx = oracle::central_differences(loss_input, x, h);
  out.worst = std::max(out.worst, rel_dev(g.input.row(0), fdx));
  out.checked += fdx.size();
  return out;
}

}  // namespace

TEST(Backward, SmallNetMatchesFiniteDifferences) {
  Rng rng(2);
  const MlpSpec s{{2, 3, 2}};
  int done = 0;
  for (int trial = 0; trial < 50 && done < 5; ++trial) {
    const auto p = init_params(s, rng);
    const Vector x{tmor::uniform(rng, -1, 1), tmor::uniform(rng, -1, 1)};
    const Vector og{tmor::uniform(rng, -1, 1), tmor::uniform(rng, -1, 1)};
    const auto r = check_gradients(s, p, x, og, 1e-5);
    if (r.checked == 0) continue;
    ++done;
    EXPECT_LT(r.worst, 1e-6);
  }
  EXPECT_EQ(done, 5);
}

TEST(Backward, RandomNetsMatchFiniteDifferences) {
  Rng rng(19);
  int done = 0;
  for (int trial = 0; trial < 200 && done < 25; ++trial) {
    const MlpSpec s = random_spec(rng, false);
    const auto p = init_params(s, rng);
    Vector x(s.input_dim()), og(s.output_dim());
    for (auto& v : x) v = tmor::uniform(rng, -1, 1);
    for (auto& v : og) v = tmor::uniform(rng, -1, 1);
    const auto r = check_gradients(s, p, x, og, 1e-5);
    if (r.checked == 0) continue;
    ++done;
    EXPECT_LT(r.worst, 1e-6) << "trial " << trial;
  }
  EXPECT_GE(done, 20);
}

TEST(Backward, DeepLinearNetMatchesClosedForm) {
  // y = W3 W2 W1 x; d(g.y)/dW2 = (W3^T g)(W1 x)^T
  Rng rng(4);
  MlpSpec s{{3, 4, 5, 2}};
  s.hidden = Activation::identity;
  s.bias = false;
  const auto p = init_params(s, rng);
  const Vector x{0.3, -0.7, 0.2};
  const Vector og{0.9, -0.4};
  const auto g = backward(s, p, forward(s, p, x).cache, og);

  auto w = [&](std::size_t l) {
    const auto& sl = p.layers()[l];
    return Matrix(sl.out, sl.in, Vector(p.weights(l).begin(), p.weights(l).end()));
  };
  const Matrix xm(3, 1, x), gm(2, 1, og);
  const Matrix w1 = w(0), w2 = w(1), w3 = w(2);
  const Matrix left = tmor::linalg::matmul(tmor::linalg::transpose(w3), gm);  // 5x1
  const Matrix right = tmor::linalg::matmul(w1, xm);                           // 4x1
  const auto& sl = p.layers()[1];
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NEAR(g.params[sl.weight_offset + o * 4 + i], left(o, 0) * right(i, 0), 1e-12);
  // input gradient W1^T W2^T W3^T g
  const Matrix gin = tmor::linalg::matmul(
      tmor::linalg::transpose(w1), tmor::linalg::matmul(tmor::linalg::transpose(w2), left));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g.input(0, i), gin(i, 0), 1e-12);
}

TEST(Backward, BatchGradientIsSumOfSampleGradients) {
  Rng rng(8);
  const MlpSpec s{{4, 6, 3}};
  const auto p = init_params(s, rng);
  const Matrix batch = oracle::random_matrix(3, 4, rng);
  const Matrix og = oracle::random_matrix(3, 3, rng);
  const auto gb = backward_batch(s, p, forward_batch(s, p, batch), og);
  Vector sum(p.size(), 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto g = backward(s, p, forward(s, p, batch.row(r)).cache, og.row(r));
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g.params[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(gb.params[i], sum[i], 1e-13);
}

TEST(Adam, ZeroGradientLeavesParams) {
  Rng rng(5);
  const MlpSpec s{{3, 2}};
  auto p = init_params(s, rng);
  const auto before = p;
  AdamState st(p.size());
  adam_step(p, Vector(p.size(), 0.0), st);
  EXPECT_TRUE(p == before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMagnitude) {
  MlpSpec s{{1, 1}};
  s.bias = false;
  ModelParams p(s);
  AdamState st(1);
  adam_step(p, Vector{1.0}, st);
  EXPECT_NEAR(p.values()[0], -1e-3 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p.values()[0], -0.001, 1e-10);
  for (double v : st.v) EXPECT_GE(v, 0.0);
}

TEST(Adam, DeterministicWithClonedState) {
  Rng rng(6);
  const MlpSpec s{{3, 4, 2}};
  auto p1 = init_params(s, rng);
  AdamState s1(p1.size());
  Vector g(p1.size());
  for (auto& v : g) v = tmor::uniform(rng, -1, 1);
  adam_step(p1, g, s1);
  AdamState s2 = s1;
  auto q1 = p1;
  adam_step(p1, g, s1);
  adam_step(q1, g, s2);
  EXPECT_TRUE(p1 == q1);
  EXPECT_EQ(s1.m, s2.m);
  EXPECT_EQ(s1.v, s2.v);
}

TEST(Adam, NonFiniteGradientIsDivergence) {
  const MlpSpec s{{2, 1}};
  ModelParams p(s);
  AdamState st(p.size());
  Vector g(p.size(), 0.0);
  g[1] = std::numeric_limits<double>::infinity();
  EXPECT_EQ(code_of([&] { adam_step(p, g, st); }), ErrorCode::training_divergence);
  EXPECT_EQ(st.step, 0u);
  for (double v : p.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(code_of([&] { adam_step(p, Vector(1, 0.0), st); }), ErrorCode::invalid_input);
}

TEST(SaveLoad, RoundTripIsBitwise) {
  Rng rng(9);
  for (bool bias : {true, false}) {
    MlpSpec s{{3, 5, 2}};
    s.bias = bias;
    const auto p = init_params(s, rng);
    std::stringstream ss;
    save_params(ss, p);
    const std::string text = ss.str();
    EXPECT_EQ(text.rfind("MLPv1 2\n5 3\n2 5\n", 0), 0u);
    const auto q = load_params(ss, s);
    EXPECT_TRUE(p == q);
    std::stringstream again;
    save_params(again, q);
    EXPECT_EQ(again.str(), text);
  }
}

TEST(SaveLoad, ShapeMismatchAndTruncation) {
  Rng rng(10);
  const MlpSpec s{{3, 5, 2}};
  std::stringstream ss;
  save_params(ss, init_params(s, rng));
  const std::string text = ss.str();
  {
    std::stringstream in(text);
    EXPECT_EQ(code_of([&] { load_params(in, MlpSpec{{3, 4, 2}}); }), ErrorCode::io);
  }
  {
    std::stringstream in(text.substr(0, text.size() / 2));
    EXPECT_EQ(code_of([&] { load_params(in, s); }), ErrorCode::io);
  }
  {
    std::stringstream in("garbage");
    EXPECT_EQ(code_of([&] { load_params(in, s); }), ErrorCode::io);
  }
}
