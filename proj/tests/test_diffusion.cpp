#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "trajdiff/diffusion/sampler.hpp"
#include "trajdiff/diffusion/schedule.hpp"

using namespace trajdiff;
using namespace trajdiff::diffusion;

namespace {

TrajBatch<double> filled(std::size_t b, std::size_t n, double v) { return TrajBatch<double>(b, n, v); }

long double product_oracle(const NoiseSchedule& s, int t) {
  long double p = 1.0L;
  for (int i = 1; i <= t; ++i) p *= 1.0L - static_cast<long double>(s.beta(i));
  return p;
}

}  // namespace

TEST(Schedule, SingleStep) {
  const auto s = build_linear_schedule(1, 0.5, 0.5);
  EXPECT_EQ(s.steps(), 1);
  EXPECT_DOUBLE_EQ(s.beta(1), 0.5);
  EXPECT_DOUBLE_EQ(s.alpha(1), 0.5);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.5);
}

TEST(Schedule, ThreeStepProducts) {
  const auto s = build_linear_schedule(3, 0.1, 0.3);
  EXPECT_NEAR(s.beta(1), 0.1, 1e-15);
  EXPECT_NEAR(s.beta(2), 0.2, 1e-15);
  EXPECT_NEAR(s.beta(3), 0.3, 1e-15);
  EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
  EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
  EXPECT_NEAR(s.alpha_bar(3), 0.504, 1e-15);
}

TEST(Schedule, DefaultScheduleMatchesProductOracle) {
  const auto s = build_linear_schedule(1000, 1e-4, 0.02);
  for (int t : {1, 10, 500, 999, 1000}) {
    EXPECT_NEAR(s.alpha_bar(t), static_cast<double>(product_oracle(s, t)), 1e-14 * s.alpha_bar(t)) << t;
  }
  EXPECT_LT(s.alpha_bar(1000), 1e-4);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), s.alpha(1));
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, InvariantsHold) {
  const auto s = build_linear_schedule(1000, 1e-4, 0.02);
  for (int t = 1; t <= 1000; ++t) {
    EXPECT_EQ(s.alpha(t), 1.0 - s.beta(t));
    EXPECT_GT(s.alpha_bar(t), 0.0);
    EXPECT_LT(s.alpha_bar(t), 1.0);
    if (t > 1) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  }
}

TEST(Schedule, RejectsBadRanges) {
  EXPECT_THROW(build_linear_schedule(0, 1e-4, 0.02), ScheduleError);
  EXPECT_THROW(build_linear_schedule(10, 0.0, 0.02), ScheduleError);
  EXPECT_THROW(build_linear_schedule(10, 0.03, 0.02), ScheduleError);
  EXPECT_THROW(build_linear_schedule(10, 0.1, 1.0), ScheduleError);
  EXPECT_THROW(NoiseSchedule({0.1, 1.5}), ScheduleError);
}

TEST(Schedule, TimestepOutOfRange) {
  const auto s = build_linear_schedule(10, 1e-4, 0.02);
  EXPECT_THROW((void)s.beta(0), ContractError);
  EXPECT_THROW((void)s.alpha_bar(11), ContractError);
}

TEST(ForwardSample, HandExample) {
  const NoiseSchedule s({0.36});
  const auto out = forward_sample(filled(1, 1, 1.0), 1, filled(1, 1, 0.5), s);
  EXPECT_NEAR(out.x.data[0], 0.8 + 0.6 * 0.5, 1e-15);
  EXPECT_NEAR(out.x.data[1], 1.1, 1e-15);
  EXPECT_EQ(out.t, 1);
}

TEST(ForwardSample, ZeroNoiseScalesSignal) {
  const auto s = build_linear_schedule(100, 1e-4, 0.02);
  const auto x0 = filled(2, 3, -0.7);
  const auto out = forward_sample(x0, 40, filled(2, 3, 0.0), s);
  for (double v : out.x.data) EXPECT_DOUBLE_EQ(v, std::sqrt(s.alpha_bar(40)) * -0.7);
}

TEST(ForwardSample, Contracts) {
  const auto s = build_linear_schedule(10, 1e-4, 0.02);
  EXPECT_THROW(forward_sample(filled(1, 2, 0), 1, filled(1, 3, 0), s), ContractError);
  EXPECT_THROW(forward_sample(filled(1, 2, 0), 0, filled(1, 2, 0), s), ContractError);
  EXPECT_THROW(forward_sample(filled(1, 2, 0), 11, filled(1, 2, 0), s), ContractError);
}

TEST(DdpmStep, ZeroPredictionRescales) {
  const auto s = build_linear_schedule(20, 1e-4, 0.2);
  const NoisyState<double> st{filled(1, 2, 0.3), 7};
  const auto out = ddpm_step(st, filled(1, 2, 0.0), s, filled(1, 2, 0.0));
  EXPECT_EQ(out.t, 6);
  for (double v : out.x.data) EXPECT_NEAR(v, 0.3 / std::sqrt(s.alpha(7)), 1e-15);
}

TEST(DdpmStep, HandExample) {
  // alpha_t = 0.9, alpha_bar_t = 0.45, alpha_bar_{t-1} = 0.5
  const NoiseSchedule s({0.5, 0.1});
  ASSERT_NEAR(s.alpha_bar(2), 0.45, 1e-15);
  const NoisyState<double> st{filled(1, 1, 1.0), 2};
  const auto out = ddpm_step(st, filled(1, 1, 0.2), s, filled(1, 1, 0.0));
  EXPECT_NEAR(out.x.data[0], 1.0256657912087117, 1e-14);
  const auto c = ddpm_coefficients(2, s);
  EXPECT_NEAR(c.z, std::sqrt(0.5 * 0.1 / 0.55), 1e-15);
}

TEST(DdpmStep, FirstStepIsDeterministic) {
  const auto s = build_linear_schedule(10, 1e-4, 0.02);
  EXPECT_EQ(ddpm_coefficients(1, s).z, 0.0);
  const NoisyState<double> st{filled(1, 2, 0.4), 1};
  const auto a = ddpm_step(st, filled(1, 2, 0.1), s, filled(1, 2, 0.0));
  const auto b = ddpm_step(st, filled(1, 2, 0.1), s, filled(1, 2, 5.0));
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.t, 0);
}

TEST(DdimStep, DeterministicRescale) {
  const auto s = build_linear_schedule(50, 1e-4, 0.02);
  const NoisyState<double> st{filled(1, 2, 0.9), 30};
  const auto out = ddim_step(st, 25, filled(1, 2, 0.0), 0.0, filled(1, 2, 0.0), s);
  EXPECT_EQ(out.t, 25);
  for (double v : out.x.data) EXPECT_NEAR(v, std::sqrt(s.alpha_bar(25) / s.alpha_bar(30)) * 0.9, 1e-15);
}

TEST(DdimStep, FinalHopReturnsCleanEstimate) {
  const auto s = build_linear_schedule(50, 1e-4, 0.02);
  const NoisyState<double> st{filled(1, 1, 0.7), 12};
  const auto out = ddim_step(st, 0, filled(1, 1, 0.3), 0.0, filled(1, 1, 0.0), s);
  const double ab = s.alpha_bar(12);
  EXPECT_NEAR(out.x.data[0], (0.7 - std::sqrt(1 - ab) * 0.3) / std::sqrt(ab), 1e-14);
}

TEST(DdimStep, SigmaBounds) {
  const auto s = build_linear_schedule(50, 1e-4, 0.02);
  const double limit = std::sqrt(1.0 - s.alpha_bar(10));
  EXPECT_NO_THROW(ddim_coefficients(20, 10, limit, s));
  EXPECT_THROW(ddim_coefficients(20, 10, limit * 1.01, s), SigmaError);
  EXPECT_THROW(ddim_coefficients(20, 10, -0.1, s), SigmaError);
  EXPECT_THROW(ddim_coefficients(20, 20, 0.0, s), ContractError);
  EXPECT_THROW(ddim_coefficients(51, 10, 0.0, s), ContractError);
}

TEST(Sigma, HandExample) {
  const NoiseSchedule s({0.5, 0.1});
  EXPECT_NEAR(sigma_ddpm_equivalent(2, 1, s), 0.30151134457776363, 1e-15);
  EXPECT_NEAR(sigma_ddpm_equivalent(2, 1, s), std::sqrt(0.5 / 0.55) * std::sqrt(0.1), 1e-15);
  EXPECT_EQ(sigma_ddpm_equivalent(1, 0, s), 0.0);
}

TEST(Sigma, DdimWithEquivalentSigmaIsDdpm) {
  const auto s = build_linear_schedule(50, 1e-4, 0.02);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
  for (int t = 1; t <= 50; ++t) {
    const double sigma = sigma_ddpm_equivalent(t, t - 1, s);
    const auto ddim = ddim_coefficients(t, t - 1, sigma, s);
    const auto ddpm = ddpm_coefficients(t, s);
    EXPECT_LE(rel(ddim.x, ddpm.x), 1e-10) << t;
    EXPECT_LE(rel(ddim.eps, ddpm.eps), 1e-10) << t;
    if (t == 1) {
      EXPECT_EQ(ddim.z, 0.0);
      EXPECT_EQ(ddpm.z, 0.0);
    } else {
      EXPECT_LE(rel(ddim.z, ddpm.z), 1e-10) << t;
    }
    EXPECT_NEAR(sigma * sigma, ddpm.z * ddpm.z, 1e-15) << t;
  }
}

TEST(Substeps, Examples) {
  std::vector<int> full(10);
  std::iota(full.begin(), full.end(), 1);
  EXPECT_EQ(make_substep_schedule(10, 10), full);
  EXPECT_EQ(make_substep_schedule(10, 3), (std::vector<int>{2, 6, 10}));
  const auto stride5 = make_substep_schedule(1000, 200);
  ASSERT_EQ(stride5.size(), 200u);
  for (std::size_t i = 0; i < stride5.size(); ++i) EXPECT_EQ(stride5[i], 5 * static_cast<int>(i + 1));
}

TEST(Substeps, Properties) {
  for (int T : {1, 7, 50, 1000}) {
    for (int S = 1; S <= T; S += std::max(1, T / 13)) {
      const auto v = make_substep_schedule(T, S);
      ASSERT_FALSE(v.empty());
      EXPECT_EQ(v.back(), T);
      EXPECT_GE(v.front(), 1);
      for (std::size_t i = 1; i < v.size(); ++i) EXPECT_LT(v[i - 1], v[i]);
    }
  }
  EXPECT_THROW(make_substep_schedule(10, 0), ContractError);
  EXPECT_THROW(make_substep_schedule(10, 11), ContractError);
}

namespace {
struct ZeroPredictor {
  TrajBatch<double> operator()(const TrajBatch<double>& x, std::span<const int>, std::span<const int>) const {
    return TrajBatch<double>(x.batch, x.length);
  }
};
}  // namespace

TEST(Generate, ZeroPredictorTelescopes) {
  const auto s = build_linear_schedule(100, 1e-4, 0.02);
  SamplerConfig sc{100, 20, SigmaMode::kDeterministic, 0, 3, 1};
  const std::size_t n = 5, len = 4;
  std::vector<int> cond(n, 0);
  const auto out = generate<double, int>(ZeroPredictor{}, std::span<const int>(cond), n, len, sc, s, 42);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(stream_seed(42, i));
    TrajBatch<double> xt(1, len);
    fill_normal<double>(rng, std::span<double>(xt.data));
    const auto ts = make_substep_schedule(100, 20);
    std::vector<double> x(xt.data.begin(), xt.data.end());
    for (std::size_t k = ts.size(); k-- > 0;) {
      const int tp = k > 0 ? ts[k - 1] : 0;
      for (double& v : x) v *= std::sqrt(s.alpha_bar(tp) / s.alpha_bar(ts[k]));
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
      EXPECT_NEAR(out.row(i)[k], x[k], 1e-12 * std::abs(x[k]));
      EXPECT_NEAR(out.row(i)[k], xt.data[k] / std::sqrt(s.alpha_bar(100)), 1e-9 * std::abs(x[k]));
    }
  }
}

TEST(Generate, EmptyAndDeterministic) {
  const auto s = build_linear_schedule(50, 1e-4, 0.02);
  SamplerConfig sc{50, 10, SigmaMode::kDdpmEquivalent, 0, 2, 1};
  std::vector<int> none;
  EXPECT_EQ((generate<double, int>(ZeroPredictor{}, std::span<const int>(none), 0, 3, sc, s, 1).batch), 0u);

  auto damp = [](const TrajBatch<double>& x, std::span<const int>, std::span<const int>) {
    TrajBatch<double> e(x.batch, x.length);
    for (std::size_t k = 0; k < x.size(); ++k) e.data[k] = 0.5 * x.data[k];
    return e;
  };
  std::vector<int> cond(7, 0);
  const auto a = generate<double, int>(damp, std::span<const int>(cond), 7, 3, sc, s, 9);
  const auto b = generate<double, int>(damp, std::span<const int>(cond), 7, 3, sc, s, 9);
  EXPECT_EQ(a, b);
  sc.workers = 3;
  EXPECT_EQ((generate<double, int>(damp, std::span<const int>(cond), 7, 3, sc, s, 9)), a);
  const auto c = generate<double, int>(damp, std::span<const int>(cond), 7, 3, sc, s, 10);
  EXPECT_NE(a, c);
}

TEST(Generate, ShapeMismatchIsAnError) {
  const auto s = build_linear_schedule(10, 1e-4, 0.02);
  SamplerConfig sc{10, 5, SigmaMode::kDeterministic, 0, 4, 1};
  std::vector<int> cond(2, 0);
  auto bad = [](const TrajBatch<double>& x, std::span<const int>, std::span<const int>) {
    return TrajBatch<double>(x.batch, x.length + 1);
  };
  EXPECT_THROW((generate<double, int>(bad, std::span<const int>(cond), 2, 3, sc, s, 0)), ContractError);
  EXPECT_THROW((generate<double, int>(ZeroPredictor{}, std::span<const int>(cond), 3, 3, sc, s, 0)), ContractError);
}
