#include "chinf/closedloop.h"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "chinf/error.h"
#include "chinf/linear_analysis.h"

namespace chinf {
namespace {

// γ = ∞ keeps A + R̃P equal to the d ≡ 0 closed loop.
ControlSystem linear_plant() {
  Matrix A(3, 3);
  A << -1.0, 2.0, 0.0, 0.0, 0.5, 1.0, 0.3, 0.0, -2.0;
  Matrix B(3, 2);
  B << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
  const Matrix I = Matrix::Identity(3, 3);
  ControlSystem sys = build_linear_system(
      "linear", A, B, I, {I, Matrix::Identity(2, 2), I}, GainLevel::infinite(),
      0.0, 1.0);
  return with_alpha_fraction(sys, 0.5, sys.gamma());
}

ControlSystem scalar(double a, GainLevel gamma = GainLevel::infinite()) {
  ScalarLqConfig cfg;
  cfg.a = a;
  cfg.gamma = gamma;
  return build_scalar_lq(cfg);
}

Controller zero_controller(int m) {
  return [m](const Vector&) { return Vector::Zero(m); };
}

TEST(SimulateTest, ZeroStateStaysAtRest) {
  const ControlSystem sys = linear_plant();
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const SimulationResult sim =
      simulate(sys, linear_controller(lc.cert.P, sys), zero_disturbance(3),
               Vector::Zero(3), 5.0);
  ASSERT_EQ(sim.t.size(), 500u);
  EXPECT_EQ(sim.t.front(), 0.0);
  EXPECT_EQ(sim.t.back(), 5.0);
  for (std::size_t j = 0; j < sim.t.size(); ++j) {
    EXPECT_EQ(sim.x[j], Vector::Zero(3));
    EXPECT_EQ(sim.I_z[j], 0.0);
    EXPECT_EQ(sim.I_d[j], 0.0);
  }
}

TEST(SimulateTest, LinearFlowMatchesMatrixExponential) {
  const ControlSystem sys = linear_plant();
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  Vector x0(3);
  x0 << 0.4, -0.3, 0.5;
  const SimulationResult sim =
      simulate(sys, linear_controller(lc.cert.P, sys), zero_disturbance(3), x0,
               10.0);
  const Matrix acl = lc.transform.Bmat;
  double worst = 0.0;
  for (std::size_t j = 0; j < sim.t.size(); ++j) {
    worst = std::max(worst, (sim.x[j] - (acl * sim.t[j]).exp() * x0).norm());
    if (j > 0) {
      EXPECT_GE(sim.I_z[j], sim.I_z[j - 1]);
      EXPECT_GE(sim.I_d[j], sim.I_d[j - 1]);
    }
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(SimulateTest, EscapeRaisesWithPartialTrace) {
  const ControlSystem sys = scalar(1.0);
  try {
    simulate(sys, zero_controller(1), zero_disturbance(1), Vector::Constant(1, 0.5),
             20.0);
    FAIL() << "expected instability";
  } catch (const InstabilityDetected& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInstabilityDetected);
    ASSERT_FALSE(e.partial().t.empty());
    EXPECT_LT(e.partial().t.back(), 20.0);
    EXPECT_EQ(e.partial().t.size(), e.partial().x.size());
  }
}

TEST(SimulateTest, QuadratureConsistency) {
  const ControlSystem sys = linear_plant().with_gamma(GainLevel::finite(3.0));
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const auto d = uniform_disturbance(3, [](double t) { return 0.3 * std::sin(t); });
  Vector x0(3);
  x0 << 0.1, 0.2, -0.1;
  SimulationOptions coarse;
  SimulationOptions fine;
  fine.integrator_tol = 0.5 * coarse.integrator_tol;
  const double T = gain_horizon(sys.alpha());
  const auto a = simulate(sys, linear_controller(lc.cert.P, sys), d, x0, T, coarse);
  const auto b = simulate(sys, linear_controller(lc.cert.P, sys), d, x0, T, fine);
  EXPECT_LE(std::abs(a.I_z.back() - b.I_z.back()), 1e-6 * b.I_z.back());
  EXPECT_LE(std::abs(a.I_d.back() - b.I_d.back()), 1e-6 * b.I_d.back());
}

TEST(SimulateTest, ControllersSeeTheSameDisturbance) {
  const ControlSystem sys = linear_plant();
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const auto d = uniform_disturbance(3, [](double t) { return 0.3 * std::sin(t); });
  const auto a = simulate(sys, linear_controller(lc.cert.P, sys), d,
                          Vector::Zero(3), 8.0);
  const auto b = simulate(sys, linear_controller(2.0 * lc.cert.P, sys), d,
                          Vector::Zero(3), 8.0);
  ASSERT_EQ(a.t, b.t);
  for (std::size_t j = 0; j < a.t.size(); ++j) EXPECT_EQ(a.d[j], b.d[j]);
  EXPECT_NE(a.x.back(), b.x.back());
}

TEST(GainTest, Arithmetic) {
  SimulationResult sim;
  sim.t = {0.0, 1.0};
  sim.I_z = {0.0, 1.0};
  sim.I_d = {0.0, 1.0};
  sim.alpha = 0.5;
  const GainCertificate c = discounted_gain(sim, 1.2);
  EXPECT_EQ(c.ratio, 1.0);
  EXPECT_TRUE(c.pass);
  EXPECT_FALSE(c.vacuous);
  EXPECT_EQ(c.offset_ratio, 1.0);
  EXPECT_DOUBLE_EQ(c.truncation_factor, std::exp(-0.5));

  sim.I_z.back() = 1.45;
  EXPECT_FALSE(discounted_gain(sim, 1.2).pass);
  EXPECT_TRUE(discounted_gain(sim, 1.3).pass);
  EXPECT_DOUBLE_EQ(discounted_gain(sim, 1.3, 0.25).offset_ratio, 1.2);
}

TEST(GainTest, VacuousWhenNoDisturbance) {
  const ControlSystem sys = scalar(-1.0);
  const auto sim = simulate(sys, zero_controller(1), zero_disturbance(1),
                            Vector::Zero(1), 3.0);
  const GainCertificate c = discounted_gain(sim, 1.2);
  EXPECT_TRUE(c.vacuous);
  EXPECT_TRUE(c.pass);
  EXPECT_TRUE(std::isnan(c.ratio));
  std::ostringstream os;
  write_gain_json(c, os);
  EXPECT_NE(os.str().find("\"ratio\": null"), std::string::npos);
  EXPECT_NE(os.str().find("\"vacuous\": true"), std::string::npos);
}

TEST(GainTest, PassMatchesThresholdProperty) {
  for (double iz : {0.1, 0.9, 1.44, 1.5, 3.0}) {
    SimulationResult sim;
    sim.t = {0.0, 2.0};
    sim.I_z = {0.0, iz};
    sim.I_d = {0.0, 1.0};
    for (double g : {0.5, 1.0, 1.2, 2.0}) {
      const auto c = discounted_gain(sim, g);
      EXPECT_EQ(c.pass, c.ratio <= g * g);
    }
  }
}

TEST(GainTest, Horizon) {
  EXPECT_DOUBLE_EQ(gain_horizon(0.5), std::log(1e6) / 0.5);
  EXPECT_LE(std::exp(-0.3 * gain_horizon(0.3)), 1e-6 * (1 + 1e-12));
  EXPECT_THROW(gain_horizon(0.0), Error);
}

TEST(DecayTest, ScalarClosedLoopRate) {
  const ControlSystem sys = scalar(-1.0);
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const auto sim = simulate(sys, linear_controller(lc.cert.P, sys),
                            zero_disturbance(1), Vector::Constant(1, 1.0), 10.0);
  const DecayFit fit = decay_rate(sim);
  EXPECT_FALSE(fit.trivially_stable);
  EXPECT_NEAR(fit.rate, -std::sqrt(2.0), 0.05 * std::sqrt(2.0));
  EXPECT_LE(fit.final_ratio, 1e-3);
}

// e^{-3t} reaches integrator noise long before T/2; the fit must ignore it.
TEST(DecayTest, FitIgnoresIntegratorNoiseTail) {
  const ControlSystem sys = scalar(-3.0);
  const auto sim = simulate(sys, zero_controller(1), zero_disturbance(1),
                            Vector::Constant(1, 1.0), 20.0);
  const DecayFit fit = decay_rate(sim);
  EXPECT_NEAR(fit.rate, -3.0, 0.05 * 3.0);
}

TEST(DecayTest, ZeroStateIsTriviallyStable) {
  const ControlSystem sys = scalar(-1.0);
  const auto sim = simulate(sys, zero_controller(1), zero_disturbance(1),
                            Vector::Zero(1), 1.0);
  const DecayFit fit = decay_rate(sim);
  EXPECT_TRUE(fit.trivially_stable);
  EXPECT_TRUE(std::isnan(fit.rate));
}

TEST(DecayTest, GrowthIsAViolation) {
  const ControlSystem sys = scalar(0.5);
  const auto sim = simulate(sys, zero_controller(1), zero_disturbance(1),
                            Vector::Constant(1, 0.1), 2.0);
  try {
    decay_rate(sim);
    FAIL() << "expected decay violation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDecayViolation);
  }
}

TEST(TrackTest, ZeroReferenceIsRegulation) {
  const ControlSystem sys = linear_plant();
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const Controller u = linear_controller(lc.cert.P, sys);
  Vector x0(3);
  x0 << 0.3, 0.1, -0.2;
  const TrackingResult tr =
      track(sys, u, [](int, double) { return 0.0; }, x0, 2.0);
  ASSERT_EQ(tr.t.size(), 1001u);
  SimulationOptions so;
  so.output_points = 1001;
  const auto sim = simulate(sys, u, zero_disturbance(3), x0, 2.0, so);
  for (std::size_t j = 0; j < tr.t.size(); ++j) {
    EXPECT_NEAR(tr.t[j], sim.t[j], 1e-12);
    EXPECT_LE((tr.X[j] - sim.x[j]).norm(), 1e-8);
    EXPECT_EQ(tr.error[j], tr.X[j].norm());
  }
  for (double w : tr.w_sup) EXPECT_EQ(w, 0.0);
}

TEST(TrackTest, ConstantReferenceHasNoIncrement) {
  const ControlSystem sys = linear_plant();
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const Controller u = linear_controller(lc.cert.P, sys);
  const Reference r = [](int i, double) { return 0.1 * (i + 1); };
  for (TrackMode mode : {TrackMode::kLive, TrackMode::kHeld}) {
    TrackingOptions opts;
    opts.mode = mode;
    const TrackingResult tr = track(sys, u, r, Vector::Zero(3), 1.0, opts);
    EXPECT_EQ(tr.w_sup.size(), 500u);
    for (double w : tr.w_sup) EXPECT_EQ(w, 0.0);
  }
}

TEST(TrackTest, SinusoidalReferenceIncrementIsBounded) {
  const ControlSystem sys = linear_plant();
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const Controller u = linear_controller(lc.cert.P, sys);
  const Reference r = [](int, double t) { return std::sin(t); };
  TrackingOptions live;
  live.error_after = 1.0;
  const TrackingResult a = track(sys, u, r, Vector::Zero(3), 3.0, live);
  for (std::size_t k = 0; k < a.w_sup.size(); ++k) {
    // |sin t − sin t_k| ≤ s₀ per channel.
    EXPECT_LE(a.w_sup[k], std::sqrt(3.0) / 500.0 + 1e-15);
  }
  // The regulator keeps the relative state at O(s₀).
  EXPECT_LE(a.max_error_after, 0.05);
}

TEST(TrackTest, RequiresMatchingDisturbanceChannels) {
  Matrix A = -Matrix::Identity(2, 2);
  Matrix B = Matrix::Identity(2, 2);
  Matrix D(2, 1);
  D << 1.0, 0.0;
  const ControlSystem sys = build_linear_system(
      "narrow", A, B, D,
      {Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(1, 1)},
      GainLevel::infinite(), 0.0, 1.0);
  try {
    track(sys, zero_controller(2), [](int, double) { return 0.0; },
          Vector::Zero(2), 1.0);
    FAIL() << "expected invalid argument";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(DissipationTest, RestingStateHasNoExcess) {
  const ControlSystem sys = linear_plant();
  const ApproximatorParams theta = init_params(3, {8}, 1);
  const auto sim = simulate(sys, nn_controller(theta, sys), zero_disturbance(3),
                            Vector::Zero(3), 2.0);
  const DissipationAudit a = dissipation_audit(sys, theta, sim, 3.0, 0.1);
  EXPECT_EQ(a.max_excess, 0.0);
  EXPECT_EQ(a.state_energy, 0.0);
  EXPECT_EQ(a.slack_constant, 0.0);
}

TEST(DissipationTest, ExcessScalesWithStateEnergy) {
  const ControlSystem sys = linear_plant();
  const ApproximatorParams theta = init_params(3, {8}, 1);
  Vector x0(3);
  x0 << 0.2, -0.1, 0.1;
  const auto sim = simulate(sys, nn_controller(theta, sys), zero_disturbance(3),
                            x0, 4.0);
  const DissipationAudit a = dissipation_audit(sys, theta, sim, 3.0, 0.5);
  EXPECT_GE(a.max_excess, 0.0);
  EXPECT_GT(a.state_energy, 0.0);
  EXPECT_DOUBLE_EQ(a.slack_constant,
                   a.max_excess / (0.25 * a.state_energy));
}

TEST(TraceCsvTest, HeaderAndRows) {
  const ControlSystem sys = scalar(-1.0);
  SimulationOptions so;
  so.output_points = 3;
  const auto sim = simulate(
      sys, zero_controller(1),
      uniform_disturbance(1, [](double) { return 1.0; }), Vector::Zero(1), 1.0, so);
  std::ostringstream os;
  write_trace_csv(sim, os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x_1,u_1,d_1,I_z,I_d");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

}  // namespace
}  // namespace chinf
