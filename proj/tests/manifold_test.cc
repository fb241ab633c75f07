#include "chinf/manifold.h"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "chinf/error.h"

namespace chinf {
namespace {

ControlSystem allen_cahn(int N, GainLevel gamma) {
  AllenCahnConfig cfg;
  cfg.N = N;
  cfg.gamma = gamma;
  return with_alpha_fraction(build_allen_cahn(cfg), 0.5, gamma);
}

ControlSystem linear_benchmark() {
  Matrix A(3, 3);
  A << -1.0, 2.0, 0.0, 0.0, 0.5, 1.0, 0.3, 0.0, -2.0;
  Matrix B(3, 2);
  B << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
  const Matrix I = Matrix::Identity(3, 3);
  ControlSystem sys = build_linear_system(
      "linear_benchmark", A, B, I, {I, Matrix::Identity(2, 2), I},
      GainLevel::finite(3.0), 0.0, 1.0);
  return with_alpha_fraction(sys, 0.5, sys.gamma());
}

TEST(PickHorizonTest, Examples) {
  EXPECT_NEAR(pick_horizon(0.277, 1e-5), 41.0, 1.0);
  EXPECT_DOUBLE_EQ(pick_horizon(0.277, 1e-5), 41.6);
  EXPECT_NEAR(pick_horizon(0.5, 1e-5), 23.3, 0.5);
  EXPECT_DOUBLE_EQ(pick_horizon(1.0, std::exp(-10.0)), 10.0);
  EXPECT_LE(std::exp(-0.277 * pick_horizon(0.277, 1e-5)), 1e-5);
  try {
    pick_horizon(0.0, 1e-5);
    FAIL() << "expected not-hyperbolic";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotHyperbolic);
  }
  EXPECT_THROW(pick_horizon(1.0, 1.0), Error);
}

TEST(LocalBvpTest, LinearSystemIsExactInOneIteration) {
  const ControlSystem sys = linear_benchmark();
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const double T = pick_horizon(lc.cert.nominal_margin, 1e-5);
  const Vector x0 = sphere_point(3, 0.8, 7, 0);
  const LocalSolution sol = solve_local_bvp(sys, lc.transform, x0, T);
  EXPECT_EQ(sol.iterations, 1);
  EXPECT_TRUE(sol.converged);
  EXPECT_EQ(sol.t.front(), 0.0);
  EXPECT_EQ(sol.t.back(), T);
  double gap = 0.0;
  for (std::size_t k = 0; k < sol.t.size(); ++k) {
    gap = std::max(gap, (sol.p[k] - lc.cert.P * sol.x[k]).norm());
    if (k > 0) {
      ASSERT_GT(sol.t[k], sol.t[k - 1]);
    }
  }
  EXPECT_LE(gap, 1e-8);

  // Linear flow oracle: x(t) = e^{(A + R̃P)t}x₀.
  const Matrix acl = lc.transform.Bmat;
  for (std::size_t k : {std::size_t{0}, sol.t.size() / 7, sol.t.size() / 2}) {
    const Vector expected = (acl * sol.t[k]).exp() * x0;
    EXPECT_LE((sol.x[k] - expected).norm(), 1e-10);
  }

  const auto V_ode =
      recover_value(sys, lc.cert.P, sol.t, sol.x, sol.p, ValueMethod::kOde);
  const auto V_alg = recover_value(sys, lc.cert.P, sol.t, sol.x, sol.p,
                                   ValueMethod::kAlgebraic);
  double worst = 0.0;
  for (std::size_t k = 0; k < sol.t.size(); ++k) {
    const double quad = 0.5 * sol.x[k].dot(lc.cert.P * sol.x[k]);
    const double scale = std::max(0.5 * x0.dot(lc.cert.P * x0), 1e-300);
    worst = std::max({worst, std::abs(V_ode[k] - quad) / scale,
                      std::abs(V_alg[k] - quad) / scale});
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(LocalBvpTest, ZeroInitialPointGivesZeroTrajectory) {
  const ControlSystem sys = allen_cahn(11, GainLevel::finite(1.2));
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  const LocalSolution sol =
      solve_local_bvp(sys, lc.transform, Vector::Zero(sys.n()), 10.0);
  for (std::size_t k = 0; k < sol.t.size(); ++k) {
    EXPECT_EQ(sol.x[k].norm(), 0.0);
    EXPECT_EQ(sol.p[k].norm(), 0.0);
  }
  const auto V =
      recover_value(sys, lc.cert.P, sol.t, sol.x, sol.p, ValueMethod::kOde);
  const auto Va =
      recover_value(sys, lc.cert.P, sol.t, sol.x, sol.p, ValueMethod::kAlgebraic);
  for (std::size_t k = 0; k < V.size(); ++k) {
    EXPECT_EQ(V[k], 0.0);
    EXPECT_EQ(Va[k], 0.0);
  }
}

TEST(LocalBvpTest, DivergenceIsReported) {
  const ControlSystem sys = allen_cahn(11, GainLevel::finite(1.2));
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  BvpOptions opts;
  opts.max_iter = 2;
  try {
    solve_local_bvp(sys, lc.transform, sphere_point(sys.n(), 0.8, 1, 0), 41.6,
                    opts);
    FAIL() << "expected bvp-diverged";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBvpDiverged);
  }
  opts.max_iter = 100;
  opts.blowup_cap = 1e-3;
  EXPECT_THROW(solve_local_bvp(sys, lc.transform,
                               sphere_point(sys.n(), 0.8, 1, 0), 41.6, opts),
               Error);
}

TEST(RecoverValueTest, AlgebraicNeedsDiscount) {
  ScalarLqConfig cfg;
  const ControlSystem sys = build_scalar_lq(cfg);
  const std::vector<double> t{0.0, 1.0};
  const std::vector<Vector> z(2, Vector::Zero(1));
  try {
    recover_value(sys, Matrix::Identity(1, 1), t, z, z, ValueMethod::kAlgebraic);
    FAIL() << "expected method-unavailable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMethodUnavailable);
  }
}

TEST(ExtendBackwardTest, ZeroSpanIsEmpty) {
  const ControlSystem sys = linear_benchmark();
  const TrajectoryPoint head{0.0, Vector::Ones(3), Vector::Ones(3), 1.0};
  EXPECT_TRUE(extend_backward(sys, head, 0.0).empty());
}

TEST(ExtendBackwardTest, LinearFlowMatchesMatrixExponential) {
  const ControlSystem sys = linear_benchmark();
  const Linearization lin = linearize(sys);
  const Matrix Hc = hamiltonian_matrix(lin, sys.alpha(), sys.gamma(),
                                       HamiltonianForm::kCharacteristic);
  Vector z0(6);
  z0 << 0.3, -0.2, 0.5, 0.1, 0.4, -0.3;
  const TrajectoryPoint head{0.0, z0.head(3), z0.tail(3), 0.0};
  ExtensionOptions opts;
  opts.integrator_tol = 1e-10;
  const auto pts = extend_backward(sys, head, -0.5, opts);
  ASSERT_EQ(pts.size(), 16u);
  EXPECT_DOUBLE_EQ(pts.front().t, -0.5);
  EXPECT_LT(pts.back().t, 0.0);
  for (const auto& pt : pts) {
    const Vector expected = (Hc * pt.t).exp() * z0;
    Vector got(6);
    got << pt.x, pt.p;
    EXPECT_LE((got - expected).norm(), 1e-8 * (1.0 + expected.norm()));
  }
}

TEST(ExtendBackwardTest, DomainBoxRejects) {
  const ControlSystem sys = linear_benchmark();
  const TrajectoryPoint head{0.0, Vector::Ones(3), Vector::Ones(3), 0.0};
  ExtensionOptions opts;
  opts.domain_box = 1.0;
  try {
    extend_backward(sys, head, -2.0, opts);
    FAIL() << "expected stiff-extension";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStiffExtension);
  }
}

class AllenCahnTrajectoryTest : public ::testing::TestWithParam<bool> {};

TEST_P(AllenCahnTrajectoryTest, GatesHoldOnAcceptedTrajectories) {
  const GainLevel gamma =
      GetParam() ? GainLevel::finite(1.2) : GainLevel::infinite();
  const ControlSystem sys = allen_cahn(11, gamma);
  const LinearCertificate lc = analyze_linear(sys, gamma);
  GenerationConfig cfg;
  cfg.count = 6;
  cfg.seed = 11;
  cfg.keep_trajectories = true;
  const GenerationResult res = generate_dataset(sys, lc, cfg);
  EXPECT_EQ(res.rejected, 0);
  ASSERT_EQ(res.trajectories.size(), 6u);
  EXPECT_EQ(res.dataset.size(), 6u * 26u);
  for (const Trajectory& traj : res.trajectories) {
    EXPECT_LE(traj.h_residual_max, 1e-5);
    double vmax = 0.0;
    for (const auto& pt : traj.points) vmax = std::max(vmax, std::abs(pt.V));
    EXPECT_LE(traj.value_discrepancy, 1e-5 * (1.0 + vmax));
    const TrajectoryPoint& first = traj.points[traj.origin_index];
    const TrajectoryPoint& last = traj.points.back();
    EXPECT_EQ(first.t, 0.0);
    EXPECT_DOUBLE_EQ(traj.points.front().t, cfg.T_minus);
    EXPECT_LE(last.x.norm(), 1e-3 * first.x.norm());
    EXPECT_GT(traj.tail_constant, 0.0);
    for (std::size_t k = 1; k < traj.points.size(); ++k) {
      ASSERT_GT(traj.points[k].t, traj.points[k - 1].t);
    }
    // Near the origin the data is the graph of p ≈ P·x.
    for (const auto& pt : traj.points) {
      if (pt.x.norm() <= 0.1 * cfg.radius && pt.x.norm() > 0.0) {
        EXPECT_LE((pt.p - lc.cert.P * pt.x).norm(), 0.2 * pt.x.norm());
      }
    }
  }
  for (const Sample& s : res.dataset.samples) {
    EXPECT_TRUE(s.x.allFinite());
    EXPECT_TRUE(s.p.allFinite());
  }
}

INSTANTIATE_TEST_SUITE_P(BothGains, AllenCahnTrajectoryTest,
                         ::testing::Values(true, false));

TEST(GenerateDatasetTest, EmptyDeterministicAndRoundTrip) {
  const ControlSystem sys = allen_cahn(11, GainLevel::finite(1.2));
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  GenerationConfig cfg;
  cfg.count = 0;
  EXPECT_TRUE(generate_dataset(sys, lc, cfg).dataset.empty());

  cfg.count = 4;
  cfg.seed = 5;
  cfg.threads = 1;
  const Dataset a = generate_dataset(sys, lc, cfg).dataset;
  cfg.threads = 3;
  const Dataset b = generate_dataset(sys, lc, cfg).dataset;
  std::ostringstream sa, sb;
  write_dataset_jsonl(a, sa);
  write_dataset_jsonl(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.size(), 4u * 26u);

  std::istringstream in(sa.str());
  const Dataset c = read_dataset_jsonl(in);
  ASSERT_EQ(c.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(c.samples[i].traj, a.samples[i].traj);
    EXPECT_EQ(c.samples[i].t, a.samples[i].t);
    EXPECT_EQ(c.samples[i].x, a.samples[i].x);
    EXPECT_EQ(c.samples[i].p, a.samples[i].p);
    EXPECT_EQ(c.samples[i].V, a.samples[i].V);
  }
  EXPECT_EQ(c.meta.seed, 5u);
  EXPECT_EQ(c.meta.accepted, 4);

  // Each trajectory contributes 4 backward and 22 forward samples.
  int neg = 0;
  for (const Sample& s : a.samples) neg += s.t < 0.0;
  EXPECT_EQ(neg, 16);

  cfg.seed = 6;
  const Dataset d = generate_dataset(sys, lc, cfg).dataset;
  EXPECT_NE(d.samples[0].x, a.samples[0].x);
}

TEST(GenerateDatasetTest, RejectionsAreCountedAndGated) {
  const ControlSystem sys = allen_cahn(11, GainLevel::finite(1.2));
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  GenerationConfig cfg;
  cfg.count = 3;
  cfg.residual_tol = 1e-16;
  try {
    generate_dataset(sys, lc, cfg);
    FAIL() << "expected generation-failed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGenerationFailed);
  }
}

TEST(DatasetIoTest, MalformedLinesNameTheField) {
  std::istringstream in("{\"meta\":{}}\n{\"traj\":1,\"t\":0.5,\"x\":[1],\"V\":2}\n");
  try {
    read_dataset_jsonl(in);
    FAIL() << "expected io error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
    EXPECT_NE(std::string(e.what()).find("'p'"), std::string::npos);
  }
}

TEST(SpherePointTest, RadiusAndIndependence) {
  const Vector a = sphere_point(10, 0.8, 42, 3);
  EXPECT_NEAR(a.norm(), 0.8, 1e-15);
  EXPECT_EQ(a, sphere_point(10, 0.8, 42, 3));
  EXPECT_NE(a, sphere_point(10, 0.8, 42, 4));
}

TEST(AllenCahnFullScaleTest, SingleTrajectoryMeetsResidualGate) {
  const ControlSystem sys = allen_cahn(31, GainLevel::finite(1.2));
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  GenerationConfig cfg;
  const double T = pick_horizon(lc.cert.nominal_margin, cfg.tail_tol);
  const Trajectory traj =
      generate_trajectory(sys, lc, sphere_point(sys.n(), 0.8, 1, 0), T, cfg);
  EXPECT_TRUE(traj.converged);
  EXPECT_LE(traj.h_residual_max, 1e-5);
}

}  // namespace
}  // namespace chinf
