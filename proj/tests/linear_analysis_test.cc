#include "chinf/linear_analysis.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "chinf/error.h"

namespace chinf {
namespace {

// Positive root of c + b·P + a·P² = 0 with a < 0, c > 0.
double positive_root(double a, double b, double c) {
  return (-b - std::sqrt(b * b - 4 * a * c)) / (2 * a);
}

ControlSystem scalar(double gamma_value, double alpha) {
  ScalarLqConfig cfg;
  cfg.gamma = std::isinf(gamma_value) ? GainLevel::infinite()
                                      : GainLevel::finite(gamma_value);
  return build_scalar_lq(cfg).with_alpha(alpha);
}

ControlSystem allen_cahn(int N, GainLevel gamma) {
  AllenCahnConfig cfg;
  cfg.N = N;
  cfg.sigma = 0.1;
  cfg.gamma = gamma;
  return build_allen_cahn(cfg);
}

Matrix random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> normal;
  Matrix M(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) M(i, j) = normal(rng);
  return M;
}

TEST(LinearizeTest, AllenCahnAndScalar) {
  const ControlSystem sys = allen_cahn(9, GainLevel::finite(1.2));
  const Linearization lin = linearize(sys);
  const Matrix expected =
      0.1 * dirichlet_laplacian(9) + Matrix::Identity(8, 8);
  EXPECT_TRUE(lin.A.isApprox(expected));
  EXPECT_TRUE(lin.B.isIdentity());
  EXPECT_TRUE(lin.D.isIdentity());
  EXPECT_TRUE(lin.R_tilde.isApprox(lin.R_tilde.transpose()));

  const Linearization s = linearize(scalar(INFINITY, 0.0));
  EXPECT_EQ(s.A(0, 0), -1.0);
  EXPECT_EQ(s.B(0, 0), 1.0);
  EXPECT_EQ(s.R_tilde(0, 0), -0.5);
}

TEST(HamiltonianMatrixTest, FormsDifferByHalfAlphaShift) {
  const Linearization lin = linearize(scalar(INFINITY, 0.0));
  const Matrix H0 =
      hamiltonian_matrix(lin, 0.0, lin.gamma, HamiltonianForm::kCharacteristic);
  Matrix expected(2, 2);
  expected << -1.0, -0.5, -2.0, 1.0;
  EXPECT_TRUE(H0.isApprox(expected));
  EXPECT_TRUE(H0.isApprox(hamiltonian_matrix(lin, 0.0, lin.gamma,
                                             HamiltonianForm::kSymmetric)));

  const Linearization ac = linearize(allen_cahn(7, GainLevel::finite(1.3)));
  const double alpha = 0.37;
  const Matrix diff =
      hamiltonian_matrix(ac, alpha, ac.gamma, HamiltonianForm::kCharacteristic) -
      hamiltonian_matrix(ac, alpha, ac.gamma, HamiltonianForm::kSymmetric);
  EXPECT_LT((diff - 0.5 * alpha * Matrix::Identity(12, 12)).norm(), 1e-15);
}

TEST(SpectralDistanceTest, Examples) {
  Matrix H(2, 2);
  H << -1.0, -0.5, -2.0, 1.0;
  auto sd = stable_spectral_distance(H);
  EXPECT_NEAR(sd.dist, std::sqrt(2.0), 1e-12);
  EXPECT_TRUE(sd.hyperbolic);

  Matrix D = Vector((Vector(2) << -3.0, 3.0).finished()).asDiagonal();
  sd = stable_spectral_distance(D);
  EXPECT_DOUBLE_EQ(sd.dist, 3.0);
  EXPECT_TRUE(sd.hyperbolic);

  try {
    stable_spectral_distance(Matrix::Zero(2, 2));
    FAIL() << "expected degenerate-spectrum";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateSpectrum);
  }
  EXPECT_THROW(stable_spectral_distance(Matrix::Identity(3, 3)), Error);
}

TEST(AlphaBarTest, ScalarAndAllenCahn) {
  EXPECT_NEAR(alpha_bar(linearize(scalar(INFINITY, 0.0)), GainLevel::infinite()),
              std::sqrt(2.0), 1e-12);

  const Linearization case1 = linearize(allen_cahn(31, GainLevel::finite(1.2)));
  EXPECT_NEAR(alpha_bar(case1, case1.gamma), 0.553, 0.005);
  const Linearization case2 = linearize(allen_cahn(31, GainLevel::infinite()));
  EXPECT_NEAR(alpha_bar(case2, case2.gamma), 1.00, 0.01);
  // The HJB convention for H₀ ignores the working γ.
  EXPECT_NEAR(alpha_bar(case1, GainLevel::infinite()),
              alpha_bar(case2, GainLevel::infinite()), 1e-12);
}

TEST(AlphaBarTest, NonHyperbolicH0ViolatesC1) {
  // Rotation drift with D = B and γ = 1 cancels R̃ entirely.
  Matrix A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  const Matrix I = Matrix::Identity(2, 2);
  const ControlSystem sys = build_linear_system(
      "rotation", A, I, I, {1e-3 * I, I, I}, GainLevel::finite(1.0),
      0.0, 1.0);
  const Linearization lin = linearize(sys);
  EXPECT_LT(lin.R_tilde.norm(), 1e-15);
  // With R̃ = 0 the spectrum is σ(A) ∪ σ(−Aᵀ) = {±i}.
  try {
    alpha_bar(lin, lin.gamma);
    FAIL() << "expected condition-C1-violated";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConditionC1Violated);
  }
}

struct ScalarGareCase {
  double gamma;
  double alpha;
};

class ScalarGareTest : public ::testing::TestWithParam<ScalarGareCase> {};

TEST_P(ScalarGareTest, MatchesQuadraticRoot) {
  const auto [gamma, alpha] = GetParam();
  const ControlSystem sys = scalar(gamma, alpha);
  const Linearization lin = linearize(sys);
  const double r = lin.R_tilde(0, 0);
  // 2q + (2a − α)P + r·P² = 0 with a = −1, q = 1.
  const double expected = positive_root(r, -2.0 - alpha, 2.0);
  const auto cert = solve_gare(lin, alpha, sys.gamma());
  EXPECT_NEAR(cert.P(0, 0), expected, 1e-10);
  EXPECT_LE(cert.gare_residual, 1e-12);
  ASSERT_EQ(cert.closedloop_spectrum.size(), 1u);
  EXPECT_NEAR(cert.closedloop_spectrum[0].real(), -1.0 + r * expected, 1e-10);
}

INSTANTIATE_TEST_SUITE_P(ClosedForm, ScalarGareTest,
                         ::testing::Values(ScalarGareCase{INFINITY, 0.0},
                                           ScalarGareCase{INFINITY, 1.0},
                                           ScalarGareCase{2.0, 0.0}));

TEST(ScalarGareTest, FrozenValues) {
  auto cert = solve_gare(linearize(scalar(INFINITY, 0.0)), 0.0,
                         GainLevel::infinite());
  EXPECT_NEAR(cert.P(0, 0), -2.0 + 2.0 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(cert.closedloop_spectrum[0].real(), -std::sqrt(2.0), 1e-12);
  cert = solve_gare(linearize(scalar(INFINITY, 1.0)), 1.0,
                    GainLevel::infinite());
  EXPECT_NEAR(cert.P(0, 0), -3.0 + std::sqrt(13.0), 1e-12);
  cert = solve_gare(linearize(scalar(2.0, 0.0)), 0.0, GainLevel::finite(2.0));
  EXPECT_NEAR(cert.P(0, 0), (-2.0 + std::sqrt(7.0)) / 0.75, 1e-12);
  EXPECT_NEAR(cert.P(0, 0), 0.861002, 5e-7);
}

TEST(GareTest, AllenCahnCertificateInvariants) {
  for (GainLevel gamma : {GainLevel::finite(1.2), GainLevel::infinite()}) {
    const ControlSystem base = allen_cahn(31, gamma);
    const ControlSystem sys = with_alpha_fraction(base, 0.5, gamma);
    const Linearization lin = linearize(sys);
    const auto cert = solve_gare(lin, sys.alpha(), gamma);
    const int n = lin.n();
    EXPECT_LT((cert.P - cert.P.transpose()).norm(), 1e-14);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cert.P);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    EXPECT_LE(cert.gare_residual, 1e-8 * (1.0 + cert.P.norm()));
    for (const auto& lambda : cert.closedloop_spectrum) {
      EXPECT_LT(lambda.real(), 0.0);
    }
    EXPECT_NEAR(cert.nominal_margin, cert.alpha_bar - sys.alpha(), 1e-15);
    // The nominal margin never exceeds the actual characteristic margin.
    EXPECT_GE(cert.characteristic_margin, cert.nominal_margin);

    // Stable subspace of H(α,γ) is span[I; P].
    Matrix basis(2 * n, n);
    basis << Matrix::Identity(n, n), cert.P;
    const Matrix H =
        hamiltonian_matrix(lin, sys.alpha(), gamma, HamiltonianForm::kSymmetric);
    const Matrix reduced = lin.A - 0.5 * sys.alpha() * Matrix::Identity(n, n) +
                           lin.R_tilde * cert.P;
    EXPECT_LE((H * basis - basis * reduced).norm(), 1e-8);
  }
}

TEST(GareTest, SpectralShiftBetweenForms) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 4;
    const Matrix A = random_matrix(rng, n, n);
    const Matrix B = random_matrix(rng, n, 1 + trial % n);
    const Matrix Qh = random_matrix(rng, n, n);
    const Matrix Q = Qh * Qh.transpose() + 0.1 * Matrix::Identity(n, n);
    const ControlSystem sys = build_linear_system(
        "rand", A, B, Matrix::Identity(n, n),
        {Q, Matrix::Identity(B.cols(), B.cols()), Matrix::Identity(n, n)},
        GainLevel::finite(5.0), 0.0, 1.0);
    const Linearization lin = linearize(sys);
    const double alpha = 0.3 + 0.1 * trial;
    Eigen::EigenSolver<Matrix> hc(
        hamiltonian_matrix(lin, alpha, lin.gamma,
                           HamiltonianForm::kCharacteristic),
        false);
    Eigen::EigenSolver<Matrix> hs(
        hamiltonian_matrix(lin, alpha, lin.gamma, HamiltonianForm::kSymmetric),
        false);
    std::vector<std::complex<double>> a(hc.eigenvalues().begin(),
                                        hc.eigenvalues().end());
    std::vector<std::complex<double>> b(hs.eigenvalues().begin(),
                                        hs.eigenvalues().end());
    for (auto& z : b) z += 0.5 * alpha;
    for (const auto& z : a) {
      const auto it = std::min_element(b.begin(), b.end(), [&](auto u, auto v) {
        return std::abs(u - z) < std::abs(v - z);
      });
      EXPECT_LT(std::abs(*it - z), 1e-9);
      b.erase(it);
    }
  }
}

TEST(LyapunovTest, ScalarZeroAndSymmetry) {
  const Matrix acl = Matrix::Constant(1, 1, -std::sqrt(2.0));
  EXPECT_NEAR(solve_lyapunov(acl, Matrix::Constant(1, 1, -0.5))(0, 0),
              0.5 / (2.0 * std::sqrt(2.0)), 1e-15);

  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 5;
    Matrix A = random_matrix(rng, n, n);
    Eigen::EigenSolver<Matrix> eig(A, false);
    double shift = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      shift = std::max(shift, eig.eigenvalues()(i).real());
    A -= (shift + 0.5) * Matrix::Identity(n, n);
    EXPECT_TRUE(solve_lyapunov(A, Matrix::Zero(n, n)).isZero(0.0));
    const Matrix M = random_matrix(rng, n, n);
    const Matrix rhs = M + M.transpose();
    const Matrix S = solve_lyapunov(A, rhs);
    EXPECT_LT((S - S.transpose()).cwiseAbs().maxCoeff(),
              1e-10 * rhs.cwiseAbs().maxCoeff());
    EXPECT_LE((A * S + S * A.transpose() - rhs).cwiseAbs().maxCoeff(),
              1e-10 * rhs.cwiseAbs().maxCoeff());
  }
}

TEST(LyapunovTest, ResonantSpectrum) {
  Matrix A(2, 2);
  A << 1.0, 0.0, 0.0, -1.0;  // λ₁ + λ₂ = 0
  try {
    solve_lyapunov(A, Matrix::Identity(2, 2));
    FAIL() << "expected resonant-spectrum";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kResonantSpectrum);
  }
}

TEST(DecouplingTransformTest, ScalarExample) {
  const ControlSystem sys = scalar(INFINITY, 0.0);
  const Linearization lin = linearize(sys);
  const auto cert = solve_gare(lin, 0.0, sys.gamma());
  const DecouplingTransform dt = decoupling_transform(cert, lin, sys.gamma());
  const double P = -2.0 + 2.0 * std::sqrt(2.0);
  // Block-diagonalization forces S = R̃/(2·Acl) = −0.5/(−2√2)·(−1).
  const double S = -0.5 / (2.0 * std::sqrt(2.0));
  EXPECT_NEAR(dt.S(0, 0), S, 1e-12);
  EXPECT_NEAR(dt.T(0, 1), -0.17678, 5e-6);
  EXPECT_NEAR(dt.T(1, 0), 0.82843, 5e-6);
  EXPECT_NEAR(dt.T(1, 1), P * S + 1.0, 1e-12);
  EXPECT_NEAR(dt.Bmat(0, 0), -std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(dt.Fmat(0, 0), -std::sqrt(2.0), 1e-12);
}

TEST(DecouplingTransformTest, InverseClosedFormAndBlockDiagonal) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial % 5;
    const Matrix P = random_matrix(rng, n, n);
    const Matrix S = random_matrix(rng, n, n);
    const Matrix I = Matrix::Identity(n, n);
    Matrix T(2 * n, 2 * n), Ti(2 * n, 2 * n);
    T << I, S, P, P * S + I;
    Ti << I + S * P, -S, -P, I;
    EXPECT_LT((T * Ti - Matrix::Identity(2 * n, 2 * n)).norm(), 1e-12);
  }
  for (GainLevel gamma : {GainLevel::finite(1.2), GainLevel::infinite()}) {
    const ControlSystem sys =
        with_alpha_fraction(allen_cahn(15, gamma), 0.5, gamma);
    const LinearCertificate lc = analyze_linear(sys, gamma);
    const Eigen::VectorXcd lb =
        Eigen::EigenSolver<Matrix>(lc.transform.Bmat, false).eigenvalues();
    const Eigen::VectorXcd lf =
        Eigen::EigenSolver<Matrix>(lc.transform.Fmat, false).eigenvalues();
    EXPECT_LT(lb.real().maxCoeff(), 0.0);
    EXPECT_LT(lf.real().maxCoeff(), 0.0);
  }
}

TEST(DecouplingTransformTest, InconsistentInputsRejected) {
  const ControlSystem sys = scalar(INFINITY, 0.0);
  const Linearization lin = linearize(sys);
  try {
    decoupling_transform(Matrix::Zero(1, 1), Matrix::Zero(1, 1), lin, 0.0,
                         sys.gamma());
    FAIL() << "expected inconsistent-certificate";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInconsistentCertificate);
  }
}

TEST(NonlinearResidualsTest, LinearSystemHasNone) {
  std::mt19937_64 rng(41);
  const int n = 3;
  Matrix A = random_matrix(rng, n, n) - 2.0 * Matrix::Identity(n, n);
  const Matrix B = random_matrix(rng, n, 2);
  const ControlSystem sys =
      build_linear_system("lin", A, B, Matrix::Identity(n, n),
                          {Matrix::Identity(n, n), Matrix::Identity(2, 2),
                           Matrix::Identity(n, n)},
                          GainLevel::finite(3.0), 0.2, 1.0);
  const LinearCertificate lc = analyze_linear(sys, sys.gamma());
  for (int trial = 0; trial < 10; ++trial) {
    const auto [ns, nu] = nonlinear_residuals(
        sys, lc.transform, random_matrix(rng, n, 1), random_matrix(rng, n, 1));
    EXPECT_LT(ns.norm(), 1e-12);
    EXPECT_LT(nu.norm(), 1e-12);
  }
}

TEST(NonlinearResidualsTest, AllenCahnResidualsAreOddAndCubic) {
  const GainLevel gamma = GainLevel::finite(1.2);
  const ControlSystem sys = with_alpha_fraction(allen_cahn(9, gamma), 0.5, gamma);
  const LinearCertificate lc = analyze_linear(sys, gamma);
  const int n = sys.n();
  auto [z1, z2] = nonlinear_residuals(sys, lc.transform, Vector::Zero(n),
                                      Vector::Zero(n));
  EXPECT_EQ(z1.norm(), 0.0);
  EXPECT_EQ(z2.norm(), 0.0);

  std::mt19937_64 rng(43);
  const Vector xb = random_matrix(rng, n, 1);
  const Vector pb = random_matrix(rng, n, 1);
  const auto [s1, u1] = nonlinear_residuals(sys, lc.transform, xb, pb);
  const auto [s2, u2] = nonlinear_residuals(sys, lc.transform, -xb, -pb);
  EXPECT_LT((s1 + s2).norm(), 1e-12 * (1 + s1.norm()));
  EXPECT_LT((u1 + u2).norm(), 1e-12 * (1 + u1.norm()));

  const double eps = 1e-2;
  const auto [sa, ua] = nonlinear_residuals(sys, lc.transform, eps * xb, eps * pb);
  const auto [sb, ub] =
      nonlinear_residuals(sys, lc.transform, 0.5 * eps * xb, 0.5 * eps * pb);
  // Pure cubic: halving the argument divides the residual by exactly 8.
  EXPECT_LT((sa - 8.0 * sb).norm(), 1e-9 * sa.norm());
  EXPECT_LT((ua - 8.0 * ub).norm(), 1e-9 * ua.norm());
}

TEST(DiscountMarginTest, RandomStabilizableSystemsStayHyperbolic) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  while (checked < 100) {
    const int n = 2 + checked % 5;
    const int m = 1 + static_cast<int>(rng() % n);
    const Matrix A = random_matrix(rng, n, n);
    const Matrix B = random_matrix(rng, n, m);
    const Matrix Qh = random_matrix(rng, n, n);
    const Matrix Q = Qh * Qh.transpose() + 0.1 * Matrix::Identity(n, n);
    const ControlSystem sys = build_linear_system(
        "rand", A, B, Matrix::Identity(n, n),
        {Q, Matrix::Identity(m, m), Matrix::Identity(n, n)},
        GainLevel::infinite(), 0.0, 1.0);
    const Linearization lin = linearize(sys);
    const auto h0 = stable_spectral_distance(hamiltonian_matrix(
        lin, 0.0, GainLevel::infinite(), HamiltonianForm::kSymmetric));
    if (!h0.hyperbolic) continue;
    const double delta0 = 2.0 * h0.dist;
    const auto ha = stable_spectral_distance(hamiltonian_matrix(
        lin, 0.95 * delta0, GainLevel::infinite(), HamiltonianForm::kSymmetric));
    EXPECT_TRUE(ha.hyperbolic) << "trial " << checked;
    ++checked;
  }
}

}  // namespace
}  // namespace chinf
