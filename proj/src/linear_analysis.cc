#include "chinf/linear_analysis.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <lapacke.h>

#include "chinf/error.h"

namespace chinf {

namespace {

lapack_logical open_left_half_plane(const double* re, const double* /*im*/) {
  return *re < 0.0 ? 1 : 0;
}

double max_abs(const Matrix& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

}  // namespace

Matrix Linearization::coupling_at(GainLevel level) const {
  return -0.5 * (control_gramian -
                 level.inverse_squared() * disturbance_gramian);
}

Linearization linearize(const ControlSystem& sys) {
  const Vector origin = Vector::Zero(sys.n());
  Linearization lin;
  lin.A = sys.drift_jacobian(origin);
  lin.B = sys.input_map(origin);
  lin.D = sys.disturbance_map(origin);
  lin.Q = sys.Q();
  lin.control_gramian = lin.B * sys.W_inverse() * lin.B.transpose();
  lin.disturbance_gramian = lin.D * sys.G_inverse() * lin.D.transpose();
  lin.gamma = sys.gamma();
  lin.R_tilde = lin.coupling_at(sys.gamma());
  return lin;
}

Matrix hamiltonian_matrix(const Linearization& lin, double alpha,
                          GainLevel gamma, HamiltonianForm form) {
  const int n = lin.n();
  const Matrix eye = Matrix::Identity(n, n);
  Matrix H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = lin.A;
  H.topRightCorner(n, n) = lin.coupling_at(gamma);
  H.bottomLeftCorner(n, n) = -2.0 * lin.Q;
  H.bottomRightCorner(n, n) = -lin.A.transpose() + alpha * eye;
  if (form == HamiltonianForm::kSymmetric) {
    H.diagonal().array() -= 0.5 * alpha;
  }
  return H;
}

SpectralDistance stable_spectral_distance(const Matrix& H,
                                          double hyperbolicity_tol) {
  if (H.rows() != H.cols() || H.rows() == 0 || H.rows() % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "Hamiltonian matrix must be square of even order");
  }
  Eigen::EigenSolver<Matrix> solver(H, /*computeEigenvectors=*/false);
  const auto& eig = solver.eigenvalues();
  double stable = std::numeric_limits<double>::infinity();
  double closest = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const double re = eig(i).real();
    closest = std::min(closest, std::abs(re));
    if (re < 0.0) stable = std::min(stable, -re);
  }
  if (!std::isfinite(stable)) {
    throw Error(ErrorCode::kDegenerateSpectrum,
                "no eigenvalue in the open left half plane");
  }
  return {stable, closest > hyperbolicity_tol};
}

double alpha_bar(const Linearization& lin, GainLevel gamma) {
  const Matrix H0 =
      hamiltonian_matrix(lin, 0.0, gamma, HamiltonianForm::kCharacteristic);
  SpectralDistance sd;
  try {
    sd = stable_spectral_distance(H0);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConditionC1Violated, e.what());
  }
  if (!sd.hyperbolic) {
    throw Error(ErrorCode::kConditionC1Violated,
                "H0 has eigenvalues on the imaginary axis");
  }
  return sd.dist;
}

Matrix gare_residual_matrix(const Linearization& lin, const Matrix& P,
                            double alpha, GainLevel gamma) {
  return 2.0 * lin.Q + lin.A.transpose() * P + P * lin.A - alpha * P +
         P * lin.coupling_at(gamma) * P;
}

StabilityCertificate solve_gare(const Linearization& lin, double alpha,
                                GainLevel gamma, GainLevel alpha_bar_gamma,
                                const GareOptions& options) {
  const int n = lin.n();
  StabilityCertificate cert;
  cert.alpha = alpha;
  cert.alpha_bar = alpha_bar(lin, alpha_bar_gamma);
  cert.delta0 = 2.0 * cert.alpha_bar;
  cert.nominal_margin = cert.alpha_bar - alpha;

  const Matrix H =
      hamiltonian_matrix(lin, alpha, gamma, HamiltonianForm::kSymmetric);
  const SpectralDistance sd =
      stable_spectral_distance(H, options.hyperbolicity_tol);
  if (!sd.hyperbolic) {
    throw Error(ErrorCode::kNotHyperbolic,
                "H(alpha, gamma) has eigenvalues on the imaginary axis");
  }
  cert.H_stable_margin = sd.dist;
  cert.characteristic_margin =
      stable_spectral_distance(hamiltonian_matrix(
                                   lin, alpha, gamma,
                                   HamiltonianForm::kCharacteristic))
          .dist;

  // Ordered real Schur form: the leading Schur vectors span the stable
  // invariant subspace.
  Matrix schur = H;
  Matrix vectors(2 * n, 2 * n);
  Vector wr(2 * n), wi(2 * n);
  lapack_int sdim = 0;
  const lapack_int info = LAPACKE_dgees(
      LAPACK_COL_MAJOR, 'V', 'S', open_left_half_plane, 2 * n, schur.data(),
      2 * n, &sdim, wr.data(), wi.data(), vectors.data(), 2 * n);
  if (info != 0) {
    throw Error(ErrorCode::kNotHyperbolic,
                "Schur decomposition failed (info " + std::to_string(info) +
                    ")");
  }
  if (sdim != n) {
    throw Error(ErrorCode::kNotHyperbolic,
                "stable subspace has dimension " + std::to_string(sdim) +
                    ", expected " + std::to_string(n));
  }
  const Matrix X = vectors.topLeftCorner(n, n);
  const Matrix Y = vectors.bottomLeftCorner(n, n);
  Eigen::JacobiSVD<Matrix> svd(X);
  const auto& sv = svd.singularValues();
  if (sv(n - 1) <= 1e-12 * sv(0)) {
    throw Error(ErrorCode::kSubspaceNotGraph,
                "stable subspace is not the graph of a matrix");
  }
  Matrix P = X.transpose().partialPivLu().solve(Y.transpose()).transpose();
  P = 0.5 * (P + P.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> peig(P);
  if (peig.eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorCode::kNoStabilizingSolution,
                "GARE solution is not positive definite");
  }
  cert.P = P;
  cert.gare_residual = gare_residual_matrix(lin, P, alpha, gamma).norm();
  if (cert.gare_residual > options.residual_tol * (1.0 + P.norm())) {
    throw Error(ErrorCode::kNoStabilizingSolution,
                "GARE residual " + std::to_string(cert.gare_residual) +
                    " exceeds tolerance");
  }
  const Matrix closed = lin.A + lin.coupling_at(gamma) * P;
  Eigen::EigenSolver<Matrix> ceig(closed, false);
  for (Eigen::Index i = 0; i < ceig.eigenvalues().size(); ++i) {
    const auto lambda = ceig.eigenvalues()(i);
    if (!(lambda.real() < 0.0 && lambda.real() < 0.5 * alpha)) {
      throw Error(ErrorCode::kNoStabilizingSolution,
                  "closed-loop matrix A + R P is not Hurwitz");
    }
    cert.closedloop_spectrum.push_back(lambda);
  }
  std::sort(cert.closedloop_spectrum.begin(), cert.closedloop_spectrum.end(),
            [](const auto& a, const auto& b) {
              return a.real() != b.real() ? a.real() < b.real()
                                          : a.imag() < b.imag();
            });
  return cert;
}

Matrix solve_lyapunov(const Matrix& Acl, const Matrix& rhs) {
  const Eigen::Index n = Acl.rows();
  if (Acl.cols() != n || rhs.rows() != n || rhs.cols() != n) {
    throw Error(ErrorCode::kInvalidArgument, "Lyapunov shape mismatch");
  }
  // The operator S ↦ AS + SAᵀ has eigenvalues λᵢ + λⱼ.
  const Eigen::VectorXcd lambda = Eigen::EigenSolver<Matrix>(Acl, false).eigenvalues();
  const double spread = 1.0 + lambda.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      if (std::abs(lambda(i) + lambda(j)) <= 1e-12 * spread) {
        throw Error(ErrorCode::kResonantSpectrum,
                    "Lyapunov operator is singular: spectrum meets its mirror");
      }
    }
  }
  const Matrix eye = Matrix::Identity(n, n);
  // Column-major vec: vec(A S + S Aᵀ) = (I ⊗ A + A ⊗ I) vec(S).
  Matrix K = Matrix::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      K.block(i * n, j * n, n, n) += Acl(i, j) * eye;
      if (i == j) K.block(i * n, j * n, n, n) += Acl;
    }
  }
  Eigen::PartialPivLU<Matrix> lu(K);
  if (!(lu.rcond() > 1e-14)) {
    throw Error(ErrorCode::kResonantSpectrum,
                "Lyapunov operator is singular: spectrum meets its mirror");
  }
  const Eigen::Map<const Vector> b(rhs.data(), n * n);
  Vector s = lu.solve(b);
  s += lu.solve(b - K * s);  // one refinement step
  Matrix S = Eigen::Map<const Matrix>(s.data(), n, n);
  const double scale = std::max(max_abs(rhs), 1e-300);
  if (max_abs(Acl * S + S * Acl.transpose() - rhs) > 1e-10 * scale &&
      max_abs(rhs) > 0.0) {
    throw Error(ErrorCode::kResonantSpectrum,
                "Lyapunov residual above tolerance");
  }
  return S;
}

std::pair<Vector, Vector> DecouplingTransform::to_original(
    const Vector& x_bar, const Vector& p_bar) const {
  return {x_bar + S * p_bar, P * x_bar + p_bar + P * (S * p_bar)};
}

std::pair<Vector, Vector> DecouplingTransform::to_decoupled(
    const Vector& x, const Vector& p) const {
  // T⁻¹ = [[I + SP, −S], [−P, I]]
  return {x + S * (P * x) - S * p, p - P * x};
}

DecouplingTransform decoupling_transform(const Matrix& P, const Matrix& S,
                                         const Linearization& lin,
                                         double alpha, GainLevel gamma,
                                         double tol) {
  const int n = static_cast<int>(P.rows());
  const Matrix eye = Matrix::Identity(n, n);
  DecouplingTransform dt;
  dt.P = P;
  dt.S = S;
  dt.alpha = alpha;
  dt.T.resize(2 * n, 2 * n);
  dt.T << eye, S, P, P * S + eye;
  dt.T_inv.resize(2 * n, 2 * n);
  dt.T_inv << eye + S * P, -S, -P, eye;
  dt.Bmat = lin.A + lin.coupling_at(gamma) * P;
  dt.Fmat = (dt.Bmat - alpha * eye).transpose();

  const Matrix Hc =
      hamiltonian_matrix(lin, alpha, gamma, HamiltonianForm::kCharacteristic);
  const double scale = 1.0 + Hc.norm();
  const double inverse_gap =
      max_abs(dt.T * dt.T_inv - Matrix::Identity(2 * n, 2 * n));
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = dt.Bmat;
  block.bottomRightCorner(n, n) = -dt.Fmat;
  const double diag_gap = max_abs(dt.T_inv * Hc * dt.T - block);
  if (inverse_gap > tol || diag_gap > tol * scale) {
    throw Error(ErrorCode::kInconsistentCertificate,
                "decoupling transform identity check failed (inverse gap " +
                    std::to_string(inverse_gap) + ", block gap " +
                    std::to_string(diag_gap) + ")");
  }
  return dt;
}

DecouplingTransform decoupling_transform(const StabilityCertificate& cert,
                                         const Linearization& lin,
                                         GainLevel gamma) {
  const int n = lin.n();
  const Matrix R = lin.coupling_at(gamma);
  const Matrix shifted =
      lin.A + R * cert.P - 0.5 * cert.alpha * Matrix::Identity(n, n);
  const Matrix S = solve_lyapunov(shifted, -R);
  return decoupling_transform(cert.P, S, lin, cert.alpha, gamma);
}

std::pair<Vector, Vector> nonlinear_residuals(const ControlSystem& sys,
                                              const DecouplingTransform& dt,
                                              const Vector& x_bar,
                                              const Vector& p_bar) {
  const auto [x, p] = dt.to_original(x_bar, p_bar);
  const CharacteristicRate rate = contact_rhs(sys, x, p);
  auto [ns, nu] = dt.to_decoupled(rate.x_dot, rate.p_dot);
  ns -= dt.Bmat * x_bar;
  nu += dt.Fmat * p_bar;
  return {ns, nu};
}

LinearCertificate analyze_linear(const ControlSystem& sys,
                                 GainLevel alpha_bar_gamma) {
  LinearCertificate out;
  out.lin = linearize(sys);
  out.cert = solve_gare(out.lin, sys.alpha(), sys.gamma(), alpha_bar_gamma);
  out.transform = decoupling_transform(out.cert, out.lin, sys.gamma());
  return out;
}

ControlSystem with_alpha_fraction(const ControlSystem& sys, double fraction,
                                  GainLevel alpha_bar_gamma) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "alpha_fraction must be in [0,1)");
  }
  return sys.with_alpha(fraction * alpha_bar(linearize(sys), alpha_bar_gamma));
}

}  // namespace chinf
