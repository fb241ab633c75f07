#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "chinf/model.h"

namespace chinf {

/// Linear part of the plant at the origin together with the cost data the
/// Hamiltonian matrices need.
struct Linearization {
  Matrix A;  // ∂f/∂x(0)
  Matrix B;  // g(0)
  Matrix D;  // k(0)
  Matrix Q;
  Matrix control_gramian;      // B W⁻¹ Bᵀ
  Matrix disturbance_gramian;  // D G⁻¹ Dᵀ
  GainLevel gamma = GainLevel::infinite();
  Matrix R_tilde;  // −½(BW⁻¹Bᵀ − γ⁻²DG⁻¹Dᵀ) at the working γ

  int n() const { return static_cast<int>(A.rows()); }
  /// R̃ evaluated at an arbitrary attenuation level.
  Matrix coupling_at(GainLevel level) const;
};

Linearization linearize(const ControlSystem& sys);

enum class HamiltonianForm {
  kCharacteristic,  // [[A, R̃], [−2Q, −Aᵀ + αI]]
  kSymmetric,       // characteristic − (α/2)I
};

Matrix hamiltonian_matrix(const Linearization& lin, double alpha,
                          GainLevel gamma, HamiltonianForm form);

struct SpectralDistance {
  double dist = 0.0;
  bool hyperbolic = false;
};

inline constexpr double kHyperbolicityTol = 1e-8;

/// Distance from the open-left-half-plane part of σ(H) to the imaginary axis.
SpectralDistance stable_spectral_distance(const Matrix& H,
                                          double hyperbolicity_tol =
                                              kHyperbolicityTol);

/// ᾱ = dist(σ₋(H₀), iℝ) with H₀ the characteristic matrix at α = 0 and the
/// given γ. Pass GainLevel::infinite() for the HJB convention of H₀.
double alpha_bar(const Linearization& lin, GainLevel gamma);

struct StabilityCertificate {
  Matrix P;
  double gare_residual = 0.0;
  double alpha = 0.0;
  double delta0 = 0.0;
  double alpha_bar = 0.0;
  // dist(σ₋(H(α,γ)), iℝ) for the symmetric form.
  double H_stable_margin = 0.0;
  // dist(σ₋(H_c(α,γ)), iℝ) for the characteristic form.
  double characteristic_margin = 0.0;
  // ᾱ − α: lower bound on the characteristic margin implied by
  // ‖H_c(α,γ) − H_c(0,γ)‖ = α; this is the rate the horizon rule uses.
  double nominal_margin = 0.0;
  std::vector<std::complex<double>> closedloop_spectrum;  // σ(A + R̃P)
};

struct GareOptions {
  double residual_tol = 1e-8;  // relative to 1 + ‖P‖
  double hyperbolicity_tol = kHyperbolicityTol;
};

/// Stabilizing solution of 2Q + AᵀP + PA − αP + P R̃ P = 0 via the ordered
/// real Schur form of the symmetric Hamiltonian matrix. `alpha_bar_gamma`
/// selects the γ used for H₀ when filling in δ₀ and ᾱ.
StabilityCertificate solve_gare(const Linearization& lin, double alpha,
                                GainLevel gamma, GainLevel alpha_bar_gamma,
                                const GareOptions& options = {});

inline StabilityCertificate solve_gare(const Linearization& lin, double alpha,
                                       GainLevel gamma) {
  return solve_gare(lin, alpha, gamma, gamma);
}

/// Residual of the GARE exactly as written, 2Q + AᵀP + PA − αP + P R̃ P.
Matrix gare_residual_matrix(const Linearization& lin, const Matrix& P,
                            double alpha, GainLevel gamma);

/// Solves Acl·S + S·Aclᵀ = rhs by a Kronecker-vectorized dense solve.
Matrix solve_lyapunov(const Matrix& Acl, const Matrix& rhs);

/// Linear change of variables (x, p) = T(x̄, p̄) that block-diagonalizes the
/// characteristic Hamiltonian matrix into diag(Bmat, −Fmat).
struct DecouplingTransform {
  Matrix P;
  Matrix S;
  Matrix T;
  Matrix T_inv;
  Matrix Bmat;  // A + R̃P, Hurwitz
  Matrix Fmat;  // (Bmat − αI)ᵀ, Hurwitz
  double alpha = 0.0;

  int n() const { return static_cast<int>(P.rows()); }
  std::pair<Vector, Vector> to_original(const Vector& x_bar,
                                        const Vector& p_bar) const;
  std::pair<Vector, Vector> to_decoupled(const Vector& x,
                                         const Vector& p) const;
};

/// Builds T = [[I, S], [P, PS + I]] and checks T·T⁻¹ = I and the
/// block-diagonalization to `tol` (relative to ‖H_c‖).
DecouplingTransform decoupling_transform(const Matrix& P, const Matrix& S,
                                         const Linearization& lin,
                                         double alpha, GainLevel gamma,
                                         double tol = 1e-8);

/// Solves the Lyapunov equation for S and assembles the transform.
DecouplingTransform decoupling_transform(const StabilityCertificate& cert,
                                         const Linearization& lin,
                                         GainLevel gamma);

/// Nonlinear remainders of the characteristic flow in decoupled coordinates:
/// (N_s, N_u) = T⁻¹·(ẋ, ṗ) − (Bmat·x̄, −Fmat·p̄).
std::pair<Vector, Vector> nonlinear_residuals(const ControlSystem& sys,
                                              const DecouplingTransform& dt,
                                              const Vector& x_bar,
                                              const Vector& p_bar);

/// Everything downstream needs from the linear analysis of one system.
struct LinearCertificate {
  Linearization lin;
  StabilityCertificate cert;
  DecouplingTransform transform;
};

/// Full analysis at the system's working γ and α.
LinearCertificate analyze_linear(const ControlSystem& sys,
                                 GainLevel alpha_bar_gamma);

/// Resolves α = fraction·ᾱ (ᾱ evaluated at `alpha_bar_gamma`) and returns
/// the system with that discount.
ControlSystem with_alpha_fraction(const ControlSystem& sys, double fraction,
                                  GainLevel alpha_bar_gamma);

}  // namespace chinf
