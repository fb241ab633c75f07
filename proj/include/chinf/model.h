#pragma once

#include <functional>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace chinf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Attenuation level γ ∈ (0, ∞]. The infinite level is kept symbolic so every
/// γ⁻² term is exactly zero in the HJB limit.
class GainLevel {
 public:
  static GainLevel finite(double gamma);
  static GainLevel infinite() { return GainLevel(); }

  bool is_infinite() const { return infinite_; }
  double value() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }
  double inverse_squared() const {
    return infinite_ ? 0.0 : 1.0 / (value_ * value_);
  }

  bool operator==(const GainLevel& other) const = default;

 private:
  GainLevel() = default;
  bool infinite_ = true;
  double value_ = 0.0;
};

/// Control-affine plant ẋ = f(x) + g(x)u + k(x)d with quadratic costs.
class ControlSystem {
 public:
  struct Dynamics {
    std::function<Vector(const Vector&)> drift;
    std::function<Matrix(const Vector&)> drift_jacobian;
    std::function<Matrix(const Vector&)> input_map;
    std::function<Matrix(const Vector&)> disturbance_map;
    // When g or k depend on x, the gradient ∇ₓ(pᵀM(x)p) must be supplied.
    bool constant_maps = true;
    std::function<Vector(const Vector& x, const Vector& p)> coupling_gradient;
  };

  struct Costs {
    Matrix Q, W, G;
  };

  ControlSystem(std::string name, int n, int m, int l, Dynamics dynamics,
                Costs costs, GainLevel gamma, double alpha,
                double domain_radius);

  const std::string& name() const { return name_; }
  int n() const { return n_; }
  int m() const { return m_; }
  int l() const { return l_; }

  Vector drift(const Vector& x) const { return dyn_.drift(x); }
  Matrix drift_jacobian(const Vector& x) const {
    return dyn_.drift_jacobian(x);
  }
  Matrix input_map(const Vector& x) const { return dyn_.input_map(x); }
  Matrix disturbance_map(const Vector& x) const {
    return dyn_.disturbance_map(x);
  }
  bool constant_maps() const { return dyn_.constant_maps; }
  const Dynamics& dynamics() const { return dyn_; }

  const Matrix& Q() const { return costs_.Q; }
  const Matrix& W() const { return costs_.W; }
  const Matrix& G() const { return costs_.G; }
  const Matrix& W_inverse() const { return W_inv_; }
  const Matrix& G_inverse() const { return G_inv_; }

  GainLevel gamma() const { return gamma_; }
  double alpha() const { return alpha_; }
  double domain_radius() const { return domain_radius_; }
  const Vector& state_scale() const { return state_scale_; }

  ControlSystem with_alpha(double alpha) const;
  ControlSystem with_gamma(GainLevel gamma) const;

  /// M(x) = (1/4γ²) k G⁻¹ kᵀ − ¼ g W⁻¹ gᵀ.
  Matrix coupling(const Vector& x) const;

  /// ∇ₓ(pᵀM(x)p); zero for constant g and k.
  Vector coupling_gradient(const Vector& x, const Vector& p) const;

 private:
  friend ControlSystem rescaled(const ControlSystem& sys, const Vector& scale);

  std::string name_;
  int n_, m_, l_;
  Dynamics dyn_;
  Costs costs_;
  Matrix W_inv_, G_inv_;
  GainLevel gamma_;
  double alpha_;
  double domain_radius_;
  Vector state_scale_;
};

/// Step-0 change of variables x = D·y with D = diag(scale). The returned
/// system lives in y-coordinates: f̂(y) = D⁻¹f(Dy), ĝ = D⁻¹g, k̂ = D⁻¹k,
/// Q̂ = DQD. Scales compose with any scale already applied.
ControlSystem rescaled(const ControlSystem& sys, const Vector& scale);

struct AllenCahnConfig {
  int N = 31;
  double sigma = 0.1;
  GainLevel gamma = GainLevel::finite(1.2);
  double alpha_fraction = 0.5;
  double domain_radius = 0.8;

  double h() const { return 2.0 / N; }
  int n() const { return N - 1; }
};

/// Tridiagonal second-difference matrix (1/h²)·tridiag(1, −2, 1) on the
/// interior nodes of [−1, 1] with homogeneous Dirichlet conditions.
Matrix dirichlet_laplacian(int N);

/// Finite-difference Allen-Cahn plant f(X) = (σA + I)X − X³, g = k = I,
/// Q = W = G = hI. α is left at zero; callers resolve it from ᾱ.
ControlSystem build_allen_cahn(const AllenCahnConfig& cfg);

/// Linear plant ẋ = Ax + Bu + Dd with constant maps.
ControlSystem build_linear_system(std::string name, const Matrix& A,
                                  const Matrix& B, const Matrix& D,
                                  ControlSystem::Costs costs, GainLevel gamma,
                                  double alpha, double domain_radius);

struct ScalarLqConfig {
  double a = -1.0;
  double b = 1.0;
  double k = 1.0;
  double q = 1.0;
  double w = 1.0;
  double g = 1.0;
  GainLevel gamma = GainLevel::infinite();
  double alpha_fraction = 0.0;
  double domain_radius = 1.0;
};

/// ẋ = a·x + b·u + k·d, the closed-form test plant.
ControlSystem build_scalar_lq(const ScalarLqConfig& cfg);

struct SaddleInputs {
  Vector u;
  Vector d;
};

/// u* = −½W⁻¹gᵀp, d* = (1/2γ²)G⁻¹kᵀp.
SaddleInputs saddle_inputs(const ControlSystem& sys, const Vector& x,
                           const Vector& p);

/// H̄(x, V, p) = pᵀf + pᵀM(x)p − αV + xᵀQx.
double contact_hamiltonian(const ControlSystem& sys, const Vector& x,
                           double V, const Vector& p);

/// H(x, V, p, u, d) before minimizing over u and maximizing over d.
double game_hamiltonian(const ControlSystem& sys, const Vector& x, double V,
                        const Vector& p, const Vector& u, const Vector& d);

struct CharacteristicRate {
  Vector x_dot;
  Vector p_dot;
  double v_dot = 0.0;
};

/// Right-hand side of the characteristic (contact Hamiltonian) system.
CharacteristicRate contact_rhs(const ControlSystem& sys, const Vector& x,
                               const Vector& p);

}  // namespace chinf
