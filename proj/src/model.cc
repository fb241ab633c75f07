#include "chinf/model.h"

#include <cmath>

#include "chinf/error.h"

namespace chinf {

namespace {

void require_spd(const Matrix& M, const char* label) {
  if (M.rows() != M.cols() || M.rows() == 0) {
    throw Error(ErrorCode::kInvalidConfig,
                std::string(label) + " must be a nonempty square matrix");
  }
  if (!M.isApprox(M.transpose(), 1e-12) &&
      (M - M.transpose()).norm() > 1e-12) {
    throw Error(ErrorCode::kInvalidConfig,
                std::string(label) + " must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorCode::kInvalidConfig,
                std::string(label) + " must be positive definite");
  }
}

}  // namespace

GainLevel GainLevel::finite(double gamma) {
  if (!(gamma > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "gamma must be positive");
  }
  GainLevel level;
  if (std::isinf(gamma)) return level;
  level.infinite_ = false;
  level.value_ = gamma;
  return level;
}

ControlSystem::ControlSystem(std::string name, int n, int m, int l,
                             Dynamics dynamics, Costs costs, GainLevel gamma,
                             double alpha, double domain_radius)
    : name_(std::move(name)),
      n_(n),
      m_(m),
      l_(l),
      dyn_(std::move(dynamics)),
      costs_(std::move(costs)),
      gamma_(gamma),
      alpha_(alpha),
      domain_radius_(domain_radius),
      state_scale_(Vector::Ones(n)) {
  if (n <= 0 || m <= 0 || l <= 0) {
    throw Error(ErrorCode::kInvalidConfig, "dimensions must be positive");
  }
  if (!dyn_.drift || !dyn_.drift_jacobian || !dyn_.input_map ||
      !dyn_.disturbance_map) {
    throw Error(ErrorCode::kInvalidConfig, "all dynamics callbacks required");
  }
  if (!dyn_.constant_maps && !dyn_.coupling_gradient) {
    throw Error(ErrorCode::kUnsupportedModel,
                "state-dependent g or k needs a coupling_gradient callback");
  }
  require_spd(costs_.Q, "Q");
  require_spd(costs_.W, "W");
  require_spd(costs_.G, "G");
  if (costs_.Q.rows() != n || costs_.W.rows() != m || costs_.G.rows() != l) {
    throw Error(ErrorCode::kInvalidConfig, "cost matrix dimension mismatch");
  }
  if (!(alpha >= 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "alpha must be nonnegative");
  }
  if (!(domain_radius > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "domain_radius must be positive");
  }
  W_inv_ = costs_.W.inverse();
  G_inv_ = costs_.G.inverse();
  const Vector f0 = dyn_.drift(Vector::Zero(n));
  if (f0.size() != n || f0.norm() > 1e-12) {
    throw Error(ErrorCode::kInvalidConfig, "drift must vanish at the origin");
  }
}

ControlSystem ControlSystem::with_alpha(double alpha) const {
  if (!(alpha >= 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "alpha must be nonnegative");
  }
  ControlSystem copy = *this;
  copy.alpha_ = alpha;
  return copy;
}

ControlSystem ControlSystem::with_gamma(GainLevel gamma) const {
  ControlSystem copy = *this;
  copy.gamma_ = gamma;
  return copy;
}

Matrix ControlSystem::coupling(const Vector& x) const {
  const Matrix g = input_map(x);
  Matrix M = -0.25 * g * W_inv_ * g.transpose();
  if (!gamma_.is_infinite()) {
    const Matrix k = disturbance_map(x);
    M += 0.25 * gamma_.inverse_squared() * k * G_inv_ * k.transpose();
  }
  return M;
}

Vector ControlSystem::coupling_gradient(const Vector& x,
                                        const Vector& p) const {
  if (dyn_.constant_maps) return Vector::Zero(n_);
  return dyn_.coupling_gradient(x, p);
}

ControlSystem rescaled(const ControlSystem& sys, const Vector& scale) {
  if (scale.size() != sys.n() || scale.minCoeff() <= 0.0) {
    throw Error(ErrorCode::kInvalidConfig,
                "state_scale must be a positive vector of length n");
  }
  const Vector inv = scale.cwiseInverse();
  ControlSystem::Dynamics base = sys.dynamics();
  ControlSystem::Dynamics dyn;
  dyn.drift = [base, scale, inv](const Vector& y) -> Vector {
    return inv.cwiseProduct(base.drift(scale.cwiseProduct(y)));
  };
  dyn.drift_jacobian = [base, scale, inv](const Vector& y) -> Matrix {
    return inv.asDiagonal() * base.drift_jacobian(scale.cwiseProduct(y)) *
           scale.asDiagonal();
  };
  dyn.input_map = [base, scale, inv](const Vector& y) -> Matrix {
    return inv.asDiagonal() * base.input_map(scale.cwiseProduct(y));
  };
  dyn.disturbance_map = [base, scale, inv](const Vector& y) -> Matrix {
    return inv.asDiagonal() * base.disturbance_map(scale.cwiseProduct(y));
  };
  dyn.constant_maps = base.constant_maps;
  if (base.coupling_gradient) {
    // The y-costate is pᵧ = D·pₓ, so pᵧᵀM̂(y)pᵧ = pₓᵀM(Dy)pₓ and ∇ᵧ = D∇ₓ.
    dyn.coupling_gradient = [base, scale, inv](const Vector& y,
                                               const Vector& p) -> Vector {
      return scale.cwiseProduct(base.coupling_gradient(
          scale.cwiseProduct(y), inv.cwiseProduct(p)));
    };
  }
  ControlSystem::Costs costs{scale.asDiagonal() * sys.Q() * scale.asDiagonal(),
                             sys.W(), sys.G()};
  ControlSystem out(sys.name(), sys.n(), sys.m(), sys.l(), std::move(dyn),
                    std::move(costs), sys.gamma(), sys.alpha(),
                    sys.domain_radius() / scale.maxCoeff());
  out.state_scale_ = sys.state_scale().cwiseProduct(scale);
  return out;
}

Matrix dirichlet_laplacian(int N) {
  if (N < 3) {
    throw Error(ErrorCode::kInvalidConfig, "Allen-Cahn grid needs N >= 3");
  }
  const int n = N - 1;
  const double h = 2.0 / N;
  Matrix A = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = -2.0;
    if (i > 0) A(i, i - 1) = 1.0;
    if (i + 1 < n) A(i, i + 1) = 1.0;
  }
  return A / (h * h);
}

ControlSystem build_allen_cahn(const AllenCahnConfig& cfg) {
  if (cfg.N < 3) {
    throw Error(ErrorCode::kInvalidConfig, "Allen-Cahn grid needs N >= 3");
  }
  if (!(cfg.sigma > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "sigma must be positive");
  }
  if (!(cfg.alpha_fraction >= 0.0 && cfg.alpha_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "alpha_fraction must be in [0,1)");
  }
  const int n = cfg.n();
  const double h = cfg.h();
  const Matrix linear =
      cfg.sigma * dirichlet_laplacian(cfg.N) + Matrix::Identity(n, n);
  const Matrix eye = Matrix::Identity(n, n);

  ControlSystem::Dynamics dyn;
  dyn.drift = [linear](const Vector& X) -> Vector {
    return linear * X - X.array().cube().matrix();
  };
  dyn.drift_jacobian = [linear](const Vector& X) -> Matrix {
    Matrix J = linear;
    J.diagonal() -= 3.0 * X.array().square().matrix();
    return J;
  };
  dyn.input_map = [eye](const Vector&) -> Matrix { return eye; };
  dyn.disturbance_map = [eye](const Vector&) -> Matrix { return eye; };
  ControlSystem::Costs costs{h * eye, h * eye, h * eye};
  return ControlSystem("allen_cahn", n, n, n, std::move(dyn),
                       std::move(costs), cfg.gamma, 0.0, cfg.domain_radius);
}

ControlSystem build_linear_system(std::string name, const Matrix& A,
                                  const Matrix& B, const Matrix& D,
                                  ControlSystem::Costs costs, GainLevel gamma,
                                  double alpha, double domain_radius) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || B.rows() != n || D.rows() != n) {
    throw Error(ErrorCode::kInvalidConfig, "linear system shape mismatch");
  }
  ControlSystem::Dynamics dyn;
  dyn.drift = [A](const Vector& x) -> Vector { return A * x; };
  dyn.drift_jacobian = [A](const Vector&) -> Matrix { return A; };
  dyn.input_map = [B](const Vector&) -> Matrix { return B; };
  dyn.disturbance_map = [D](const Vector&) -> Matrix { return D; };
  return ControlSystem(std::move(name), n, static_cast<int>(B.cols()),
                       static_cast<int>(D.cols()), std::move(dyn),
                       std::move(costs), gamma, alpha, domain_radius);
}

ControlSystem build_scalar_lq(const ScalarLqConfig& cfg) {
  const auto one = [](double v) { return Matrix::Constant(1, 1, v); };
  return build_linear_system("scalar_lq", one(cfg.a), one(cfg.b), one(cfg.k),
                             {one(cfg.q), one(cfg.w), one(cfg.g)}, cfg.gamma,
                             0.0, cfg.domain_radius);
}

SaddleInputs saddle_inputs(const ControlSystem& sys, const Vector& x,
                           const Vector& p) {
  SaddleInputs out;
  out.u = -0.5 * sys.W_inverse() * sys.input_map(x).transpose() * p;
  if (sys.gamma().is_infinite()) {
    out.d = Vector::Zero(sys.l());
  } else {
    out.d = 0.5 * sys.gamma().inverse_squared() * sys.G_inverse() *
            sys.disturbance_map(x).transpose() * p;
  }
  return out;
}

double contact_hamiltonian(const ControlSystem& sys, const Vector& x,
                           double V, const Vector& p) {
  return p.dot(sys.drift(x)) + p.dot(sys.coupling(x) * p) - sys.alpha() * V +
         x.dot(sys.Q() * x);
}

double game_hamiltonian(const ControlSystem& sys, const Vector& x, double V,
                        const Vector& p, const Vector& u, const Vector& d) {
  const double gamma2 =
      sys.gamma().is_infinite() ? 0.0 : 1.0 / sys.gamma().inverse_squared();
  double disturbance_cost = 0.0;
  if (!sys.gamma().is_infinite()) disturbance_cost = gamma2 * d.dot(sys.G() * d);
  const Vector flow = sys.drift(x) + sys.input_map(x) * u +
                      sys.disturbance_map(x) * d;
  return x.dot(sys.Q() * x) + u.dot(sys.W() * u) - disturbance_cost -
         sys.alpha() * V + p.dot(flow);
}

CharacteristicRate contact_rhs(const ControlSystem& sys, const Vector& x,
                               const Vector& p) {
  CharacteristicRate rate;
  rate.x_dot = sys.drift(x) + 2.0 * sys.coupling(x) * p;
  rate.p_dot = sys.alpha() * p - sys.drift_jacobian(x).transpose() * p -
               sys.coupling_gradient(x, p) - 2.0 * sys.Q() * x;
  rate.v_dot = rate.x_dot.dot(p);
  return rate;
}

}  // namespace chinf
