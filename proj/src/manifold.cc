#include "chinf/manifold.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <boost/numeric/odeint.hpp>
#include "json.hpp"
#include <unsupported/Eigen/MatrixFunctions>

#include "chinf/error.h"

namespace chinf {
namespace {

using json = nlohmann::json;

double sup_norm(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
  }
  return d;
}

// e^{hZ}, φ₁(hZ) and φ₂(hZ) from one exponential of the block matrix
// [[hZ, I, 0], [0, 0, I], [0, 0, 0]].
struct PhiSet {
  Matrix E;
  Matrix w_left;   // weight on the left node of a step
  Matrix w_right;  // weight on the right node
};

PhiSet phi_set(const Matrix& Z, double h, bool forward) {
  const Eigen::Index k = Z.rows();
  Matrix big = Matrix::Zero(3 * k, 3 * k);
  big.topLeftCorner(k, k) = h * Z;
  big.block(0, k, k, k).setIdentity();
  big.block(k, 2 * k, k, k).setIdentity();
  const Matrix ex = big.exp();
  const Matrix phi1 = ex.block(0, k, k, k);
  const Matrix phi2 = ex.block(0, 2 * k, k, k);
  PhiSet out;
  out.E = ex.topLeftCorner(k, k);
  // With the forcing interpolated linearly across the step, the far end of
  // the variation-of-constants integral carries φ₂ and the near end φ₁ − φ₂.
  if (forward) {
    out.w_left = h * (phi1 - phi2);
    out.w_right = h * phi2;
  } else {
    out.w_left = h * phi2;
    out.w_right = h * (phi1 - phi2);
  }
  return out;
}

struct Mesh {
  std::vector<double> t;
  std::vector<int> step_kind;  // 0 for layer steps, 1 for tail steps
  double h[2] = {0.0, 0.0};
};

Mesh build_mesh(double T, double span, double layer_dt, double tail_dt,
                int refine) {
  Mesh mesh;
  mesh.t.push_back(0.0);
  span = std::min(span, T);
  const int K1 = span > 0.0
                     ? refine * static_cast<int>(std::ceil(span / layer_dt - 1e-9))
                     : 0;
  const double rest = T - span;
  const int K2 = rest > 0.0
                     ? refine * static_cast<int>(std::ceil(rest / tail_dt - 1e-9))
                     : 0;
  if (K1 > 0) mesh.h[0] = span / K1;
  if (K2 > 0) mesh.h[1] = rest / K2;
  for (int k = 1; k <= K1; ++k) {
    mesh.t.push_back(k == K1 ? span : k * mesh.h[0]);
    mesh.step_kind.push_back(0);
  }
  for (int k = 1; k <= K2; ++k) {
    mesh.t.push_back(k == K2 ? T : span + k * mesh.h[1]);
    mesh.step_kind.push_back(1);
  }
  return mesh;
}

struct PicardResult {
  std::vector<Vector> x_bar;
  std::vector<Vector> p_bar;
  int iterations = 0;
};

PicardResult picard_on_mesh(const ControlSystem& sys,
                            const DecouplingTransform& dt, const Vector& x_bar0,
                            const Mesh& mesh, const BvpOptions& options,
                            double blowup_cap) {
  const std::size_t K = mesh.t.size() - 1;
  const int n = dt.n();
  PhiSet fwd[2], bwd[2];
  for (int s = 0; s < 2; ++s) {
    if (mesh.h[s] > 0.0) {
      fwd[s] = phi_set(dt.Bmat, mesh.h[s], true);
      bwd[s] = phi_set(dt.Fmat, mesh.h[s], false);
    }
  }

  PicardResult r;
  r.x_bar.assign(K + 1, Vector::Zero(n));
  r.p_bar.assign(K + 1, Vector::Zero(n));
  r.x_bar[0] = x_bar0;
  for (std::size_t k = 0; k < K; ++k) {
    r.x_bar[k + 1] = fwd[mesh.step_kind[k]].E * r.x_bar[k];
  }

  std::vector<Vector> Ns(K + 1), Nu(K + 1);
  std::vector<Vector> nx(K + 1), np(K + 1);
  for (int it = 1; it <= options.max_iter; ++it) {
    for (std::size_t k = 0; k <= K; ++k) {
      std::tie(Ns[k], Nu[k]) =
          nonlinear_residuals(sys, dt, r.x_bar[k], r.p_bar[k]);
    }
    nx[0] = x_bar0;
    for (std::size_t k = 0; k < K; ++k) {
      const PhiSet& ph = fwd[mesh.step_kind[k]];
      nx[k + 1] = ph.E * nx[k] + ph.w_left * Ns[k] + ph.w_right * Ns[k + 1];
    }
    np[K] = Vector::Zero(n);
    for (std::size_t k = K; k-- > 0;) {
      const PhiSet& ph = bwd[mesh.step_kind[k]];
      np[k] = ph.E * np[k + 1] - ph.w_left * Nu[k] - ph.w_right * Nu[k + 1];
    }
    const double update =
        std::max(sup_norm(nx, r.x_bar), sup_norm(np, r.p_bar));
    std::swap(nx, r.x_bar);
    std::swap(np, r.p_bar);
    double size = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      size = std::max({size, r.x_bar[k].norm(), r.p_bar[k].norm()});
    }
    if (!std::isfinite(update) || !std::isfinite(size) || size > blowup_cap) {
      throw Error(ErrorCode::kBvpDiverged,
                  "Picard iteration blew up at iteration " + std::to_string(it));
    }
    if (update < options.tol) {
      r.iterations = it;
      return r;
    }
  }
  throw Error(ErrorCode::kBvpDiverged,
              "Picard iteration did not settle within " +
                  std::to_string(options.max_iter) + " iterations");
}

// Weights integrating the interpolant through `nodes` over [a, b].
Eigen::Vector4d lagrange_weights(const double* nodes, double a, double b) {
  const double h = b - a;
  Eigen::Matrix4d V;
  Eigen::Vector4d moments;
  for (int j = 0; j < 4; ++j) {
    moments(j) = h / (j + 1);
    for (int i = 0; i < 4; ++i) V(j, i) = std::pow((nodes[i] - a) / h, j);
  }
  return V.partialPivLu().solve(moments);
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vector_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector json_vector(const json& j, const char* field, std::size_t line) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw Error(ErrorCode::kIoError, "dataset line " + std::to_string(line) +
                                         ": missing array field '" + field +
                                         "'");
  }
  return to_vector(j[field].get<std::vector<double>>());
}

double json_number(const json& j, const char* field, std::size_t line) {
  if (!j.contains(field) || !j[field].is_number()) {
    throw Error(ErrorCode::kIoError, "dataset line " + std::to_string(line) +
                                         ": missing number field '" + field +
                                         "'");
  }
  return j[field].get<double>();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double pick_horizon(double margin, double tail_tol) {
  if (!(margin > 0.0)) {
    throw Error(ErrorCode::kNotHyperbolic,
                "horizon rule needs a positive spectral margin");
  }
  if (!(tail_tol > 0.0 && tail_tol < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tail tolerance must lie in (0,1)");
  }
  const double T = -std::log(tail_tol) / margin;
  // Absorb roundoff so that an exact decimal is not bumped up a notch.
  return std::ceil(T * 10.0 - 1e-9) / 10.0;
}

LocalSolution solve_local_bvp(const ControlSystem& sys,
                              const DecouplingTransform& dt,
                              const Vector& x_bar0, double T_inf,
                              const BvpOptions& options) {
  if (!(T_inf > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "BVP horizon must be positive");
  }
  if (x_bar0.size() != dt.n()) {
    throw Error(ErrorCode::kInvalidArgument, "BVP initial point has wrong size");
  }
  const Eigen::VectorXcd lambda =
      Eigen::EigenSolver<Matrix>(dt.Bmat, false).eigenvalues();
  const double rho = std::max(lambda.cwiseAbs().maxCoeff(), 1e-12);
  const double span = options.layer_span > 0.0
                          ? options.layer_span
                          : std::min(T_inf / 4.0, std::max(2.0, 25.0 / rho));
  const double layer_dt =
      options.layer_dt > 0.0 ? options.layer_dt : std::min(0.004, 0.05 / rho);
  const double tail_dt =
      options.tail_dt > 0.0 ? options.tail_dt : T_inf / 2000.0;
  const double cap = options.blowup_cap > 0.0
                         ? options.blowup_cap
                         : 1e3 * std::max(x_bar0.norm(), 1e-12);

  const Mesh coarse = build_mesh(T_inf, span, layer_dt, tail_dt, 1);
  PicardResult sol = picard_on_mesh(sys, dt, x_bar0, coarse, options, cap);
  int iterations = sol.iterations;
  if (options.richardson) {
    const Mesh fine = build_mesh(T_inf, span, layer_dt, tail_dt, 2);
    const PicardResult f = picard_on_mesh(sys, dt, x_bar0, fine, options, cap);
    iterations = std::max(iterations, f.iterations);
    // The boundary values x̄(0) and p̄(T∞) are exact on both meshes.
    const std::size_t K = coarse.t.size() - 1;
    for (std::size_t k = 0; k <= K; ++k) {
      if (k > 0) sol.x_bar[k] = (4.0 * f.x_bar[2 * k] - sol.x_bar[k]) / 3.0;
      if (k < K) sol.p_bar[k] = (4.0 * f.p_bar[2 * k] - sol.p_bar[k]) / 3.0;
    }
  }

  LocalSolution out;
  out.t = coarse.t;
  out.iterations = iterations;
  out.converged = true;
  out.x.resize(out.t.size());
  out.p.resize(out.t.size());
  for (std::size_t k = 0; k < out.t.size(); ++k) {
    std::tie(out.x[k], out.p[k]) = dt.to_original(sol.x_bar[k], sol.p_bar[k]);
  }
  return out;
}

std::vector<double> recover_value(const ControlSystem& sys, const Matrix& P,
                                  const std::vector<double>& t,
                                  const std::vector<Vector>& x,
                                  const std::vector<Vector>& p,
                                  ValueMethod method) {
  const std::size_t K1 = t.size();
  if (x.size() != K1 || p.size() != K1 || K1 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory arrays mismatch");
  }
  std::vector<double> V(K1, 0.0);
  if (method == ValueMethod::kAlgebraic) {
    if (!(sys.alpha() > 0.0)) {
      throw Error(ErrorCode::kMethodUnavailable,
                  "algebraic value recovery needs a positive discount");
    }
    for (std::size_t k = 0; k < K1; ++k) {
      V[k] = (p[k].dot(sys.drift(x[k])) + p[k].dot(sys.coupling(x[k]) * p[k]) +
              x[k].dot(sys.Q() * x[k])) /
             sys.alpha();
    }
    return V;
  }

  // V̇ = ẋᵀp along the characteristic flow.
  std::vector<double> rate(K1);
  for (std::size_t k = 0; k < K1; ++k) {
    const Vector x_dot = sys.drift(x[k]) + 2.0 * sys.coupling(x[k]) * p[k];
    rate[k] = x_dot.dot(p[k]);
  }
  V[K1 - 1] = 0.5 * x[K1 - 1].dot(P * x[K1 - 1]);
  for (std::size_t k = K1 - 1; k-- > 0;) {
    double step;
    if (K1 < 4) {
      step = 0.5 * (t[k + 1] - t[k]) * (rate[k] + rate[k + 1]);
    } else {
      const std::size_t lo =
          std::min<std::size_t>(k > 0 ? k - 1 : 0, K1 - 4);
      const Eigen::Vector4d w = lagrange_weights(&t[lo], t[k], t[k + 1]);
      step = 0.0;
      for (int i = 0; i < 4; ++i) step += w(i) * rate[lo + i];
    }
    V[k] = V[k + 1] - step;
  }
  return V;
}

std::vector<TrajectoryPoint> extend_backward(const ControlSystem& sys,
                                             const TrajectoryPoint& head,
                                             double T_minus,
                                             const ExtensionOptions& options) {
  namespace odeint = boost::numeric::odeint;
  using State = std::vector<double>;
  if (T_minus > 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "extension needs T₋ ≤ 0");
  }
  if (T_minus == 0.0 || options.output_points <= 0) return {};
  const int n = sys.n();

  auto rhs = [&](const State& s, State& ds, double) {
    const Eigen::Map<const Vector> xs(s.data(), n);
    const Eigen::Map<const Vector> ps(s.data() + n, n);
    const CharacteristicRate r = contact_rhs(sys, xs, ps);
    Eigen::Map<Vector>(ds.data(), n) = r.x_dot;
    Eigen::Map<Vector>(ds.data() + n, n) = r.p_dot;
    ds[2 * n] = r.v_dot;
  };

  State state(2 * n + 1);
  Eigen::Map<Vector>(state.data(), n) = head.x;
  Eigen::Map<Vector>(state.data() + n, n) = head.p;
  state[2 * n] = head.V;

  // Output times ascending on [T₋, 0); integrated in descending order.
  std::vector<double> times;
  times.push_back(0.0);
  for (int j = options.output_points - 1; j >= 0; --j) {
    times.push_back(T_minus * (options.output_points - j) /
                    options.output_points);
  }
  std::vector<TrajectoryPoint> out;
  auto observer = [&](const State& s, double t) {
    if (t == 0.0) return;
    TrajectoryPoint pt;
    pt.t = t;
    pt.x = Eigen::Map<const Vector>(s.data(), n);
    pt.p = Eigen::Map<const Vector>(s.data() + n, n);
    pt.V = s[2 * n];
    if (!pt.x.allFinite() || !pt.p.allFinite() || !std::isfinite(pt.V)) {
      throw Error(ErrorCode::kStiffExtension, "extension became non-finite");
    }
    if (options.domain_box > 0.0 &&
        pt.x.cwiseAbs().maxCoeff() > options.domain_box) {
      throw Error(ErrorCode::kStiffExtension,
                  "extension left the domain box at t = " + format_double(t));
    }
    out.push_back(std::move(pt));
  };
  auto stepper = odeint::make_dense_output(
      options.integrator_tol, options.integrator_tol,
      odeint::runge_kutta_dopri5<State>());
  try {
    odeint::integrate_times(stepper, rhs, state, times.begin(), times.end(),
                            T_minus / options.output_points / 4.0, observer,
                            odeint::max_step_checker(100000));
  } catch (const odeint::odeint_error& e) {
    throw Error(ErrorCode::kStiffExtension,
                std::string("backward integration stalled: ") + e.what());
  }
  std::reverse(out.begin(), out.end());
  return out;
}

Trajectory generate_trajectory(const ControlSystem& sys,
                               const LinearCertificate& lc, const Vector& x0,
                               double T_inf, const GenerationConfig& config) {
  const DecouplingTransform& dt = lc.transform;
  const LocalSolution local =
      solve_local_bvp(sys, dt, x0, T_inf, config.bvp);
  const std::vector<double> V =
      recover_value(sys, lc.cert.P, local.t, local.x, local.p, ValueMethod::kOde);

  Trajectory traj;
  traj.bvp_iterations = local.iterations;
  traj.converged = local.converged;

  TrajectoryPoint head{0.0, local.x[0], local.p[0], V[0]};
  ExtensionOptions ext = config.extension;
  std::vector<TrajectoryPoint> back;
  if (config.T_minus < 0.0) back = extend_backward(sys, head, config.T_minus, ext);

  traj.points = std::move(back);
  traj.origin_index = traj.points.size();
  for (std::size_t k = 0; k < local.t.size(); ++k) {
    traj.points.push_back({local.t[k], local.x[k], local.p[k], V[k]});
  }

  for (const auto& pt : traj.points) {
    traj.h_residual_max = std::max(
        traj.h_residual_max, std::abs(contact_hamiltonian(sys, pt.x, pt.V, pt.p)));
  }
  if (sys.alpha() > 0.0) {
    traj.value_discrepancy = 0.0;
    traj.value_algebraic.reserve(traj.points.size());
    for (const auto& pt : traj.points) {
      const double va = (pt.p.dot(sys.drift(pt.x)) +
                         pt.p.dot(sys.coupling(pt.x) * pt.p) +
                         pt.x.dot(sys.Q() * pt.x)) /
                        sys.alpha();
      traj.value_algebraic.push_back(va);
      traj.value_discrepancy =
          std::max(traj.value_discrepancy, std::abs(va - pt.V));
    }
  } else {
    traj.value_discrepancy = std::numeric_limits<double>::quiet_NaN();
  }
  const double x0n = x0.norm();
  if (x0n > 0.0) {
    traj.tail_constant = local.x.back().norm() /
                         (std::exp(-lc.cert.nominal_margin * T_inf) * x0n);
  }
  return traj;
}

Vector sphere_point(int n, double radius, std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  Vector z(n);
  do {
    for (int i = 0; i < n; ++i) z(i) = normal(rng);
  } while (z.norm() == 0.0);
  return radius * z / z.norm();
}

GenerationResult generate_from_points(const ControlSystem& sys,
                                      const LinearCertificate& lc,
                                      const std::vector<Vector>& initial_points,
                                      const GenerationConfig& config,
                                      int id_offset) {
  const int count = static_cast<int>(initial_points.size());
  const double T_inf = config.T_inf > 0.0
                           ? config.T_inf
                           : pick_horizon(lc.cert.nominal_margin, config.tail_tol);
  GenerationConfig cfg = config;
  if (cfg.extension.domain_box <= 0.0) {
    cfg.extension.domain_box = 10.0 * std::max(config.radius, sys.domain_radius());
  }

  struct Item {
    TrajectoryReport report;
    std::vector<Sample> samples;
    std::optional<Trajectory> traj;
  };
  std::vector<Item> items(count);

  auto work = [&](int i) {
    Item& item = items[i];
    const int id = id_offset + i;
    item.report.index = id;
    try {
      Trajectory traj =
          generate_trajectory(sys, lc, initial_points[i], T_inf, cfg);
      item.report.h_residual_max = traj.h_residual_max;
      item.report.value_discrepancy = traj.value_discrepancy;
      item.report.bvp_iterations = traj.bvp_iterations;
      if (!(traj.h_residual_max <= cfg.residual_tol)) {
        item.report.reason = "hamiltonian residual " +
                             format_double(traj.h_residual_max) +
                             " above tolerance";
        return;
      }
      item.report.accepted = true;

      std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                        static_cast<std::uint32_t>(config.seed >> 32),
                        static_cast<std::uint32_t>(id), 1u};
      std::mt19937_64 rng(seq);
      auto pick = [&](std::size_t lo, std::size_t hi, int want) {
        std::vector<std::size_t> idx(hi - lo);
        for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = lo + k;
        const std::size_t m = std::min<std::size_t>(want, idx.size());
        for (std::size_t k = 0; k < m; ++k) {
          std::uniform_int_distribution<std::size_t> u(k, idx.size() - 1);
          std::swap(idx[k], idx[u(rng)]);
        }
        idx.resize(m);
        std::sort(idx.begin(), idx.end());
        return idx;
      };
      std::vector<std::size_t> chosen =
          pick(0, traj.origin_index, cfg.n_neg);
      const std::vector<std::size_t> pos =
          pick(traj.origin_index, traj.points.size(), cfg.n_pos);
      chosen.insert(chosen.end(), pos.begin(), pos.end());
      for (std::size_t k : chosen) {
        const TrajectoryPoint& pt = traj.points[k];
        item.samples.push_back({id, pt.t, pt.x, pt.p, pt.V});
      }
      if (cfg.keep_trajectories) item.traj = std::move(traj);
    } catch (const Error& e) {
      item.report.reason = std::string(to_string(e.code())) + ": " + e.what();
    }
  };

  int threads = config.threads > 0
                    ? config.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  GenerationResult result;
  Dataset& data = result.dataset;
  data.meta.system = sys.name();
  data.meta.seed = config.seed;
  data.meta.radius = config.radius;
  data.meta.count = count;
  data.meta.n_pos = config.n_pos;
  data.meta.n_neg = config.n_neg;
  data.meta.T_inf = T_inf;
  data.meta.T_minus = config.T_minus;
  data.meta.residual_tol = config.residual_tol;
  data.meta.bvp_tol = config.bvp.tol;
  data.meta.integrator_tol = config.extension.integrator_tol;
  data.meta.gamma = sys.gamma().value();
  data.meta.alpha = sys.alpha();
  std::map<std::string, int> reasons;
  for (Item& item : items) {
    if (item.report.accepted) {
      ++data.meta.accepted;
      for (Sample& s : item.samples) data.samples.push_back(std::move(s));
      if (item.traj) result.trajectories.push_back(std::move(*item.traj));
    } else {
      ++result.rejected;
      ++reasons[item.report.reason.substr(0, item.report.reason.find(':'))];
    }
    result.reports.push_back(std::move(item.report));
  }
  if (count > 0 && data.meta.accepted < config.min_acceptance * count) {
    std::ostringstream msg;
    msg << "only " << data.meta.accepted << " of " << count
        << " trajectories accepted;";
    for (const auto& [why, k] : reasons) msg << " " << why << " x" << k;
    throw Error(ErrorCode::kGenerationFailed, msg.str());
  }
  return result;
}

GenerationResult generate_dataset(const ControlSystem& sys,
                                  const LinearCertificate& lc,
                                  const GenerationConfig& config) {
  if (config.count < 0 || config.n_pos < 0 || config.n_neg < 0 ||
      !(config.radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid generation counts");
  }
  std::vector<Vector> points;
  points.reserve(config.count);
  for (int i = 0; i < config.count; ++i) {
    points.push_back(sphere_point(sys.n(), config.radius, config.seed, i));
  }
  return generate_from_points(sys, lc, points, config);
}

void write_dataset_jsonl(const Dataset& data, std::ostream& out) {
  const DatasetMeta& m = data.meta;
  json meta = {{"system", m.system},
               {"seed", m.seed},
               {"radius", m.radius},
               {"count", m.count},
               {"accepted", m.accepted},
               {"n_pos", m.n_pos},
               {"n_neg", m.n_neg},
               {"T_inf", m.T_inf},
               {"T_minus", m.T_minus},
               {"residual_tol", m.residual_tol},
               {"bvp_tol", m.bvp_tol},
               {"integrator_tol", m.integrator_tol},
               {"alpha", m.alpha}};
  meta["gamma"] = std::isinf(m.gamma) ? json(nullptr) : json(m.gamma);
  out << json{{"meta", meta}}.dump() << '\n';
  for (const Sample& s : data.samples) {
    json j = {{"traj", s.traj},
              {"t", s.t},
              {"x", vector_json(s.x)},
              {"p", vector_json(s.p)},
              {"V", s.V}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing dataset");
}

Dataset read_dataset_jsonl(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIoError, "dataset line " + std::to_string(lineno) +
                                           ": " + e.what());
    }
    if (!have_meta) {
      if (!j.contains("meta") || !j["meta"].is_object()) {
        throw Error(ErrorCode::kIoError, "dataset line 1: missing 'meta' header");
      }
      const json& m = j["meta"];
      try {
        data.meta.system = m.value("system", std::string());
        data.meta.seed = m.value("seed", std::uint64_t{0});
        data.meta.radius = m.value("radius", 0.0);
        data.meta.count = m.value("count", 0);
        data.meta.accepted = m.value("accepted", 0);
        data.meta.n_pos = m.value("n_pos", 0);
        data.meta.n_neg = m.value("n_neg", 0);
        data.meta.T_inf = m.value("T_inf", 0.0);
        data.meta.T_minus = m.value("T_minus", 0.0);
        data.meta.residual_tol = m.value("residual_tol", 0.0);
        data.meta.bvp_tol = m.value("bvp_tol", 0.0);
        data.meta.integrator_tol = m.value("integrator_tol", 0.0);
        data.meta.alpha = m.value("alpha", 0.0);
        data.meta.gamma = m.contains("gamma") && m["gamma"].is_number()
                              ? m["gamma"].get<double>()
                              : std::numeric_limits<double>::infinity();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kIoError,
                    std::string("dataset meta header: ") + e.what());
      }
      have_meta = true;
      continue;
    }
    Sample s;
    if (!j.contains("traj") || !j["traj"].is_number_integer()) {
      throw Error(ErrorCode::kIoError, "dataset line " + std::to_string(lineno) +
                                           ": missing integer field 'traj'");
    }
    s.traj = j["traj"].get<int>();
    s.t = json_number(j, "t", lineno);
    s.x = json_vector(j, "x", lineno);
    s.p = json_vector(j, "p", lineno);
    s.V = json_number(j, "V", lineno);
    if (s.x.size() != s.p.size()) {
      throw Error(ErrorCode::kIoError, "dataset line " + std::to_string(lineno) +
                                           ": 'x' and 'p' differ in length");
    }
    data.samples.push_back(std::move(s));
  }
  if (!have_meta) throw Error(ErrorCode::kIoError, "dataset is empty");
  return data;
}

void write_dataset_jsonl(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path);
  write_dataset_jsonl(data, out);
}

Dataset read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return read_dataset_jsonl(in);
}

void write_trajectory_csv(const ControlSystem& sys, const Trajectory& traj,
                          std::ostream& out) {
  const int n = sys.n();
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x_" << i;
  for (int i = 1; i <= n; ++i) out << ",p_" << i;
  out << ",V,H_residual\n";
  for (const auto& pt : traj.points) {
    out << format_double(pt.t);
    for (int i = 0; i < n; ++i) out << ',' << format_double(pt.x(i));
    for (int i = 0; i < n; ++i) out << ',' << format_double(pt.p(i));
    out << ',' << format_double(pt.V) << ','
        << format_double(contact_hamiltonian(sys, pt.x, pt.V, pt.p)) << '\n';
  }
}

}  // namespace chinf
