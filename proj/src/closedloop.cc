#include "chinf/closedloop.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <boost/numeric/odeint.hpp>

#include "json.hpp"

namespace chinf {
namespace {

namespace odeint = boost::numeric::odeint;
using State = std::vector<double>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Thrown from inside the integrator so odeint unwinds cleanly.
struct Escape {
  double t;
};

}  // namespace

Disturbance zero_disturbance(int l) {
  return [l](double, const Vector&) { return Vector::Zero(l); };
}

Disturbance uniform_disturbance(int l, std::function<double(double)> signal) {
  return [l, signal = std::move(signal)](double t, const Vector&) {
    return Vector::Constant(l, signal(t));
  };
}

SimulationResult simulate(const ControlSystem& sys, const Controller& controller,
                          const Disturbance& disturbance, const Vector& x0,
                          double T, const SimulationOptions& options) {
  const int n = sys.n();
  if (x0.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "initial state has wrong size");
  }
  if (!(T > 0.0) || options.output_points < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "simulation needs T > 0 and at least two output points");
  }
  const double alpha = sys.alpha();
  const double escape = 10.0 * sys.domain_radius();

  auto rhs = [&](const State& s, State& ds, double t) {
    const Eigen::Map<const Vector> x(s.data(), n);
    if (!x.allFinite() || x.norm() > 100.0 * escape) throw Escape{t};
    const Vector u = controller(x);
    const Vector d = disturbance(t, x);
    Eigen::Map<Vector>(ds.data(), n) =
        sys.drift(x) + sys.input_map(x) * u + sys.disturbance_map(x) * d;
    const double disc = std::exp(-alpha * t);
    ds[n] = disc * (x.dot(sys.Q() * x) + u.dot(sys.W() * u));
    ds[n + 1] = disc * d.dot(sys.G() * d);
    ds[n + 2] = disc * x.squaredNorm();
  };

  SimulationResult out;
  out.alpha = alpha;
  out.integrator_tol = options.integrator_tol;
  auto observer = [&](const State& s, double t) {
    const Eigen::Map<const Vector> x(s.data(), n);
    out.t.push_back(t);
    out.x.emplace_back(x);
    out.u.push_back(controller(x));
    out.d.push_back(disturbance(t, x));
    // Interpolation noise can dip below the previous value once the
    // integrand vanishes; the exact integrals never decrease.
    auto running = [](std::vector<double>& v, double next) {
      v.push_back(v.empty() ? next : std::max(v.back(), next));
    };
    running(out.I_z, s[n]);
    running(out.I_d, s[n + 1]);
    running(out.I_x, s[n + 2]);
    if (!x.allFinite() || x.norm() > escape) throw Escape{t};
  };

  State state(n + 3, 0.0);
  Eigen::Map<Vector>(state.data(), n) = x0;
  std::vector<double> times(options.output_points);
  for (int j = 0; j < options.output_points; ++j) {
    times[j] = T * j / (options.output_points - 1);
  }
  auto stepper = odeint::make_dense_output(
      options.integrator_tol, options.integrator_tol,
      odeint::runge_kutta_dopri5<State>());
  try {
    odeint::integrate_times(stepper, rhs, state, times.begin(), times.end(),
                            times[1] / 4.0, observer,
                            odeint::max_step_checker(1000000));
  } catch (const Escape& e) {
    throw InstabilityDetected(
        "state left 10·domain_radius near t = " + format_double(e.t),
        std::move(out));
  } catch (const odeint::odeint_error& e) {
    throw InstabilityDetected(std::string("integrator stalled: ") + e.what(),
                              std::move(out));
  }
  return out;
}

double gain_horizon(double alpha, double tail) {
  if (!(alpha > 0.0) || !(tail > 0.0 && tail < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "gain horizon needs α > 0 and a tail in (0, 1)");
  }
  return -std::log(tail) / alpha;
}

GainCertificate discounted_gain(const SimulationResult& sim,
                                double gamma_threshold,
                                double initial_state_offset) {
  if (sim.t.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty simulation");
  }
  GainCertificate c;
  c.I_z = sim.I_z.back();
  c.I_d = sim.I_d.back();
  c.gamma_threshold = gamma_threshold;
  c.initial_state_offset = initial_state_offset;
  c.truncation_factor = std::exp(-sim.alpha * sim.t.back());
  if (c.I_d == 0.0) {
    c.vacuous = true;
    c.pass = true;
    c.ratio = kNaN;
    c.offset_ratio = kNaN;
    return c;
  }
  c.ratio = c.I_z / c.I_d;
  c.offset_ratio = (c.I_z - initial_state_offset) / c.I_d;
  c.pass = c.ratio <= gamma_threshold * gamma_threshold;
  return c;
}

DecayFit decay_rate(const SimulationResult& sim, double noise_floor) {
  if (sim.t.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "decay fit needs a trace");
  }
  DecayFit fit;
  const double x0n = sim.x.front().norm();
  if (x0n == 0.0) {
    fit.trivially_stable = true;
    fit.rate = kNaN;
    return fit;
  }
  fit.final_ratio = sim.x.back().norm() / x0n;
  if (noise_floor < 0.0) noise_floor = std::max(1e-10, 1e3 * sim.integrator_tol);

  auto collect = [&](double t_from) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < sim.t.size(); ++j) {
      const double r = sim.x[j].norm();
      if (sim.t[j] >= t_from && r > noise_floor) {
        pts.emplace_back(sim.t[j], std::log(r));
      }
    }
    return pts;
  };
  auto pts = collect(0.5 * sim.t.back());
  // Fast decay can reach the noise floor before the tail half starts.
  if (pts.size() < 3) pts = collect(0.0);
  if (pts.size() < 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "too few points above the noise floor for a decay fit");
  }
  double mt = 0.0, my = 0.0;
  for (const auto& [t, y] : pts) {
    mt += t;
    my += y;
  }
  mt /= pts.size();
  my /= pts.size();
  double stt = 0.0, sty = 0.0;
  for (const auto& [t, y] : pts) {
    stt += (t - mt) * (t - mt);
    sty += (t - mt) * (y - my);
  }
  fit.rate = sty / stt;
  if (!(fit.rate < 0.0)) {
    throw Error(ErrorCode::kDecayViolation,
                "log|x| slope " + format_double(fit.rate) + " is not negative");
  }
  return fit;
}

TrackingResult track(const ControlSystem& sys, const Controller& controller,
                     const Reference& reference, const Vector& X0, double T,
                     const TrackingOptions& options) {
  const int n = sys.n();
  if (sys.l() != n) {
    throw Error(ErrorCode::kInvalidArgument,
                "tracking feeds the reference increment through k(x), which "
                "needs l = n");
  }
  if (X0.size() != n || !(T > 0.0) || !(options.update_rate_hz > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad tracking arguments");
  }
  const int K = static_cast<int>(std::lround(T * options.update_rate_hz));
  if (K < 1) throw Error(ErrorCode::kInvalidArgument, "horizon shorter than s₀");
  const double escape = 10.0 * sys.domain_radius();
  const double tol = options.simulation.integrator_tol;

  auto ref = [&](double t) {
    Vector r(n);
    for (int i = 0; i < n; ++i) r(i) = reference(i, t);
    return r;
  };
  auto boundary = [&](int k) { return k / options.update_rate_hz; };

  TrackingResult out;
  auto record = [&](double t, const Vector& X) {
    out.t.push_back(t);
    out.X.push_back(X);
    out.error.push_back((X - ref(t)).norm());
  };

  Vector X = X0;
  record(0.0, X);
  State y(n);
  for (int k = 0; k < K; ++k) {
    const double tk = boundary(k);
    const double tk1 = boundary(k + 1);
    const Vector rk = ref(tk);
    Eigen::Map<Vector>(y.data(), n) = X - rk;

    auto rhs = [&](const State& s, State& ds, double t) {
      const Eigen::Map<const Vector> ys(s.data(), n);
      if (!ys.allFinite() || ys.norm() > 100.0 * escape) throw Escape{t};
      const Vector w = ref(t) - rk;
      Eigen::Map<Vector>(ds.data(), n) = sys.drift(ys) +
                                         sys.input_map(ys) * controller(ys) +
                                         sys.disturbance_map(ys) * w;
    };
    try {
      odeint::integrate_adaptive(
          odeint::make_controlled(tol, tol, odeint::runge_kutta_dopri5<State>()),
          rhs, y, tk, tk1, (tk1 - tk) / 4.0);
    } catch (const Escape& e) {
      throw Error(ErrorCode::kInstabilityDetected,
                  "tracking state diverged near t = " + format_double(e.t));
    }
    double w_sup = 0.0;
    for (int j = 0; j <= 4; ++j) {
      const double t = tk + (tk1 - tk) * j / 4.0;
      w_sup = std::max(w_sup, (ref(t) - rk).norm());
    }
    out.w_sup.push_back(w_sup);

    const Eigen::Map<const Vector> Y(y.data(), n);
    X = Y + (options.mode == TrackMode::kLive ? ref(tk1) : rk);
    if (!X.allFinite() || X.norm() > escape) {
      throw Error(ErrorCode::kInstabilityDetected,
                  "tracking state left 10·domain_radius at t = " +
                      format_double(tk1));
    }
    record(tk1, X);
  }
  for (std::size_t j = 0; j < out.t.size(); ++j) {
    if (out.t[j] >= options.error_after) {
      out.max_error_after = std::max(out.max_error_after, out.error[j]);
    }
  }
  return out;
}

DissipationAudit dissipation_audit(const ControlSystem& sys,
                                   const ApproximatorParams& theta,
                                   const SimulationResult& sim, double gamma,
                                   double epsilon) {
  if (sim.t.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty simulation");
  }
  DissipationAudit a;
  a.epsilon = epsilon;
  const double g2 = std::isinf(gamma) ? 0.0 : gamma * gamma;
  const double v0 = forward(theta, sim.x.front()).V;
  for (std::size_t j = 0; j < sim.t.size(); ++j) {
    double lhs = std::exp(-sys.alpha() * sim.t[j]) * forward(theta, sim.x[j]).V +
                 sim.I_z[j];
    // γ = ∞ removes the disturbance term; skip it rather than form 0·∞.
    if (g2 > 0.0) lhs -= g2 * sim.I_d[j];
    a.max_excess = std::max(a.max_excess, lhs - v0);
  }
  a.state_energy = sim.I_x.back();
  const double denom = epsilon * epsilon * a.state_energy;
  a.slack_constant = denom > 0.0 ? a.max_excess / denom : 0.0;
  return a;
}

void write_trace_csv(const SimulationResult& sim, std::ostream& out) {
  if (sim.t.empty()) return;
  const auto n = sim.x.front().size();
  const auto m = sim.u.front().size();
  const auto l = sim.d.front().size();
  out << "t";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x_" << i;
  for (Eigen::Index i = 1; i <= m; ++i) out << ",u_" << i;
  for (Eigen::Index i = 1; i <= l; ++i) out << ",d_" << i;
  out << ",I_z,I_d\n";
  for (std::size_t j = 0; j < sim.t.size(); ++j) {
    out << format_double(sim.t[j]);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(sim.x[j](i));
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << format_double(sim.u[j](i));
    for (Eigen::Index i = 0; i < l; ++i) out << ',' << format_double(sim.d[j](i));
    out << ',' << format_double(sim.I_z[j]) << ',' << format_double(sim.I_d[j])
        << '\n';
  }
}

void write_gain_json(const GainCertificate& c, std::ostream& out) {
  auto num = [](double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["I_z"] = num(c.I_z);
  j["I_d"] = num(c.I_d);
  j["ratio"] = num(c.ratio);
  j["gamma_threshold"] = num(c.gamma_threshold);
  j["epsilon_budget"] = num(c.epsilon_budget);
  j["pass"] = c.pass;
  j["vacuous"] = c.vacuous;
  j["initial_state_offset"] = num(c.initial_state_offset);
  j["offset_ratio"] = num(c.offset_ratio);
  j["truncation_factor"] = num(c.truncation_factor);
  out << j.dump(2) << '\n';
}

}  // namespace chinf
