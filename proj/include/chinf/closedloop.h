#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "chinf/approximator.h"
#include "chinf/error.h"
#include "chinf/model.h"

namespace chinf {

using Disturbance = std::function<Vector(double t, const Vector& x)>;

/// d ≡ 0 with l channels.
Disturbance zero_disturbance(int l);

/// The same scalar signal s(t) on every disturbance channel.
Disturbance uniform_disturbance(int l, std::function<double(double)> signal);

struct SimulationOptions {
  double integrator_tol = 1e-9;
  int output_points = 500;  // uniform grid on [0, T], endpoints included
};

struct SimulationResult {
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<Vector> u;
  std::vector<Vector> d;
  std::vector<double> I_z;  // ∫e^{−αs}(xᵀQx + uᵀWu)ds
  std::vector<double> I_d;  // ∫e^{−αs}dᵀGd ds
  std::vector<double> I_x;  // ∫e^{−αs}|x|²ds
  double alpha = 0.0;
  double integrator_tol = 0.0;
};

/// Raised when the state leaves 10·domain_radius; carries the trace so far.
class InstabilityDetected : public Error {
 public:
  InstabilityDetected(const std::string& what, SimulationResult partial)
      : Error(ErrorCode::kInstabilityDetected, what),
        partial_(std::move(partial)) {}
  const SimulationResult& partial() const { return partial_; }

 private:
  SimulationResult partial_;
};

/// ẋ = f(x) + g(x)u(x) + k(x)d(t, x) with the discounted integrals carried as
/// extra states of one adaptive Runge–Kutta solve.
SimulationResult simulate(const ControlSystem& sys, const Controller& controller,
                          const Disturbance& disturbance, const Vector& x0,
                          double T, const SimulationOptions& options = {});

/// Horizon with e^{−αT} ≤ tail.
double gain_horizon(double alpha, double tail = 1e-6);

struct GainCertificate {
  double I_z = 0.0;
  double I_d = 0.0;
  double ratio = 0.0;  // NaN when I_d = 0
  double gamma_threshold = 0.0;
  // Share of gamma_threshold allowed for approximation error; informational.
  double epsilon_budget = 0.0;
  bool pass = false;
  bool vacuous = false;  // I_d = 0: the gain is undefined
  // V^NN(x(0)) and the ratio after removing it; equal to the plain ratio
  // when x(0) = 0.
  double initial_state_offset = 0.0;
  double offset_ratio = 0.0;
  double truncation_factor = 0.0;  // e^{−αT}
};

/// pass ⇔ ratio ≤ gamma_threshold².
GainCertificate discounted_gain(const SimulationResult& sim,
                                double gamma_threshold,
                                double initial_state_offset = 0.0);

struct DecayFit {
  double rate = 0.0;  // slope of log|x| over the tail half; NaN when trivial
  bool trivially_stable = false;
  double final_ratio = 0.0;  // |x(T)| / |x(0)|
};

/// Least-squares slope of log|x(t)| for t ≥ T/2, using points above the
/// noise floor. A negative floor means 1e3 × the trace's integrator
/// tolerance (but at least 1e-10); below that the state is integrator noise.
/// Throws decay-violation when the slope is not negative.
DecayFit decay_rate(const SimulationResult& sim, double noise_floor = -1.0);

/// Reference signal r(node, t).
using Reference = std::function<double(int node, double t)>;

enum class TrackMode {
  kLive,  // X(t) = Y(t) + r(t)
  kHeld,  // X(t) = Y(t) + r(t_k) on [t_k, t_{k+1})
};

struct TrackingOptions {
  double update_rate_hz = 500.0;
  TrackMode mode = TrackMode::kLive;
  SimulationOptions simulation;
  double error_after = 5.0;  // start of the window for max_error_after
};

struct TrackingResult {
  std::vector<double> t;        // interval boundaries
  std::vector<Vector> X;        // absolute state at the boundaries
  std::vector<double> error;    // |X(t) − r(t)|
  std::vector<double> w_sup;    // sup over each interval of |w_k|
  double max_error_after = 0.0;
};

/// Sampled-reference tracking: on each [k s₀, (k+1)s₀) the regulator runs on
/// the relative state Y with w_k(t) = r(t) − r(t_k) as disturbance, and Y is
/// reset from the absolute state at every boundary.
TrackingResult track(const ControlSystem& sys, const Controller& controller,
                     const Reference& reference, const Vector& X0, double T,
                     const TrackingOptions& options = {});

struct DissipationAudit {
  double max_excess = 0.0;     // max_t (LHS − V^NN(x(0)))⁺
  double state_energy = 0.0;   // ∫e^{−αs}|x|²ds over the run
  double slack_constant = 0.0; // max_excess / (ε²·state_energy)
  double epsilon = 0.0;
};

/// e^{−αt}V^NN(x(t)) + ∫₀ᵗe^{−αs}(xᵀQx + uᵀWu − γ²dᵀGd)ds against V^NN(x(0)).
DissipationAudit dissipation_audit(const ControlSystem& sys,
                                   const ApproximatorParams& theta,
                                   const SimulationResult& sim, double gamma,
                                   double epsilon);

/// Columns t, x_1..x_n, u_1..u_m, d_1..d_l, I_z, I_d.
void write_trace_csv(const SimulationResult& sim, std::ostream& out);

void write_gain_json(const GainCertificate& cert, std::ostream& out);

}  // namespace chinf
