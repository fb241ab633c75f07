#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "chinf/linear_analysis.h"
#include "chinf/model.h"

namespace chinf {

struct TrajectoryPoint {
  double t = 0.0;
  Vector x;
  Vector p;
  double V = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;  // strictly increasing t on [T₋, T∞]
  std::size_t origin_index = 0;         // index of the t = 0 point
  double h_residual_max = 0.0;
  int bvp_iterations = 0;
  bool converged = false;
  // Algebraic value (pᵀf + pᵀMp + xᵀQx)/α at each point; empty when α = 0.
  std::vector<double> value_algebraic;
  double value_discrepancy = 0.0;  // max |V_ode − V_alg|, NaN when α = 0
  double tail_constant = 0.0;      // |x(T∞)| / (e^{−margin·T∞}|x(0)|)
};

/// Smallest T∞ (rounded up to one decimal) with exp(−margin·T∞) ≤ tail_tol.
double pick_horizon(double margin, double tail_tol);

struct BvpOptions {
  double tol = 1e-8;  // sup-norm of the Picard update
  int max_iter = 100;
  double blowup_cap = 0.0;  // ≤ 0 selects 1e3·|x̄₀|
  // Two-segment mesh: a fine initial layer [0, layer_span] with step
  // layer_dt followed by steps of tail_dt up to T∞. Zeros pick defaults from
  // the spectral radius of the stable block.
  double layer_span = 0.0;
  double layer_dt = 0.0;
  double tail_dt = 0.0;
  // Solve on the mesh and on its bisection and combine the two
  // second-order solutions.
  bool richardson = true;
};

/// Decoupled-coordinate solution of the local two-point BVP on [0, T∞] before
/// value recovery.
struct LocalSolution {
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<Vector> p;
  int iterations = 0;
  bool converged = false;
};

/// Picard iteration for x̄(0) = x̄₀, p̄(T∞) = 0. Throws bvp-diverged when the
/// iteration fails to settle within max_iter or blows up.
LocalSolution solve_local_bvp(const ControlSystem& sys,
                              const DecouplingTransform& dt,
                              const Vector& x_bar0, double T_inf,
                              const BvpOptions& options = {});

enum class ValueMethod { kOde, kAlgebraic };

/// Value along a trajectory. kOde integrates V̇ = ẋᵀp backward from
/// V(t_end) = ½xᵀPx; kAlgebraic uses the zero level of the contact
/// Hamiltonian and needs α > 0.
std::vector<double> recover_value(const ControlSystem& sys, const Matrix& P,
                                  const std::vector<double>& t,
                                  const std::vector<Vector>& x,
                                  const std::vector<Vector>& p,
                                  ValueMethod method);

struct ExtensionOptions {
  double integrator_tol = 1e-9;
  int output_points = 16;
  double domain_box = 0.0;  // sup-norm bound on x; ≤ 0 disables
};

/// Backward IVP of the characteristic system from (x(0), p(0), V(0)) down to
/// T₋ < 0. Points are returned with increasing t and exclude t = 0. Throws
/// stiff-extension when the integrator stalls or the state leaves the box.
std::vector<TrajectoryPoint> extend_backward(const ControlSystem& sys,
                                             const TrajectoryPoint& head,
                                             double T_minus,
                                             const ExtensionOptions& options = {});

struct GenerationConfig {
  int count = 0;
  double radius = 0.8;
  int n_pos = 22;
  int n_neg = 4;
  std::uint64_t seed = 0;
  double T_inf = 0.0;  // ≤ 0 picks the horizon from the nominal margin
  double T_minus = -0.015;
  double tail_tol = 1e-5;
  double residual_tol = 1e-5;
  BvpOptions bvp;
  ExtensionOptions extension;
  int threads = 0;  // ≤ 0 uses the hardware concurrency
  double min_acceptance = 0.5;  // below this share → generation-failed
  bool keep_trajectories = false;
};

/// Full pipeline for one initial point: BVP, value recovery, backward
/// extension and residual audit. x̄₀ = x₀.
Trajectory generate_trajectory(const ControlSystem& sys,
                               const LinearCertificate& lc, const Vector& x0,
                               double T_inf, const GenerationConfig& config);

struct Sample {
  int traj = 0;
  double t = 0.0;
  Vector x;
  Vector p;
  double V = 0.0;
};

struct DatasetMeta {
  std::string system;
  std::uint64_t seed = 0;
  double radius = 0.0;
  int count = 0;
  int accepted = 0;
  int n_pos = 0;
  int n_neg = 0;
  double T_inf = 0.0;
  double T_minus = 0.0;
  double residual_tol = 0.0;
  double bvp_tol = 0.0;
  double integrator_tol = 0.0;
  double gamma = 0.0;  // +inf for the HJB case
  double alpha = 0.0;
};

struct Dataset {
  std::vector<Sample> samples;
  DatasetMeta meta;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
};

struct TrajectoryReport {
  int index = 0;
  bool accepted = false;
  std::string reason;  // empty when accepted
  double h_residual_max = 0.0;
  double value_discrepancy = 0.0;
  int bvp_iterations = 0;
};

struct GenerationResult {
  Dataset dataset;
  int rejected = 0;
  std::vector<TrajectoryReport> reports;
  std::vector<Trajectory> trajectories;  // filled when keep_trajectories
};

/// Initial points x₀ on the sphere of the given radius; point i depends only
/// on (seed, i).
Vector sphere_point(int n, double radius, std::uint64_t seed, int index);

/// Runs generate_trajectory on every initial point in parallel and samples
/// n_pos points from t ≥ 0 and n_neg from t < 0 on each accepted trajectory.
/// Trajectory ids are `id_offset + i`. Throws generation-failed when the
/// accepted share falls below min_acceptance.
GenerationResult generate_from_points(const ControlSystem& sys,
                                      const LinearCertificate& lc,
                                      const std::vector<Vector>& initial_points,
                                      const GenerationConfig& config,
                                      int id_offset = 0);

/// Draws `config.count` points with sphere_point and calls
/// generate_from_points.
GenerationResult generate_dataset(const ControlSystem& sys,
                                  const LinearCertificate& lc,
                                  const GenerationConfig& config);

/// JSON Lines with a leading {"meta":{...}} header.
void write_dataset_jsonl(const Dataset& data, std::ostream& out);
Dataset read_dataset_jsonl(std::istream& in);
void write_dataset_jsonl(const Dataset& data, const std::string& path);
Dataset read_dataset_jsonl(const std::string& path);

/// Columns t, x_1..x_n, p_1..p_n, V, H_residual.
void write_trajectory_csv(const ControlSystem& sys, const Trajectory& traj,
                          std::ostream& out);

}  // namespace chinf
