// Command-line driver: analyze, gen-data, train, simulate, gain, track.
// Exit codes: 0 success, 1 validation failure, 2 usage error.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "chinf/approximator.h"
#include "chinf/closedloop.h"
#include "chinf/linear_analysis.h"
#include "chinf/manifold.h"
#include "chinf/run_config.h"
#include "chinf/signal.h"
#include "json.hpp"

namespace chinf {
namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kUsageError = 2;

// Errors the user fixes by changing arguments or files.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const Common& c) {
  return c.config.empty() ? RunConfig{} : read_run_config(c.config);
}

// Writes through `fn` to --out, or stdout when --out is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  fn(out);
  if (!out) throw UsageError("write to '" + path + "' failed");
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw UsageError("missing --" + what);
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + what + " '" + path + "'");
}

SignalExpr signal_or_usage(const std::string& flag, const std::string& src) {
  try {
    return parse_signal(src);
  } catch (const SignalParseError& e) {
    throw UsageError("--" + flag + " \"" + src + "\": " + e.what());
  }
}

json complex_list(const std::vector<std::complex<double>>& zs) {
  json arr = json::array();
  for (const auto& z : zs) arr.push_back({z.real(), z.imag()});
  return arr;
}

json row_major(const Matrix& M) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) arr.push_back(M(i, j));
  }
  return arr;
}

Vector initial_state(const RunConfig& cfg, int n) {
  const SimulationConfig& s = cfg.simulation;
  if (!s.x0.empty()) {
    if (static_cast<int>(s.x0.size()) != n) {
      throw UsageError("field 'simulation.x0': expected " + std::to_string(n) +
                       " entries");
    }
    return Eigen::Map<const Vector>(s.x0.data(), n);
  }
  if (s.x0_radius > 0.0) return sphere_point(n, s.x0_radius, s.seed, 0);
  return Vector::Zero(n);
}

ApproximatorParams load_checkpoint(const std::string& path) {
  require_file("checkpoint", path);
  return read_checkpoint(path);
}

int cmd_analyze(const Common& c) {
  const RunConfig cfg = load_config(c);
  const ControlSystem sys = build_system(cfg);
  const LinearCertificate lc = analyze_linear(sys, alpha_bar_level(cfg));
  const StabilityCertificate& s = lc.cert;
  json j;
  j["system"] = sys.name();
  j["n"] = sys.n();
  j["gamma"] = sys.gamma().is_infinite() ? json("inf") : json(sys.gamma().value());
  j["alpha_fraction"] = cfg.alpha_fraction;
  j["alpha"] = s.alpha;
  j["alpha_bar"] = s.alpha_bar;
  j["delta0"] = s.delta0;
  j["margin"] = s.nominal_margin;
  j["characteristic_margin"] = s.characteristic_margin;
  j["H_stable_margin"] = s.H_stable_margin;
  j["T_inf"] = s.nominal_margin > 0.0
                   ? json(pick_horizon(s.nominal_margin, cfg.generation.tail_tol))
                   : json(nullptr);
  j["gare_residual"] = s.gare_residual;
  j["P"] = row_major(s.P);
  j["closedloop_spectrum"] = complex_list(s.closedloop_spectrum);
  emit(c.out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  return kOk;
}

int cmd_gen_data(const Common& c, std::optional<int> count,
                 std::optional<double> radius) {
  RunConfig cfg = load_config(c);
  if (c.out.empty()) throw UsageError("gen-data needs --out");
  if (c.seed) cfg.generation.seed = *c.seed;
  if (count) cfg.generation.count = *count;
  if (radius) cfg.generation.radius = *radius;
  const ControlSystem sys = build_system(cfg);
  const LinearCertificate lc = analyze_linear(sys, alpha_bar_level(cfg));
  const GenerationResult r = generate_dataset(sys, lc, cfg.generation);
  write_dataset_jsonl(r.dataset, c.out);
  std::cerr << "accepted " << r.dataset.meta.accepted << " of "
            << cfg.generation.count << " trajectories, " << r.dataset.size()
            << " samples\n";
  for (const TrajectoryReport& rep : r.reports) {
    if (!rep.accepted) {
      std::cerr << "  rejected " << rep.index << ": " << rep.reason << '\n';
    }
  }
  return kOk;
}

int cmd_train(const Common& c, const std::string& data, const std::string& val,
              std::optional<int> epochs, std::string loss_csv) {
  RunConfig cfg = load_config(c);
  if (c.out.empty()) throw UsageError("train needs --out");
  if (c.seed) cfg.training.seed = *c.seed;
  if (epochs) cfg.training.epochs = *epochs;
  require_file("data", data);
  require_file("val", val);
  const Dataset train_set = read_dataset_jsonl(data);
  const Dataset val_set = read_dataset_jsonl(val);
  const ControlSystem sys = build_system(cfg);
  if (!train_set.empty() && train_set.samples.front().x.size() != sys.n()) {
    throw UsageError("data '" + data + "': state dimension does not match the "
                     "configured system");
  }
  const LinearCertificate lc = analyze_linear(sys, alpha_bar_level(cfg));
  const TrainOptions opts = train_options(cfg);
  const ApproximatorParams theta0 =
      init_params(sys.n(), cfg.training.hidden, cfg.training.seed);
  if (loss_csv.empty()) loss_csv = c.out + ".loss.csv";

  CheckpointMeta meta;
  meta.seed = cfg.training.seed;
  meta.epochs = cfg.training.epochs;
  try {
    const TrainResult r = train(theta0, train_set, val_set, lc.cert.P, opts);
    meta.final_train_loss = r.report.final_train_loss;
    meta.val_loss = r.report.val_loss;
    meta.max_pointwise_error = r.report.max_pointwise_error;
    meta.jacobian_gap = r.report.jacobian_gap;
    write_checkpoint(r.theta, meta, c.out);
    emit(loss_csv, [&](std::ostream& os) { write_loss_csv(r.report, os); });
    json j{{"train_loss", meta.final_train_loss},
           {"val_loss", meta.val_loss},
           {"max_pointwise_error", meta.max_pointwise_error},
           {"jacobian_gap", meta.jacobian_gap},
           {"P_frobenius", lc.cert.P.norm()}};
    std::cout << j.dump(2) << '\n';
  } catch (const TrainingDiverged& e) {
    write_checkpoint(e.last_finite(), meta, c.out);
    throw;
  }
  return kOk;
}

Controller pick_controller(const std::string& kind,
                           const ApproximatorParams* theta,
                           const ControlSystem& sys, const Matrix& P) {
  if (kind == "nn") return nn_controller(*theta, sys);
  if (kind == "linear") return linear_controller(P, sys);
  throw UsageError("--controller expects 'nn' or 'linear'");
}

int cmd_simulate(const Common& c, const std::string& checkpoint,
                 std::optional<std::string> disturbance,
                 const std::string& controller_kind) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.simulation.seed = *c.seed;
  if (disturbance) cfg.simulation.disturbance = *disturbance;
  const ControlSystem sys = build_system(cfg);
  const LinearCertificate lc = analyze_linear(sys, alpha_bar_level(cfg));
  std::optional<ApproximatorParams> theta;
  if (controller_kind == "nn") theta = load_checkpoint(checkpoint);
  const Controller u =
      pick_controller(controller_kind, theta ? &*theta : nullptr, sys, lc.cert.P);
  const SignalExpr d = signal_or_usage("disturbance", cfg.simulation.disturbance);
  SimulationOptions so;
  so.output_points = cfg.simulation.output_points;
  so.integrator_tol = cfg.simulation.integrator_tol;
  const double T = cfg.simulation.T > 0.0 ? cfg.simulation.T : 30.0;
  const Vector x0 = initial_state(cfg, sys.n());
  try {
    const SimulationResult sim = simulate(
        sys, u, uniform_disturbance(sys.l(), [d](double t) { return d(t); }), x0,
        T, so);
    emit(c.out, [&](std::ostream& os) { write_trace_csv(sim, os); });
  } catch (const InstabilityDetected& e) {
    emit(c.out, [&](std::ostream& os) { write_trace_csv(e.partial(), os); });
    throw;
  }
  return kOk;
}

int cmd_gain(const Common& c, const std::string& checkpoint,
             std::optional<std::string> disturbance,
             std::optional<double> gamma_threshold,
             std::optional<double> epsilon, const std::string& trace) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.simulation.seed = *c.seed;
  if (disturbance) cfg.simulation.disturbance = *disturbance;
  if (gamma_threshold) cfg.simulation.gamma_threshold = *gamma_threshold;
  if (epsilon) cfg.simulation.epsilon_budget = *epsilon;
  const ControlSystem sys = build_system(cfg);
  const ApproximatorParams theta = load_checkpoint(checkpoint);
  const SignalExpr d = signal_or_usage("disturbance", cfg.simulation.disturbance);
  SimulationOptions so;
  so.output_points = cfg.simulation.output_points;
  so.integrator_tol = cfg.simulation.integrator_tol;
  const double T =
      cfg.simulation.T > 0.0 ? cfg.simulation.T : gain_horizon(sys.alpha());
  const Vector x0 = initial_state(cfg, sys.n());
  const SimulationResult sim = simulate(
      sys, nn_controller(theta, sys),
      uniform_disturbance(sys.l(), [d](double t) { return d(t); }), x0, T, so);
  GainCertificate cert = discounted_gain(
      sim, cfg.simulation.gamma_threshold + cfg.simulation.epsilon_budget,
      forward(theta, x0).V);
  cert.epsilon_budget = cfg.simulation.epsilon_budget;
  emit(c.out, [&](std::ostream& os) { write_gain_json(cert, os); });
  if (!trace.empty()) {
    emit(trace, [&](std::ostream& os) { write_trace_csv(sim, os); });
  }
  return cert.pass ? kOk : kValidationFailure;
}

int cmd_track(const Common& c, const std::string& checkpoint,
              std::optional<std::string> reference, std::optional<double> rate,
              std::optional<double> max_error) {
  RunConfig cfg = load_config(c);
  if (reference) cfg.simulation.reference = *reference;
  if (rate) cfg.simulation.update_rate_hz = *rate;
  const ControlSystem sys = build_system(cfg);
  const ApproximatorParams theta = load_checkpoint(checkpoint);
  const SignalExpr r = signal_or_usage("reference", cfg.simulation.reference);
  TrackingOptions opts;
  opts.update_rate_hz = cfg.simulation.update_rate_hz;
  opts.mode = cfg.simulation.track_mode == "held" ? TrackMode::kHeld
                                                  : TrackMode::kLive;
  opts.simulation.integrator_tol = cfg.simulation.integrator_tol;
  opts.error_after = cfg.simulation.error_after;
  const double T = cfg.simulation.T > 0.0 ? cfg.simulation.T : 30.0;
  const TrackingResult tr =
      track(sys, nn_controller(theta, sys),
            [r](int, double t) { return r(t); }, initial_state(cfg, sys.n()),
            T, opts);
  emit(c.out, [&](std::ostream& os) {
    os << "t";
    for (int i = 1; i <= sys.n(); ++i) os << ",X_" << i;
    os << ",error\n";
    char buf[32];
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << buf;
    };
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
      put(tr.t[k]);
      for (int i = 0; i < sys.n(); ++i) {
        os << ',';
        put(tr.X[k](i));
      }
      os << ',';
      put(tr.error[k]);
      os << '\n';
    }
  });
  std::cerr << "max tracking error after t = " << opts.error_after << ": "
            << tr.max_error_after << '\n';
  if (max_error && tr.max_error_after > *max_error) return kValidationFailure;
  return kOk;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "Seed override");
  cmd->add_option("--out", c.out, "Output path");
}

int run(int argc, char** argv) {
  CLI::App app{"Discounted H∞ feedback via stable-manifold data and a sine network"};
  app.require_subcommand(1);

  Common analyze_c, gen_c, train_c, sim_c, gain_c, track_c;

  CLI::App* analyze = app.add_subcommand("analyze", "Linear analysis certificate");
  add_common(analyze, analyze_c);

  CLI::App* gen = app.add_subcommand("gen-data", "Generate characteristic data");
  add_common(gen, gen_c);
  std::optional<int> gen_count;
  std::optional<double> gen_radius;
  gen->add_option("--count", gen_count, "Number of trajectories");
  gen->add_option("--radius", gen_radius, "Sampling sphere radius");

  CLI::App* tr = app.add_subcommand("train", "Train the approximator");
  add_common(tr, train_c);
  std::string data, val, loss_csv;
  std::optional<int> epochs;
  tr->add_option("--data", data, "Training dataset (JSONL)")->required();
  tr->add_option("--val", val, "Validation dataset (JSONL)")->required();
  tr->add_option("--epochs", epochs, "Epoch count override");
  tr->add_option("--loss-csv", loss_csv, "Loss history (default <out>.loss.csv)");

  std::string sim_ckpt, sim_controller = "nn";
  std::optional<std::string> sim_dist;
  CLI::App* sim = app.add_subcommand("simulate", "Closed-loop trace");
  add_common(sim, sim_c);
  sim->add_option("--checkpoint", sim_ckpt, "Trained parameters");
  sim->add_option("--disturbance", sim_dist, "Disturbance signal d(t)");
  sim->add_option("--controller", sim_controller, "'nn' or 'linear'");

  std::string gain_ckpt, gain_trace;
  std::optional<std::string> gain_dist;
  std::optional<double> gain_threshold, gain_eps;
  CLI::App* gain = app.add_subcommand("gain", "Discounted L2-gain certificate");
  add_common(gain, gain_c);
  gain->add_option("--checkpoint", gain_ckpt, "Trained parameters")->required();
  gain->add_option("--disturbance", gain_dist, "Disturbance signal d(t)");
  gain->add_option("--gamma-threshold", gain_threshold, "Nominal gain level");
  gain->add_option("--epsilon", gain_eps, "Approximation budget added to the level");
  gain->add_option("--trace", gain_trace, "Also write the trace CSV here");

  std::string track_ckpt;
  std::optional<std::string> track_ref;
  std::optional<double> track_rate, track_max;
  CLI::App* trk = app.add_subcommand("track", "Sampled-reference tracking");
  add_common(trk, track_c);
  trk->add_option("--checkpoint", track_ckpt, "Trained parameters")->required();
  trk->add_option("--reference", track_ref, "Reference signal r(t)");
  trk->add_option("--rate", track_rate, "Reset frequency in Hz");
  trk->add_option("--max-error", track_max, "Fail when the late error exceeds this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*analyze) return cmd_analyze(analyze_c);
    if (*gen) return cmd_gen_data(gen_c, gen_count, gen_radius);
    if (*tr) return cmd_train(train_c, data, val, epochs, loss_csv);
    if (*sim) return cmd_simulate(sim_c, sim_ckpt, sim_dist, sim_controller);
    if (*gain) {
      return cmd_gain(gain_c, gain_ckpt, gain_dist, gain_threshold, gain_eps,
                      gain_trace);
    }
    if (*trk) return cmd_track(track_c, track_ckpt, track_ref, track_rate, track_max);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::kInvalidConfig:
      case ErrorCode::kInvalidArgument:
      case ErrorCode::kIoError:
      case ErrorCode::kSyntaxError:
      case ErrorCode::kUnknownIdentifier:
      case ErrorCode::kUnsupportedModel:
        return kUsageError;
      default:
        return kValidationFailure;
    }
  }
  return kUsageError;
}

}  // namespace
}  // namespace chinf

int main(int argc, char** argv) { return chinf::run(argc, argv); }
