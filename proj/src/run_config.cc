#include "chinf/run_config.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "chinf/linear_analysis.h"
#include "json.hpp"

namespace chinf {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kInvalidConfig, "field '" + field + "': " + what);
}

// Walks one JSON object, rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) bad(field(key), "unknown field");
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) bad(field(key), "expected a number");
      out = v->get<double>();
    }
  }

  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) bad(field(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) bad(field(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) bad(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename T>
  void list(const std::string& key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) bad(field(key), "expected an array");
      out.clear();
      for (const json& e : *v) {
        if constexpr (std::is_integral_v<T>) {
          if (!e.is_number_integer()) bad(field(key), "expected integers");
        } else {
          if (!e.is_number()) bad(field(key), "expected numbers");
        }
        out.push_back(e.get<T>());
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_system(const json& j, SystemSpec& s) {
  Section sec(j, "system");
  sec.string("name", s.name);
  if (s.name == "allen_cahn") {
    sec.integer("N", s.allen_cahn.N);
    sec.number("sigma", s.allen_cahn.sigma);
    sec.number("domain_radius", s.allen_cahn.domain_radius);
  } else if (s.name == "scalar_lq") {
    sec.number("a", s.scalar_lq.a);
    sec.number("b", s.scalar_lq.b);
    sec.number("k", s.scalar_lq.k);
    sec.number("q", s.scalar_lq.q);
    sec.number("w", s.scalar_lq.w);
    sec.number("g", s.scalar_lq.g);
    sec.number("domain_radius", s.scalar_lq.domain_radius);
  } else {
    bad("system.name", "unknown system '" + s.name + "'");
  }
  sec.finish();
}

void read_generation(const json& j, GenerationConfig& g) {
  Section sec(j, "generation");
  sec.integer("count", g.count);
  sec.number("radius", g.radius);
  sec.integer("n_pos", g.n_pos);
  sec.integer("n_neg", g.n_neg);
  sec.unsigned64("seed", g.seed);
  sec.number("T_inf", g.T_inf);
  sec.number("T_minus", g.T_minus);
  sec.number("tail_tol", g.tail_tol);
  sec.number("residual_tol", g.residual_tol);
  sec.number("bvp_tol", g.bvp.tol);
  sec.integer("bvp_max_iter", g.bvp.max_iter);
  sec.number("integrator_tol", g.extension.integrator_tol);
  sec.integer("threads", g.threads);
  sec.number("min_acceptance", g.min_acceptance);
  if (g.count < 0) bad("generation.count", "must be non-negative");
  if (!(g.radius > 0.0)) bad("generation.radius", "must be positive");
  if (g.n_pos < 0 || g.n_neg < 0) bad("generation.n_pos", "counts must be non-negative");
  if (g.T_minus > 0.0) bad("generation.T_minus", "must be ≤ 0");
  sec.finish();
}

void read_training(const json& j, TrainingConfig& t) {
  Section sec(j, "training");
  sec.list("hidden", t.hidden);
  sec.integer("epochs", t.epochs);
  sec.number("base_lr", t.base_lr);
  sec.integer("decay_every", t.decay_every);
  sec.integer("batch_size", t.batch_size);
  sec.number("sigma1", t.sigma1);
  sec.number("sigma2", t.sigma2);
  sec.number("sigma3", t.sigma3);
  sec.number("nu", t.nu);
  sec.string("jacobian_norm", t.jacobian_norm);
  sec.unsigned64("seed", t.seed);
  if (t.hidden.empty()) bad("training.hidden", "needs at least one layer");
  for (int w : t.hidden) {
    if (w <= 0) bad("training.hidden", "widths must be positive");
  }
  if (t.epochs < 0) bad("training.epochs", "must be non-negative");
  if (t.decay_every <= 0) bad("training.decay_every", "must be positive");
  if (t.jacobian_norm != "frobenius" && t.jacobian_norm != "spectral") {
    bad("training.jacobian_norm", "expected 'frobenius' or 'spectral'");
  }
  sec.finish();
}

void read_simulation(const json& j, SimulationConfig& s) {
  Section sec(j, "simulation");
  sec.number("T", s.T);
  sec.integer("output_points", s.output_points);
  sec.number("integrator_tol", s.integrator_tol);
  sec.string("disturbance", s.disturbance);
  sec.list("x0", s.x0);
  sec.number("x0_radius", s.x0_radius);
  sec.unsigned64("seed", s.seed);
  sec.number("gamma_threshold", s.gamma_threshold);
  sec.number("epsilon_budget", s.epsilon_budget);
  sec.string("reference", s.reference);
  sec.number("update_rate_hz", s.update_rate_hz);
  sec.number("error_after", s.error_after);
  sec.string("track_mode", s.track_mode);
  if (s.output_points < 2) bad("simulation.output_points", "must be at least 2");
  if (!(s.integrator_tol > 0.0)) bad("simulation.integrator_tol", "must be positive");
  if (!(s.update_rate_hz > 0.0)) bad("simulation.update_rate_hz", "must be positive");
  if (s.track_mode != "live" && s.track_mode != "held") {
    bad("simulation.track_mode", "expected 'live' or 'held'");
  }
  sec.finish();
}

json gamma_json(GainLevel g) {
  return g.is_infinite() ? json("inf") : json(g.value());
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed JSON: ") + e.what());
  }
  RunConfig c;
  Section sec(j, "");
  const json* version = sec.find("version");
  if (!version) bad("version", "missing");
  if (!version->is_number_integer() || version->get<int>() != 1) {
    bad("version", "unsupported version " + version->dump());
  }
  if (const json* s = sec.find("system")) read_system(*s, c.system);
  if (const json* g = sec.find("gamma")) {
    if (g->is_string() && g->get<std::string>() == "inf") {
      c.gamma = GainLevel::infinite();
    } else if (g->is_number() && g->get<double>() > 0.0) {
      c.gamma = GainLevel::finite(g->get<double>());
    } else {
      bad("gamma", "expected a positive number or \"inf\"");
    }
  }
  sec.number("alpha_fraction", c.alpha_fraction);
  if (!(c.alpha_fraction >= 0.0 && c.alpha_fraction < 1.0)) {
    bad("alpha_fraction", "must be in [0, 1)");
  }
  sec.string("alpha_bar_gamma", c.alpha_bar_gamma);
  if (c.alpha_bar_gamma != "working" && c.alpha_bar_gamma != "infinite") {
    bad("alpha_bar_gamma", "expected 'working' or 'infinite'");
  }
  if (const json* g = sec.find("generation")) read_generation(*g, c.generation);
  if (const json* t = sec.find("training")) read_training(*t, c.training);
  if (const json* s = sec.find("simulation")) read_simulation(*s, c.simulation);
  sec.finish();
  return c;
}

RunConfig read_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_run_config(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["version"] = c.version;
  json sys;
  sys["name"] = c.system.name;
  if (c.system.name == "allen_cahn") {
    sys["N"] = c.system.allen_cahn.N;
    sys["sigma"] = c.system.allen_cahn.sigma;
    sys["domain_radius"] = c.system.allen_cahn.domain_radius;
  } else {
    const ScalarLqConfig& s = c.system.scalar_lq;
    sys["a"] = s.a;
    sys["b"] = s.b;
    sys["k"] = s.k;
    sys["q"] = s.q;
    sys["w"] = s.w;
    sys["g"] = s.g;
    sys["domain_radius"] = s.domain_radius;
  }
  j["system"] = sys;
  j["gamma"] = gamma_json(c.gamma);
  j["alpha_fraction"] = c.alpha_fraction;
  j["alpha_bar_gamma"] = c.alpha_bar_gamma;
  const GenerationConfig& g = c.generation;
  j["generation"] = {{"count", g.count},
                     {"radius", g.radius},
                     {"n_pos", g.n_pos},
                     {"n_neg", g.n_neg},
                     {"seed", g.seed},
                     {"T_inf", g.T_inf},
                     {"T_minus", g.T_minus},
                     {"tail_tol", g.tail_tol},
                     {"residual_tol", g.residual_tol},
                     {"bvp_tol", g.bvp.tol},
                     {"bvp_max_iter", g.bvp.max_iter},
                     {"integrator_tol", g.extension.integrator_tol},
                     {"threads", g.threads},
                     {"min_acceptance", g.min_acceptance}};
  const TrainingConfig& t = c.training;
  j["training"] = {{"hidden", t.hidden},
                   {"epochs", t.epochs},
                   {"base_lr", t.base_lr},
                   {"decay_every", t.decay_every},
                   {"batch_size", t.batch_size},
                   {"sigma1", t.sigma1},
                   {"sigma2", t.sigma2},
                   {"sigma3", t.sigma3},
                   {"nu", t.nu},
                   {"jacobian_norm", t.jacobian_norm},
                   {"seed", t.seed}};
  const SimulationConfig& s = c.simulation;
  j["simulation"] = {{"T", s.T},
                     {"output_points", s.output_points},
                     {"integrator_tol", s.integrator_tol},
                     {"disturbance", s.disturbance},
                     {"x0", s.x0},
                     {"x0_radius", s.x0_radius},
                     {"seed", s.seed},
                     {"gamma_threshold", s.gamma_threshold},
                     {"epsilon_budget", s.epsilon_budget},
                     {"reference", s.reference},
                     {"update_rate_hz", s.update_rate_hz},
                     {"error_after", s.error_after},
                     {"track_mode", s.track_mode}};
  return j.dump(2);
}

GainLevel alpha_bar_level(const RunConfig& config) {
  return config.alpha_bar_gamma == "infinite" ? GainLevel::infinite()
                                              : config.gamma;
}

ControlSystem build_system(const RunConfig& config) {
  ControlSystem base = [&] {
    if (config.system.name == "allen_cahn") {
      AllenCahnConfig ac = config.system.allen_cahn;
      ac.gamma = config.gamma;
      ac.alpha_fraction = config.alpha_fraction;
      return build_allen_cahn(ac);
    }
    ScalarLqConfig s = config.system.scalar_lq;
    s.gamma = config.gamma;
    s.alpha_fraction = config.alpha_fraction;
    return build_scalar_lq(s);
  }();
  return with_alpha_fraction(base, config.alpha_fraction, alpha_bar_level(config));
}

TrainOptions train_options(const RunConfig& config) {
  const TrainingConfig& t = config.training;
  TrainOptions o;
  o.epochs = t.epochs;
  o.base_lr = t.base_lr;
  o.decay_every = t.decay_every;
  o.batch_size = t.batch_size;
  o.seed = t.seed;
  o.weights.sigma1 = t.sigma1;
  o.weights.sigma2 = t.sigma2;
  o.weights.sigma3 = t.sigma3;
  o.weights.nu = t.nu;
  o.weights.norm = t.jacobian_norm == "spectral" ? JacobianNorm::kSpectral
                                                 : JacobianNorm::kFrobenius;
  return o;
}

}  // namespace chinf
