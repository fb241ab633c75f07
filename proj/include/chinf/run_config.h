#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chinf/approximator.h"
#include "chinf/closedloop.h"
#include "chinf/manifold.h"
#include "chinf/model.h"

namespace chinf {

struct SystemSpec {
  std::string name = "allen_cahn";  // or "scalar_lq"
  AllenCahnConfig allen_cahn;
  ScalarLqConfig scalar_lq;
};

struct TrainingConfig {
  std::vector<int> hidden = {60, 60, 60};
  int epochs = 4000;
  double base_lr = 1e-3;
  int decay_every = 1500;
  int batch_size = 0;
  double sigma1 = 1.0;
  double sigma2 = 0.01;
  double sigma3 = 0.01;
  double nu = 2.0;
  std::string jacobian_norm = "frobenius";  // or "spectral"
  std::uint64_t seed = 0;
};

struct SimulationConfig {
  double T = 0.0;  // ≤ 0: gain horizon for gain, 30 for simulate and track
  int output_points = 500;
  double integrator_tol = 1e-9;
  std::string disturbance = "0";
  std::vector<double> x0;   // empty: zero, or a sphere draw when x0_radius > 0
  double x0_radius = 0.0;
  std::uint64_t seed = 0;
  double gamma_threshold = 1.2;
  double epsilon_budget = 0.1;
  std::string reference = "sin(t)";
  double update_rate_hz = 500.0;
  double error_after = 5.0;
  std::string track_mode = "live";  // or "held"
};

/// Single JSON document with a `version` field. Unknown fields are rejected.
struct RunConfig {
  int version = 1;
  SystemSpec system;
  GainLevel gamma = GainLevel::finite(1.2);
  double alpha_fraction = 0.5;
  // "working" evaluates ᾱ at gamma, "infinite" at γ = ∞.
  std::string alpha_bar_gamma = "working";
  GenerationConfig generation;
  TrainingConfig training;
  SimulationConfig simulation;
};

/// Throws invalid-config naming the offending field.
RunConfig parse_run_config(std::string_view json_text);

/// Throws io-error naming the file.
RunConfig read_run_config(const std::string& path);

std::string run_config_to_json(const RunConfig& config);

/// Plant with γ applied and α resolved from alpha_fraction.
ControlSystem build_system(const RunConfig& config);

GainLevel alpha_bar_level(const RunConfig& config);

TrainOptions train_options(const RunConfig& config);

}  // namespace chinf
