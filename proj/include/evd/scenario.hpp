#pragma once

// Scenario configuration (JSON key tree), the shipped preset library, and
// construction of the problem and initial state from a configuration.

#include <json.hpp>
#include <string>
#include <vector>

#include "evd/oracle.hpp"
#include "evd/state.hpp"
#include "evd/stepper.hpp"

namespace evd {

struct GridSpec {
  int dim = 2;
  std::array<int, 3> cells{16, 16, 1};
  std::array<double, 3> length{1.0, 1.0, 1.0};
  Boundary boundary = Boundary::Periodic;
};

struct InitialConditions {
  double rho0 = 1.0;
  /// rho = rho0 (1 + rho_amplitude sin(2 pi m . x / L)), m = rho_modes.
  double rho_amplitude = 0.0;
  std::array<int, 3> rho_modes{1, 0, 0};
  /// zero | uniform | shear (v_x = amplitude sin(2 pi y / L_y)) | vortex
  std::string velocity = "zero";
  double velocity_amplitude = 0.0;
  Vec3 velocity_value{};
  Mat3 Fe0 = Mat3::identity();
  double alpha0 = 1.0;
  MaterialShape alpha_shape{};
  double alpha_inside = 1.0;
};

/// Homogeneous velocity-gradient drive for 0D scenarios.
///   none | rotation (rate (e1 x e2 - e2 x e1)) | dilation (rate/3 I) |
///   shear (rate e1 x e2) | stretch (rate e1 x e1 - rate/2 (e2 x e2 + e3 x e3)) | custom
struct DriveSpec {
  std::string kind = "none";
  double rate = 0.0;
  Mat3 grad_v{};
  Vec3 X{};

  Mat3 at(double t) const;
};

struct OutputSpec {
  int snapshot_every = 0;
  bool binary = true;
};

struct ScenarioConfig {
  std::string name = "custom";
  std::string mode = "field";  // field | 0d
  GridSpec grid{};
  MaterialModel material{};
  double lambda = 10.0;
  double tau = 1e-2;
  double T = 1.0;
  Vec3 gravity{};
  InitialConditions initial{};
  StepConfig solver{};
  DriveSpec drive{};
  OutputSpec output{};
};

nlohmann::json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_from_json(const nlohmann::json& j);

/// Applies dotted-path overrides "a.b.c=value"; value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Loads a config file or, for "preset:<name>", a shipped preset.
nlohmann::json load_config_json(const std::string& path_or_preset);

std::vector<std::string> preset_names();
ScenarioConfig preset(const std::string& name);

Grid make_grid(const GridSpec& g);
Problem make_problem(const ScenarioConfig& c);
/// Validates the initial data (positive density, positive det Fe, truncation
/// margins, alpha in [0,1]) and throws ConfigError otherwise.
State make_initial_state(const ScenarioConfig& c, const Grid& g);
Drive0D make_drive(const ScenarioConfig& c);
Oracle0DConfig make_oracle_config(const ScenarioConfig& c, double tau_fine);

}  // namespace evd
