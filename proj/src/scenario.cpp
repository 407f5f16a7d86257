#include "evd/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "evd/errors.hpp"

namespace evd {

using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector, got " + j.dump());
  return Vec3{{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()}};
}

json mat_json(const Mat3& m) {
  json a = json::array();
  for (std::size_t i = 0; i < 3; ++i) a.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  return a;
}

// Accepts [[a,b,c],[d,e,f],[g,h,i]] or a flat row-major list of 9.
Mat3 mat_from(const json& j) {
  Mat3 m;
  if (j.is_array() && j.size() == 9) {
    for (std::size_t k = 0; k < 9; ++k) m[k] = j[k].get<double>();
    return m;
  }
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3x3 matrix, got " + j.dump());
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_array() || j[i].size() != 3)
      throw ConfigError("expected a 3x3 matrix, got " + j.dump());
    for (std::size_t k = 0; k < 3; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_vec(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) out = vec_from(j.at(key));
}

void read_mat(const json& j, const char* key, Mat3& out) {
  if (j.contains(key)) out = mat_from(j.at(key));
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::None: return "none";
    case ShapeKind::TwoPhase: return "two-phase";
    case ShapeKind::Sinusoidal: return "sinusoidal";
  }
  return "none";
}

ShapeKind shape_kind(const std::string& s) {
  if (s == "none") return ShapeKind::None;
  if (s == "two-phase") return ShapeKind::TwoPhase;
  if (s == "sinusoidal") return ShapeKind::Sinusoidal;
  throw ConfigError("unknown shape kind '" + s + "'");
}

json shape_json(const MaterialShape& s) {
  return {{"kind", shape_name(s.kind)},
          {"center", vec_json(s.center)},
          {"radius", s.radius},
          {"axis", s.axis},
          {"wavelength", s.wavelength}};
}

MaterialShape shape_from(const json& j) {
  MaterialShape s;
  check_keys(j, {"kind", "center", "radius", "axis", "wavelength"}, "shape");
  std::string kind = shape_name(s.kind);
  read(j, "kind", kind);
  s.kind = shape_kind(kind);
  read_vec(j, "center", s.center);
  read(j, "radius", s.radius);
  read(j, "axis", s.axis);
  read(j, "wavelength", s.wavelength);
  if (s.axis < 0 || s.axis > 2) throw ConfigError("shape axis must be 0, 1 or 2");
  return s;
}

Boundary boundary_from(const std::string& s) {
  if (s == "periodic") return Boundary::Periodic;
  if (s == "slip-box") return Boundary::SlipBox;
  throw ConfigError("unknown boundary '" + s + "'");
}

AdvectionScheme scheme_from(const std::string& s) {
  if (s == "upwind") return AdvectionScheme::Upwind;
  if (s == "central") return AdvectionScheme::Central;
  throw ConfigError("unknown advection scheme '" + s + "'");
}

const char* internal_name(InternalVariable v) {
  switch (v) {
    case InternalVariable::None: return "none";
    case InternalVariable::Damage: return "damage";
    case InternalVariable::Diffusion: return "diffusion";
  }
  return "none";
}

InternalVariable internal_from(const std::string& s) {
  if (s == "none") return InternalVariable::None;
  if (s == "damage") return InternalVariable::Damage;
  if (s == "diffusion") return InternalVariable::Diffusion;
  throw ConfigError("unknown internal variable '" + s + "'");
}

json material_json(const MaterialModel& m) {
  const auto& e = m.energy;
  const auto& z = m.viscoplastic;
  return {
      {"energy",
       {{"family", std::string(to_string(e.family))},
        {"mu", e.mu},
        {"kappa", e.kappa},
        {"eta", e.eta},
        {"gc", e.gc},
        {"swelling", e.swelling},
        {"chem", e.chem},
        {"a0", e.a0},
        {"shape", shape_json(e.shape)},
        {"mu_contrast", e.mu_contrast},
        {"kappa_contrast", e.kappa_contrast},
        {"gc_contrast", e.gc_contrast},
        {"a0_jump", e.a0_jump}}},
      {"viscoplastic",
       {{"family", std::string(to_string(z.family))},
        {"theta", z.theta},
        {"beta", z.beta},
        {"shape", shape_json(z.shape)},
        {"theta_contrast", z.theta_contrast},
        {"max_newton", z.max_newton}}},
      {"internal", internal_name(m.internal)},
      {"damage",
       {{"modulus", m.damage.modulus},
        {"mode", m.damage.mode == DamageMode::Unidirectional ? "unidirectional" : "bidirectional"},
        {"sign", m.damage.sign == DamageSign::Dissipative ? "dissipative" : "literal"}}},
      {"diffusion",
       {{"mobility", m.diffusion.mobility},
        {"slope", m.diffusion.slope},
        {"shape", shape_json(m.diffusion.shape)},
        {"contrast", m.diffusion.contrast}}},
      {"viscosity",
       {{"shear", m.viscosity.shear},
        {"bulk", m.viscosity.bulk},
        {"hyper", m.viscosity.hyper},
        {"exponent", m.viscosity.exponent}}},
  };
}

MaterialModel material_from(const json& j) {
  MaterialModel m;
  check_keys(j, {"energy", "viscoplastic", "internal", "damage", "diffusion", "viscosity"},
             "material");
  if (j.contains("energy")) {
    const json& e = j["energy"];
    check_keys(e,
               {"family", "mu", "kappa", "eta", "gc", "swelling", "chem", "a0", "shape",
                "mu_contrast", "kappa_contrast", "gc_contrast", "a0_jump"},
               "material.energy");
    auto& s = m.energy;
    if (e.contains("family")) s.family = energy_family_from_string(e["family"].get<std::string>());
    read(e, "mu", s.mu);
    read(e, "kappa", s.kappa);
    read(e, "eta", s.eta);
    read(e, "gc", s.gc);
    read(e, "swelling", s.swelling);
    read(e, "chem", s.chem);
    read(e, "a0", s.a0);
    if (e.contains("shape")) s.shape = shape_from(e["shape"]);
    read(e, "mu_contrast", s.mu_contrast);
    read(e, "kappa_contrast", s.kappa_contrast);
    read(e, "gc_contrast", s.gc_contrast);
    read(e, "a0_jump", s.a0_jump);
  }
  if (j.contains("viscoplastic")) {
    const json& z = j["viscoplastic"];
    check_keys(z, {"family", "theta", "beta", "shape", "theta_contrast", "max_newton"},
               "material.viscoplastic");
    auto& p = m.viscoplastic;
    if (z.contains("family"))
      p.family = viscoplastic_family_from_string(z["family"].get<std::string>());
    read(z, "theta", p.theta);
    read(z, "beta", p.beta);
    if (z.contains("shape")) p.shape = shape_from(z["shape"]);
    read(z, "theta_contrast", p.theta_contrast);
    read(z, "max_newton", p.max_newton);
  }
  if (j.contains("internal")) m.internal = internal_from(j["internal"].get<std::string>());
  if (j.contains("damage")) {
    const json& d = j["damage"];
    check_keys(d, {"modulus", "mode", "sign"}, "material.damage");
    read(d, "modulus", m.damage.modulus);
    if (d.contains("mode")) {
      auto s = d["mode"].get<std::string>();
      if (s == "unidirectional") m.damage.mode = DamageMode::Unidirectional;
      else if (s == "bidirectional") m.damage.mode = DamageMode::Bidirectional;
      else throw ConfigError("unknown damage mode '" + s + "'");
    }
    if (d.contains("sign")) {
      auto s = d["sign"].get<std::string>();
      if (s == "dissipative") m.damage.sign = DamageSign::Dissipative;
      else if (s == "literal") m.damage.sign = DamageSign::Literal;
      else throw ConfigError("unknown damage sign '" + s + "'");
    }
  }
  if (j.contains("diffusion")) {
    const json& d = j["diffusion"];
    check_keys(d, {"mobility", "slope", "shape", "contrast"}, "material.diffusion");
    read(d, "mobility", m.diffusion.mobility);
    read(d, "slope", m.diffusion.slope);
    if (d.contains("shape")) m.diffusion.shape = shape_from(d["shape"]);
    read(d, "contrast", m.diffusion.contrast);
  }
  if (j.contains("viscosity")) {
    const json& v = j["viscosity"];
    check_keys(v, {"shear", "bulk", "hyper", "exponent"}, "material.viscosity");
    read(v, "shear", m.viscosity.shear);
    read(v, "bulk", m.viscosity.bulk);
    read(v, "hyper", m.viscosity.hyper);
    read(v, "exponent", m.viscosity.exponent);
  }
  return m;
}

json solver_json(const StepConfig& s) {
  return {{"momentum_rtol", s.momentum_rtol},
          {"momentum_atol", s.momentum_atol},
          {"transport_tol", s.transport_tol},
          {"local_tol", s.local_tol},
          {"complementarity_tol", s.complementarity_tol},
          {"max_newton", s.max_newton},
          {"max_local_newton", s.max_local_newton},
          {"max_active_set", s.max_active_set},
          {"eps0", s.eps0},
          {"delta0", s.delta0},
          {"continuation_factor", s.continuation_factor},
          {"continuation_stages", s.continuation_stages},
          {"force_continuation", s.force_continuation},
          {"scheme", to_string(s.scheme)},
          {"coupling", s.coupling == Coupling::GaussSeidel ? "gauss-seidel" : "monolithic"},
          {"momentum", s.momentum == MomentumMode::Dynamic ? "dynamic" : "frozen"},
          {"max_retries", s.max_retries}};
}

StepConfig solver_from(const json& j) {
  StepConfig s;
  check_keys(j,
             {"momentum_rtol", "momentum_atol", "transport_tol", "local_tol",
              "complementarity_tol", "max_newton", "max_local_newton", "max_active_set", "eps0",
              "delta0", "continuation_factor", "continuation_stages", "force_continuation",
              "scheme", "coupling", "momentum", "max_retries"},
             "solver");
  read(j, "momentum_rtol", s.momentum_rtol);
  read(j, "momentum_atol", s.momentum_atol);
  read(j, "transport_tol", s.transport_tol);
  read(j, "local_tol", s.local_tol);
  read(j, "complementarity_tol", s.complementarity_tol);
  read(j, "max_newton", s.max_newton);
  read(j, "max_local_newton", s.max_local_newton);
  read(j, "max_active_set", s.max_active_set);
  read(j, "eps0", s.eps0);
  read(j, "delta0", s.delta0);
  read(j, "continuation_factor", s.continuation_factor);
  read(j, "continuation_stages", s.continuation_stages);
  read(j, "force_continuation", s.force_continuation);
  if (j.contains("scheme")) s.scheme = scheme_from(j["scheme"].get<std::string>());
  if (j.contains("coupling")) {
    auto c = j["coupling"].get<std::string>();
    if (c == "gauss-seidel") s.coupling = Coupling::GaussSeidel;
    else if (c == "monolithic") s.coupling = Coupling::Monolithic;
    else throw ConfigError("unknown coupling '" + c + "'");
  }
  if (j.contains("momentum")) {
    auto c = j["momentum"].get<std::string>();
    if (c == "dynamic") s.momentum = MomentumMode::Dynamic;
    else if (c == "frozen") s.momentum = MomentumMode::Frozen;
    else throw ConfigError("unknown momentum mode '" + c + "'");
  }
  read(j, "max_retries", s.max_retries);
  return s;
}

json initial_json(const InitialConditions& i) {
  return {{"rho0", i.rho0},
          {"rho_amplitude", i.rho_amplitude},
          {"rho_modes", i.rho_modes},
          {"velocity", i.velocity},
          {"velocity_amplitude", i.velocity_amplitude},
          {"velocity_value", vec_json(i.velocity_value)},
          {"Fe0", mat_json(i.Fe0)},
          {"alpha0", i.alpha0},
          {"alpha_shape", shape_json(i.alpha_shape)},
          {"alpha_inside", i.alpha_inside}};
}

InitialConditions initial_from(const json& j) {
  InitialConditions i;
  check_keys(j,
             {"rho0", "rho_amplitude", "rho_modes", "velocity", "velocity_amplitude",
              "velocity_value", "Fe0", "alpha0", "alpha_shape", "alpha_inside"},
             "initial");
  read(j, "rho0", i.rho0);
  read(j, "rho_amplitude", i.rho_amplitude);
  read(j, "rho_modes", i.rho_modes);
  read(j, "velocity", i.velocity);
  read(j, "velocity_amplitude", i.velocity_amplitude);
  read_vec(j, "velocity_value", i.velocity_value);
  read_mat(j, "Fe0", i.Fe0);
  read(j, "alpha0", i.alpha0);
  if (j.contains("alpha_shape")) i.alpha_shape = shape_from(j["alpha_shape"]);
  read(j, "alpha_inside", i.alpha_inside);
  if (i.velocity != "zero" && i.velocity != "uniform" && i.velocity != "shear")
    throw ConfigError("initial.velocity must be zero, uniform or shear");
  return i;
}

}  // namespace

Mat3 DriveSpec::at(double) const {
  if (kind == "none") return Mat3::zero();
  if (kind == "rotation") return Mat3::rows({0, rate, 0, -rate, 0, 0, 0, 0, 0});
  if (kind == "dilation") return Mat3::diag(rate / 3, rate / 3, rate / 3);
  if (kind == "shear") return Mat3::rows({0, rate, 0, 0, 0, 0, 0, 0, 0});
  if (kind == "stretch") return Mat3::diag(rate, -rate / 2, -rate / 2);
  if (kind == "custom") return grad_v;
  throw ConfigError("unknown drive kind '" + kind + "'");
}

json to_json(const ScenarioConfig& c) {
  return {{"name", c.name},
          {"mode", c.mode},
          {"grid",
           {{"dim", c.grid.dim},
            {"cells", c.grid.cells},
            {"length", c.grid.length},
            {"boundary", to_string(c.grid.boundary)}}},
          {"material", material_json(c.material)},
          {"lambda", c.lambda},
          {"tau", c.tau},
          {"T", c.T},
          {"gravity", vec_json(c.gravity)},
          {"initial", initial_json(c.initial)},
          {"solver", solver_json(c.solver)},
          {"drive",
           {{"kind", c.drive.kind},
            {"rate", c.drive.rate},
            {"grad_v", mat_json(c.drive.grad_v)},
            {"X", vec_json(c.drive.X)}}},
          {"output", {{"snapshot_every", c.output.snapshot_every}, {"binary", c.output.binary}}}};
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig c;
  check_keys(j,
             {"name", "mode", "grid", "material", "lambda", "tau", "T", "gravity", "initial",
              "solver", "drive", "output"},
             "config");
  read(j, "name", c.name);
  read(j, "mode", c.mode);
  if (c.mode != "field" && c.mode != "0d") throw ConfigError("mode must be 'field' or '0d'");
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"dim", "cells", "length", "boundary"}, "grid");
    read(g, "dim", c.grid.dim);
    read(g, "cells", c.grid.cells);
    read(g, "length", c.grid.length);
    if (g.contains("boundary")) c.grid.boundary = boundary_from(g["boundary"].get<std::string>());
  }
  if (j.contains("material")) c.material = material_from(j["material"]);
  read(j, "lambda", c.lambda);
  read(j, "tau", c.tau);
  read(j, "T", c.T);
  read_vec(j, "gravity", c.gravity);
  if (j.contains("initial")) c.initial = initial_from(j["initial"]);
  if (j.contains("solver")) c.solver = solver_from(j["solver"]);
  if (j.contains("drive")) {
    const json& d = j["drive"];
    check_keys(d, {"kind", "rate", "grad_v", "X"}, "drive");
    read(d, "kind", c.drive.kind);
    read(d, "rate", c.drive.rate);
    read_mat(d, "grad_v", c.drive.grad_v);
    read_vec(d, "X", c.drive.X);
    c.drive.at(0.0);
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, {"snapshot_every", "binary"}, "output");
    read(o, "snapshot_every", c.output.snapshot_every);
    read(o, "binary", c.output.binary);
  }
  if (!(c.tau > 0) || !(c.T > 0)) throw ConfigError("tau and T must be positive");
  c.solver.tau = c.tau;
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  std::vector<std::string> parts;
  std::stringstream walk(key);
  for (std::string part; std::getline(walk, part, '.');) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    parts.push_back(part);
  }
  try {
    // Numeric components index into existing arrays; everything else is an object key.
    json* node = &j;
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
      const auto& p = parts[k];
      if (node->is_array()) node = &node->at(std::stoul(p));
      else node = &(*node)[p];
    }
    const auto& last = parts.back();
    if (node->is_array()) node->at(std::stoul(last)) = value;
    else (*node)[last] = value;
  } catch (const std::exception& e) {
    throw ConfigError("cannot apply override '" + assignment + "': " + e.what());
  }
}

json load_config_json(const std::string& path_or_preset) {
  const std::string prefix = "preset:";
  if (path_or_preset.rfind(prefix, 0) == 0) return to_json(preset(path_or_preset.substr(prefix.size())));
  std::ifstream in(path_or_preset);
  if (!in) throw ConfigError("cannot open config '" + path_or_preset + "'");
  json j = json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError("config '" + path_or_preset + "' is not valid JSON");
  return j;
}

std::vector<std::string> preset_names() {
  return {"rest-state",        "gravity-settling", "shear-creep",     "rigid-rotation-0d",
          "maxwell-0d",        "dilation-0d",      "damage-0d",       "translation",
          "two-phase-inclusion", "damage-bar-stretch", "diffusion-swelling"};
}

ScenarioConfig preset(const std::string& name) {
  ScenarioConfig c;
  c.name = name;
  c.material.viscosity = {0.0, 0.0, 1e-4, 2.0};
  if (name == "rest-state") {
    c.grid = {2, {16, 16, 1}, {1, 1, 1}, Boundary::Periodic};
    c.material.viscosity.shear = 0.1;
    c.tau = 1e-2;
    c.T = 0.5;
  } else if (name == "gravity-settling") {
    c.grid = {2, {16, 16, 1}, {1, 1, 1}, Boundary::SlipBox};
    c.material.energy.kappa = 10.0;
    c.material.viscosity.shear = 0.1;
    c.material.viscosity.bulk = 0.1;
    c.gravity = Vec3{{0.0, -1.0, 0.0}};
    c.tau = 1e-2;
    c.T = 0.5;
  } else if (name == "shear-creep") {
    c.grid = {2, {8, 32, 1}, {1, 1, 1}, Boundary::Periodic};
    c.material.viscosity.shear = 0.05;
    c.material.viscosity.hyper = 1e-5;
    c.initial.velocity = "shear";
    c.initial.velocity_amplitude = 0.2;
    c.solver.scheme = AdvectionScheme::Central;
    c.tau = 1e-2;
    c.T = 0.5;
  } else if (name == "rigid-rotation-0d") {
    c.mode = "0d";
    c.material.viscoplastic.theta = 0.0;
    c.initial.Fe0 = Mat3::rows({1.2, 0.1, 0.0, 0.05, 0.9, 0.0, 0.0, 0.0, 1.0});
    c.drive.kind = "rotation";
    c.drive.rate = 1.0;
    c.tau = 1e-3;
    c.T = 1.0;
  } else if (name == "maxwell-0d") {
    c.mode = "0d";
    c.initial.Fe0 = Mat3::rows({1.0, 0.3, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0});
    c.tau = 1e-2;
    c.T = 1.0;
  } else if (name == "dilation-0d") {
    c.mode = "0d";
    c.initial.Fe0 = Mat3::diag(1.1, 0.95, 1.0);
    c.drive.kind = "dilation";
    c.drive.rate = 0.5;
    c.tau = 1e-3;
    c.T = 1.0;
  } else if (name == "damage-0d") {
    c.mode = "0d";
    c.material.viscoplastic.theta = 0.0;
    c.material.energy.gc = 0.05;
    c.material.internal = InternalVariable::Damage;
    c.initial.Fe0 = Mat3::diag(1.3, 1.0, 1.0);
    c.tau = 1e-2;
    c.T = 1.0;
  } else if (name == "translation") {
    c.grid = {2, {16, 16, 1}, {1, 1, 1}, Boundary::Periodic};
    c.material.viscosity.shear = 0.1;
    c.initial.velocity = "uniform";
    c.initial.velocity_value = Vec3{{0.25, 0.0, 0.0}};
    c.tau = 2e-2;
    c.T = 0.4;
  } else if (name == "two-phase-inclusion") {
    c.grid = {2, {16, 16, 1}, {1, 1, 1}, Boundary::Periodic};
    MaterialShape ball{ShapeKind::TwoPhase, Vec3{{0.5, 0.5, 0.0}}, 0.25, 0, 1.0};
    c.material.energy.shape = ball;
    c.material.energy.mu_contrast = 2.0;
    c.material.viscoplastic.shape = ball;
    c.material.viscoplastic.theta_contrast = -0.5;
    c.material.viscosity.shear = 0.1;
    c.initial.Fe0 = Mat3::diag(1.05, 1.0 / 1.05, 1.0);
    c.tau = 1e-2;
    c.T = 0.3;
  } else if (name == "damage-bar-stretch") {
    c.grid = {2, {16, 8, 1}, {2, 1, 1}, Boundary::Periodic};
    c.material.viscoplastic.theta = 0.0;
    c.material.energy.gc = 0.05;
    c.material.internal = InternalVariable::Damage;
    c.material.viscosity.shear = 0.1;
    c.initial.Fe0 = Mat3::diag(1.3, 1.0, 1.0);
    c.tau = 1e-2;
    c.T = 0.5;
  } else if (name == "diffusion-swelling") {
    c.grid = {2, {16, 16, 1}, {1, 1, 1}, Boundary::Periodic};
    MaterialShape ball{ShapeKind::TwoPhase, Vec3{{0.5, 0.5, 0.0}}, 0.25, 0, 1.0};
    c.material.energy.family = EnergyFamily::NeoHookeanSwelling;
    c.material.energy.swelling = 0.2;
    c.material.energy.chem = 1.0;
    c.material.energy.a0 = 0.3;
    c.material.energy.a0_jump = 0.4;
    c.material.energy.shape = ball;
    c.material.internal = InternalVariable::Diffusion;
    c.material.diffusion.mobility = 0.05;
    c.material.viscosity.shear = 0.1;
    c.initial.alpha0 = 0.5;
    c.solver.momentum = MomentumMode::Frozen;
    c.tau = 1e-2;
    c.T = 0.3;
  } else {
    std::string list;
    for (const auto& n : preset_names()) list += " " + n;
    throw ConfigError("unknown preset '" + name + "'; available:" + list);
  }
  c.solver.tau = c.tau;
  return c;
}

Grid make_grid(const GridSpec& g) {
  if (g.dim != 2 && g.dim != 3) throw ConfigError("grid.dim must be 2 or 3");
  for (int a = 0; a < g.dim; ++a) {
    if (g.cells[static_cast<std::size_t>(a)] < 2) throw ConfigError("grid.cells must be >= 2");
    if (!(g.length[static_cast<std::size_t>(a)] > 0)) throw ConfigError("grid.length must be > 0");
  }
  return Grid::make(g.dim, g.cells, g.length, g.boundary);
}

Problem make_problem(const ScenarioConfig& c) {
  Problem pb;
  pb.grid = make_grid(c.grid);
  pb.material = c.material;
  pb.lambda = c.lambda;
  pb.gravity = c.gravity;
  if (c.grid.dim == 2 && c.gravity[2] != 0.0)
    throw ConfigError("gravity has a z component on a 2D grid");
  return pb;
}

namespace {

void check_point_data(const ScenarioConfig& c, const Mat3& Fe, double alpha, const char* where) {
  double J = det(Fe);
  if (!(J > 0))
    throw ConfigError(std::string("precondition violated: min det Fe0 > 0 (") + where +
                      ": det Fe0 = " + std::to_string(J) + ")");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError(std::string("precondition violated: alpha0 in [0,1] (") + where + ")");
  if (classify(Fe, c.lambda) == Branch::Dead)
    throw ConfigError(std::string("initial Fe lies in the dead zone of the truncation (") + where +
                      "); increase lambda");
}

}  // namespace

State make_initial_state(const ScenarioConfig& c, const Grid& g) {
  const auto& ic = c.initial;
  if (!(ic.rho0 > 0) || !(std::abs(ic.rho_amplitude) < 1.0))
    throw ConfigError("precondition violated: min rho0 > 0 (rho0 = " + std::to_string(ic.rho0) +
                      ", amplitude = " + std::to_string(ic.rho_amplitude) + ")");
  check_point_data(c, ic.Fe0, ic.alpha0, "alpha0");
  if (ic.alpha_shape.kind != ShapeKind::None) check_point_data(c, ic.Fe0, ic.alpha_inside, "alpha_inside");

  State s = uniform_state(g, ic.rho0, ic.Fe0, ic.alpha0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (Eigen::Index cell = 0; cell < g.cells(); ++cell) {
    Vec3 x = g.center(cell);
    if (ic.rho_amplitude != 0.0) {
      double arg = 0.0;
      for (int a = 0; a < g.dim; ++a)
        arg += two_pi * ic.rho_modes[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)] /
               g.length(a);
      s.rho[cell] = ic.rho0 * (1.0 + ic.rho_amplitude * std::sin(arg));
    }
    if (ic.velocity == "uniform") {
      set_vec(s.v, cell, ic.velocity_value);
    } else if (ic.velocity == "shear") {
      s.v[0][cell] = ic.velocity_amplitude * std::sin(two_pi * x[1] / g.length(1));
    }
    if (ic.alpha_shape.kind != ShapeKind::None && ic.alpha_shape.value(x) > 0.5)
      s.alpha[cell] = ic.alpha_inside;
  }
  if (c.material.internal == InternalVariable::None) s.alpha.setConstant(ic.alpha0);
  sync_momentum(s);
  return s;
}

Drive0D make_drive(const ScenarioConfig& c) {
  Drive0D d;
  DriveSpec schedule = c.drive;
  d.grad_v = [schedule](double t) { return schedule.at(t); };
  d.Fe0 = c.initial.Fe0;
  d.alpha0 = c.initial.alpha0;
  d.X = c.drive.X;
  d.tau = c.tau;
  d.T = c.T;
  check_point_data(c, d.Fe0, d.alpha0, "0d drive");
  return d;
}

Oracle0DConfig make_oracle_config(const ScenarioConfig& c, double tau_fine) {
  Oracle0DConfig o;
  DriveSpec schedule = c.drive;
  o.grad_v = [schedule](double t) { return schedule.at(t); };
  o.Fe0 = c.initial.Fe0;
  o.alpha0 = c.initial.alpha0;
  o.X = c.drive.X;
  o.material = c.material;
  o.lambda = c.lambda;
  o.tau_fine = tau_fine;
  o.T = c.T;
  return o;
}

}  // namespace evd
