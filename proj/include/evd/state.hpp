#pragma once

#include "evd/grid.hpp"
#include "evd/material.hpp"

namespace evd {

/// Grid fields at one time level.
struct State {
  ScalarField rho;
  VectorField p;
  VectorField v;
  MatField Fe;
  VectorField xi;
  ScalarField alpha;
  ScalarField mu;    // chemical potential (diffusion only)
  ScalarField dual;  // normal-cone multiplier (diffusion only)
  double t = 0.0;
};

/// Uniform state: density rho0, velocity zero, Fe = Fe0, xi = x, alpha = alpha0.
State uniform_state(const Grid& g, double rho0, const Mat3& Fe0, double alpha0);

/// Recomputes p = rho v.
void sync_momentum(State& s);

struct Problem {
  Grid grid;
  MaterialModel material;
  double lambda = 10.0;
  Vec3 gravity{};
};

}  // namespace evd
