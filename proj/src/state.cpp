#include "evd/state.hpp"

namespace evd {

State uniform_state(const Grid& g, double rho0, const Mat3& Fe0, double alpha0) {
  State s;
  s.rho = constant_scalar(g, rho0);
  s.v = constant_vector(g, Vec3{});
  s.p = constant_vector(g, Vec3{});
  s.Fe = constant_mat(g, Fe0);
  s.xi = identity_coordinates(g);
  s.alpha = constant_scalar(g, alpha0);
  s.mu = constant_scalar(g, 0.0);
  s.dual = constant_scalar(g, 0.0);
  return s;
}

void sync_momentum(State& s) {
  for (std::size_t i = 0; i < 3; ++i) s.p[i] = s.rho.cwiseProduct(s.v[i]);
}

}  // namespace evd
