#pragma once

// Independent checks shared by the unit tests and the acceptance binary.

#include "scmpc/mpc.hpp"

namespace scmpc::oracles {

/// Largest inverse_transform(transform(x)) error over random states; the
/// momentum part is relative to 1 + |h|.
double transform_round_trip_error(int samples, unsigned seed);

/// Plant dynamics with the continuous nominal feedback versus the closed-loop
/// field in transformed coordinates, both RK4 at 1e-3 over `duration`; the
/// largest difference in (z1, z2, theta_err, eta).
double two_route_difference(double duration);

/// Largest relative finite-difference error of the MPC constraint Jacobians
/// over random points and the four stability configurations.
double mpc_jacobian_error(int trials_per_config, unsigned seed);

struct GridComparison {
  bool converged = false;
  bool grid_feasible = false;
  double solver_cost = 0.0;
  double grid_cost = 0.0;
  double relative_gap() const;
};

/// n_p = 1 with one corner per foot, during single support: the only force
/// is fixed by nu through the coupling row, so a refined grid over nu is a
/// brute-force oracle for the whole problem. Norm-bound mode keeps the
/// feasible nu set wide enough for a coarse grid.
GridComparison tiny_horizon_grid_comparison();

}  // namespace scmpc::oracles
