#pragma once

#include "bqcf/mesh.hpp"

#include <span>
#include <utility>
#include <vector>

namespace bqcf {

struct ErrorNorms {
  double err_U = 0.0;  // ‖∇I(U_ref − U)‖_{L²}
  double err_p = 0.0;  // Σ_α ‖I(p_ref − p)_α‖_{L²}
  double combined = 0.0;
  Vec2 gauge = Vec2::Zero();  // constant added to U before differencing
};

/// Values of a P1 field at every site of hex(rings): lattice nodes are read
/// directly, other sites through the locator, zero outside the mesh.
DisplacementState sample_at_sites(const P1Field& field, const PointLocator& locator,
                                  const MultiLattice& lattice, int rings);

/// A lattice state on hex(from_rings) extended by zero (or truncated) to
/// hex(rings).
DisplacementState resize_sites(const DisplacementState& state, int rings);

/// Error of `sample` against `reference`, both on hex(rings) in indexer
/// order, integrated on `ref_mesh` (𝓣_a of the same rings). The gauge is
/// the mean of U_ref − U over hex(gauge_rings).
ErrorNorms lattice_error(const DisplacementState& reference, const DisplacementState& sample, const Mesh& ref_mesh,
                         int gauge_rings);

/// err of a BQCF solution. Throws OutOfDomainError when Ω is not inside
/// the reference hexagon.
ErrorNorms bqcf_error(const DisplacementState& reference, const Mesh& ref_mesh, const P1Field& solution,
                      const MultiLattice& lattice, int gauge_rings);

/// err of a clamped atomistic solution on hex(rings).
ErrorNorms atomistic_error(const DisplacementState& reference, const Mesh& ref_mesh,
                           const DisplacementState& solution, int gauge_rings);

/// Least-squares slope of log(error) against log(dof); needs at least
/// three strictly positive points.
double fit_slope(std::span<const std::pair<double, double>> points);

struct DecayProfile {
  std::vector<double> r_lo, r_hi;
  std::vector<double> max_DU, max_p;
  bool fitted = false;
  double slope_DU = 0.0;
  double slope_p = 0.0;
};

/// Radial maxima of |U(ξ+ρ) − U(ξ)| over nearest-neighbour ρ and of |p|
/// in log-spaced annuli between r_min and 0.75 of the inner radius of
/// hex(rings).
DecayProfile decay_profile(const DisplacementState& reference, int rings, const MultiLattice& lattice, double r_min,
                           int annuli = 16);

}  // namespace bqcf
