#pragma once

#include "bqcf/lattice.hpp"

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bqcf {

/// φ(r) = r⁻¹² − 2r⁻⁶ and its derivative. Throws CollisionError for r <= 0.
double pair_phi(double r);
double pair_phi_derivative(double r);

struct AngleTerm {
  double value = 0.0;
  Vec2 d_r1 = Vec2::Zero();
  Vec2 d_r2 = Vec2::Zero();
};

/// ϑ(r1, r2) = (cos∠(r1, r2) + 1/2)² with gradients; zero at 120°.
AngleTerm angle_theta(const Vec2& r1, const Vec2& r2);

/// Site potential V̂ acting on a deformed stencil ordered like the
/// interaction range it was built against.
class SitePotential {
 public:
  virtual ~SitePotential() = default;

  virtual std::size_t arity() const = 0;
  virtual double value(std::span<const Vec2> stencil) const = 0;
  /// Returns the value and writes ∂V̂/∂(stencil entry) into grad.
  virtual double value_and_gradient(std::span<const Vec2> stencil, std::span<Vec2> grad) const = 0;
  virtual std::string id() const = 0;
};

/// Three bonds of one atom; ϑ is applied to each of the three pairs.
using AngleFamily = std::array<Triple, 3>;

/// Stillinger–Weber-type graphene potential: half-weighted pair terms over
/// every triple plus bond-angle terms over the configured families. Pair
/// distances are measured in units of `pair_length`.
class GrapheneSW final : public SitePotential {
 public:
  GrapheneSW(const InteractionRange& range, std::vector<AngleFamily> families, double pair_length);

  /// Nearest-neighbour families {(0,0,1), (−ρ1,0,1), (−ρ2,0,1)} and
  /// {(0,1,0), (ρ1,1,0), (ρ2,1,0)}.
  static std::vector<AngleFamily> standard_families();

  std::size_t arity() const override { return arity_; }
  double value(std::span<const Vec2> stencil) const override;
  double value_and_gradient(std::span<const Vec2> stencil, std::span<Vec2> grad) const override;
  std::string id() const override;

  double pair_length() const { return pair_length_; }
  std::span<const std::array<int, 3>> family_slots() const { return slots_; }

 private:
  std::size_t arity_;
  std::vector<std::array<int, 3>> slots_;
  double pair_length_;
  double collision_radius_;
};

std::shared_ptr<const GrapheneSW> make_graphene_potential(const InteractionRange& range,
                                                          double pair_length);

double site_energy(const SitePotential& potential, std::span<const Vec2> stencil);
std::vector<Vec2> site_forces(const SitePotential& potential, std::span<const Vec2> stencil);

/// V(0) := V̂(reference stencil); subtracted per site by every energy.
double displacement_energy_offset(const SitePotential& potential, const MultiLattice& lattice,
                                  const InteractionRange& range);

/// Site whose V_ξ differs from the homogeneous V: its own reference
/// stencil, potential, and offset V_ξ(0).
struct SiteVariant {
  LatticePoint site;
  std::vector<Vec2> reference_stencil;
  std::shared_ptr<const SitePotential> potential;
  double offset = 0.0;
};

/// Point defect expressed as a modified reference configuration plus
/// site-dependent potentials inside radius R_def.
class DefectField {
 public:
  DefectField() = default;
  DefectField(std::string id, double r_def, std::vector<std::pair<LatticePoint, std::vector<Vec2>>> moved,
              std::vector<SiteVariant> variants);

  const std::string& id() const { return id_; }
  double r_def() const { return r_def_; }
  /// Reference position of atom α at site m (modified where the defect moved it).
  Vec2 reference_position(const MultiLattice& lattice, const LatticePoint& m, int alpha) const;
  /// nullptr when V_ξ ≡ V at this site.
  const SiteVariant* variant(const LatticePoint& m) const;
  std::span<const SiteVariant> variants() const { return variants_; }

 private:
  std::string id_;
  double r_def_ = 0.0;
  std::vector<std::pair<LatticePoint, std::vector<Vec2>>> moved_;
  std::vector<SiteVariant> variants_;
};

/// Rotates the bond at the origin cell by 90° about its midpoint and
/// rewires the bond-angle families of the four atoms whose nearest
/// neighbours change. R_def = 2·r_cut. Throws ConfigError for anything
/// other than the graphene preset.
DefectField make_stone_wales(const MultiLattice& lattice, const InteractionRange& range,
                             double pair_length);

}  // namespace bqcf
