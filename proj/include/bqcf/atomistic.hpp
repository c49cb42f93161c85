#pragma once

#include "bqcf/potential.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace bqcf {

/// Energy-difference functional Σ_ξ [V_ξ(D𝒖(ξ)) − V_ξ(0)] over the sites
/// with hex_distance <= energy_rings, with displacements read from the sites
/// with hex_distance <= value_rings (SiteIndexer order) and taken as zero
/// everywhere else.
class AtomisticModel {
 public:
  AtomisticModel(const MultiLattice& lattice, const InteractionRange& range,
                 std::shared_ptr<const SitePotential> potential, const DefectField* defect, int value_rings,
                 int energy_rings);

  /// Clamped problem: sites with hex_distance <= rings carry values, every
  /// site whose stencil can see them carries energy.
  static AtomisticModel clamped(const MultiLattice& lattice, const InteractionRange& range,
                                std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                                int rings);

  int value_rings() const { return value_rings_; }
  int energy_rings() const { return energy_rings_; }
  std::size_t value_count() const { return value_count_; }
  const MultiLattice& lattice() const { return lattice_; }
  const InteractionRange& range() const { return range_; }

  /// Only the first value_count() entries of the state are read.
  double energy(const DisplacementState& state) const;
  /// Energy gradient in (U, p) form: ∂/∂U(ν) = Σ_α ∂/∂u_α(ν), ∂/∂p_α(ν) = ∂/∂u_α(ν).
  double energy_and_gradient(const DisplacementState& state, DisplacementState& grad) const;
  DisplacementState gradient(const DisplacementState& state) const;

 private:
  double assemble(const DisplacementState& state, DisplacementState* grad) const;

  MultiLattice lattice_;
  InteractionRange range_;
  std::shared_ptr<const SitePotential> potential_;
  std::optional<DefectField> defect_;
  int value_rings_;
  int energy_rings_;
  std::size_t value_count_;
  std::size_t energy_count_;
  std::size_t offsets_;
  std::vector<int> neighbours_;  // energy site × offset slot → value index or -1
  std::vector<int> variant_;     // energy site → defect variant index or -1
  std::vector<Vec2> reference_;
  double offset_ = 0.0;
};

}  // namespace bqcf
