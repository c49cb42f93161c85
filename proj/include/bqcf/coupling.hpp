#pragma once

#include "bqcf/atomistic.hpp"
#include "bqcf/blend.hpp"
#include "bqcf/continuum.hpp"

#include <memory>
#include <optional>

namespace bqcf {

/// Blended force-based coupling on the nodes of a mesh whose lattice part
/// covers every node with φ < 1 together with two stencil reaches.
class BqcfProblem {
 public:
  /// Graded mesh, blend and models for a given R_a.
  static std::shared_ptr<const BqcfProblem> build(double R_a, const MultiLattice& lattice,
                                                  const InteractionRange& range,
                                                  std::shared_ptr<const SitePotential> potential,
                                                  const DefectField* defect, const LayoutOptions& options = {},
                                                  Quadrature quadrature = Quadrature::kThreePoint);

  /// Explicit mesh and blend. Throws ConfigError when a node with φ < 1 is
  /// not fully refined.
  BqcfProblem(const MultiLattice& lattice, const InteractionRange& range,
              std::shared_ptr<const SitePotential> potential, const DefectField* defect,
              std::optional<DomainLayout> layout, std::shared_ptr<const Mesh> mesh, BlendFunction blend,
              Quadrature quadrature = Quadrature::kThreePoint);

  const MultiLattice& lattice() const { return lattice_; }
  const InteractionRange& range() const { return range_; }
  const std::shared_ptr<const SitePotential>& potential() const { return potential_; }
  const DefectField* defect() const { return defect_ ? &*defect_ : nullptr; }
  const std::optional<DomainLayout>& layout() const { return layout_; }
  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const BlendFunction& blend() const { return blend_; }
  /// φ(ν) per node.
  const std::vector<double>& phi() const { return phi_; }
  /// Largest lattice ring carrying a node with φ < 1 (-1 if none).
  int blend_rings() const { return blend_rings_; }
  /// Atomistic model over the φ < 1 region, or nullptr.
  const AtomisticModel* atomistic() const { return atomistic_ ? &*atomistic_ : nullptr; }
  const CauchyBornModel& continuum() const { return continuum_; }

  std::size_t node_count() const { return mesh_->node_count(); }
  /// #nodes · S
  std::size_t dof_count() const { return mesh_->node_count() * lattice_.species(); }
  DisplacementState zero_state() const {
    return DisplacementState::zeros(node_count(), lattice_.species(), DofDomain::kMesh);
  }

 private:
  MultiLattice lattice_;
  InteractionRange range_;
  std::shared_ptr<const SitePotential> potential_;
  std::optional<DefectField> defect_;
  std::optional<DomainLayout> layout_;
  std::shared_ptr<const Mesh> mesh_;
  BlendFunction blend_;
  std::vector<double> phi_;
  int blend_rings_ = -1;
  std::optional<AtomisticModel> atomistic_;
  CauchyBornModel continuum_;
};

/// The two force fields entering the blend, both in (U, p) form. The
/// atomistic one is only meaningful on nodes with φ < 1 (zero elsewhere).
struct BqcfSides {
  DisplacementState atomistic;
  DisplacementState continuum;
};
BqcfSides bqcf_sides(const BqcfProblem& problem, const DisplacementState& state);

/// (1 − φ(ν)) F^a + φ(ν) F^c per node, zero on Dirichlet nodes.
DisplacementState bqcf_residual(const BqcfProblem& problem, const DisplacementState& state);

/// Σ_ν F_U(ν)·W(ν) + Σ_α F_{p_α}(ν)·r_α(ν) with the residual above.
double weak_form_pairing(const BqcfProblem& problem, const DisplacementState& state,
                         const DisplacementState& test);

/// The same pairing assembled independently: ⟨δ𝓔ᵃ, (1−φ)(W, r)⟩ site by
/// site from raw stencils plus ⟨δ𝓔ᶜ, (I_h(φW), I_h(φr))⟩ element by
/// element. The test must vanish on Dirichlet nodes.
double weak_form_split(const BqcfProblem& problem, const DisplacementState& state,
                       const DisplacementState& test);

}  // namespace bqcf
