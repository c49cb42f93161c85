#pragma once

#include "bqcf/types.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bqcf {

/// Bravais lattice F·Z² decorated with S species at reference shifts
/// p_α (p_0 = 0). Always two-dimensional in domain and range.
struct MultiLattice {
  static constexpr int dim = 2;
  static constexpr int range_dim = 2;

  std::string id;
  Mat2 F = Mat2::Identity();
  std::vector<Vec2> shifts_ref{Vec2::Zero()};

  int species() const { return static_cast<int>(shifts_ref.size()); }
  Vec2 position(const LatticePoint& m) const { return F * Vec2(m.m1, m.m2); }
  Vec2 atom_position(const LatticePoint& m, int alpha) const {
    return position(m) + shifts_ref[alpha];
  }

  /// Distance between consecutive hexagonal rings of lattice sites.
  double row_spacing() const;
  /// Hexagonal radius of a point: row_spacing · max(|m1|, |m2|, |m1+m2|)
  /// with m = F⁻¹x taken in real arithmetic.
  double hex_radius(const Vec2& x) const;
  double hex_radius(const LatticePoint& m) const { return row_spacing() * hex_distance(m); }

  /// Throws ConfigError unless det F = 1, p_0 = 0 and S >= 1.
  void validate() const;
};

/// One entry (ρ, α, β) of the interaction range: species β at ξ + ρ seen
/// from species α at ξ.
struct Triple {
  LatticePoint rho;
  int alpha = 0;
  int beta = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

class InteractionRange {
 public:
  InteractionRange() = default;
  InteractionRange(const MultiLattice& lattice, std::vector<Triple> triples);

  std::span<const Triple> triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }
  const Triple& operator[](std::size_t i) const { return triples_[i]; }

  /// Position of a triple in the ordering, or -1.
  int index_of(const Triple& t) const;

  double r_cut() const { return r_cut_; }
  double r_cell() const { return r_cell_; }
  double r_buff() const { return std::max(r_cut_, r_cell_); }

  /// Distinct lattice offsets ρ used by the range (0 first), and for every
  /// triple the position of its ρ in that list.
  std::span<const LatticePoint> offsets() const { return offsets_; }
  int offset_slot(std::size_t triple) const { return offset_slot_[triple]; }
  /// Largest hex_distance of any ρ.
  int hex_reach() const { return hex_reach_; }

  /// Reference stencil Fρ + p_β − p_α for every triple.
  std::vector<Vec2> reference_stencil(const MultiLattice& lattice) const;

  /// Assumption checks: no (0, α, α); each species' same-species offsets span
  /// R²; (0, α, β) present for all α ≠ β. Throws ConfigError.
  void validate(const MultiLattice& lattice) const;

  /// True if the lattice edge ξ → ξ + ρ is covered by some triple.
  bool covers_edge(const LatticePoint& rho) const;

 private:
  std::vector<Triple> triples_;
  std::vector<LatticePoint> offsets_;
  std::vector<int> offset_slot_;
  double r_cut_ = 0.0;
  double r_cell_ = 0.0;
  int hex_reach_ = 0;
};

/// Graphene with a0 = √2/3^{3/4} (det F = 1) and the 18-triple
/// second-neighbour range.
std::pair<MultiLattice, InteractionRange> build_graphene();

double graphene_a0();

/// Dense ring-major numbering of the lattice sites with hex_distance <= K.
/// Ring k occupies indices [3k(k-1)+1, 3k(k+1)+1); within a ring sites run
/// counter-clockwise starting at (k, 0).
class SiteIndexer {
 public:
  SiteIndexer() = default;
  explicit SiteIndexer(int radius) : radius_(radius) {}

  int radius() const { return radius_; }
  std::size_t size() const { return static_cast<std::size_t>(hex_site_count(radius_)); }

  /// Dense index, or -1 when m lies outside the indexed hexagon.
  std::ptrdiff_t find(const LatticePoint& m) const;
  /// Dense index; throws OutOfDomainError outside the hexagon.
  std::size_t at(const LatticePoint& m) const;
  LatticePoint point(std::size_t index) const;

 private:
  int radius_ = 0;
};

enum class DofDomain { kLattice, kMesh };

/// Displacement U and shift displacements p_1..p_{S-1} (p_0 ≡ 0) over a
/// set of sites or mesh nodes.
struct DisplacementState {
  std::vector<Vec2> U;
  std::vector<std::vector<Vec2>> p;
  DofDomain domain = DofDomain::kLattice;

  static DisplacementState zeros(std::size_t count, int species, DofDomain domain);

  std::size_t size() const { return U.size(); }
  int species() const { return static_cast<int>(p.size()) + 1; }

  /// u_α = U + p_α at entry i.
  Vec2 u(int alpha, std::size_t i) const { return alpha == 0 ? U[i] : Vec2(U[i] + p[alpha - 1][i]); }

  bool all_finite() const;
  /// this += a·other
  void axpy(double a, const DisplacementState& other);
  double max_abs() const;
};

/// u_β(ξ+ρ) − u_α(ξ) for sites resolved by the indexer; throws
/// OutOfDomainError otherwise.
Vec2 stencil_difference(const DisplacementState& state, const SiteIndexer& indexer,
                        const LatticePoint& xi, const Triple& t);

/// D𝒚(ξ): reference stencil plus stencil differences, one entry per triple.
std::vector<Vec2> deformed_stencil(const DisplacementState& state, const MultiLattice& lattice,
                                   const InteractionRange& range, const SiteIndexer& indexer,
                                   const LatticePoint& xi);

}  // namespace bqcf
