#pragma once

#include "bqcf/lattice.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

namespace bqcf {

enum class Region : int { kCore = 0, kAtomistic = 1, kBlend = 2, kContinuum = 3, kBoundary = 4 };

struct LayoutOptions {
  double core_ratio = 0.5;       // R_core / R_a
  double rc_exponent = 2.0;      // R_c = rc_scale · R_a^rc_exponent
  double rc_scale = 1.0;
  double pad_factor = 2.0;       // blend band ends pad_factor · r_buff inside R_a
  double growth_exponent = 1.5;  // h(r) = (r / R_a)^growth_exponent
  double shape_bound = 4.0;      // C_Th
};

/// Hexagonal subdomains. All radii are hexagon inner widths (apothems)
/// except R_o, the circumradius of Ω.
struct DomainLayout {
  double R_a = 0.0;
  double R_core = 0.0;
  double R_b = 0.0;  // outer edge of the blending band
  double R_c = 0.0;  // apothem of Ω
  double R_o = 0.0;
  double r_i = 0.0;
  double blend_start = 0.0;
  double blend_end = 0.0;
  int atomistic_rings = 0;  // Ω_a = lattice sites with hex_distance <= atomistic_rings
  double row_spacing = 0.0;
  double growth_exponent = 1.5;
  double shape_bound = 4.0;
  int lambda_exponent = 2;  // R_o <= C_o R_core^λ
  double C_o = 0.0;

  static DomainLayout make(double R_a, const MultiLattice& lattice, const InteractionRange& range,
                           const LayoutOptions& options = {});
  /// Throws ConfigError on violated ordering/band conditions.
  void validate() const;

  /// Target mesh size (in row spacings) at hexagonal radius r.
  double size_factor(double r) const;
};

struct TriangleGeometry {
  double area = 0.0;
  std::array<Vec2, 3> grad;  // gradients of the barycentric coordinates
  double circumradius = 0.0;
  double inradius = 0.0;
  double diameter = 0.0;
};

/// Conforming triangulation. When lattice_rings >= 0 the first
/// hex_site_count(lattice_rings) nodes are the lattice sites in SiteIndexer
/// order and every triangle among them is a ±F·T̂ lattice triangle.
struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Region> tags;
  std::vector<char> boundary;  // 1 on ∂Ω
  int lattice_rings = -1;
  std::size_t lattice_triangles = 0;  // triangles [0, lattice_triangles) belong to 𝓣_a
  std::vector<double> ring_radii;     // hexagonal radius of each coarse ring

  std::size_t node_count() const { return nodes.size(); }
  std::size_t lattice_node_count() const {
    return lattice_rings < 0 ? 0 : static_cast<std::size_t>(hex_site_count(lattice_rings));
  }
  /// Node index of a lattice site, or -1 if the site is not a mesh node.
  std::ptrdiff_t lattice_node(const LatticePoint& m) const {
    return lattice_rings < 0 ? -1 : SiteIndexer(lattice_rings).find(m);
  }
  TriangleGeometry geometry(std::size_t t) const;
  double total_area() const;
};

/// 𝓣_a restricted to the hexagon of `rings` lattice rings: triangles
/// ξ + F·conv{0, e1, e2} and ξ − F·conv{0, e1, e2}. The outer ring is tagged
/// as boundary.
Mesh build_atomistic_triangulation(const MultiLattice& lattice, int rings);
Mesh build_atomistic_triangulation(const MultiLattice& lattice, double radius);

/// Fully refined lattice mesh over Ω_a plus one collar ring, then hexagonal
/// rings graded with h(r) = max(1, (r/R_a)^s) up to R_c.
Mesh build_graded_mesh(const DomainLayout& layout, const MultiLattice& lattice);

/// Region tag from a hexagonal radius.
Region classify(const DomainLayout& layout, double hex_radius, bool on_boundary);

/// Bucket grid for point location.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh);

  struct Hit {
    std::ptrdiff_t triangle = -1;
    std::array<double, 3> bary{};
  };
  /// Containing triangle (with barycentric tolerance 1e-10), or triangle -1.
  Hit locate(const Vec2& x) const;

 private:
  const Mesh* mesh_;
  Vec2 lo_;
  double cell_;
  int nx_ = 0, ny_ = 0;
  std::vector<int> start_;
  std::vector<int> items_;
};

/// P1 finite element field; with `dirichlet` set it is extended by zero
/// outside Ω.
struct P1Field {
  const Mesh* mesh = nullptr;
  DisplacementState state;
  bool dirichlet = true;
};

struct P1Value {
  Vec2 U = Vec2::Zero();
  std::vector<Vec2> p;
  Mat2 gradU = Mat2::Zero();
  std::ptrdiff_t triangle = -1;
};

/// Barycentric evaluation. Outside the mesh: zero with the Dirichlet flag,
/// OutOfDomainError without.
P1Value evaluate_p1(const P1Field& field, const PointLocator& locator, const Vec2& x);

struct P1Norms {
  double l2 = 0.0;
  double h1 = 0.0;  // ‖∇·‖_{L²}
};

/// Exact L² norm and H¹ seminorm of the P1 interpolant of nodal values.
P1Norms l2_and_h1_norms(const Mesh& mesh, std::span<const Vec2> values);

/// Structural invariants: orientation, conformity, shape regularity,
/// lattice-edge coverage, and (with a layout) full refinement over Ω_a and
/// the growth bound diam(T) <= C_Th (dist(0, T) / R_a)^s.
std::vector<CheckResult> check_mesh(const Mesh& mesh, const MultiLattice& lattice,
                                    const InteractionRange& range, const DomainLayout* layout);

/// Text dump: "nodes N triangles M", N lines "x y tag", M lines "i j k".
void write_mesh(std::ostream& os, const Mesh& mesh);

}  // namespace bqcf
