#pragma once

#include "bqcf/mesh.hpp"
#include "bqcf/potential.hpp"

#include <memory>
#include <vector>

namespace bqcf {

enum class Quadrature { kBarycenter, kThreePoint };

struct CBDerivatives {
  double W = 0.0;
  Mat2 dG = Mat2::Zero();
  std::vector<Vec2> dp;  // ∂W/∂p_α, α = 1..S-1
};

/// Per-element stress diagnostic: S_d[β] = Σ_{t: β_t = β} V_{,t} ⊗ Fρ_t and
/// S_s[α·S + β] = Σ_{t: (α_t, β_t) = (α, β)} V_{,t}.
struct ContinuumStress {
  std::vector<std::vector<Mat2>> S_d;
  std::vector<std::vector<Vec2>> S_s;
};

/// Cauchy–Born energy Σ_T |T| · mean_q W_CB(∇U|_T, p(x_q)) on a P1 mesh with
/// homogeneous Dirichlet data. Uses the homogeneous potential only.
class CauchyBornModel {
 public:
  CauchyBornModel(const MultiLattice& lattice, const InteractionRange& range,
                  std::shared_ptr<const SitePotential> potential, std::shared_ptr<const Mesh> mesh,
                  Quadrature quadrature = Quadrature::kBarycenter);

  /// W_CB(G, p) = V̂(ref + G·Fρ + p_β − p_α) − V̂(ref).
  double w_cb(const Mat2& G, std::span<const Vec2> p) const;
  CBDerivatives w_cb_derivatives(const Mat2& G, std::span<const Vec2> p) const;

  double energy(const DisplacementState& field) const;
  /// Exact gradient of energy(); rows of Dirichlet nodes are zeroed.
  DisplacementState gradient(const DisplacementState& field) const;
  ContinuumStress stress(const DisplacementState& field) const;

  const Mesh& mesh() const { return *mesh_; }
  Quadrature quadrature() const { return quadrature_; }

 private:
  struct Point {
    std::array<double, 3> bary;
    double weight;
  };
  std::vector<Point> points() const;

  MultiLattice lattice_;
  InteractionRange range_;
  std::shared_ptr<const SitePotential> potential_;
  std::shared_ptr<const Mesh> mesh_;
  Quadrature quadrature_;
  std::vector<Vec2> reference_;
  std::vector<Vec2> Frho_;
  double offset_;
};

}  // namespace bqcf
