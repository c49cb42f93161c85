#pragma once

#include "bqcf/mesh.hpp"
#include "bqcf/potential.hpp"

#include <vector>

namespace bqcf {

/// q(s) = 6s⁵ − 15s⁴ + 10s³ and its first two derivatives (s unclamped).
double smoothstep(double s);
double smoothstep_d1(double s);
double smoothstep_d2(double s);

struct BlendSample {
  double value = 0.0;
  Vec2 grad = Vec2::Zero();
  Mat2 hess = Mat2::Zero();
};

/// φ(x) = q((r(x) − r_start)/(r_end − r_start)) clamped to [0, 1], with r the
/// hexagonal radius. r is piecewise linear, so the gradient and Hessian are
/// exact inside each of the six sectors; on the corner rays the one-sided
/// value of the sector picked by the max is returned.
class BlendFunction {
 public:
  BlendFunction() = default;
  BlendFunction(const MultiLattice& lattice, double r_start, double r_end);
  static BlendFunction from_layout(const DomainLayout& layout, const MultiLattice& lattice);

  double r_start() const { return r_start_; }
  double r_end() const { return r_end_; }

  double of_radius(double r) const;
  double value(const Vec2& x) const;
  BlendSample evaluate(const Vec2& x) const;
  /// Uses the integer hex distance, so values are exactly 6-fold symmetric.
  double at_site(const LatticePoint& m) const { return of_radius(row_spacing_ * hex_distance(m)); }

  /// φ at every mesh node (lattice nodes through at_site).
  std::vector<double> at_nodes(const Mesh& mesh) const;

 private:
  double r_start_ = 0.0;
  double r_end_ = 1.0;
  double row_spacing_ = 1.0;
  Mat2 Finv_ = Mat2::Identity();
};

struct BlendReport {
  std::vector<CheckResult> checks;
  double C_grad = 0.0;  // max|∇φ| · R_a
  double C_hess = 0.0;  // max|∇²φ| · R_a²
  bool ok() const;
};

/// Support conditions (φ = 0 on the core and on every defect site, φ = 1 on
/// every node outside Ω_a, 0 <= φ <= 1 and monotone, full refinement of the
/// atomistic stencil of every node with φ < 1), 6-fold symmetry, and
/// sampled C_φ.
BlendReport validate_blend(const BlendFunction& blend, const DomainLayout& layout, const Mesh& mesh,
                           const MultiLattice& lattice, const InteractionRange& range,
                           const DefectField* defect);

}  // namespace bqcf
