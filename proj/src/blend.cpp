#include "bqcf/blend.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bqcf {

double smoothstep(double s) { return s * s * s * (10.0 + s * (-15.0 + 6.0 * s)); }
double smoothstep_d1(double s) { return 30.0 * s * s * (1.0 - s) * (1.0 - s); }
double smoothstep_d2(double s) { return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s); }

BlendFunction::BlendFunction(const MultiLattice& lattice, double r_start, double r_end)
    : r_start_(r_start), r_end_(r_end), row_spacing_(lattice.row_spacing()), Finv_(lattice.F.inverse()) {
  if (!(r_end > r_start)) throw ConfigError("blending band must have positive width");
}

BlendFunction BlendFunction::from_layout(const DomainLayout& layout, const MultiLattice& lattice) {
  return BlendFunction(lattice, layout.blend_start, layout.blend_end);
}

double BlendFunction::of_radius(double r) const {
  if (r <= r_start_) return 0.0;
  if (r >= r_end_) return 1.0;
  return smoothstep((r - r_start_) / (r_end_ - r_start_));
}

double BlendFunction::value(const Vec2& x) const {
  const Vec2 m = Finv_ * x;
  return of_radius(row_spacing_ * std::max({std::abs(m.x()), std::abs(m.y()), std::abs(m.x() + m.y())}));
}

BlendSample BlendFunction::evaluate(const Vec2& x) const {
  const Vec2 m = Finv_ * x;
  // active linear piece of the hex gauge
  const double c[3] = {m.x(), m.y(), m.x() + m.y()};
  const Vec2 dir[3] = {Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)};
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(c[i]) > std::abs(c[k])) k = i;
  const double sign = c[k] < 0 ? -1.0 : 1.0;
  const double r = row_spacing_ * std::abs(c[k]);
  const Vec2 dr = row_spacing_ * sign * (Finv_.transpose() * dir[k]);

  BlendSample out;
  out.value = of_radius(r);
  if (r <= r_start_ || r >= r_end_) return out;
  const double w = r_end_ - r_start_;
  const double s = (r - r_start_) / w;
  out.grad = smoothstep_d1(s) / w * dr;
  out.hess = smoothstep_d2(s) / (w * w) * (dr * dr.transpose());
  return out;
}

std::vector<double> BlendFunction::at_nodes(const Mesh& mesh) const {
  std::vector<double> phi(mesh.node_count());
  const SiteIndexer idx(std::max(mesh.lattice_rings, 0));
  const std::size_t nl = mesh.lattice_node_count();
  for (std::size_t i = 0; i < phi.size(); ++i)
    phi[i] = i < nl ? at_site(idx.point(i)) : value(mesh.nodes[i]);
  return phi;
}

bool BlendReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

namespace {

std::string site_str(const LatticePoint& m) {
  return "(" + std::to_string(m.m1) + ", " + std::to_string(m.m2) + ")";
}

}  // namespace

BlendReport validate_blend(const BlendFunction& blend, const DomainLayout& layout, const Mesh& mesh,
                           const MultiLattice& lattice, const InteractionRange& range,
                           const DefectField* defect) {
  BlendReport rep;
  const auto phi = blend.at_nodes(mesh);
  const SiteIndexer idx(std::max(mesh.lattice_rings, 0));
  const std::size_t nl = mesh.lattice_node_count();
  const double h = layout.row_spacing;

  {
    CheckResult r{"blend-core", true, ""};
    for (std::size_t i = 0; i < nl && r.pass; ++i)
      if (h * hex_distance(idx.point(i)) <= layout.R_core + 1e-12 && phi[i] != 0.0) {
        r.pass = false;
        r.detail = "phi != 0 at core site " + site_str(idx.point(i));
      }
    rep.checks.push_back(r);
  }
  {
    CheckResult r{"blend-defect", true, ""};
    if (defect)
      for (const auto& v : defect->variants())
        if (blend.at_site(v.site) != 0.0) {
          r.pass = false;
          r.detail = "phi = " + std::to_string(blend.at_site(v.site)) + " at defect site " + site_str(v.site);
          break;
        }
    rep.checks.push_back(r);
  }
  {
    CheckResult r{"blend-outside-atomistic", true, ""};
    const double inner = layout.atomistic_rings * h;
    for (std::size_t i = 0; i < mesh.node_count() && r.pass; ++i) {
      const double rad = i < nl ? h * hex_distance(idx.point(i)) : lattice.hex_radius(mesh.nodes[i]);
      if (rad > inner + 1e-9 && phi[i] != 1.0) {
        r.pass = false;
        r.detail = "phi != 1 at node " + std::to_string(i) + " outside the atomistic region";
      }
    }
    rep.checks.push_back(r);
  }
  {
    // atomistic forces at a node need sites two stencil reaches away
    CheckResult r{"blend-full-refinement", true, ""};
    const int need = 2 * range.hex_reach();
    for (std::size_t i = 0; i < mesh.node_count() && r.pass; ++i) {
      if (phi[i] >= 1.0) continue;
      if (i >= nl || hex_distance(idx.point(i)) + need > mesh.lattice_rings) {
        r.pass = false;
        r.detail = "node " + std::to_string(i) + " has phi < 1 but its atomistic neighbourhood is not fully refined";
      }
    }
    rep.checks.push_back(r);
  }
  {
    CheckResult r{"blend-range-monotone", true, ""};
    double prev = -1.0;
    for (int k = 0; k <= 4000; ++k) {
      const double rad = layout.R_a * 1.25 * k / 4000.0;
      const double v = blend.of_radius(rad);
      if (v < 0.0 || v > 1.0 || v < prev) {
        r.pass = false;
        r.detail = "phi not in [0,1] or decreasing at r = " + std::to_string(rad);
        break;
      }
      prev = v;
    }
    rep.checks.push_back(r);
  }
  {
    // rotation by 60 degrees maps (m1, m2) to (-m2, m1 + m2)
    CheckResult r{"blend-sixfold", true, ""};
    for (std::size_t i = 0; i < nl && r.pass; ++i) {
      const LatticePoint m = idx.point(i);
      const LatticePoint q{-m.m2, m.m1 + m.m2};
      const Vec2 rot = Eigen::Rotation2Dd(M_PI / 3).toRotationMatrix() * lattice.position(m);
      if ((rot - lattice.position(q)).norm() > 1e-9 || blend.at_site(q) != blend.at_site(m)) {
        r.pass = false;
        r.detail = "phi not 6-fold symmetric at " + site_str(m);
      }
    }
    rep.checks.push_back(r);
  }
  {
    double g = 0.0, H = 0.0;
    auto sample = [&](const Vec2& x) {
      const auto b = blend.evaluate(x);
      g = std::max(g, b.grad.norm());
      H = std::max(H, b.hess.norm());
    };
    for (std::size_t i = 0; i < nl; ++i) sample(mesh.nodes[i]);
    for (std::size_t t = 0; t < mesh.lattice_triangles; ++t) {
      const auto& tri = mesh.triangles[t];
      sample((mesh.nodes[tri[0]] + mesh.nodes[tri[1]] + mesh.nodes[tri[2]]) / 3.0);
    }
    rep.C_grad = g * layout.R_a;
    rep.C_hess = H * layout.R_a * layout.R_a;
    std::ostringstream os;
    os << "C_phi: max|grad phi| R_a = " << rep.C_grad << ", max|hess phi| R_a^2 = " << rep.C_hess;
    rep.checks.push_back({"blend-constants", std::isfinite(rep.C_grad) && std::isfinite(rep.C_hess), os.str()});
  }
  return rep;
}

}  // namespace bqcf
