#include "bqcf/coupling.hpp"

#include "bqcf/parallel.hpp"

#include <sstream>

namespace bqcf {

std::shared_ptr<const BqcfProblem> BqcfProblem::build(double R_a, const MultiLattice& lattice,
                                                      const InteractionRange& range,
                                                      std::shared_ptr<const SitePotential> potential,
                                                      const DefectField* defect, const LayoutOptions& options,
                                                      Quadrature quadrature) {
  const auto layout = DomainLayout::make(R_a, lattice, range, options);
  auto mesh = std::make_shared<const Mesh>(build_graded_mesh(layout, lattice));
  return std::make_shared<const BqcfProblem>(lattice, range, std::move(potential), defect, layout, mesh,
                                             BlendFunction::from_layout(layout, lattice), quadrature);
}

BqcfProblem::BqcfProblem(const MultiLattice& lattice, const InteractionRange& range,
                         std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                         std::optional<DomainLayout> layout, std::shared_ptr<const Mesh> mesh, BlendFunction blend,
                         Quadrature quadrature)
    : lattice_(lattice),
      range_(range),
      potential_(potential),
      layout_(std::move(layout)),
      mesh_(mesh),
      blend_(blend),
      continuum_(lattice, range, potential, mesh, quadrature) {
  if (defect) defect_ = *defect;
  phi_ = blend_.at_nodes(*mesh_);
  const std::size_t nl = mesh_->lattice_node_count();
  const SiteIndexer idx(std::max(mesh_->lattice_rings, 0));
  for (std::size_t i = 0; i < phi_.size(); ++i) {
    if (phi_[i] >= 1.0) continue;
    if (i >= nl) {
      std::ostringstream os;
      os << "node " << i << " has phi < 1 but is not a lattice site";
      throw ConfigError(os.str());
    }
    blend_rings_ = std::max(blend_rings_, hex_distance(idx.point(i)));
  }
  if (blend_rings_ < 0) return;
  const int reach = range_.hex_reach();
  const bool pure_lattice = mesh_->lattice_triangles == mesh_->triangles.size();
  if (!pure_lattice && blend_rings_ + 2 * reach > mesh_->lattice_rings) {
    std::ostringstream os;
    os << "atomistic stencils of the blending region reach ring " << blend_rings_ + 2 * reach
       << " but the mesh is fully refined only up to ring " << mesh_->lattice_rings;
    throw ConfigError(os.str());
  }
  if (defect_)
    for (const auto& v : defect_->variants())
      if (blend_.at_site(v.site) != 0.0) throw ConfigError("blending function is nonzero on a defect site");
  atomistic_.emplace(lattice_, range_, potential_, defect, std::min(blend_rings_ + 2 * reach, mesh_->lattice_rings),
                     blend_rings_ + reach);
}

BqcfSides bqcf_sides(const BqcfProblem& problem, const DisplacementState& state) {
  BqcfSides out;
  out.continuum = problem.continuum().gradient(state);
  out.atomistic = problem.zero_state();
  if (const auto* at = problem.atomistic()) {
    const auto g = at->gradient(state);
    const auto& phi = problem.phi();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (phi[i] >= 1.0 || problem.mesh().boundary[i]) continue;
      out.atomistic.U[i] = g.U[i];
      for (std::size_t a = 0; a < g.p.size(); ++a) out.atomistic.p[a][i] = g.p[a][i];
    }
  }
  return out;
}

DisplacementState bqcf_residual(const BqcfProblem& problem, const DisplacementState& state) {
  if (state.size() != problem.node_count()) throw std::invalid_argument("state does not match the mesh");
  auto r = problem.continuum().gradient(state);
  const auto* at = problem.atomistic();
  if (!at) return r;
  const auto g = at->gradient(state);
  const auto& phi = problem.phi();
  const auto& boundary = problem.mesh().boundary;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (phi[i] >= 1.0 || boundary[i]) continue;
    const double w = phi[i];
    r.U[i] = (1.0 - w) * g.U[i] + w * r.U[i];
    for (std::size_t a = 0; a < g.p.size(); ++a) r.p[a][i] = (1.0 - w) * g.p[a][i] + w * r.p[a][i];
  }
  return r;
}

double weak_form_pairing(const BqcfProblem& problem, const DisplacementState& state,
                         const DisplacementState& test) {
  const auto r = bqcf_residual(problem, state);
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    s += r.U[i].dot(test.U[i]);
    for (std::size_t a = 0; a < r.p.size(); ++a) s += r.p[a][i].dot(test.p[a][i]);
  }
  return s;
}

double weak_form_split(const BqcfProblem& problem, const DisplacementState& state,
                       const DisplacementState& test) {
  const auto& lat = problem.lattice();
  const auto& range = problem.range();
  const auto& mesh = problem.mesh();
  const int S = lat.species();
  double atom = 0.0;

  if (problem.blend_rings() >= 0) {
    // lattice copies of the state and of the weighted test (1 − φ)(W + r_α)
    const int reach = range.hex_reach();
    const int rings = problem.blend_rings() + 2 * reach;
    const SiteIndexer idx(rings);
    const SiteIndexer nodes(mesh.lattice_rings);
    auto u = DisplacementState::zeros(idx.size(), S, DofDomain::kLattice);
    auto w = u;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto n = nodes.find(idx.point(i));
      if (n < 0) continue;
      u.U[i] = state.U[n];
      const double c = 1.0 - problem.blend().at_site(idx.point(i));
      w.U[i] = c * test.U[n];
      for (int a = 0; a + 1 < S; ++a) {
        u.p[a][i] = state.p[a][n];
        w.p[a][i] = c * test.p[a][n];
      }
    }
    const auto ref = range.reference_stencil(lat);
    const auto V = problem.potential();
    const auto* defect = problem.defect();
    for (std::size_t i = 0; i < static_cast<std::size_t>(hex_site_count(problem.blend_rings() + reach)); ++i) {
      const LatticePoint xi = idx.point(i);
      auto D = deformed_stencil(u, lat, range, idx, xi);
      const SiteVariant* var = defect ? defect->variant(xi) : nullptr;
      std::vector<Vec2> G;
      if (var) {
        for (std::size_t t = 0; t < D.size(); ++t) D[t] += var->reference_stencil[t] - ref[t];
        G = site_forces(*var->potential, D);
      } else {
        G = site_forces(*V, D);
      }
      for (std::size_t t = 0; t < D.size(); ++t) atom += G[t].dot(stencil_difference(w, idx, xi, range[t]));
    }
  }

  // continuum side with the nodal test φ(ν)·(W, r)(ν)
  const auto& phi = problem.phi();
  const auto& cb = problem.continuum();
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weight;
  if (cb.quadrature() == Quadrature::kBarycenter) {
    bary = {{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    weight = {1.0};
  } else {
    bary = {{2.0 / 3, 1.0 / 6, 1.0 / 6}, {1.0 / 6, 2.0 / 3, 1.0 / 6}, {1.0 / 6, 1.0 / 6, 2.0 / 3}};
    weight = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  }
  double cont = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto g = mesh.geometry(t);
    Mat2 G = Mat2::Zero(), GW = Mat2::Zero();
    for (int k = 0; k < 3; ++k) {
      G += state.U[tri[k]] * g.grad[k].transpose();
      GW += (phi[tri[k]] * test.U[tri[k]]) * g.grad[k].transpose();
    }
    for (std::size_t q = 0; q < bary.size(); ++q) {
      std::vector<Vec2> p(S - 1, Vec2::Zero()), r(S - 1, Vec2::Zero());
      for (int a = 0; a + 1 < S; ++a)
        for (int k = 0; k < 3; ++k) {
          p[a] += bary[q][k] * state.p[a][tri[k]];
          r[a] += bary[q][k] * phi[tri[k]] * test.p[a][tri[k]];
        }
      const auto d = cb.w_cb_derivatives(G, p);
      double v = (d.dG.array() * GW.array()).sum();
      for (int a = 0; a + 1 < S; ++a) v += d.dp[a].dot(r[a]);
      cont += g.area * weight[q] * v;
    }
  }
  return atom + cont;
}

}  // namespace bqcf
