#include "bqcf/metrics.hpp"

#include "bqcf/parallel.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bqcf {

DisplacementState sample_at_sites(const P1Field& field, const PointLocator& locator,
                                  const MultiLattice& lattice, int rings) {
  const SiteIndexer idx(rings);
  const int S = field.state.species();
  auto out = DisplacementState::zeros(idx.size(), S, DofDomain::kLattice);
  const auto& mesh = *field.mesh;
  const std::size_t direct = std::min(idx.size(), mesh.lattice_node_count());
  for (std::size_t i = 0; i < direct; ++i) {
    out.U[i] = field.state.U[i];
    for (int a = 0; a + 1 < S; ++a) out.p[a][i] = field.state.p[a][i];
  }
  parallel_chunks(idx.size() - direct, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t i = direct + k;
      const auto v = evaluate_p1(field, locator, lattice.position(idx.point(i)));
      out.U[i] = v.U;
      for (int a = 0; a + 1 < S; ++a) out.p[a][i] = v.p.empty() ? Vec2::Zero() : v.p[a];
    }
  });
  return out;
}

DisplacementState resize_sites(const DisplacementState& state, int rings) {
  const std::size_t n = static_cast<std::size_t>(hex_site_count(rings));
  auto out = DisplacementState::zeros(n, state.species(), DofDomain::kLattice);
  const std::size_t m = std::min(n, state.size());
  for (std::size_t i = 0; i < m; ++i) {
    out.U[i] = state.U[i];
    for (std::size_t a = 0; a < state.p.size(); ++a) out.p[a][i] = state.p[a][i];
  }
  return out;
}

ErrorNorms lattice_error(const DisplacementState& ref, const DisplacementState& sample, const Mesh& ref_mesh,
                         int gauge_rings) {
  if (ref.size() != sample.size() || ref.size() != ref_mesh.node_count())
    throw std::invalid_argument("reference, sample and mesh sizes differ");
  ErrorNorms out;
  const std::size_t ng = std::min<std::size_t>(ref.size(), hex_site_count(std::max(gauge_rings, 0)));
  Vec2 c = Vec2::Zero();
  for (std::size_t i = 0; i < ng; ++i) c += ref.U[i] - sample.U[i];
  if (ng > 0) c /= static_cast<double>(ng);
  out.gauge = c;
  std::vector<Vec2> d(ref.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = ref.U[i] - sample.U[i] - c;
  out.err_U = l2_and_h1_norms(ref_mesh, d).h1;
  for (std::size_t a = 0; a < ref.p.size(); ++a) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = ref.p[a][i] - sample.p[a][i];
    out.err_p += l2_and_h1_norms(ref_mesh, d).l2;
  }
  out.combined = out.err_U + out.err_p;
  return out;
}

ErrorNorms bqcf_error(const DisplacementState& reference, const Mesh& ref_mesh, const P1Field& solution,
                      const MultiLattice& lattice, int gauge_rings) {
  const int rings = ref_mesh.lattice_rings;
  double reach = 0.0;
  for (const auto& x : solution.mesh->nodes) reach = std::max(reach, lattice.hex_radius(x));
  if (reach > rings * lattice.row_spacing() + 1e-9) {
    std::ostringstream os;
    os << "computational domain (hex radius " << reach << ") is not inside the reference region ("
       << rings * lattice.row_spacing() << ")";
    throw OutOfDomainError(os.str());
  }
  const PointLocator loc(*solution.mesh);
  return lattice_error(reference, sample_at_sites(solution, loc, lattice, rings), ref_mesh, gauge_rings);
}

ErrorNorms atomistic_error(const DisplacementState& reference, const Mesh& ref_mesh,
                           const DisplacementState& solution, int gauge_rings) {
  if (solution.size() > reference.size()) throw OutOfDomainError("atomistic region exceeds the reference region");
  return lattice_error(reference, resize_sites(solution, ref_mesh.lattice_rings), ref_mesh, gauge_rings);
}

double fit_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw std::invalid_argument("slope fit needs at least three points");
  double sx = 0, sy = 0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) throw std::invalid_argument("slope fit needs positive values");
    sx += std::log(x);
    sy += std::log(y);
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    const double dx = std::log(x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y) - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("slope fit needs distinct abscissae");
  return sxy / sxx;
}

DecayProfile decay_profile(const DisplacementState& ref, int rings, const MultiLattice& lattice, double r_min,
                           int annuli) {
  if (annuli < 3) throw std::invalid_argument("decay profile needs at least three annuli");
  const double r_max = 0.75 * rings * lattice.row_spacing();
  if (!(r_min > 0.0) || !(r_max > r_min)) throw std::invalid_argument("empty fitting range for the decay profile");
  DecayProfile out;
  const double q = std::log(r_max / r_min) / annuli;
  for (int k = 0; k < annuli; ++k) {
    out.r_lo.push_back(r_min * std::exp(q * k));
    out.r_hi.push_back(r_min * std::exp(q * (k + 1)));
  }
  out.max_DU.assign(annuli, 0.0);
  out.max_p.assign(annuli, 0.0);
  const SiteIndexer idx(rings);
  const LatticePoint nn[6] = {{1, 0}, {0, 1}, {-1, 1}, {-1, 0}, {0, -1}, {1, -1}};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto m = idx.point(i);
    const double r = lattice.position(m).norm();
    if (r < r_min || r >= r_max) continue;
    const int k = std::min(annuli - 1, static_cast<int>(std::log(r / r_min) / q));
    double du = 0.0;
    for (const auto& rho : nn) {
      const auto j = idx.find(m + rho);
      if (j >= 0) du = std::max(du, (ref.U[j] - ref.U[i]).norm());
    }
    out.max_DU[k] = std::max(out.max_DU[k], du);
    double pm = 0.0;
    for (const auto& pa : ref.p) pm = std::max(pm, pa[i].norm());
    out.max_p[k] = std::max(out.max_p[k], pm);
  }
  std::vector<std::pair<double, double>> du, pp;
  for (int k = 0; k < annuli; ++k) {
    const double rc = std::sqrt(out.r_lo[k] * out.r_hi[k]);
    if (out.max_DU[k] > 0.0) du.emplace_back(rc, out.max_DU[k]);
    if (out.max_p[k] > 0.0) pp.emplace_back(rc, out.max_p[k]);
  }
  if (du.size() >= 3 && pp.size() >= 3) {
    out.fitted = true;
    out.slope_DU = fit_slope(du);
    out.slope_p = fit_slope(pp);
  }
  return out;
}

}  // namespace bqcf
