#include "doctest.h"

#include "bqcf/mesh.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

using namespace bqcf;

namespace {

bool all_pass(const std::vector<CheckResult>& rs) {
  bool ok = true;
  for (const auto& r : rs) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.pass);
    ok = ok && r.pass;
  }
  return ok;
}

}  // namespace

TEST_CASE("atomistic triangulation") {
  const auto [lat, range] = build_graphene();
  const int K = 6;
  const Mesh m = build_atomistic_triangulation(lat, K);
  CHECK(m.node_count() == hex_site_count(K));
  CHECK(m.triangles.size() == std::size_t(6 * K * K));
  for (std::size_t t = 0; t < m.triangles.size(); ++t) CHECK(m.geometry(t).area == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(m.total_area() == doctest::Approx(3.0 * K * K).epsilon(1e-12));

  std::vector<int> incident(m.node_count(), 0);
  for (const auto& t : m.triangles)
    for (int v : t) ++incident[v];
  const SiteIndexer idx(K);
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if (hex_distance(idx.point(i)) < K) CHECK(incident[i] == 6);

  all_pass(check_mesh(m, lat, range, nullptr));
  CHECK_THROWS_AS(build_atomistic_triangulation(lat, -1.0), ConfigError);
  CHECK(build_atomistic_triangulation(lat, 3.0).lattice_rings == 3);
}

TEST_CASE("domain layout") {
  const auto [lat, range] = build_graphene();
  const auto L = DomainLayout::make(8, lat, range);
  CHECK(L.R_core == 4.0);
  CHECK(L.R_c == 64.0);
  CHECK(L.R_o == doctest::Approx(64.0 * 2 / std::sqrt(3.0)));
  CHECK(L.R_core < L.R_a);
  CHECK(L.R_a < L.R_c);
  CHECK(L.R_c <= L.R_o);
  CHECK(L.blend_start < L.blend_end);
  CHECK(L.atomistic_rings * L.row_spacing <= 8.0);
  CHECK((L.atomistic_rings + 1) * L.row_spacing > 8.0);
  CHECK(L.size_factor(8.0) == 1.0);
  CHECK(L.size_factor(32.0) == doctest::Approx(8.0));

  LayoutOptions bad;
  bad.rc_exponent = 1.0;
  CHECK_THROWS_AS(DomainLayout::make(8, lat, range, bad), ConfigError);
  LayoutOptions wide;
  wide.pad_factor = 4.0;
  CHECK_THROWS_AS(DomainLayout::make(8, lat, range, wide), ConfigError);
}

TEST_CASE("graded meshes over the sweep") {
  const auto [lat, range] = build_graphene();
  std::map<int, std::size_t> nodes;
  for (int R_a : {8, 12, 16, 20, 24}) {
    CAPTURE(R_a);
    const auto L = DomainLayout::make(R_a, lat, range);
    const Mesh m = build_graded_mesh(L, lat);
    nodes[R_a] = m.node_count();
    all_pass(check_mesh(m, lat, range, &L));
    CHECK(m.lattice_rings == L.atomistic_rings + 1);
    CHECK(m.ring_radii.back() == L.R_c);
    // Ω is the hexagon of apothem R_c: total area 2√3 R_c²
    CHECK(m.total_area() == doctest::Approx(2 * std::sqrt(3.0) * L.R_c * L.R_c).epsilon(1e-10));
    for (std::size_t i = 0; i < m.node_count(); ++i) {
      const double r = lat.hex_radius(m.nodes[i]);
      CHECK(bool(m.boundary[i]) == (std::abs(r - L.R_c) < 1e-9));
      if (r <= L.R_core) CHECK(m.tags[i] == Region::kCore);
    }
    // ring spacing tracks h(r) = (r/R_a)^{3/2} within rounding
    for (std::size_t k = 1; k + 2 < m.ring_radii.size(); ++k) {
      const double dr = m.ring_radii[k + 1] - m.ring_radii[k];
      CHECK(dr == doctest::Approx(L.row_spacing * L.size_factor(m.ring_radii[k])));
    }
  }
  const double ratio = double(nodes[16]) / nodes[8];
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 6.0);
}

TEST_CASE("P1 evaluation") {
  const auto [lat, range] = build_graphene();
  const auto L = DomainLayout::make(8, lat, range);
  const Mesh m = build_graded_mesh(L, lat);
  const PointLocator loc(m);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);

  P1Field f{&m, DisplacementState::zeros(m.node_count(), 2, DofDomain::kMesh), false};
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    f.state.U[i] = Vec2(u(rng), u(rng));
    f.state.p[0][i] = Vec2(u(rng), u(rng));
  }
  for (std::size_t i = 0; i < m.node_count(); i += 7) {
    const auto v = evaluate_p1(f, loc, m.nodes[i]);
    CHECK((v.U - f.state.U[i]).norm() < 1e-12);
    CHECK((v.p[0] - f.state.p[0][i]).norm() < 1e-12);
  }

  Mat2 G;
  G << 0.3, -0.2, 0.1, 0.7;
  for (std::size_t i = 0; i < m.node_count(); ++i) f.state.U[i] = G * m.nodes[i];
  for (int k = 0; k < 200; ++k) {
    const Vec2 x(60 * u(rng), 60 * u(rng));
    if (lat.hex_radius(x) > L.R_c - 1e-6) continue;
    const auto v = evaluate_p1(f, loc, x);
    REQUIRE(v.triangle >= 0);
    CHECK((v.U - G * x).norm() < 1e-11);
    CHECK((v.gradU - G).norm() < 1e-12);
  }

  const Vec2 outside(0, L.R_c + 5);
  CHECK_THROWS_AS(evaluate_p1(f, loc, outside), OutOfDomainError);
  f.dirichlet = true;
  const auto z = evaluate_p1(f, loc, outside);
  CHECK(z.U.norm() == 0.0);
  CHECK(z.p[0].norm() == 0.0);
  CHECK(z.triangle == -1);
}

TEST_CASE("exact P1 norms") {
  const auto [lat, range] = build_graphene();
  const Mesh m = build_atomistic_triangulation(lat, 9);
  const double A = m.total_area();
  std::vector<Vec2> v(m.node_count(), Vec2::Zero());
  auto n0 = l2_and_h1_norms(m, v);
  CHECK(n0.l2 == 0.0);
  CHECK(n0.h1 == 0.0);

  const Vec2 c(0.3, -0.4);
  std::fill(v.begin(), v.end(), c);
  auto nc = l2_and_h1_norms(m, v);
  CHECK(nc.l2 == doctest::Approx(c.norm() * std::sqrt(A)).epsilon(1e-13));
  CHECK(nc.h1 < 1e-13);

  // oracle: edge-midpoint rule (exact for quadratics) and direct gradients
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& x : v) x = Vec2(u(rng), u(rng));
  double l2 = 0, h1 = 0;
  for (const auto& t : m.triangles) {
    const Vec2 &x0 = m.nodes[t[0]], &x1 = m.nodes[t[1]], &x2 = m.nodes[t[2]];
    const double area = 0.5 * std::abs((x1 - x0).x() * (x2 - x0).y() - (x1 - x0).y() * (x2 - x0).x());
    const Vec2 m01 = (v[t[0]] + v[t[1]]) / 2, m12 = (v[t[1]] + v[t[2]]) / 2, m02 = (v[t[0]] + v[t[2]]) / 2;
    l2 += area / 3 * (m01.squaredNorm() + m12.squaredNorm() + m02.squaredNorm());
    Mat2 E, D;
    E.col(0) = x1 - x0;
    E.col(1) = x2 - x0;
    D.col(0) = v[t[1]] - v[t[0]];
    D.col(1) = v[t[2]] - v[t[0]];
    h1 += area * (D * E.inverse()).squaredNorm();
  }
  const auto nr = l2_and_h1_norms(m, v);
  CHECK(nr.l2 == doctest::Approx(std::sqrt(l2)).epsilon(1e-12));
  CHECK(nr.h1 == doctest::Approx(std::sqrt(h1)).epsilon(1e-12));

  std::vector<Vec2> wrong(3);
  CHECK_THROWS(l2_and_h1_norms(m, wrong));
}

TEST_CASE("mesh dump format") {
  const auto [lat, range] = build_graphene();
  const Mesh m = build_atomistic_triangulation(lat, 2);
  std::ostringstream os;
  write_mesh(os, m);
  std::istringstream is(os.str());
  std::string w1, w2;
  std::size_t n, t;
  is >> w1 >> n >> w2 >> t;
  CHECK(w1 == "nodes");
  CHECK(w2 == "triangles");
  CHECK(n == m.node_count());
  CHECK(t == m.triangles.size());
}
