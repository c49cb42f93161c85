#include "doctest.h"

#include "bqcf/metrics.hpp"

#include <cmath>
#include <random>

using namespace bqcf;

namespace {

struct Setup {
  MultiLattice lat;
  InteractionRange range;
  Setup() { std::tie(lat, range) = build_graphene(); }
};

// a smooth decaying field
DisplacementState synthetic(const MultiLattice& lat, int rings) {
  const SiteIndexer idx(rings);
  auto s = DisplacementState::zeros(idx.size(), 2, DofDomain::kLattice);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Vec2 x = lat.position(idx.point(i));
    const double r2 = 1.0 + x.squaredNorm();
    s.U[i] = Vec2(x.x(), -0.5 * x.y()) / r2;
    s.p[0][i] = Vec2(0.3, 0.1 * x.x()) / r2;
  }
  return s;
}

// ‖∇·‖² and ‖·‖² of the P1 interpolant, element by element
std::pair<double, double> direct_norms2(const Mesh& m, const std::vector<Vec2>& v) {
  double h1 = 0, l2 = 0;
  for (const auto& t : m.triangles) {
    const Vec2 a = m.nodes[t[0]], b = m.nodes[t[1]], c = m.nodes[t[2]];
    Mat2 E;
    E << (b - a).x(), (c - a).x(), (b - a).y(), (c - a).y();
    const double area = 0.5 * std::abs(E.determinant());
    Mat2 dV;
    dV.col(0) = v[t[1]] - v[t[0]];
    dV.col(1) = v[t[2]] - v[t[0]];
    h1 += area * (dV * E.inverse()).squaredNorm();
    const Vec2 s = v[t[0]] + v[t[1]] + v[t[2]];
    l2 += area / 12.0 * (v[t[0]].squaredNorm() + v[t[1]].squaredNorm() + v[t[2]].squaredNorm() + s.squaredNorm());
  }
  return {h1, l2};
}

}  // namespace

TEST_CASE("slope fits") {
  std::vector<std::pair<double, double>> pts;
  for (double d : {100.0, 300.0, 1000.0, 5000.0}) pts.emplace_back(d, 1.0 / d);
  CHECK(fit_slope(pts) == doctest::Approx(-1.0).epsilon(1e-12));
  pts.clear();
  for (double d : {100.0, 300.0, 1000.0, 5000.0}) pts.emplace_back(d, 3.0 / std::sqrt(d));
  CHECK(fit_slope(pts) == doctest::Approx(-0.5).epsilon(1e-12));
  pts.clear();
  for (double d = 100.0; d <= 10000.0; d *= 1.5) pts.emplace_back(d, std::sqrt(std::log(d)) / d);
  const double s = fit_slope(pts);
  CHECK(s > -1.0);
  CHECK(s < -0.85);
  CHECK_THROWS(fit_slope(std::vector<std::pair<double, double>>{{1, 1}, {2, 0.5}}));
  CHECK_THROWS(fit_slope(std::vector<std::pair<double, double>>{{1, 1}, {2, 0.0}, {3, 0.1}}));
}

TEST_CASE("error norms") {
  Setup s;
  const int K = 30;
  const Mesh ref_mesh = build_atomistic_triangulation(s.lat, K);
  const auto ref = synthetic(s.lat, K);

  SUBCASE("reference against itself") {
    const auto e = lattice_error(ref, ref, ref_mesh, 8);
    CHECK(e.err_U == 0.0);
    CHECK(e.err_p == 0.0);
    CHECK(e.combined == 0.0);
  }

  SUBCASE("constant shift of U only moves the gauge") {
    auto moved = ref;
    for (auto& u : moved.U) u += Vec2(0.7, -1.3);
    auto other = ref;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 1e-3);
    for (std::size_t i = 0; i < other.size(); ++i) other.U[i] += Vec2(n(rng), n(rng));
    auto other_moved = other;
    for (auto& u : other_moved.U) u += Vec2(0.7, -1.3);
    const auto a = lattice_error(ref, other, ref_mesh, 8);
    const auto b = lattice_error(ref, other_moved, ref_mesh, 8);
    CHECK(b.err_U == doctest::Approx(a.err_U).epsilon(1e-9));
    CHECK((b.gauge - a.gauge - Vec2(-0.7, 1.3)).norm() < 1e-12);
    CHECK(lattice_error(ref, moved, ref_mesh, 8).err_U < 1e-12);
  }

  SUBCASE("truncated solution leaves the tail") {
    const int k = 12;
    const auto trunc = resize_sites(ref, k);
    const auto e = atomistic_error(ref, ref_mesh, trunc, 6);
    CHECK(e.gauge.norm() == 0.0);
    std::vector<Vec2> dU(ref.size(), Vec2::Zero()), dp(ref.size(), Vec2::Zero());
    for (std::size_t i = hex_site_count(k); i < ref.size(); ++i) {
      dU[i] = ref.U[i];
      dp[i] = ref.p[0][i];
    }
    CHECK(e.err_U == doctest::Approx(std::sqrt(direct_norms2(ref_mesh, dU).first)).epsilon(1e-10));
    CHECK(e.err_p == doctest::Approx(std::sqrt(direct_norms2(ref_mesh, dp).second)).epsilon(1e-10));
    CHECK(e.combined == doctest::Approx(e.err_U + e.err_p));
  }
}

TEST_CASE("sampling finite element solutions") {
  Setup s;
  const auto layout = DomainLayout::make(8.0, s.lat, s.range);
  const Mesh mesh = build_graded_mesh(layout, s.lat);
  P1Field f{&mesh, DisplacementState::zeros(mesh.node_count(), 2, DofDomain::kMesh), true};
  Mat2 G;
  G << 0.1, -0.2, 0.05, 0.3;
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    f.state.U[i] = G * mesh.nodes[i];
    f.state.p[0][i] = Vec2(0.01, 0.02);
  }
  const PointLocator loc(mesh);
  const int K = static_cast<int>(std::ceil(layout.R_c / s.lat.row_spacing())) + 3;
  const auto smp = sample_at_sites(f, loc, s.lat, K);
  const SiteIndexer idx(K);
  double worst = 0;
  int outside = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Vec2 x = s.lat.position(idx.point(i));
    if (s.lat.hex_radius(x) > layout.R_c + 1e-9) {
      ++outside;
      CHECK(smp.U[i].norm() == 0.0);
      continue;
    }
    worst = std::max(worst, (smp.U[i] - G * x).norm() + (smp.p[0][i] - Vec2(0.01, 0.02)).norm());
  }
  CHECK(outside > 0);
  CHECK(worst < 1e-10);

  const Mesh small = build_atomistic_triangulation(s.lat, K - 10);
  CHECK_THROWS_AS(bqcf_error(DisplacementState::zeros(small.node_count(), 2, DofDomain::kLattice), small, f, s.lat, 4),
                  OutOfDomainError);
}

TEST_CASE("decay profiles") {
  Setup s;
  const int K = 120;
  SUBCASE("zero field") {
    const auto z = DisplacementState::zeros(hex_site_count(K), 2, DofDomain::kLattice);
    const auto d = decay_profile(z, K, s.lat, 2.0);
    CHECK_FALSE(d.fitted);
    for (double v : d.max_DU) CHECK(v == 0.0);
  }
  SUBCASE("power law fields") {
    // |DU| ~ r^-2 and |p| ~ r^-2
    const SiteIndexer idx(K);
    auto st = DisplacementState::zeros(idx.size(), 2, DofDomain::kLattice);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Vec2 x = s.lat.position(idx.point(i));
      const double r2 = std::max(x.squaredNorm(), 1.0);
      st.U[i] = x / r2;
      st.p[0][i] = Vec2(1.0, 0.0) / r2;
    }
    const auto d = decay_profile(st, K, s.lat, 2.0);
    REQUIRE(d.fitted);
    CHECK(d.slope_DU == doctest::Approx(-2.0).epsilon(0.05));
    CHECK(d.slope_p == doctest::Approx(-2.0).epsilon(0.05));
  }
  CHECK_THROWS(decay_profile(DisplacementState::zeros(hex_site_count(4), 2, DofDomain::kLattice), 4, s.lat, 5.0));
}
