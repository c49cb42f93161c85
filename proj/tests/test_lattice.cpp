#include "doctest.h"

#include "bqcf/lattice.hpp"

#include <cmath>
#include <random>

using namespace bqcf;

namespace {

DisplacementState random_state(std::size_t n, int S, std::mt19937_64& rng, double scale = 0.1) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto st = DisplacementState::zeros(n, S, DofDomain::kLattice);
  for (auto& v : st.U) v = Vec2(u(rng), u(rng));
  for (auto& arr : st.p)
    for (auto& v : arr) v = Vec2(u(rng), u(rng));
  return st;
}

}  // namespace

TEST_CASE("graphene constants") {
  const auto [lat, range] = build_graphene();
  const double a0 = std::sqrt(2.0) / std::pow(3.0, 0.75);
  CHECK(lat.F(0, 0) == doctest::Approx(a0 * std::sqrt(3.0)).epsilon(1e-15));
  CHECK(lat.F(0, 1) == doctest::Approx(a0 * std::sqrt(3.0) / 2).epsilon(1e-15));
  CHECK(lat.F(1, 0) == 0.0);
  CHECK(lat.F(1, 1) == doctest::Approx(1.5 * a0).epsilon(1e-15));
  CHECK(std::abs(lat.F.determinant() - 1.0) < 1e-12);
  CHECK(range.size() == 18);
  CHECK(lat.species() == 2);
  CHECK(lat.shifts_ref[1].norm() == doctest::Approx(0.620403).epsilon(1e-6));
  CHECK(lat.shifts_ref[1].x() == doctest::Approx(a0 * std::sqrt(3.0) / 2));
  CHECK(lat.shifts_ref[1].y() == doctest::Approx(a0 / 2));
  CHECK_NOTHROW(lat.validate());
  CHECK_NOTHROW(range.validate(lat));
  CHECK(range.r_cut() == doctest::Approx(std::sqrt(3.0) * a0));
  CHECK(range.hex_reach() == 1);
  CHECK(lat.row_spacing() == doctest::Approx(1.5 * a0));
}

TEST_CASE("interaction range assumptions are enforced") {
  auto [lat, range] = build_graphene();
  std::vector<Triple> bad(range.triples().begin(), range.triples().end());
  bad.push_back({{0, 0}, 1, 1});
  CHECK_THROWS_AS(InteractionRange(lat, bad).validate(lat), ConfigError);

  std::vector<Triple> no_cross;
  for (const auto& t : range.triples())
    if (!(t.rho == LatticePoint{0, 0})) no_cross.push_back(t);
  CHECK_THROWS_AS(InteractionRange(lat, no_cross).validate(lat), ConfigError);

  MultiLattice skew = lat;
  skew.F(0, 0) *= 1.01;
  CHECK_THROWS_AS(skew.validate(), ConfigError);
}

TEST_CASE("site indexer is a ring-major bijection") {
  const SiteIndexer idx(7);
  CHECK(idx.size() == 3 * 7 * 8 + 1);
  std::vector<int> seen(idx.size(), 0);
  for (int a = -9; a <= 9; ++a)
    for (int b = -9; b <= 9; ++b) {
      const LatticePoint m{a, b};
      const auto i = idx.find(m);
      if (hex_distance(m) > 7) {
        CHECK(i == -1);
        CHECK_THROWS_AS(idx.at(m), OutOfDomainError);
        continue;
      }
      REQUIRE(i >= 0);
      ++seen[i];
      CHECK(idx.point(i) == m);
    }
  for (int s : seen) CHECK(s == 1);
  for (int k = 1; k <= 7; ++k) CHECK(idx.find({k, 0}) == 3 * k * (k - 1) + 1);
  CHECK(idx.point(0) == LatticePoint{0, 0});
  // counter-clockwise: second site of ring 1 is at +60 degrees
  CHECK(idx.point(2) == LatticePoint{0, 1});
}

TEST_CASE("stencil differences") {
  const auto [lat, range] = build_graphene();
  const SiteIndexer idx(6);
  std::mt19937_64 rng(7);

  auto zero = DisplacementState::zeros(idx.size(), 2, DofDomain::kLattice);
  for (const auto& t : range.triples()) CHECK(stencil_difference(zero, idx, {1, 2}, t).norm() == 0.0);

  SUBCASE("homogeneous displacement") {
    Mat2 G;
    G << 0.03, -0.01, 0.02, 0.05;
    auto st = zero;
    for (std::size_t i = 0; i < idx.size(); ++i) st.U[i] = G * lat.position(idx.point(i));
    for (const auto& t : range.triples()) {
      const Vec2 d = stencil_difference(st, idx, {-1, 2}, t);
      CHECK((d - G * lat.position(t.rho)).norm() < 1e-15);
    }
  }

  SUBCASE("matches raw atom positions") {
    const auto st = random_state(idx.size(), 2, rng);
    auto y = [&](const LatticePoint& m, int a) {
      const std::size_t i = idx.at(m);
      Vec2 v = lat.position(m) + lat.shifts_ref[a] + st.U[i];
      if (a == 1) v += st.p[0][i];
      return v;
    };
    for (int trial = 0; trial < 50; ++trial) {
      const LatticePoint xi = idx.point(rng() % hex_site_count(5));
      const auto D = deformed_stencil(st, lat, range, idx, xi);
      for (std::size_t k = 0; k < range.size(); ++k) {
        const auto& t = range[k];
        const Vec2 raw = y(xi + t.rho, t.beta) - y(xi, t.alpha);
        CHECK((D[k] - raw).norm() < 1e-14);
      }
    }
  }

  SUBCASE("linearity and translation invariance") {
    const auto a = random_state(idx.size(), 2, rng);
    const auto b = random_state(idx.size(), 2, rng);
    auto c = a;
    c.axpy(-0.7, b);
    auto shifted = a;
    for (auto& u : shifted.U) u += Vec2(0.3, -1.2);
    for (int trial = 0; trial < 30; ++trial) {
      const LatticePoint xi = idx.point(rng() % hex_site_count(5));
      for (const auto& t : range.triples()) {
        const Vec2 lhs = stencil_difference(c, idx, xi, t);
        const Vec2 rhs = stencil_difference(a, idx, xi, t) - 0.7 * stencil_difference(b, idx, xi, t);
        CHECK((lhs - rhs).norm() < 1e-14);
        CHECK((stencil_difference(shifted, idx, xi, t) - stencil_difference(a, idx, xi, t)).norm() < 1e-14);
      }
    }
  }

  SUBCASE("reference stencil") {
    const auto ref = range.reference_stencil(lat);
    for (const LatticePoint xi : {LatticePoint{0, 0}, LatticePoint{3, -1}, LatticePoint{-4, 4}}) {
      const auto D = deformed_stencil(zero, lat, range, idx, xi);
      for (std::size_t k = 0; k < D.size(); ++k) CHECK(D[k] == ref[k]);
    }
    const int k = range.index_of({{0, 0}, 0, 1});
    REQUIRE(k >= 0);
    CHECK(ref[k] == lat.shifts_ref[1]);
  }

  CHECK_THROWS_AS(stencil_difference(zero, idx, {6, 0}, Triple{{1, 0}, 0, 0}), OutOfDomainError);
}
