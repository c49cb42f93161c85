#include "doctest.h"

#include "bqcf/blend.hpp"

#include <cmath>
#include <random>

using namespace bqcf;

TEST_CASE("smoothstep profile") {
  CHECK(smoothstep(0.0) == 0.0);
  CHECK(smoothstep(1.0) == 1.0);
  CHECK(smoothstep(0.5) == 0.5);
  CHECK(smoothstep_d1(0.0) == 0.0);
  CHECK(smoothstep_d1(1.0) == 0.0);
  CHECK(smoothstep_d2(0.0) == 0.0);
  CHECK(smoothstep_d2(1.0) == 0.0);
  for (double s : {0.1, 0.35, 0.8}) {
    const double h = 1e-5;
    CHECK(smoothstep_d1(s) == doctest::Approx((smoothstep(s + h) - smoothstep(s - h)) / (2 * h)).epsilon(1e-8));
    CHECK(smoothstep_d2(s) == doctest::Approx((smoothstep_d1(s + h) - smoothstep_d1(s - h)) / (2 * h)).epsilon(1e-8));
  }
}

TEST_CASE("blend values and derivatives") {
  const auto [lat, range] = build_graphene();
  const auto L = DomainLayout::make(12, lat, range);
  const auto phi = BlendFunction::from_layout(L, lat);
  CHECK(phi.of_radius(L.blend_start) == 0.0);
  CHECK(phi.of_radius(L.blend_end) == 1.0);
  CHECK(phi.of_radius(0.5 * (L.blend_start + L.blend_end)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(phi.value(Vec2::Zero()) == 0.0);
  CHECK(phi.value(Vec2(100, 0)) == 1.0);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI), rad(L.blend_start, L.blend_end * 1.1);
  const Mat2 Finv = lat.F.inverse();
  int n = 0;
  double worst_g = 0, worst_h = 0, worst_h2 = 0;
  while (n < 100) {
    const double a = ang(rng), r = rad(rng);
    const Vec2 x = r * Vec2(std::cos(a), std::sin(a));
    // stay away from the corner rays, where the hex radius has a kink
    const Vec2 m = Finv * x;
    double c[3] = {std::abs(m.x()), std::abs(m.y()), std::abs(m.x() + m.y())};
    std::sort(c, c + 3);
    if (c[2] - c[1] < 0.05) continue;
    const double rh = lat.hex_radius(x);
    if (rh < L.blend_start + 0.01 || rh > L.blend_end - 0.01) continue;
    ++n;
    const auto b = phi.evaluate(x);
    CHECK(b.value == phi.value(x));
    Vec2 fd;
    Mat2 fdh, fdh2;
    for (int k = 0; k < 2; ++k) {
      Vec2 e = Vec2::Zero();
      e[k] = 1e-5;
      fd[k] = (phi.value(x + e) - phi.value(x - e)) / 2e-5;
      fdh.col(k) = (phi.evaluate(x + e).grad - phi.evaluate(x - e).grad) / 2e-5;
    }
    // second differences of the value itself, step 1e-3
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        Vec2 ei = Vec2::Zero(), ej = Vec2::Zero();
        ei[i] = 1e-3;
        ej[j] = 1e-3;
        fdh2(i, j) = (phi.value(x + ei + ej) - phi.value(x + ei - ej) - phi.value(x - ei + ej) +
                      phi.value(x - ei - ej)) / 4e-6;
      }
    worst_g = std::max(worst_g, (fd - b.grad).norm() / b.grad.norm());
    worst_h = std::max(worst_h, (fdh - b.hess).norm() / b.hess.norm());
    worst_h2 = std::max(worst_h2, (fdh2 - b.hess).norm() / b.hess.norm());
  }
  CHECK(worst_g <= 1e-6);
  CHECK(worst_h <= 1e-6);
  CHECK(worst_h2 <= 1e-4);
}

TEST_CASE("blend validation over the sweep") {
  const auto [lat, range] = build_graphene();
  const auto sw = make_stone_wales(lat, range, graphene_a0());
  for (int R_a : {8, 12, 16, 20, 24}) {
    CAPTURE(R_a);
    const auto L = DomainLayout::make(R_a, lat, range);
    const auto mesh = build_graded_mesh(L, lat);
    const auto phi = BlendFunction::from_layout(L, lat);
    const auto rep = validate_blend(phi, L, mesh, lat, range, &sw);
    for (const auto& c : rep.checks) {
      INFO(c.name << ": " << c.detail);
      CHECK(c.pass);
    }
    CHECK(phi.at_site({0, 0}) == 0.0);
    CHECK(rep.C_grad > 0);
    // exact symmetry under the 60 degree rotation on sampled points
    const Mat2 R = Eigen::Rotation2Dd(M_PI / 3).toRotationMatrix();
    const SiteIndexer idx(mesh.lattice_rings);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const LatticePoint m = idx.point(i);
      const LatticePoint q{-m.m2, m.m1 + m.m2};
      CHECK((R * lat.position(m) - lat.position(q)).norm() < 1e-12);
      CHECK(phi.at_site(q) == phi.at_site(m));
    }
  }
}

TEST_CASE("blend band overlapping the defect is rejected") {
  const auto [lat, range] = build_graphene();
  const auto sw = make_stone_wales(lat, range, graphene_a0());
  LayoutOptions o;
  o.core_ratio = 0.2;
  const auto L = DomainLayout::make(8, lat, range, o);
  const auto mesh = build_graded_mesh(L, lat);
  const auto rep = validate_blend(BlendFunction::from_layout(L, lat), L, mesh, lat, range, &sw);
  CHECK_FALSE(rep.ok());
  bool found = false;
  for (const auto& c : rep.checks)
    if (c.name == "blend-defect") {
      CHECK_FALSE(c.pass);
      CHECK(c.detail.find("defect site") != std::string::npos);
      found = true;
    }
  CHECK(found);
}
