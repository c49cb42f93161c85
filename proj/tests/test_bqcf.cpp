#include "doctest.h"

#include "bqcf/coupling.hpp"

#include <cmath>
#include <random>

using namespace bqcf;

namespace {

struct Setup {
  MultiLattice lat;
  InteractionRange range;
  std::shared_ptr<const GrapheneSW> V;
  DefectField sw;
  Setup() {
    std::tie(lat, range) = build_graphene();
    V = make_graphene_potential(range, graphene_a0());
    sw = make_stone_wales(lat, range, graphene_a0());
  }
};

DisplacementState random_state(const Mesh& m, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto f = DisplacementState::zeros(m.node_count(), 2, DofDomain::kMesh);
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    if (m.boundary[i]) continue;
    f.U[i] = Vec2(u(rng), u(rng));
    f.p[0][i] = Vec2(u(rng), u(rng));
  }
  return f;
}

}  // namespace

TEST_CASE("ghost-force freedom") {
  Setup s;
  for (double Ra : {8.0, 12.0, 16.0}) {
    const auto pb = BqcfProblem::build(Ra, s.lat, s.range, s.V, nullptr);
    REQUIRE(pb->atomistic() != nullptr);
    const auto r = bqcf_residual(*pb, pb->zero_state());
    CHECK(r.max_abs() <= 1e-10);

    // homogeneous strain with a constant (unrelaxed) shift: the shift force
    // is genuine, but both sides must report the same force wherever they mix
    Mat2 G;
    G << 0.01, -0.004, 0.003, -0.008;
    const Vec2 p(0.004, -0.002);
    auto st = pb->zero_state();
    for (std::size_t i = 0; i < st.size(); ++i) {
      st.U[i] = G * pb->mesh().nodes[i];
      st.p[0][i] = p;
    }
    const auto sides = bqcf_sides(*pb, st);
    double worst = 0;
    for (std::size_t i = 0; i < st.size(); ++i) {
      if (pb->mesh().boundary[i] || pb->phi()[i] >= 1.0) continue;
      worst = std::max({worst, (sides.atomistic.U[i] - sides.continuum.U[i]).norm(),
                        (sides.atomistic.p[0][i] - sides.continuum.p[0][i]).norm()});
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("zero blend reduces to the clamped atomistic model") {
  Setup s;
  const int K = 10;
  auto mesh = std::make_shared<const Mesh>(build_atomistic_triangulation(s.lat, K));
  const BlendFunction never(s.lat, 1e9, 2e9);
  const BqcfProblem pb(s.lat, s.range, s.V, &s.sw, std::nullopt, mesh, never);
  CHECK(pb.blend_rings() == K);
  const auto at = AtomisticModel::clamped(s.lat, s.range, s.V, &s.sw, K);
  std::mt19937_64 rng(3);
  const auto st = random_state(*mesh, rng, 0.02);
  const auto r = bqcf_residual(pb, st);
  const auto g = at.gradient(st);
  bool same = true;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Vec2 gu = mesh->boundary[i] ? Vec2::Zero() : g.U[i];
    const Vec2 gp = mesh->boundary[i] ? Vec2::Zero() : g.p[0][i];
    same = same && r.U[i] == gu && r.p[0][i] == gp;
  }
  CHECK(same);
}

TEST_CASE("blended entry against separately assembled sides") {
  Setup s;
  const auto pb = BqcfProblem::build(8.0, s.lat, s.range, s.V, &s.sw);
  std::mt19937_64 rng(5);
  const auto st = random_state(pb->mesh(), rng, 0.02);
  const auto r = bqcf_residual(*pb, st);

  // fresh models, the atomistic one over the whole lattice part of the mesh
  const AtomisticModel at(s.lat, s.range, s.V, &s.sw, pb->mesh().lattice_rings, pb->mesh().lattice_rings - 1);
  const CauchyBornModel cb(s.lat, s.range, s.V, pb->mesh_ptr(), pb->continuum().quadrature());
  const auto fa = at.gradient(st);
  const auto fc = cb.gradient(st);

  // the node whose weight is closest to 0.37
  const auto& phi = pb->phi();
  std::size_t best = 0;
  for (std::size_t i = 0; i < phi.size(); ++i)
    if (std::abs(phi[i] - 0.37) < std::abs(phi[best] - 0.37)) best = i;
  INFO("phi = " << phi[best]);
  CHECK(phi[best] > 0.0);
  CHECK(phi[best] < 1.0);
  int checked = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (pb->mesh().boundary[i]) continue;
    if (!(phi[i] > 0.0 && phi[i] < 1.0)) continue;
    const Vec2 eu = (1 - phi[i]) * fa.U[i] + phi[i] * fc.U[i];
    const Vec2 ep = (1 - phi[i]) * fa.p[0][i] + phi[i] * fc.p[0][i];
    const double scale = std::max(1.0, eu.norm() + ep.norm());
    CHECK((r.U[i] - eu).norm() <= 1e-13 * scale);
    CHECK((r.p[0][i] - ep).norm() <= 1e-13 * scale);
    ++checked;
  }
  CHECK(checked > 0);

  // φ = 1 gives the pure continuum force, φ = 0 the pure atomistic one
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (pb->mesh().boundary[i]) continue;
    if (phi[i] == 1.0) REQUIRE(r.U[i] == fc.U[i]);
    if (phi[i] == 0.0) REQUIRE((r.U[i] - fa.U[i]).norm() <= 1e-13 * std::max(1.0, fa.U[i].norm()));
  }
}

TEST_CASE("weak-form identity") {
  Setup s;
  const auto pb = BqcfProblem::build(8.0, s.lat, s.range, s.V, &s.sw);
  std::mt19937_64 rng(11);
  const auto zero = pb->zero_state();
  CHECK(weak_form_pairing(*pb, random_state(pb->mesh(), rng, 0.02), zero) == 0.0);
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const auto st = random_state(pb->mesh(), rng, 0.02);
    const auto w = random_state(pb->mesh(), rng, 1.0);
    const double a = weak_form_pairing(*pb, st, w);
    const double b = weak_form_split(*pb, st, w);
    worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("coupling preconditions") {
  Setup s;
  const auto layout = DomainLayout::make(8.0, s.lat, s.range);
  auto mesh = std::make_shared<const Mesh>(build_graded_mesh(layout, s.lat));
  SUBCASE("phi < 1 on a coarse node") {
    const BlendFunction late(s.lat, layout.R_c * 0.8, layout.R_c * 0.9);
    CHECK_THROWS_AS(BqcfProblem(s.lat, s.range, s.V, nullptr, layout, mesh, late), ConfigError);
  }
  SUBCASE("phi > 0 on the defect") {
    const BlendFunction early(s.lat, 0.0, 0.9 * layout.blend_end);
    CHECK_THROWS_AS(BqcfProblem(s.lat, s.range, s.V, &s.sw, layout, mesh, early), ConfigError);
  }
}
