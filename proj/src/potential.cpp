#include "bqcf/potential.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bqcf {

double pair_phi(double r) {
  if (!(r > 0.0)) throw CollisionError("pair potential evaluated at non-positive distance");
  const double r6 = 1.0 / (r * r * r * r * r * r);
  return r6 * r6 - 2.0 * r6;
}

double pair_phi_derivative(double r) {
  if (!(r > 0.0)) throw CollisionError("pair potential evaluated at non-positive distance");
  const double r6 = 1.0 / (r * r * r * r * r * r);
  return 12.0 * (r6 - r6 * r6) / r;
}

AngleTerm angle_theta(const Vec2& r1, const Vec2& r2) {
  const double n1 = r1.norm(), n2 = r2.norm();
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw CollisionError("bond angle with a zero-length bond");
  const double c = r1.dot(r2) / (n1 * n2);
  const double f = c + 0.5;
  AngleTerm out;
  out.value = f * f;
  out.d_r1 = 2.0 * f * (r2 / (n1 * n2) - c * r1 / (n1 * n1));
  out.d_r2 = 2.0 * f * (r1 / (n1 * n2) - c * r2 / (n2 * n2));
  return out;
}

// ---------------------------------------------------------------------------

GrapheneSW::GrapheneSW(const InteractionRange& range, std::vector<AngleFamily> families,
                       double pair_length)
    : arity_(range.size()), pair_length_(pair_length), collision_radius_(0.05 * pair_length) {
  if (!(pair_length > 0.0)) throw ConfigError("pair length scale must be positive");
  for (const auto& fam : families) {
    std::array<int, 3> s{};
    for (int k = 0; k < 3; ++k) {
      s[k] = range.index_of(fam[k]);
      if (s[k] < 0) {
        std::ostringstream os;
        os << "angle family uses triple (" << fam[k].rho.m1 << "," << fam[k].rho.m2 << ","
           << fam[k].alpha << "," << fam[k].beta << ") that is not in the interaction range";
        throw ConfigError(os.str());
      }
    }
    slots_.push_back(s);
  }
}

std::vector<AngleFamily> GrapheneSW::standard_families() {
  const LatticePoint r1{1, 0}, r2{0, 1}, o{0, 0};
  return {
      AngleFamily{Triple{o, 0, 1}, Triple{-r1, 0, 1}, Triple{-r2, 0, 1}},
      AngleFamily{Triple{o, 1, 0}, Triple{r1, 1, 0}, Triple{r2, 1, 0}},
  };
}

std::string GrapheneSW::id() const {
  std::ostringstream os;
  os.precision(17);
  os << "graphene-sw(l=" << pair_length_ << ")";
  return os.str();
}

double GrapheneSW::value(std::span<const Vec2> stencil) const {
  const double inv_l2 = 1.0 / (pair_length_ * pair_length_);
  const double coll2 = collision_radius_ * collision_radius_;
  double e = 0.0;
  for (std::size_t t = 0; t < arity_; ++t) {
    const double r2 = stencil[t].squaredNorm();
    if (!(r2 > coll2)) throw CollisionError("atoms closer than the collision radius");
    const double q = r2 * inv_l2;
    const double s6 = 1.0 / (q * q * q);
    e += 0.5 * (s6 * s6 - 2.0 * s6);
  }
  for (const auto& s : slots_) {
    e += angle_theta(stencil[s[0]], stencil[s[1]]).value;
    e += angle_theta(stencil[s[0]], stencil[s[2]]).value;
    e += angle_theta(stencil[s[1]], stencil[s[2]]).value;
  }
  return e;
}

double GrapheneSW::value_and_gradient(std::span<const Vec2> stencil, std::span<Vec2> grad) const {
  const double inv_l2 = 1.0 / (pair_length_ * pair_length_);
  const double coll2 = collision_radius_ * collision_radius_;
  double e = 0.0;
  for (std::size_t t = 0; t < arity_; ++t) {
    const double r2 = stencil[t].squaredNorm();
    if (!(r2 > coll2)) throw CollisionError("atoms closer than the collision radius");
    const double q = r2 * inv_l2;  // s², s = r / l
    const double s6 = 1.0 / (q * q * q);
    e += 0.5 * (s6 * s6 - 2.0 * s6);
    // d/dD [φ(|D|/l)/2] = 6 (s⁻⁶ − s⁻¹²) / (s² l²) · D
    grad[t] = (6.0 * (s6 - s6 * s6) / q * inv_l2) * stencil[t];
  }
  for (const auto& s : slots_) {
    const std::array<std::pair<int, int>, 3> pairs{{{s[0], s[1]}, {s[0], s[2]}, {s[1], s[2]}}};
    for (const auto& [a, b] : pairs) {
      const AngleTerm th = angle_theta(stencil[a], stencil[b]);
      e += th.value;
      grad[a] += th.d_r1;
      grad[b] += th.d_r2;
    }
  }
  return e;
}

std::shared_ptr<const GrapheneSW> make_graphene_potential(const InteractionRange& range,
                                                          double pair_length) {
  return std::make_shared<const GrapheneSW>(range, GrapheneSW::standard_families(), pair_length);
}

double site_energy(const SitePotential& potential, std::span<const Vec2> stencil) {
  return potential.value(stencil);
}

std::vector<Vec2> site_forces(const SitePotential& potential, std::span<const Vec2> stencil) {
  std::vector<Vec2> g(stencil.size(), Vec2::Zero());
  potential.value_and_gradient(stencil, g);
  return g;
}

double displacement_energy_offset(const SitePotential& potential, const MultiLattice& lattice,
                                  const InteractionRange& range) {
  const auto ref = range.reference_stencil(lattice);
  return potential.value(ref);
}

// ---------------------------------------------------------------------------

DefectField::DefectField(std::string id, double r_def,
                         std::vector<std::pair<LatticePoint, std::vector<Vec2>>> moved,
                         std::vector<SiteVariant> variants)
    : id_(std::move(id)), r_def_(r_def), moved_(std::move(moved)), variants_(std::move(variants)) {}

Vec2 DefectField::reference_position(const MultiLattice& lattice, const LatticePoint& m,
                                     int alpha) const {
  for (const auto& [site, pos] : moved_)
    if (site == m) return pos[alpha];
  return lattice.atom_position(m, alpha);
}

const SiteVariant* DefectField::variant(const LatticePoint& m) const {
  for (const auto& v : variants_)
    if (v.site == m) return &v;
  return nullptr;
}

namespace {

bool is_graphene(const MultiLattice& lattice, const InteractionRange& range) {
  const auto [ref, ref_range] = build_graphene();
  if (lattice.species() != 2) return false;
  if ((lattice.F - ref.F).cwiseAbs().maxCoeff() > 1e-12) return false;
  if ((lattice.shifts_ref[1] - ref.shifts_ref[1]).norm() > 1e-12) return false;
  if (range.size() != ref_range.size()) return false;
  for (const auto& t : ref_range.triples())
    if (range.index_of(t) < 0) return false;
  return true;
}

}  // namespace

DefectField make_stone_wales(const MultiLattice& lattice, const InteractionRange& range,
                             double pair_length) {
  if (!is_graphene(lattice, range))
    throw ConfigError("the Stone-Wales defect is only defined for the graphene preset");

  const Vec2 p1 = lattice.shifts_ref[1];
  const Vec2 mid = 0.5 * p1;
  Mat2 rot90;
  rot90 << 0.0, -1.0, 1.0, 0.0;
  auto rotate = [&](const Vec2& x) -> Vec2 { return mid + rot90 * (x - mid); };
  const LatticePoint origin{0, 0};
  std::vector<std::pair<LatticePoint, std::vector<Vec2>>> moved = {
      {origin, {rotate(Vec2::Zero()), rotate(p1)}}};

  const double r_def = 2.0 * range.r_cut();
  const LatticePoint r1{1, 0}, r2{0, 1}, o{0, 0};
  // After the rotation atom (0,0,0) bonds to (ρ1,0) instead of (−ρ1,1), and
  // atom (0,0,1) to (−ρ1,1) instead of (ρ1,0); their partners swap likewise.
  const AngleFamily fam0 = GrapheneSW::standard_families()[0];
  const AngleFamily fam1 = GrapheneSW::standard_families()[1];
  const AngleFamily sw_origin0{Triple{o, 0, 1}, Triple{r1, 0, 0}, Triple{-r2, 0, 1}};
  const AngleFamily sw_origin1{Triple{o, 1, 0}, Triple{-r1, 1, 1}, Triple{r2, 1, 0}};
  const AngleFamily sw_right0{Triple{o, 0, 1}, Triple{-r1, 0, 0}, Triple{-r2, 0, 1}};
  const AngleFamily sw_left1{Triple{o, 1, 0}, Triple{r1, 1, 1}, Triple{r2, 1, 0}};

  auto homogeneous = make_graphene_potential(range, pair_length);
  DefectField probe("stone-wales", r_def, moved, {});

  const auto ref = range.reference_stencil(lattice);
  std::vector<SiteVariant> variants;
  const int reach = static_cast<int>(std::ceil(r_def / lattice.row_spacing())) + 1;
  const SiteIndexer around(reach);
  for (std::size_t i = 0; i < around.size(); ++i) {
    const LatticePoint m = around.point(i);
    if (lattice.position(m).norm() >= r_def) continue;
    SiteVariant v;
    v.site = m;
    // homogeneous stencil plus the displacement of any moved atom, so that
    // entries not touching the defect stay bitwise homogeneous
    auto moved_by = [&](const LatticePoint& q, int a) -> Vec2 {
      return q == origin ? Vec2(probe.reference_position(lattice, q, a) - lattice.atom_position(q, a))
                         : Vec2::Zero();
    };
    for (std::size_t k = 0; k < range.size(); ++k) {
      const Triple& t = range[k];
      v.reference_stencil.push_back(ref[k] + (moved_by(m + t.rho, t.beta) - moved_by(m, t.alpha)));
    }
    if (m == origin)
      v.potential = std::make_shared<const GrapheneSW>(
          range, std::vector<AngleFamily>{sw_origin0, sw_origin1}, pair_length);
    else if (m == r1)
      v.potential = std::make_shared<const GrapheneSW>(
          range, std::vector<AngleFamily>{sw_right0, fam1}, pair_length);
    else if (m == -r1)
      v.potential = std::make_shared<const GrapheneSW>(
          range, std::vector<AngleFamily>{fam0, sw_left1}, pair_length);
    else
      v.potential = homogeneous;
    v.offset = v.potential->value(v.reference_stencil);
    variants.push_back(std::move(v));
  }
  return DefectField("stone-wales", r_def, std::move(moved), std::move(variants));
}

}  // namespace bqcf
