#include "bqcf/lattice.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bqcf {

double MultiLattice::row_spacing() const {
  const Vec2 a1 = F.col(0), a2 = F.col(1);
  const double longest = std::max({a1.norm(), a2.norm(), (a2 - a1).norm()});
  return std::abs(F.determinant()) / longest;
}

double MultiLattice::hex_radius(const Vec2& x) const {
  const Vec2 m = F.partialPivLu().solve(x);
  return row_spacing() * std::max({std::abs(m.x()), std::abs(m.y()), std::abs(m.x() + m.y())});
}

void MultiLattice::validate() const {
  if (shifts_ref.empty()) throw ConfigError("lattice needs at least one species");
  if (std::abs(F.determinant() - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "lattice matrix must satisfy det F = 1, got " << F.determinant();
    throw ConfigError(os.str());
  }
  if (shifts_ref.front().norm() != 0.0) throw ConfigError("p_0 must be the zero vector");
}

InteractionRange::InteractionRange(const MultiLattice& lattice, std::vector<Triple> triples)
    : triples_(std::move(triples)) {
  offsets_.push_back({0, 0});
  for (const auto& t : triples_) {
    if (t.alpha < 0 || t.beta < 0 || t.alpha >= lattice.species() || t.beta >= lattice.species())
      throw ConfigError("triple references a species outside the lattice");
    auto it = std::find(offsets_.begin(), offsets_.end(), t.rho);
    if (it == offsets_.end()) {
      offsets_.push_back(t.rho);
      it = offsets_.end() - 1;
    }
    offset_slot_.push_back(static_cast<int>(it - offsets_.begin()));
    r_cut_ = std::max(r_cut_, lattice.position(t.rho).norm());
    hex_reach_ = std::max(hex_reach_, hex_distance(t.rho));
  }
  const Vec2 a1 = lattice.F.col(0), a2 = lattice.F.col(1);
  r_cell_ = 0.5 * std::max((a1 + a2).norm(), (a1 - a2).norm());
}

int InteractionRange::index_of(const Triple& t) const {
  const auto it = std::find(triples_.begin(), triples_.end(), t);
  return it == triples_.end() ? -1 : static_cast<int>(it - triples_.begin());
}

std::vector<Vec2> InteractionRange::reference_stencil(const MultiLattice& lattice) const {
  std::vector<Vec2> out;
  out.reserve(triples_.size());
  for (const auto& t : triples_)
    out.push_back(lattice.position(t.rho) + lattice.shifts_ref[t.beta] - lattice.shifts_ref[t.alpha]);
  return out;
}

void InteractionRange::validate(const MultiLattice& lattice) const {
  const int S = lattice.species();
  for (const auto& t : triples_)
    if (t.rho == LatticePoint{0, 0} && t.alpha == t.beta)
      throw ConfigError("interaction range contains a self-interaction (0, a, a)");
  for (int a = 0; a < S; ++a) {
    double best = 0.0;
    std::vector<Vec2> dirs;
    for (const auto& t : triples_)
      if (t.alpha == a && t.beta == a) dirs.push_back(lattice.position(t.rho));
    for (std::size_t i = 0; i < dirs.size(); ++i)
      for (std::size_t j = i + 1; j < dirs.size(); ++j)
        best = std::max(best, std::abs(dirs[i].x() * dirs[j].y() - dirs[i].y() * dirs[j].x()));
    if (best < 1e-12) {
      std::ostringstream os;
      os << "same-species offsets of species " << a << " do not span the plane";
      throw ConfigError(os.str());
    }
    for (int b = 0; b < S; ++b)
      if (a != b && index_of({{0, 0}, a, b}) < 0) {
        std::ostringstream os;
        os << "interaction range lacks the cell-internal triple (0, " << a << ", " << b << ")";
        throw ConfigError(os.str());
      }
  }
}

bool InteractionRange::covers_edge(const LatticePoint& rho) const {
  return std::any_of(triples_.begin(), triples_.end(),
                     [&](const Triple& t) { return t.rho == rho || t.rho == -rho; });
}

double graphene_a0() { return std::sqrt(2.0) / std::pow(3.0, 0.75); }

std::pair<MultiLattice, InteractionRange> build_graphene() {
  const double a0 = graphene_a0();
  const double s3 = std::sqrt(3.0);
  MultiLattice lat;
  lat.id = "graphene";
  lat.F << a0 * s3, a0 * s3 / 2.0, 0.0, a0 * 1.5;
  lat.shifts_ref = {Vec2::Zero(), Vec2(a0 * s3 / 2.0, a0 * 0.5)};

  const LatticePoint r1{1, 0}, r2{0, 1}, o{0, 0};
  std::vector<Triple> t = {
      {r1, 0, 0},  {r2, 0, 0},  {-r1, 0, 0}, {-r2, 0, 0}, {r1 - r2, 0, 0}, {r2 - r1, 0, 0},
      {o, 0, 1},   {o, 1, 0},   {-r2, 0, 1}, {r2, 1, 0},  {-r1, 0, 1},     {r1, 1, 0},
      {r1, 1, 1},  {r2, 1, 1},  {-r1, 1, 1}, {-r2, 1, 1}, {r1 - r2, 1, 1}, {r2 - r1, 1, 1},
  };
  InteractionRange range(lat, std::move(t));
  return {std::move(lat), std::move(range)};
}

// ---------------------------------------------------------------------------

std::ptrdiff_t SiteIndexer::find(const LatticePoint& m) const {
  const int k = hex_distance(m);
  if (k > radius_) return -1;
  if (k == 0) return 0;
  int pos;
  const int s = m.m1 + m.m2;
  if (s == k && m.m1 > 0) pos = m.m2;                       // (k,0) -> (0,k)
  else if (m.m2 == k && m.m1 <= 0) pos = k - m.m1;          // (0,k) -> (-k,k)
  else if (m.m1 == -k && m.m2 > 0) pos = 2 * k + (k - m.m2);  // (-k,k) -> (-k,0)
  else if (s == -k && m.m1 < 0) pos = 3 * k - m.m2;         // (-k,0) -> (0,-k)
  else if (m.m2 == -k && m.m1 >= 0) pos = 4 * k + m.m1;     // (0,-k) -> (k,-k)
  else pos = 5 * k + (m.m2 + k);                            // (k,-k) -> (k,0)
  return static_cast<std::ptrdiff_t>(3 * std::int64_t(k) * (k - 1) + 1 + pos);
}

std::size_t SiteIndexer::at(const LatticePoint& m) const {
  const auto i = find(m);
  if (i < 0) {
    std::ostringstream os;
    os << "lattice site (" << m.m1 << ", " << m.m2 << ") outside indexed hexagon of radius "
       << radius_;
    throw OutOfDomainError(os.str());
  }
  return static_cast<std::size_t>(i);
}

LatticePoint SiteIndexer::point(std::size_t index) const {
  if (index >= size()) throw OutOfDomainError("site index beyond indexer size");
  if (index == 0) return {0, 0};
  const double i = static_cast<double>(index);
  int k = static_cast<int>((3.0 + std::sqrt(9.0 + 12.0 * (i - 1.0))) / 6.0);
  while (3 * std::int64_t(k) * (k - 1) + 1 > static_cast<std::int64_t>(index)) --k;
  while (3 * std::int64_t(k + 1) * k + 1 <= static_cast<std::int64_t>(index)) ++k;
  const int pos = static_cast<int>(index - (3 * std::int64_t(k) * (k - 1) + 1));
  const int side = pos / k, j = pos % k;
  switch (side) {
    case 0: return {k - j, j};
    case 1: return {-j, k};
    case 2: return {-k, k - j};
    case 3: return {-k + j, -j};
    case 4: return {j, -k};
    default: return {k, -k + j};
  }
}

// ---------------------------------------------------------------------------

DisplacementState DisplacementState::zeros(std::size_t count, int species, DofDomain domain) {
  DisplacementState s;
  s.U.assign(count, Vec2::Zero());
  s.p.assign(species > 0 ? species - 1 : 0, std::vector<Vec2>(count, Vec2::Zero()));
  s.domain = domain;
  return s;
}

bool DisplacementState::all_finite() const {
  auto ok = [](const std::vector<Vec2>& v) {
    return std::all_of(v.begin(), v.end(), [](const Vec2& x) { return x.allFinite(); });
  };
  return ok(U) && std::all_of(p.begin(), p.end(), ok);
}

void DisplacementState::axpy(double a, const DisplacementState& other) {
  for (std::size_t i = 0; i < U.size(); ++i) U[i] += a * other.U[i];
  for (std::size_t s = 0; s < p.size(); ++s)
    for (std::size_t i = 0; i < U.size(); ++i) p[s][i] += a * other.p[s][i];
}

double DisplacementState::max_abs() const {
  double m = 0.0;
  for (const auto& x : U) m = std::max(m, x.cwiseAbs().maxCoeff());
  for (const auto& ps : p)
    for (const auto& x : ps) m = std::max(m, x.cwiseAbs().maxCoeff());
  return m;
}

Vec2 stencil_difference(const DisplacementState& state, const SiteIndexer& indexer,
                        const LatticePoint& xi, const Triple& t) {
  const std::size_t i = indexer.at(xi);
  const std::size_t j = indexer.at(xi + t.rho);
  return state.u(t.beta, j) - state.u(t.alpha, i);
}

std::vector<Vec2> deformed_stencil(const DisplacementState& state, const MultiLattice& lattice,
                                   const InteractionRange& range, const SiteIndexer& indexer,
                                   const LatticePoint& xi) {
  std::vector<Vec2> out = range.reference_stencil(lattice);
  for (std::size_t k = 0; k < range.size(); ++k)
    out[k] += stencil_difference(state, indexer, xi, range[k]);
  return out;
}

}  // namespace bqcf
