#include "bqcf/mesh.hpp"

#include "bqcf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace bqcf {

namespace {

// corners of the unit hexagon in lattice coordinates, counter-clockwise
constexpr int kCorner[6][2] = {{1, 0}, {0, 1}, {-1, 1}, {-1, 0}, {0, -1}, {1, -1}};

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

void add_lattice_part(Mesh& mesh, const MultiLattice& lattice, int rings) {
  const SiteIndexer idx(rings);
  mesh.lattice_rings = rings;
  mesh.nodes.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) mesh.nodes.push_back(lattice.position(idx.point(i)));
  const LatticePoint e1{1, 0}, e2{0, 1};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const LatticePoint m = idx.point(i);
    const auto a = idx.find(m + e1), b = idx.find(m + e2);
    if (a >= 0 && b >= 0) mesh.triangles.push_back({int(i), int(a), int(b)});
    const auto c = idx.find(m - e1), d = idx.find(m - e2);
    if (c >= 0 && d >= 0) mesh.triangles.push_back({int(i), int(c), int(d)});
  }
  mesh.lattice_triangles = mesh.triangles.size();
}

const char* region_name(Region r) {
  switch (r) {
    case Region::kCore: return "core";
    case Region::kAtomistic: return "atomistic";
    case Region::kBlend: return "blend";
    case Region::kContinuum: return "continuum";
    case Region::kBoundary: return "boundary";
  }
  return "?";
}

}  // namespace

DomainLayout DomainLayout::make(double R_a, const MultiLattice& lattice, const InteractionRange& range,
                                const LayoutOptions& o) {
  if (!(R_a > 0.0)) throw ConfigError("R_a must be positive");
  DomainLayout L;
  L.row_spacing = lattice.row_spacing();
  L.R_a = R_a;
  L.R_core = o.core_ratio * R_a;
  L.R_c = o.rc_scale * std::pow(R_a, o.rc_exponent);
  L.atomistic_rings = static_cast<int>(std::floor(R_a / L.row_spacing + 1e-9));
  L.blend_start = L.R_core;
  L.blend_end = R_a - o.pad_factor * range.r_buff();
  L.R_b = L.blend_end;
  double corner = 0.0;
  for (const auto& c : kCorner) corner = std::max(corner, lattice.position({c[0], c[1]}).norm());
  L.R_o = L.R_c * corner / L.row_spacing;
  L.r_i = L.R_c;
  L.growth_exponent = o.growth_exponent;
  L.shape_bound = o.shape_bound;
  L.lambda_exponent = 2;
  L.C_o = L.R_core > 0.0 ? L.R_o / std::pow(L.R_core, L.lambda_exponent) : 0.0;
  L.validate();
  return L;
}

void DomainLayout::validate() const {
  std::ostringstream os;
  if (!(R_core > 0.0)) os << "R_core must be positive; ";
  if (!(blend_start < blend_end)) os << "blend band [" << blend_start << ", " << blend_end << "] is empty; ";
  if (!(blend_end <= R_a)) os << "blend band must end inside R_a; ";
  if (!(R_core < R_a)) os << "R_core must be below R_a; ";
  if (!(R_c > R_a)) os << "R_c = " << R_c << " must exceed R_a = " << R_a << "; ";
  if (!(R_c > (atomistic_rings + 2) * row_spacing))
    os << "R_c leaves no room for a coarse ring outside the atomistic region; ";
  if (!(R_o >= R_c)) os << "R_o must be at least R_c; ";
  if (!(shape_bound > 0.0)) os << "shape bound must be positive; ";
  const auto msg = os.str();
  if (!msg.empty()) throw ConfigError("invalid domain layout: " + msg);
}

double DomainLayout::size_factor(double r) const {
  return std::max(1.0, std::pow(r / R_a, growth_exponent));
}

TriangleGeometry Mesh::geometry(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec2& x0 = nodes[tri[0]];
  const Vec2& x1 = nodes[tri[1]];
  const Vec2& x2 = nodes[tri[2]];
  TriangleGeometry g;
  const double det = cross(x1 - x0, x2 - x0);
  g.area = 0.5 * det;
  g.grad[0] = Vec2(x1.y() - x2.y(), x2.x() - x1.x()) / det;
  g.grad[1] = Vec2(x2.y() - x0.y(), x0.x() - x2.x()) / det;
  g.grad[2] = Vec2(x0.y() - x1.y(), x1.x() - x0.x()) / det;
  const double a = (x1 - x2).norm(), b = (x2 - x0).norm(), c = (x0 - x1).norm();
  g.diameter = std::max({a, b, c});
  g.circumradius = a * b * c / (4.0 * g.area);
  g.inradius = g.area / (0.5 * (a + b + c));
  return g;
}

double Mesh::total_area() const {
  return parallel_sum(triangles.size(), [&](std::size_t t) { return geometry(t).area; });
}

Region classify(const DomainLayout& layout, double r, bool on_boundary) {
  constexpr double eps = 1e-9;
  if (on_boundary) return Region::kBoundary;
  if (r <= layout.R_core + eps) return Region::kCore;
  if (r < layout.blend_end - eps) return Region::kBlend;
  if (r <= layout.atomistic_rings * layout.row_spacing + eps) return Region::kAtomistic;
  return Region::kContinuum;
}

Mesh build_atomistic_triangulation(const MultiLattice& lattice, int rings) {
  if (rings < 1) throw ConfigError("atomistic triangulation needs at least one ring");
  Mesh mesh;
  add_lattice_part(mesh, lattice, rings);
  const SiteIndexer idx(rings);
  mesh.tags.resize(mesh.nodes.size());
  mesh.boundary.resize(mesh.nodes.size());
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    const bool b = hex_distance(idx.point(i)) == rings;
    mesh.boundary[i] = b;
    mesh.tags[i] = b ? Region::kBoundary : Region::kAtomistic;
  }
  return mesh;
}

Mesh build_atomistic_triangulation(const MultiLattice& lattice, double radius) {
  if (!(radius > 0.0)) throw ConfigError("triangulation radius must be positive");
  return build_atomistic_triangulation(lattice,
                                       static_cast<int>(std::floor(radius / lattice.row_spacing() + 1e-9)));
}

Mesh build_graded_mesh(const DomainLayout& layout, const MultiLattice& lattice) {
  layout.validate();
  const double h = layout.row_spacing;
  const int K = layout.atomistic_rings + 1;  // one collar ring of lattice triangles
  Mesh mesh;
  add_lattice_part(mesh, lattice, K);

  Vec2 corner[7];
  for (int s = 0; s < 6; ++s) corner[s] = lattice.position({kCorner[s][0], kCorner[s][1]});
  corner[6] = corner[0];

  // coarse ring radii and per-side subdivision counts
  std::vector<double> radii{K * h};
  std::vector<int> per_side{K};
  for (;;) {
    const double r = radii.back();
    const double step = h * layout.size_factor(r);
    double next = r + step;
    const bool last = next >= layout.R_c - 0.5 * step;
    if (last) next = layout.R_c;
    const int n = std::max(1, static_cast<int>(std::lround(next / h / layout.size_factor(next))));
    radii.push_back(next);
    per_side.push_back(n);
    if (last) break;
  }
  mesh.ring_radii = radii;

  // ring node ids; ring 0 is the outermost lattice ring
  const std::size_t first = static_cast<std::size_t>(hex_site_count(K - 1));
  std::vector<std::vector<int>> ring_ids(radii.size());
  for (int j = 0; j < 6 * K; ++j) ring_ids[0].push_back(static_cast<int>(first + j));
  for (std::size_t k = 1; k < radii.size(); ++k) {
    const int n = per_side[k];
    const double scale = radii[k] / h;
    for (int s = 0; s < 6; ++s)
      for (int j = 0; j < n; ++j) {
        ring_ids[k].push_back(static_cast<int>(mesh.nodes.size()));
        mesh.nodes.push_back(scale * (corner[s] + (double(j) / n) * (corner[s + 1] - corner[s])));
      }
  }

  // join consecutive rings side by side; within a side the strip is cut by
  // the monotone path that minimises the worst circumradius/inradius ratio
  auto quality = [&](int a, int b, int c) {
    const Vec2 &x = mesh.nodes[a], &y = mesh.nodes[b], &z = mesh.nodes[c];
    const double A = 0.5 * std::abs(cross(y - x, z - x));
    if (A < 1e-12) return 1e300;
    const double la = (y - z).norm(), lb = (z - x).norm(), lc = (x - y).norm();
    return la * lb * lc / (4.0 * A) / (A / (0.5 * (la + lb + lc)));
  };
  auto emit = [&](int a, int b, int c) {
    const double det = cross(mesh.nodes[b] - mesh.nodes[a], mesh.nodes[c] - mesh.nodes[a]);
    if (std::abs(det) < 1e-12) throw ConfigError("degenerate triangle while grading the mesh");
    if (det > 0) mesh.triangles.push_back({a, b, c});
    else mesh.triangles.push_back({a, c, b});
  };
  for (std::size_t k = 0; k + 1 < radii.size(); ++k) {
    const auto& in = ring_ids[k];
    const auto& out = ring_ids[k + 1];
    const int ni = per_side[k], no = per_side[k + 1];
    const auto inner = [&](int s, int j) { return in[(s * ni + j) % in.size()]; };
    const auto outer = [&](int s, int j) { return out[(s * no + j) % out.size()]; };
    for (int s = 0; s < 6; ++s) {
      // best[i][o] = (worst ratio, ratio sum) of the best path to (i, o)
      using Cost = std::pair<double, double>;
      std::vector<Cost> best((ni + 1) * (no + 1), {1e300, 1e300});
      std::vector<char> from((ni + 1) * (no + 1), 0);  // 1: inner step, 2: outer step
      auto at = [&](int i, int o) { return i * (no + 1) + o; };
      best[at(0, 0)] = {0.0, 0.0};
      for (int i = 0; i <= ni; ++i)
        for (int o = 0; o <= no; ++o) {
          if (i == 0 && o == 0) continue;
          Cost c{1e300, 1e300};
          if (i > 0) {
            const double q = quality(inner(s, i - 1), outer(s, o), inner(s, i));
            const Cost p = best[at(i - 1, o)];
            const Cost cand{std::max(p.first, q), p.second + q};
            if (cand < c) { c = cand; from[at(i, o)] = 1; }
          }
          if (o > 0) {
            const double q = quality(inner(s, i), outer(s, o - 1), outer(s, o));
            const Cost p = best[at(i, o - 1)];
            const Cost cand{std::max(p.first, q), p.second + q};
            if (cand < c) { c = cand; from[at(i, o)] = 2; }
          }
          best[at(i, o)] = c;
        }
      std::vector<std::array<int, 3>> strip;
      for (int i = ni, o = no; i > 0 || o > 0;) {
        if (from[at(i, o)] == 1) {
          strip.push_back({inner(s, i - 1), outer(s, o), inner(s, i)});
          --i;
        } else {
          strip.push_back({inner(s, i), outer(s, o - 1), outer(s, o)});
          --o;
        }
      }
      for (auto it = strip.rbegin(); it != strip.rend(); ++it) emit((*it)[0], (*it)[1], (*it)[2]);
    }
  }

  mesh.tags.resize(mesh.nodes.size());
  mesh.boundary.assign(mesh.nodes.size(), 0);
  const SiteIndexer idx(K);
  for (std::size_t i = 0; i < first + 6 * K; ++i)
    mesh.tags[i] = classify(layout, h * hex_distance(idx.point(i)), false);
  for (std::size_t k = 1; k < radii.size(); ++k) {
    const bool b = k + 1 == radii.size();
    for (int id : ring_ids[k]) {
      mesh.boundary[id] = b;
      mesh.tags[id] = classify(layout, radii[k], b);
    }
  }
  return mesh;
}

PointLocator::PointLocator(const Mesh& mesh) : mesh_(&mesh) {
  Vec2 lo = Vec2::Constant(1e300), hi = Vec2::Constant(-1e300);
  for (const auto& x : mesh.nodes) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  std::vector<double> areas(mesh.triangles.size());
  for (std::size_t t = 0; t < areas.size(); ++t) areas[t] = mesh.geometry(t).area;
  double typical = 1.0;
  if (!areas.empty()) {
    auto mid = areas.begin() + areas.size() / 2;
    std::nth_element(areas.begin(), mid, areas.end());
    typical = std::sqrt(2.0 * *mid);
  }
  const double extent = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  cell_ = std::max({typical, extent / 2000.0, 1e-12});
  lo_ = lo - Vec2::Constant(0.5 * cell_);
  nx_ = static_cast<int>((hi.x() - lo_.x()) / cell_) + 2;
  ny_ = static_cast<int>((hi.y() - lo_.y()) / cell_) + 2;

  auto cell_range = [&](std::size_t t, int& x0, int& x1, int& y0, int& y1) {
    Vec2 a = Vec2::Constant(1e300), b = Vec2::Constant(-1e300);
    for (int v : mesh.triangles[t]) {
      a = a.cwiseMin(mesh.nodes[v]);
      b = b.cwiseMax(mesh.nodes[v]);
    }
    x0 = std::max(0, static_cast<int>((a.x() - lo_.x()) / cell_) - 1);
    y0 = std::max(0, static_cast<int>((a.y() - lo_.y()) / cell_) - 1);
    x1 = std::min(nx_ - 1, static_cast<int>((b.x() - lo_.x()) / cell_) + 1);
    y1 = std::min(ny_ - 1, static_cast<int>((b.y() - lo_.y()) / cell_) + 1);
  };
  std::vector<int> count(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    int x0, x1, y0, y1;
    cell_range(t, x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) ++count[static_cast<std::size_t>(y) * nx_ + x + 1];
  }
  for (std::size_t i = 1; i < count.size(); ++i) count[i] += count[i - 1];
  start_ = count;
  items_.resize(count.back());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    int x0, x1, y0, y1;
    cell_range(t, x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) items_[count[static_cast<std::size_t>(y) * nx_ + x]++] = int(t);
  }
}

PointLocator::Hit PointLocator::locate(const Vec2& x) const {
  Hit hit;
  const int cx = static_cast<int>(std::floor((x.x() - lo_.x()) / cell_));
  const int cy = static_cast<int>(std::floor((x.y() - lo_.y()) / cell_));
  if (cx < 0 || cy < 0 || cx >= nx_ || cy >= ny_) return hit;
  const std::size_t c = static_cast<std::size_t>(cy) * nx_ + cx;
  for (int k = start_[c]; k < start_[c + 1]; ++k) {
    const auto& tri = mesh_->triangles[items_[k]];
    const Vec2& a = mesh_->nodes[tri[0]];
    const Vec2& b = mesh_->nodes[tri[1]];
    const Vec2& d = mesh_->nodes[tri[2]];
    const double det = cross(b - a, d - a);
    const double l1 = cross(x - a, d - a) / det;
    const double l2 = cross(b - a, x - a) / det;
    const double l0 = 1.0 - l1 - l2;
    constexpr double tol = -1e-10;
    if (l0 >= tol && l1 >= tol && l2 >= tol) {
      hit.triangle = items_[k];
      hit.bary = {l0, l1, l2};
      return hit;
    }
  }
  return hit;
}

P1Value evaluate_p1(const P1Field& field, const PointLocator& locator, const Vec2& x) {
  const Mesh& mesh = *field.mesh;
  const int S = field.state.species();
  P1Value v;
  v.p.assign(S - 1, Vec2::Zero());
  const auto hit = locator.locate(x);
  if (hit.triangle < 0) {
    if (field.dirichlet) return v;
    std::ostringstream os;
    os << "point (" << x.x() << ", " << x.y() << ") lies outside the mesh";
    throw OutOfDomainError(os.str());
  }
  v.triangle = hit.triangle;
  const auto& tri = mesh.triangles[hit.triangle];
  const auto g = mesh.geometry(hit.triangle);
  for (int k = 0; k < 3; ++k) {
    const int n = tri[k];
    v.U += hit.bary[k] * field.state.U[n];
    v.gradU += field.state.U[n] * g.grad[k].transpose();
    for (int a = 0; a + 1 < S; ++a) v.p[a] += hit.bary[k] * field.state.p[a][n];
  }
  return v;
}

P1Norms l2_and_h1_norms(const Mesh& mesh, std::span<const Vec2> values) {
  if (values.size() != mesh.nodes.size())
    throw std::invalid_argument("nodal values do not match the mesh");
  const double l2 = parallel_sum(mesh.triangles.size(), [&](std::size_t t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = values[tri[0]], &b = values[tri[1]], &c = values[tri[2]];
    const double area = 0.5 * cross(mesh.nodes[tri[1]] - mesh.nodes[tri[0]], mesh.nodes[tri[2]] - mesh.nodes[tri[0]]);
    return area / 6.0 * (a.squaredNorm() + b.squaredNorm() + c.squaredNorm() + a.dot(b) + b.dot(c) + a.dot(c));
  });
  const double h1 = parallel_sum(mesh.triangles.size(), [&](std::size_t t) {
    const auto& tri = mesh.triangles[t];
    const auto g = mesh.geometry(t);
    Mat2 grad = Mat2::Zero();
    for (int k = 0; k < 3; ++k) grad += values[tri[k]] * g.grad[k].transpose();
    return g.area * grad.squaredNorm();
  });
  return {std::sqrt(l2), std::sqrt(h1)};
}

namespace {

double segment_distance(const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp(-a.dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (a + t * d).norm();
}

}  // namespace

std::vector<CheckResult> check_mesh(const Mesh& mesh, const MultiLattice& lattice,
                                    const InteractionRange& range, const DomainLayout* layout) {
  std::vector<CheckResult> out;
  const std::size_t nt = mesh.triangles.size();

  {
    CheckResult r{"orientation", true, ""};
    for (std::size_t t = 0; t < nt && r.pass; ++t)
      if (!(mesh.geometry(t).area > 1e-12)) {
        r.pass = false;
        r.detail = "triangle " + std::to_string(t) + " is degenerate or clockwise";
      }
    out.push_back(r);
  }

  {
    // every edge in one triangle (boundary) or two with opposite orientation
    CheckResult r{"conformity", true, ""};
    std::vector<std::array<int, 3>> edges;  // (lo, hi, +1/-1 direction)
    edges.reserve(3 * nt);
    for (const auto& tri : mesh.triangles)
      for (int k = 0; k < 3; ++k) {
        const int a = tri[k], b = tri[(k + 1) % 3];
        edges.push_back({std::min(a, b), std::max(a, b), a < b ? 1 : -1});
      }
    std::sort(edges.begin(), edges.end());
    for (std::size_t i = 0; i < edges.size() && r.pass;) {
      std::size_t j = i;
      int dir = 0;
      while (j < edges.size() && edges[j][0] == edges[i][0] && edges[j][1] == edges[i][1]) dir += edges[j++][2];
      const std::size_t count = j - i;
      const bool on_boundary = mesh.boundary[edges[i][0]] && mesh.boundary[edges[i][1]];
      if (count > 2 || (count == 2 && dir != 0) || (count == 1 && !on_boundary)) {
        r.pass = false;
        r.detail = "edge (" + std::to_string(edges[i][0]) + ", " + std::to_string(edges[i][1]) + ") is shared by " +
                   std::to_string(count) + " triangles";
      }
      i = j;
    }
    out.push_back(r);
  }

  {
    const double bound = layout ? layout->shape_bound : 4.0;
    CheckResult r{"shape-regularity", true, ""};
    double worst = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const auto g = mesh.geometry(t);
      worst = std::max(worst, g.circumradius / g.inradius);
    }
    r.pass = worst <= bound;
    r.detail = "max circumradius/inradius = " + std::to_string(worst) + " (bound " + std::to_string(bound) + ")";
    out.push_back(r);
  }

  {
    CheckResult r{"lattice-edges-in-range", true, ""};
    const SiteIndexer idx(std::max(mesh.lattice_rings, 0));
    for (std::size_t t = 0; t < mesh.lattice_triangles && r.pass; ++t)
      for (int k = 0; k < 3; ++k) {
        const LatticePoint a = idx.point(mesh.triangles[t][k]);
        const LatticePoint b = idx.point(mesh.triangles[t][(k + 1) % 3]);
        if (!range.covers_edge(b - a)) {
          r.pass = false;
          r.detail = "lattice edge not covered by the interaction range";
          break;
        }
      }
    out.push_back(r);
  }

  if (layout) {
    CheckResult r{"full-refinement", true, ""};
    const double h = layout->row_spacing;
    const double inner = layout->atomistic_rings * h;
    if (mesh.lattice_rings <= layout->atomistic_rings) {
      r.pass = false;
      r.detail = "lattice part does not cover Ω_a";
    }
    const SiteIndexer idx(std::max(mesh.lattice_rings, 0));
    for (std::size_t i = 0; i < mesh.lattice_node_count() && r.pass; ++i)
      if ((mesh.nodes[i] - lattice.position(idx.point(i))).norm() > 1e-12) {
        r.pass = false;
        r.detail = "node " + std::to_string(i) + " is not at its lattice site";
      }
    // coarse triangles stay clear of Ω_a (sampled on a barycentric grid)
    constexpr int n = 8;
    for (std::size_t t = mesh.lattice_triangles; t < nt && r.pass; ++t) {
      const auto& tri = mesh.triangles[t];
      for (int i = 0; i <= n && r.pass; ++i)
        for (int j = 0; i + j <= n; ++j) {
          const Vec2 x = (double(i) * mesh.nodes[tri[0]] + double(j) * mesh.nodes[tri[1]] +
                          double(n - i - j) * mesh.nodes[tri[2]]) / n;
          if (lattice.hex_radius(x) < inner + 0.5 * h) {
            r.pass = false;
            r.detail = "coarse triangle " + std::to_string(t) + " reaches into Ω_a";
            break;
          }
        }
    }
    out.push_back(r);

    CheckResult g{"growth", true, ""};
    double worst = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& tri = mesh.triangles[t];
      const Vec2 &a = mesh.nodes[tri[0]], &b = mesh.nodes[tri[1]], &c = mesh.nodes[tri[2]];
      const double dist = std::min({segment_distance(a, b), segment_distance(b, c), segment_distance(c, a)});
      if (dist < layout->R_a) continue;
      const double ratio = mesh.geometry(t).diameter / std::pow(dist / layout->R_a, layout->growth_exponent);
      worst = std::max(worst, ratio);
    }
    g.pass = worst <= layout->shape_bound;
    g.detail = "max diam(T) / (dist/R_a)^s = " + std::to_string(worst) + " (bound " +
               std::to_string(layout->shape_bound) + ")";
    out.push_back(g);
  }
  return out;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  const auto old = os.precision(17);
  os << "nodes " << mesh.nodes.size() << " triangles " << mesh.triangles.size() << '\n';
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    os << mesh.nodes[i].x() << ' ' << mesh.nodes[i].y() << ' ' << region_name(mesh.tags[i]) << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os.precision(old);
}

}  // namespace bqcf
