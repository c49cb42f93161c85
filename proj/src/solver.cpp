#include "bqcf/solver.hpp"

#include "bqcf/parallel.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace bqcf {

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  if (max_iterations <= 0) throw ConfigError("max_iterations must be positive");
  if (line_search_steps <= 0) throw ConfigError("line_search_steps must be positive");
  if (!(line_search_reduction > 0.0 && line_search_reduction < 1.0))
    throw ConfigError("line_search_reduction must lie in (0, 1)");
  if (restart <= 0) throw ConfigError("restart interval must be positive");
}

MetricWeights metric_weights(const MultiLattice& lattice, const InteractionRange& range,
                             const SitePotential& potential) {
  // a throwaway mesh; only the pointwise density is used
  auto mesh = std::make_shared<const Mesh>(build_atomistic_triangulation(lattice, 1));
  std::shared_ptr<const SitePotential> V(&potential, [](const SitePotential*) {});
  const CauchyBornModel cb(lattice, range, V, mesh);
  const int S = lattice.species();
  const double h = 1e-5;
  const std::vector<Vec2> p0(S - 1, Vec2::Zero());
  MetricWeights w;
  double tr = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      Mat2 E = Mat2::Zero();
      E(i, j) = h;
      const auto a = cb.w_cb_derivatives(E, p0), b = cb.w_cb_derivatives(-E, p0);
      tr += (a.dG(i, j) - b.dG(i, j)) / (2 * h);
    }
  w.w_U = tr / 4.0;
  if (S > 1) {
    tr = 0.0;
    for (int a = 0; a + 1 < S; ++a)
      for (int k = 0; k < 2; ++k) {
        auto pp = p0, pm = p0;
        pp[a][k] += h;
        pm[a][k] -= h;
        tr += (cb.w_cb_derivatives(Mat2::Zero(), pp).dp[a][k] - cb.w_cb_derivatives(Mat2::Zero(), pm).dp[a][k]) /
              (2 * h);
      }
    w.w_p = tr / (2.0 * (S - 1));
  }
  if (!(w.w_U > 0.0) || !(w.w_p > 0.0)) throw ConfigError("reference Hessian is not positive; no metric weights");
  return w;
}

// ---------------------------------------------------------------------------

struct Preconditioner::Factor {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
};

Preconditioner::~Preconditioner() = default;
Preconditioner::Preconditioner(Preconditioner&&) noexcept = default;

Preconditioner::Preconditioner(const Mesh& mesh, int species, MetricWeights weights, PreconditionerKind kind)
    : kind_(kind), species_(species), weights_(weights), fixed_(mesh.boundary) {
  const std::size_t n = mesh.node_count();
  free_index_.assign(n, -1);
  std::ptrdiff_t nf = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!fixed_[i]) free_index_[i] = nf++;
  if (kind_ == PreconditionerKind::kIdentity) return;

  mass_.assign(n, 0.0);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.triangles.size() * 6);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto g = mesh.geometry(t);
    for (int a = 0; a < 3; ++a) {
      mass_[tri[a]] += g.area / 3.0;
      const auto ia = free_index_[tri[a]];
      if (ia < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const auto ib = free_index_[tri[b]];
        if (ib < 0 || ib > ia) continue;
        trip.emplace_back(ia, ib, g.area * g.grad[a].dot(g.grad[b]));
      }
    }
  }
  Eigen::SparseMatrix<double> K(nf, nf);
  K.setFromTriplets(trip.begin(), trip.end());
  factor_ = std::make_unique<Factor>();
  factor_->llt.compute(K);
  if (factor_->llt.info() != Eigen::Success)
    throw ConfigError("stiffness matrix is not positive definite on the free nodes");
}

DisplacementState Preconditioner::apply(const DisplacementState& r) const {
  auto s = DisplacementState::zeros(r.size(), species_, r.domain);
  if (kind_ == PreconditionerKind::kIdentity) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (fixed_[i]) continue;
      s.U[i] = r.U[i];
      for (std::size_t a = 0; a < r.p.size(); ++a) s.p[a][i] = r.p[a][i];
    }
    return s;
  }
  const Eigen::Index nf = factor_->llt.rows();
  Eigen::MatrixXd rhs(nf, 2);
  for (std::size_t i = 0; i < r.size(); ++i)
    if (free_index_[i] >= 0) rhs.row(free_index_[i]) = r.U[i].transpose();
  const Eigen::MatrixXd sol = factor_->llt.solve(rhs);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto k = free_index_[i];
    if (k < 0) continue;
    s.U[i] = sol.row(k).transpose() / weights_.w_U;
    for (std::size_t a = 0; a < r.p.size(); ++a) s.p[a][i] = r.p[a][i] / (weights_.w_p * mass_[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

double dot(const DisplacementState& a, const DisplacementState& b) {
  return parallel_sum(a.size(), [&](std::size_t i) {
    double s = a.U[i].dot(b.U[i]);
    for (std::size_t k = 0; k < a.p.size(); ++k) s += a.p[k][i].dot(b.p[k][i]);
    return s;
  });
}

DisplacementState scaled(const DisplacementState& a, double c) {
  auto out = a;
  for (auto& u : out.U) u *= c;
  for (auto& pk : out.p)
    for (auto& v : pk) v *= c;
  return out;
}

struct LineSearch {
  bool ok = false;
  double t = 0.0;
  DisplacementState x, r;
};

// Secant iteration on g(t) = ⟨residual(x + t d), d⟩ inside a bracket that is
// tightened as samples come in; collisions halve the step.
LineSearch line_search(const ResidualFn& residual, const DisplacementState& x, const DisplacementState& d,
                       double g0, double t0, const SolverConfig& cfg, int& evals) {
  const double inf = std::numeric_limits<double>::infinity();
  double lo = 0.0, glo = g0, hi = inf, ghi = std::numeric_limits<double>::quiet_NaN();
  double tp = 0.0, gp = g0;
  double t = t0;
  LineSearch out;
  for (int k = 0; k < cfg.line_search_steps; ++k) {
    auto xt = x;
    xt.axpy(t, d);
    DisplacementState rt;
    bool bad = false;
    try {
      rt = residual(xt);
      bad = !rt.all_finite();
    } catch (const CollisionError&) {
      bad = true;
    }
    ++evals;
    if (bad) {
      hi = t;
      ghi = std::numeric_limits<double>::quiet_NaN();
      t = 0.5 * (lo + t);
      continue;
    }
    const double gt = dot(rt, d);
    if (std::abs(gt) <= cfg.line_search_reduction * std::abs(g0)) {
      out.ok = true;
      out.t = t;
      out.x = std::move(xt);
      out.r = std::move(rt);
      return out;
    }
    if (gt < 0.0) {
      lo = t;
      glo = gt;
    } else {
      hi = t;
      ghi = gt;
    }
    double tn = gt != gp ? t - gt * (t - tp) / (gt - gp) : std::numeric_limits<double>::quiet_NaN();
    tp = t;
    gp = gt;
    if (hi == inf) {
      if (!(tn > lo) || !std::isfinite(tn)) tn = 2.0 * lo;
      tn = std::min(tn, 4.0 * lo);
    } else {
      const double w = hi - lo;
      if (!(tn > lo + 0.05 * w && tn < hi - 0.05 * w)) {
        if (std::isfinite(ghi)) tn = lo - glo * w / (ghi - glo);
        if (!(tn > lo + 0.05 * w && tn < hi - 0.05 * w)) tn = lo + 0.5 * w;
      }
    }
    t = tn;
  }
  return out;
}

}  // namespace

SolveReport ncg_solve(const ResidualFn& residual, const Preconditioner& P, DisplacementState& x,
                      const SolverConfig& cfg, const EnergyFn& energy) {
  cfg.validate();
  SolveReport rep;
  auto r = residual(x);
  ++rep.residual_evaluations;
  auto s = P.apply(r);
  double rs = dot(r, s);
  if (energy) rep.energy.push_back(energy(x));
  DisplacementState d;
  double t_prev = 1.0;
  int since_restart = 0;
  bool steepest = true;

  for (;;) {
    rep.residual_norm = std::sqrt(std::max(rs, 0.0));
    rep.residual_max = r.max_abs();
    rep.history.push_back(rep.residual_norm);
    if (rep.residual_norm <= cfg.tol && rep.residual_max <= cfg.tol) {
      rep.converged = true;
      rep.message = "converged";
      return rep;
    }
    if (rep.iterations >= cfg.max_iterations) {
      rep.message = "maximum number of iterations reached";
      return rep;
    }
    if (rep.iterations == 0) {
      d = scaled(s, -1.0);
      steepest = true;
    }

    double g0 = dot(r, d);
    if (!(g0 < 0.0)) {
      d = scaled(s, -1.0);
      g0 = -rs;
      steepest = true;
      ++rep.restarts;
    }
    // keep the first trial step below a tenth of a bond
    const double dmax = d.max_abs();
    double t0 = t_prev;
    if (dmax > 0.0) t0 = std::min(t0, 0.1 / dmax);
    auto ls = line_search(residual, x, d, g0, t0, cfg, rep.residual_evaluations);
    if (!ls.ok) {
      ++rep.line_search_failures;
      if (steepest) {
        rep.message = "line search failed along the preconditioned residual";
        return rep;
      }
      d = scaled(s, -1.0);
      steepest = true;
      ++rep.restarts;
      since_restart = 0;
      continue;
    }
    ++rep.iterations;
    t_prev = ls.t;
    x = std::move(ls.x);
    auto s_new = P.apply(ls.r);
    const double rs_new = dot(ls.r, s_new);
    if (energy) rep.energy.push_back(energy(x));

    // Polak-Ribière+: β = ⟨r⁺, s⁺ − s⟩ / ⟨r, s⟩
    double beta = 0.0;
    if (++since_restart >= cfg.restart) {
      since_restart = 0;
      ++rep.restarts;
    } else if (rs > 0.0) {
      beta = std::max(0.0, (rs_new - dot(ls.r, s)) / rs);
    }
    r = std::move(ls.r);
    s = std::move(s_new);
    rs = rs_new;
    auto dn = scaled(s, -1.0);
    if (beta > 0.0) dn.axpy(beta, d);
    d = std::move(dn);
    steepest = beta == 0.0;
  }
}

// ---------------------------------------------------------------------------

SolveResult solve_bqcf(const BqcfProblem& problem, const SolverConfig& config,
                       std::optional<DisplacementState> initial) {
  SolveResult out;
  out.state = initial ? std::move(*initial) : problem.zero_state();
  if (out.state.size() != problem.node_count()) throw std::invalid_argument("initial state does not match the mesh");
  for (std::size_t i = 0; i < out.state.size(); ++i)
    if (problem.mesh().boundary[i]) {
      out.state.U[i].setZero();
      for (auto& pk : out.state.p) pk[i].setZero();
    }
  const MetricWeights w = config.preconditioner == PreconditionerKind::kMetric
                              ? metric_weights(problem.lattice(), problem.range(), *problem.potential())
                              : MetricWeights{};
  const Preconditioner P(problem.mesh(), problem.lattice().species(), w, config.preconditioner);
  out.report = ncg_solve([&](const DisplacementState& s) { return bqcf_residual(problem, s); }, P, out.state,
                         config);
  return out;
}

SolveResult solve_atomistic_clamped(const MultiLattice& lattice, const InteractionRange& range,
                                    std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                                    int rings, const SolverConfig& config,
                                    std::optional<DisplacementState> initial, bool track_energy) {
  if (rings < 1) throw ConfigError("clamped region needs at least one ring");
  // one extra ring of fixed zeros closes the triangulation for the metric
  const Mesh mesh = build_atomistic_triangulation(lattice, rings + 1);
  const AtomisticModel model(lattice, range, potential, defect, rings + 1, rings + 1);
  const int S = lattice.species();
  auto x = DisplacementState::zeros(mesh.node_count(), S, DofDomain::kLattice);
  const std::size_t nfree = hex_site_count(rings);
  if (initial) {
    if (initial->size() != nfree) throw std::invalid_argument("initial state does not match the clamped region");
    for (std::size_t i = 0; i < nfree; ++i) {
      x.U[i] = initial->U[i];
      for (int a = 0; a + 1 < S; ++a) x.p[a][i] = initial->p[a][i];
    }
  }
  auto forces = [&](const DisplacementState& s) {
    auto g = model.gradient(s);
    for (std::size_t i = nfree; i < g.size(); ++i) {
      g.U[i].setZero();
      for (auto& pk : g.p) pk[i].setZero();
    }
    return g;
  };
  const MetricWeights w = config.preconditioner == PreconditionerKind::kMetric
                              ? metric_weights(lattice, range, *potential)
                              : MetricWeights{};
  const Preconditioner P(mesh, S, w, config.preconditioner);
  SolveResult out;
  EnergyFn energy;
  if (track_energy) energy = [&](const DisplacementState& s) { return model.energy(s); };
  out.report = ncg_solve(forces, P, x, config, energy);
  x.U.resize(nfree);
  for (auto& pk : x.p) pk.resize(nfree);
  out.state = std::move(x);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string header_text(const ReferenceSolution& ref, int species) {
  std::ostringstream os;
  os.precision(17);
  os << "bqcf-reference " << kReferenceFormatVersion << "\n"
     << "potential " << ref.key.potential_id << "\n"
     << "lattice " << ref.key.lattice_id << "\n"
     << "defect " << ref.key.defect_id << "\n"
     << "rings " << ref.key.rings << "\n"
     << "tolerance " << ref.key.tol << "\n"
     << "species " << species << "\n"
     << "sites " << ref.state.size() << "\n"
     << "converged " << (ref.converged ? 1 : 0) << "\n"
     << "iterations " << ref.iterations << "\n"
     << "residual " << ref.residual_norm << "\n"
     << "data\n";
  return os.str();
}

}  // namespace

void save_reference(const std::string& path, const ReferenceSolution& ref) {
  const int S = ref.state.species();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write reference cache " + tmp);
    out << header_text(ref, S);
    const SiteIndexer idx(ref.key.rings);
    std::vector<char> rec(8 + 16 * S);
    for (std::size_t i = 0; i < ref.state.size(); ++i) {
      const auto m = idx.point(i);
      const std::int32_t mm[2] = {m.m1, m.m2};
      std::memcpy(rec.data(), mm, 8);
      std::memcpy(rec.data() + 8, ref.state.U[i].data(), 16);
      for (int a = 0; a + 1 < S; ++a) std::memcpy(rec.data() + 24 + 16 * a, ref.state.p[a][i].data(), 16);
      out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
    if (!out) throw std::runtime_error("failed writing reference cache " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::optional<ReferenceSolution> load_reference(const std::string& path, const ReferenceKey& key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  ReferenceSolution ref;
  std::string line, word;
  int version = 0, species = 0;
  std::size_t sites = 0;
  auto field = [&](const char* name) -> std::string {
    if (!std::getline(in, line)) return {};
    const std::string prefix = std::string(name) + " ";
    if (line.rfind(prefix, 0) != 0) return {};
    return line.substr(prefix.size());
  };
  try {
    version = std::stoi(field("bqcf-reference"));
    if (version != kReferenceFormatVersion) return std::nullopt;
    ref.key.potential_id = field("potential");
    ref.key.lattice_id = field("lattice");
    ref.key.defect_id = field("defect");
    ref.key.rings = std::stoi(field("rings"));
    ref.key.tol = std::stod(field("tolerance"));
    species = std::stoi(field("species"));
    sites = std::stoull(field("sites"));
    ref.converged = std::stoi(field("converged")) != 0;
    ref.iterations = std::stoi(field("iterations"));
    ref.residual_norm = std::stod(field("residual"));
    if (!std::getline(in, line) || line != "data") return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!(ref.key == key) || species < 1 || sites != static_cast<std::size_t>(hex_site_count(key.rings))) return std::nullopt;
  ref.state = DisplacementState::zeros(sites, species, DofDomain::kLattice);
  const SiteIndexer idx(key.rings);
  std::vector<char> rec(8 + 16 * species);
  for (std::size_t i = 0; i < sites; ++i) {
    if (!in.read(rec.data(), static_cast<std::streamsize>(rec.size()))) return std::nullopt;
    std::int32_t mm[2];
    std::memcpy(mm, rec.data(), 8);
    const auto m = idx.point(i);
    if (mm[0] != m.m1 || mm[1] != m.m2) return std::nullopt;
    std::memcpy(ref.state.U[i].data(), rec.data() + 8, 16);
    for (int a = 0; a + 1 < species; ++a) std::memcpy(ref.state.p[a][i].data(), rec.data() + 24 + 16 * a, 16);
  }
  ref.from_cache = true;
  return ref;
}

ReferenceSolution compute_reference(const MultiLattice& lattice, const InteractionRange& range,
                                    std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                                    int rings, const SolverConfig& config, const std::string& cache_path) {
  ReferenceKey key{potential->id(), lattice.id, defect ? defect->id() : "none", rings, config.tol};
  if (!cache_path.empty())
    if (auto hit = load_reference(cache_path, key)) return std::move(*hit);
  auto res = solve_atomistic_clamped(lattice, range, potential, defect, rings, config);
  ReferenceSolution ref;
  ref.key = key;
  ref.state = std::move(res.state);
  ref.converged = res.report.converged;
  ref.iterations = res.report.iterations;
  ref.residual_norm = res.report.residual_norm;
  if (!cache_path.empty() && ref.converged) save_reference(cache_path, ref);
  return ref;
}

}  // namespace bqcf
