#include "bqcf/harness.hpp"

#include "bqcf/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace bqcf {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': '" + v + "' is not a number");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (trim(v.substr(pos)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::vector<double> numbers(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(to_double(key, tok));
  return out;
}

struct KeyDef {
  ConfigKey doc;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<KeyDef>& key_defs() {
  using C = ExperimentConfig;
  static const std::vector<KeyDef> defs = [] {
    std::vector<KeyDef> d;
    auto str = [&](std::string name, std::string help, std::string C::*m) {
      d.push_back({{name, help}, [m](C& c, const std::string& v) { c.*m = v; },
                   [m](const C& c) { return c.*m; }});
    };
    auto num = [&](std::string name, std::string help, auto get_ref) {
      d.push_back({{name, help},
                   [get_ref, name](C& c, const std::string& v) { get_ref(c) = to_double(name, v); },
                   [get_ref](const C& c) { return short_fmt(get_ref(const_cast<C&>(c))); }});
    };
    auto integer = [&](std::string name, std::string help, auto get_ref) {
      d.push_back({{name, help},
                   [get_ref, name](C& c, const std::string& v) {
                     get_ref(c) = static_cast<std::remove_reference_t<decltype(get_ref(c))>>(to_int(name, v));
                   },
                   [get_ref](const C& c) { return std::to_string(get_ref(const_cast<C&>(c))); }});
    };

    str("lattice", "lattice preset: graphene | custom", &C::lattice);
    str("lattice_F", "custom lattice: F as 'F11 F12 F21 F22' (det F = 1)", &C::lattice_F);
    str("lattice_shifts", "custom lattice: shifts 'x y; x y; ...', the first one 0 0", &C::lattice_shifts);
    str("lattice_triples", "custom lattice: interaction range 'm1 m2 alpha beta; ...'", &C::lattice_triples);
    str("defect", "none | stone-wales", &C::defect);
    d.push_back({{"sweep", "R_a values, comma separated, ascending"},
                 [](C& c, const std::string& v) {
                   c.sweep.clear();
                   for (const auto& t : split(v, ',')) c.sweep.push_back(to_double("sweep", t));
                 },
                 [](const C& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.sweep.size(); ++i) s += (i ? "," : "") + short_fmt(c.sweep[i]);
                   return s;
                 }});
    num("core_ratio", "R_core / R_a", [](C& c) -> double& { return c.layout.core_ratio; });
    num("rc_exponent", "R_c = rc_scale * R_a^rc_exponent", [](C& c) -> double& { return c.layout.rc_exponent; });
    num("rc_scale", "R_c = rc_scale * R_a^rc_exponent", [](C& c) -> double& { return c.layout.rc_scale; });
    num("pad_factor", "blend band ends pad_factor * r_buff inside R_a",
        [](C& c) -> double& { return c.layout.pad_factor; });
    num("growth_exponent", "mesh size h(r) = (r / R_a)^growth_exponent",
        [](C& c) -> double& { return c.layout.growth_exponent; });
    num("shape_bound", "bound on circumradius / inradius", [](C& c) -> double& { return c.layout.shape_bound; });
    num("pair_length_scale", "pair term phi(r / l); 0 picks the nearest-neighbour distance",
        [](C& c) -> double& { return c.pair_length_scale; });
    num("ref_multiplier", "reference radius = ref_multiplier * largest R_o",
        [](C& c) -> double& { return c.ref_multiplier; });
    num("ref_tol_factor", "reference tolerance = ref_tol_factor * tol",
        [](C& c) -> double& { return c.ref_tol_factor; });
    num("tol", "solver tolerance (preconditioned norm and max norm)", [](C& c) -> double& { return c.solver.tol; });
    integer("max_iterations", "solver iteration cap", [](C& c) -> int& { return c.solver.max_iterations; });
    integer("line_search_steps", "secant steps per line search",
            [](C& c) -> int& { return c.solver.line_search_steps; });
    num("line_search_reduction", "line search accepts |g(t)| <= this * |g(0)|",
        [](C& c) -> double& { return c.solver.line_search_reduction; });
    integer("restart", "NCG restart interval", [](C& c) -> int& { return c.solver.restart; });
    d.push_back({{"preconditioner", "identity | metric"},
                 [](C& c, const std::string& v) {
                   if (v == "identity") c.solver.preconditioner = PreconditionerKind::kIdentity;
                   else if (v == "metric" || v == "ml-metric") c.solver.preconditioner = PreconditionerKind::kMetric;
                   else throw ConfigError("preconditioner must be identity or metric, got '" + v + "'");
                 },
                 [](const C& c) {
                   return std::string(c.solver.preconditioner == PreconditionerKind::kIdentity ? "identity"
                                                                                              : "metric");
                 }});
    d.push_back({{"quadrature", "continuum quadrature: three-point | barycenter"},
                 [](C& c, const std::string& v) {
                   if (v == "three-point") c.quadrature = Quadrature::kThreePoint;
                   else if (v == "barycenter") c.quadrature = Quadrature::kBarycenter;
                   else throw ConfigError("quadrature must be three-point or barycenter, got '" + v + "'");
                 },
                 [](const C& c) {
                   return std::string(c.quadrature == Quadrature::kThreePoint ? "three-point" : "barycenter");
                 }});
    str("output_dir", "directory for CSV, slopes, plot script and profiles", &C::output_dir);
    str("reference_cache", "reference cache file; empty: <output_dir>/reference.bin, none: no cache",
        &C::reference_cache);
    d.push_back({{"truncation_check", "reference self-consistency: half | double | none"},
                 [](C& c, const std::string& v) {
                   if (v == "half") c.truncation_check = TruncationCheck::kHalf;
                   else if (v == "double") c.truncation_check = TruncationCheck::kDouble;
                   else if (v == "none") c.truncation_check = TruncationCheck::kNone;
                   else throw ConfigError("truncation_check must be half, double or none, got '" + v + "'");
                 },
                 [](const C& c) {
                   switch (c.truncation_check) {
                     case TruncationCheck::kHalf: return std::string("half");
                     case TruncationCheck::kDouble: return std::string("double");
                     default: return std::string("none");
                   }
                 }});
    num("decay_r_min", "inner radius of the decay fit; 0 picks the defect radius",
        [](C& c) -> double& { return c.decay_r_min; });
    integer("seed", "seed for the randomized checks", [](C& c) -> std::uint64_t& { return c.seed; });
    integer("check_samples", "random inputs per derivative check", [](C& c) -> int& { return c.check_samples; });
    integer("threads", "assembly threads", [](C& c) -> int& { return c.threads; });
    integer("jobs", "sweep points solved concurrently", [](C& c) -> int& { return c.jobs; });
    d.push_back({{"timing", "write measured wall_seconds (false writes 0 so CSVs are reproducible)"},
                 [](C& c, const std::string& v) { c.timing = to_bool("timing", v); },
                 [](const C& c) { return std::string(c.timing ? "true" : "false"); }});
    return d;
  }();
  return defs;
}

const KeyDef& find_key(const std::string& key) {
  for (const auto& d : key_defs())
    if (d.doc.name == key) return d;
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& d : key_defs()) k.push_back(d.doc);
    return k;
  }();
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  find_key(key).set(*this, trim(value));
}

std::string ExperimentConfig::get(const std::string& key) const { return find_key(key).get(*this); }

std::string ExperimentConfig::dump() const {
  std::string out;
  for (const auto& d : key_defs()) out += d.doc.name + " = " + d.get(*this) + "\n";
  return out;
}

std::string ExperimentConfig::reference_cache_path() const {
  if (reference_cache == "none") return "";
  if (reference_cache.empty()) return (fs::path(output_dir) / "reference.bin").string();
  return reference_cache;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file " + path);
  return parse(in);
}

void ExperimentConfig::validate() const {
  if (lattice != "graphene" && lattice != "custom") throw ConfigError("lattice must be graphene or custom");
  if (defect != "none" && defect != "stone-wales") throw ConfigError("defect must be none or stone-wales");
  if (sweep.empty()) throw ConfigError("sweep is empty");
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (!(sweep[i] > 0.0)) throw ConfigError("sweep radii must be positive");
    if (i > 0 && !(sweep[i] > sweep[i - 1])) throw ConfigError("sweep must be strictly ascending");
  }
  if (!(pair_length_scale >= 0.0)) throw ConfigError("pair_length_scale must be >= 0");
  if (!(ref_multiplier >= 1.0)) throw ConfigError("ref_multiplier must be >= 1");
  if (!(ref_tol_factor > 0.0 && ref_tol_factor <= 1.0)) throw ConfigError("ref_tol_factor must be in (0, 1]");
  if (!(decay_r_min >= 0.0)) throw ConfigError("decay_r_min must be >= 0");
  if (check_samples < 1) throw ConfigError("check_samples must be positive");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (jobs < 1) throw ConfigError("jobs must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
  solver.validate();
}

// ---------------------------------------------------------------------------

Setup Setup::from_config(const ExperimentConfig& config) {
  config.validate();
  Setup s;
  if (config.lattice == "graphene") {
    auto [lat, range] = build_graphene();
    s.lattice = std::move(lat);
    s.range = std::move(range);
    s.pair_length = config.pair_length_scale > 0.0 ? config.pair_length_scale : graphene_a0();
    s.potential = make_graphene_potential(s.range, s.pair_length);
  } else {
    const auto F = numbers("lattice_F", config.lattice_F);
    if (F.size() != 4) throw ConfigError("lattice_F needs four numbers");
    s.lattice.id = "custom";
    s.lattice.F << F[0], F[1], F[2], F[3];
    s.lattice.shifts_ref.clear();
    for (const auto& item : split(config.lattice_shifts, ';')) {
      const auto v = numbers("lattice_shifts", item);
      if (v.size() != 2) throw ConfigError("lattice_shifts entries need two numbers");
      s.lattice.shifts_ref.emplace_back(v[0], v[1]);
    }
    if (s.lattice.shifts_ref.empty()) s.lattice.shifts_ref.push_back(Vec2::Zero());
    std::ostringstream id;
    id.precision(17);
    id << "custom(F=" << F[0] << "," << F[1] << "," << F[2] << "," << F[3] << ";p=";
    for (const auto& p : s.lattice.shifts_ref) id << p.x() << "," << p.y() << ";";
    s.lattice.validate();
    std::vector<Triple> triples;
    for (const auto& item : split(config.lattice_triples, ';')) {
      const auto v = numbers("lattice_triples", item);
      if (v.size() != 4) throw ConfigError("lattice_triples entries need four integers");
      for (double x : v)
        if (x != std::floor(x)) throw ConfigError("lattice_triples entries must be integers");
      const Triple t{{int(v[0]), int(v[1])}, int(v[2]), int(v[3])};
      if (t.alpha < 0 || t.beta < 0 || t.alpha >= s.lattice.species() || t.beta >= s.lattice.species())
        throw ConfigError("lattice_triples species index out of range");
      triples.push_back(t);
      id << v[0] << " " << v[1] << " " << v[2] << " " << v[3] << ";";
    }
    id << ")";
    s.lattice.id = id.str();
    s.range = InteractionRange(s.lattice, triples);
    s.range.validate(s.lattice);
    double nn = std::numeric_limits<double>::infinity();
    for (const auto& r : s.range.reference_stencil(s.lattice)) nn = std::min(nn, r.norm());
    s.pair_length = config.pair_length_scale > 0.0 ? config.pair_length_scale : nn;
    // pair interactions only: the bond-angle families are graphene specific
    s.potential = std::make_shared<const GrapheneSW>(s.range, std::vector<AngleFamily>{}, s.pair_length);
  }
  if (config.defect == "stone-wales") s.defect = make_stone_wales(s.lattice, s.range, s.pair_length);
  return s;
}

std::vector<DomainLayout> sweep_layouts(const ExperimentConfig& config, const Setup& setup) {
  std::vector<DomainLayout> out;
  for (double R_a : config.sweep) {
    try {
      out.push_back(DomainLayout::make(R_a, setup.lattice, setup.range, config.layout));
    } catch (const ConfigError& e) {
      throw ConfigError("R_a = " + short_fmt(R_a) + ": " + e.what());
    }
  }
  return out;
}

int reference_rings(const ExperimentConfig& config, const Setup& setup) {
  double R_o = 0.0;
  for (const auto& L : sweep_layouts(config, setup)) R_o = std::max(R_o, L.R_o);
  return static_cast<int>(std::ceil(config.ref_multiplier * R_o / setup.lattice.row_spacing() - 1e-9));
}

namespace {

SolverConfig reference_solver(const ExperimentConfig& config) {
  SolverConfig s = config.solver;
  s.tol *= config.ref_tol_factor;
  return s;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory " + dir + ": " + ec.message());
}

std::string cache_variant(const std::string& path, const std::string& tag) {
  return path.empty() ? path : path + "." + tag;
}

}  // namespace

ReferenceSolution make_reference(const ExperimentConfig& config, const Setup& setup, const Log& log) {
  const int rings = reference_rings(config, setup);
  const auto path = config.reference_cache_path();
  if (!path.empty() && fs::path(path).has_parent_path()) ensure_dir(fs::path(path).parent_path().string());
  if (log) log("reference: " + std::to_string(rings) + " rings, " + std::to_string(hex_site_count(rings)) + " sites");
  auto ref = compute_reference(setup.lattice, setup.range, setup.potential, setup.defect_ptr(), rings,
                               reference_solver(config), path);
  if (log)
    log(std::string("reference: ") + (ref.from_cache ? "loaded from cache" : "solved") + ", converged " +
        (ref.converged ? "yes" : "no") + ", " + std::to_string(ref.iterations) + " iterations");
  return ref;
}

int matched_atomistic_rings(std::size_t dof, int species) {
  int best = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (int k = 0;; ++k) {
    const double d = std::abs(double(hex_site_count(k) * species) - double(dof));
    if (d <= gap) {
      gap = d;
      best = k;
    } else {
      break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::string csv_header() {
  return "method,R_a,R_c,R_o,dof,err_gradU,err_shift,err_combined,iterations,wall_seconds,final_residual";
}

std::string csv_line(const SweepRow& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::ostringstream os;
  os << r.method << "," << fmt(r.R_a) << "," << fmt(r.R_c) << "," << fmt(r.R_o) << "," << r.dof << ","
     << fmt(r.ok ? r.err_gradU : nan) << "," << fmt(r.ok ? r.err_shift : nan) << ","
     << fmt(r.ok ? r.err_combined : nan) << "," << r.iterations << "," << fmt(r.wall_seconds) << ","
     << fmt(r.final_residual);
  return os.str();
}

std::vector<SweepRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  if (trim(line) != csv_header()) throw std::runtime_error(path + ": unexpected header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::istringstream is(line);
    std::string tok;
    while (std::getline(is, tok, ',')) f.push_back(tok);
    if (f.size() != 11) throw std::runtime_error(path + ": malformed row '" + line + "'");
    SweepRow r;
    r.method = f[0];
    r.R_a = std::stod(f[1]);
    r.R_c = std::stod(f[2]);
    r.R_o = std::stod(f[3]);
    r.dof = std::stoull(f[4]);
    r.err_gradU = std::stod(f[5]);
    r.err_shift = std::stod(f[6]);
    r.err_combined = std::stod(f[7]);
    r.iterations = std::stoi(f[8]);
    r.wall_seconds = std::stod(f[9]);
    r.final_residual = std::stod(f[10]);
    r.ok = std::isfinite(r.err_combined);
    rows.push_back(r);
  }
  return rows;
}

void write_file_atomic(const std::string& path, const std::string& text) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

std::string plot_script(const std::string& csv_name) {
  std::ostringstream os;
  os << "#!/usr/bin/env python3\n"
     << "# log-log error against degrees of freedom; usage: python3 plot_convergence.py [csv] [png]\n"
     << "import csv, math, os, sys\n"
     << "import matplotlib\n"
     << "matplotlib.use(\"Agg\")\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "here = os.path.dirname(os.path.abspath(__file__))\n"
     << "src = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, \"" << csv_name << "\")\n"
     << "dst = sys.argv[2] if len(sys.argv) > 2 else os.path.splitext(src)[0] + \".png\"\n"
     << "series = {}\n"
     << "with open(src) as f:\n"
     << "    for row in csv.DictReader(f):\n"
     << "        e = float(row[\"err_combined\"])\n"
     << "        if math.isfinite(e) and e > 0:\n"
     << "            series.setdefault(row[\"method\"], []).append((int(row[\"dof\"]), e))\n"
     << "fig, ax = plt.subplots(figsize=(5, 4))\n"
     << "style = {\"bqcf\": (\"o-\", \"BQCF\"), \"atm\": (\"s--\", \"ATM\")}\n"
     << "for method, pts in sorted(series.items()):\n"
     << "    pts.sort()\n"
     << "    mk, label = style.get(method, (\"x-\", method))\n"
     << "    ax.loglog([p[0] for p in pts], [p[1] for p in pts], mk, label=label)\n"
     << "if series:\n"
     << "    x0 = min(p[0] for s in series.values() for p in s)\n"
     << "    y0 = max(p[1] for s in series.values() for p in s)\n"
     << "    for k, ls in ((1.0, \":\"), (0.5, \"-.\")):\n"
     << "        xs = [x0, 10 * x0]\n"
     << "        ax.loglog(xs, [y0 * (x / x0) ** -k for x in xs], \"k\" + ls, lw=0.8, label=\"DoF^-%g\" % k)\n"
     << "ax.set_xlabel(\"DoF\")\n"
     << "ax.set_ylabel(\"error (combined norm)\")\n"
     << "ax.legend()\n"
     << "fig.tight_layout()\n"
     << "fig.savefig(dst, dpi=150)\n"
     << "print(dst)\n";
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

SlopeFit fit(const std::vector<SweepRow>& rows, const std::string& method) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows)
    if (r.method == method && r.ok && r.err_combined > 0.0) pts.emplace_back(double(r.dof), r.err_combined);
  SlopeFit f;
  f.points = pts.size();
  if (pts.size() >= 3) f.slope = fit_slope(pts);
  return f;
}

struct PointResult {
  SweepRow bqcf, atm;
  std::string log;
};

PointResult solve_point(const ExperimentConfig& config, const Setup& setup, const DomainLayout& L,
                        const ReferenceSolution& ref, const Mesh& ref_mesh) {
  using clock = std::chrono::steady_clock;
  PointResult out;
  std::ostringstream log;
  SweepRow& b = out.bqcf;
  b.method = "bqcf";
  b.R_a = L.R_a;
  b.R_c = L.R_c;
  b.R_o = L.R_o;
  auto t0 = clock::now();
  std::size_t dof = 0;
  try {
    auto problem = BqcfProblem::build(L.R_a, setup.lattice, setup.range, setup.potential, setup.defect_ptr(),
                                      config.layout, config.quadrature);
    dof = problem->dof_count();
    b.dof = dof;
    auto res = solve_bqcf(*problem, config.solver);
    b.iterations = res.report.iterations;
    b.final_residual = res.report.residual_max;
    if (res.report.converged) {
      const P1Field field{&problem->mesh(), res.state, true};
      const auto e = bqcf_error(ref.state, ref_mesh, field, setup.lattice, L.atomistic_rings);
      b.err_gradU = e.err_U;
      b.err_shift = e.err_p;
      b.err_combined = e.combined;
      b.ok = true;
    } else {
      b.message = res.report.message;
    }
  } catch (const std::exception& e) {
    b.message = e.what();
  }
  if (config.timing) b.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  log << "R_a " << short_fmt(L.R_a) << " bqcf: dof " << b.dof << ", " << b.iterations << " iterations, "
      << (b.ok ? "error " + short_fmt(b.err_combined) : "FAILED: " + b.message) << "\n";

  SweepRow& a = out.atm;
  a.method = "atm";
  a.R_a = L.R_a;
  t0 = clock::now();
  try {
    if (dof == 0) dof = hex_site_count(L.atomistic_rings) * setup.lattice.species();
    const int k = matched_atomistic_rings(dof, setup.lattice.species());
    const double h = setup.lattice.row_spacing();
    a.R_c = k * h;
    a.R_o = L.R_c > 0.0 ? a.R_c * L.R_o / L.R_c : a.R_c;
    a.dof = hex_site_count(k) * setup.lattice.species();
    auto res = solve_atomistic_clamped(setup.lattice, setup.range, setup.potential, setup.defect_ptr(), k,
                                       config.solver);
    a.iterations = res.report.iterations;
    a.final_residual = res.report.residual_max;
    if (res.report.converged) {
      const auto e = atomistic_error(ref.state, ref_mesh, res.state, L.atomistic_rings);
      a.err_gradU = e.err_U;
      a.err_shift = e.err_p;
      a.err_combined = e.combined;
      a.ok = true;
    } else {
      a.message = res.report.message;
    }
  } catch (const std::exception& e) {
    a.message = e.what();
  }
  if (config.timing) a.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  log << "R_a " << short_fmt(L.R_a) << " atm: dof " << a.dof << ", " << a.iterations << " iterations, "
      << (a.ok ? "error " + short_fmt(a.err_combined) : "FAILED: " + a.message) << "\n";
  out.log = log.str();
  return out;
}

std::string decay_csv(const DecayProfile& d) {
  std::ostringstream os;
  os << "r_lo,r_hi,max_DU,max_p\n";
  for (std::size_t i = 0; i < d.r_lo.size(); ++i)
    os << fmt(d.r_lo[i]) << "," << fmt(d.r_hi[i]) << "," << fmt(d.max_DU[i]) << "," << fmt(d.max_p[i]) << "\n";
  return os.str();
}

}  // namespace

ConvergenceResult run_convergence(const ExperimentConfig& config, const Log& log) {
  const Setup setup = Setup::from_config(config);
  const auto layouts = sweep_layouts(config, setup);
  set_thread_count(config.threads);
  ensure_dir(config.output_dir);
  const fs::path out_dir(config.output_dir);

  ConvergenceResult result;
  result.reference_rings = reference_rings(config, setup);
  result.R_ref = result.reference_rings * setup.lattice.row_spacing();
  result.reference = make_reference(config, setup, log);
  if (!result.reference.converged) {
    if (log) log("reference solve did not converge; errors are measured against an unconverged reference");
  }
  const int rings = result.reference_rings;
  const auto ref_mesh = build_atomistic_triangulation(setup.lattice, rings);

  const double r_min = config.decay_r_min > 0.0 ? config.decay_r_min
                       : setup.defect                ? setup.defect->r_def()
                                                     : 2.0 * setup.range.r_buff();
  result.decay = decay_profile(result.reference.state, rings, setup.lattice, r_min);
  write_file_atomic((out_dir / "decay.csv").string(), decay_csv(result.decay));

  std::vector<PointResult> points(layouts.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < layouts.size(); i = next++) {
      points[i] = solve_point(config, setup, layouts[i], result.reference, ref_mesh);
      const auto name = "point_Ra" + short_fmt(layouts[i].R_a) + ".csv";
      write_file_atomic((out_dir / "points" / name).string(),
                        csv_header() + "\n" + csv_line(points[i].bqcf) + "\n" + csv_line(points[i].atm) + "\n");
      if (log) {
        std::lock_guard lock(log_mutex);
        std::string text = points[i].log;
        if (!text.empty() && text.back() == '\n') text.pop_back();
        log(text);
      }
    }
  };
  const int jobs = std::min<int>(config.jobs, static_cast<int>(layouts.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  result.ok = true;
  for (const auto& p : points) {
    result.rows.push_back(p.bqcf);
    result.ok = result.ok && p.bqcf.ok && p.atm.ok;
  }
  for (const auto& p : points) result.rows.push_back(p.atm);

  std::string csv = csv_header() + "\n";
  for (const auto& r : result.rows) csv += csv_line(r) + "\n";
  result.csv_path = (out_dir / "convergence.csv").string();
  write_file_atomic(result.csv_path, csv);

  result.bqcf_slope = fit(result.rows, "bqcf");
  result.atm_slope = fit(result.rows, "atm");

  if (config.truncation_check != TruncationCheck::kNone) {
    const bool half = config.truncation_check == TruncationCheck::kHalf;
    const int other = half ? rings / 2 : 2 * rings;
    if (log) log("truncation check: reference on " + std::to_string(other) + " rings");
    const auto path = cache_variant(config.reference_cache_path(), half ? "half" : "double");
    const auto second = compute_reference(setup.lattice, setup.range, setup.potential, setup.defect_ptr(), other,
                                          reference_solver(config), path);
    const int gauge = layouts.front().atomistic_rings;
    if (half) {
      result.truncation = atomistic_error(result.reference.state, ref_mesh, second.state, gauge);
    } else {
      const auto big_mesh = build_atomistic_triangulation(setup.lattice, other);
      result.truncation = atomistic_error(second.state, big_mesh, result.reference.state, gauge);
    }
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& r : result.rows)
      if (r.method == "bqcf" && r.ok) smallest = std::min(smallest, r.err_combined);
    result.truncation_warning = std::isfinite(smallest) && result.truncation->combined > 0.5 * smallest;
    if (log && result.truncation_warning)
      log("WARNING: reference truncation error " + short_fmt(result.truncation->combined) +
          " exceeds half the smallest BQCF error " + short_fmt(smallest) + "; increase ref_multiplier");
  }

  std::ostringstream sl;
  auto slope_line = [&](const char* name, const SlopeFit& f) {
    sl << name << " " << (f.slope ? fmt(*f.slope) : std::string("nan")) << " points " << f.points << "\n";
  };
  slope_line("bqcf_slope", result.bqcf_slope);
  slope_line("atm_slope", result.atm_slope);
  sl << "decay_slope_DU " << (result.decay.fitted ? fmt(result.decay.slope_DU) : "nan") << "\n";
  sl << "decay_slope_p " << (result.decay.fitted ? fmt(result.decay.slope_p) : "nan") << "\n";
  sl << "reference_rings " << rings << "\n";
  sl << "reference_converged " << (result.reference.converged ? 1 : 0) << "\n";
  if (result.truncation) sl << "truncation_error " << fmt(result.truncation->combined) << "\n";
  write_file_atomic((out_dir / "slopes.txt").string(), sl.str());
  write_file_atomic((out_dir / "plot_convergence.py").string(), plot_script("convergence.csv"));
  if (log) log(sl.str().substr(0, sl.str().size() - 1));
  return result;
}

// ---------------------------------------------------------------------------

namespace {

DisplacementState random_state(std::size_t n, int S, DofDomain dom, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto st = DisplacementState::zeros(n, S, dom);
  for (std::size_t i = 0; i < n; ++i) {
    st.U[i] = Vec2(u(rng), u(rng));
    for (auto& p : st.p) p[i] = Vec2(u(rng), u(rng));
  }
  return st;
}

double dot(const DisplacementState& a, const DisplacementState& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a.U[i].dot(b.U[i]);
    for (std::size_t k = 0; k < a.p.size(); ++k) s += a.p[k][i].dot(b.p[k][i]);
  }
  return s;
}

CheckResult worst_check(const std::string& name, double worst, double bound, int samples) {
  std::ostringstream os;
  os << samples << " samples, worst relative error " << worst << " (bound " << bound << ")";
  return {name, worst <= bound && samples > 0, os.str()};
}

}  // namespace

std::vector<CheckResult> derivative_checks(const Setup& setup, const DomainLayout& layout, int samples,
                                           std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);
  const double h = 1e-5, bound = 1e-6;
  const int S = setup.lattice.species();

  {
    const auto m = AtomisticModel::clamped(setup.lattice, setup.range, setup.potential, setup.defect_ptr(), 4);
    double worst = 0.0;
    for (int k = 0; k < samples; ++k) {
      const auto st = random_state(m.value_count(), S, DofDomain::kLattice, rng, 0.04);
      const auto dir = random_state(m.value_count(), S, DofDomain::kLattice, rng, 1.0);
      auto a = st, b = st;
      a.axpy(h, dir);
      b.axpy(-h, dir);
      const double fd = (m.energy(a) - m.energy(b)) / (2 * h);
      const auto g = m.gradient(st);
      const double an = dot(g, dir);
      // a random projection can nearly cancel; measure against its typical
      // size |g||δ|/√N when that is larger
      const double typical = std::sqrt(dot(g, g) * dot(dir, dir) / (2.0 * S * g.size()));
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), typical));
    }
    out.push_back(worst_check("derivative-atomistic", worst, bound, samples));
  }

  {
    auto mesh = std::make_shared<const Mesh>(build_atomistic_triangulation(setup.lattice, 1));
    const CauchyBornModel cb(setup.lattice, setup.range, setup.potential, mesh, Quadrature::kThreePoint);
    std::uniform_real_distribution<double> u(-0.05, 0.05), n(-1.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < samples; ++k) {
      Mat2 G, dG;
      G << u(rng), u(rng), u(rng), u(rng);
      dG << n(rng), n(rng), n(rng), n(rng);
      std::vector<Vec2> p(S - 1), dp(S - 1);
      for (int a = 0; a < S - 1; ++a) {
        p[a] = Vec2(u(rng), u(rng));
        dp[a] = Vec2(n(rng), n(rng));
      }
      auto shifted = [&](double t) {
        std::vector<Vec2> q(p);
        for (int a = 0; a < S - 1; ++a) q[a] += t * dp[a];
        return cb.w_cb(G + t * dG, q);
      };
      const double fd = (shifted(h) - shifted(-h)) / (2 * h);
      const auto d = cb.w_cb_derivatives(G, p);
      double an = (d.dG.array() * dG.array()).sum();
      double gn = d.dG.squaredNorm();
      for (int a = 0; a < S - 1; ++a) {
        an += d.dp[a].dot(dp[a]);
        gn += d.dp[a].squaredNorm();
      }
      const double typical = std::sqrt(gn / (4.0 + 2.0 * (S - 1)));
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), typical));
    }
    out.push_back(worst_check("derivative-cauchy-born", worst, bound, samples));
  }

  {
    const auto phi = BlendFunction::from_layout(layout, setup.lattice);
    const Mat2 Finv = setup.lattice.F.inverse();
    std::uniform_real_distribution<double> ang(0, 2 * M_PI), rad(layout.blend_start, layout.blend_end * 1.2);
    double worst_g = 0.0, worst_h = 0.0;
    int n = 0;
    while (n < samples) {
      const double t = ang(rng), r = rad(rng);
      const Vec2 x = r * Vec2(std::cos(t), std::sin(t));
      // away from the corner rays, where the hexagonal radius has a kink,
      // and from the band edges, where the third derivative jumps
      const Vec2 m = Finv * x;
      double c[3] = {std::abs(m.x()), std::abs(m.y()), std::abs(m.x() + m.y())};
      std::sort(c, c + 3);
      if (c[2] - c[1] < 0.05) continue;
      const double rh = setup.lattice.hex_radius(x);
      if (rh < layout.blend_start + 0.01 || rh > layout.blend_end - 0.01) continue;
      ++n;
      const auto b = phi.evaluate(x);
      Vec2 fd;
      Mat2 fdh;
      for (int k = 0; k < 2; ++k) {
        Vec2 e = Vec2::Zero();
        e[k] = h;
        fd[k] = (phi.value(x + e) - phi.value(x - e)) / (2 * h);
        fdh.col(k) = (phi.evaluate(x + e).grad - phi.evaluate(x - e).grad) / (2 * h);
      }
      worst_g = std::max(worst_g, (fd - b.grad).norm() / b.grad.norm());
      worst_h = std::max(worst_h, (fdh - b.hess).norm() / std::max(b.hess.norm(), 1e-3 * b.grad.norm() / (layout.blend_end - layout.blend_start)));
    }
    out.push_back(worst_check("derivative-blend-gradient", worst_g, bound, n));
    out.push_back(worst_check("derivative-blend-hessian", worst_h, bound, n));
  }
  return out;
}

double reference_force(const Setup& setup, int rings) {
  const auto m = AtomisticModel::clamped(setup.lattice, setup.range, setup.potential, nullptr, rings);
  return m.gradient(DisplacementState::zeros(m.value_count(), setup.lattice.species(), DofDomain::kLattice))
      .max_abs();
}

double ghost_force(const ExperimentConfig& config, const Setup& setup, double R_a) {
  auto problem =
      BqcfProblem::build(R_a, setup.lattice, setup.range, setup.potential, nullptr, config.layout, config.quadrature);
  return bqcf_residual(*problem, problem->zero_state()).max_abs();
}

double weak_form_gap(const BqcfProblem& problem, int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& mesh = problem.mesh();
  const int S = problem.lattice().species();
  double worst = 0.0;
  for (int k = 0; k < pairs; ++k) {
    auto st = random_state(mesh.node_count(), S, DofDomain::kMesh, rng, 0.02);
    auto test = random_state(mesh.node_count(), S, DofDomain::kMesh, rng, 1.0);
    for (std::size_t i = 0; i < mesh.node_count(); ++i)
      if (mesh.boundary[i]) {
        st.U[i] = test.U[i] = Vec2::Zero();
        for (auto& p : st.p) p[i] = Vec2::Zero();
        for (auto& p : test.p) p[i] = Vec2::Zero();
      }
    const double a = weak_form_pairing(problem, st, test);
    const double b = weak_form_split(problem, st, test);
    worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}));
  }
  return worst;
}

std::vector<CheckResult> layout_checks(const Setup& setup, const DomainLayout& layout) {
  const auto mesh = build_graded_mesh(layout, setup.lattice);
  auto out = check_mesh(mesh, setup.lattice, setup.range, &layout);
  const auto blend = BlendFunction::from_layout(layout, setup.lattice);
  const auto rep = validate_blend(blend, layout, mesh, setup.lattice, setup.range, setup.defect_ptr());
  out.insert(out.end(), rep.checks.begin(), rep.checks.end());
  return out;
}

bool CheckReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

std::string CheckReport::json() const {
  nlohmann::json j;
  j["ok"] = ok();
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  return j.dump(2) + "\n";
}

CheckReport run_checks(const ExperimentConfig& config, const Log& log) {
  const Setup setup = Setup::from_config(config);
  const auto layouts = sweep_layouts(config, setup);
  set_thread_count(config.threads);
  const auto& L = layouts.front();
  CheckReport rep;
  auto add = [&](CheckResult c) {
    if (log) log(std::string(c.pass ? "pass " : "FAIL ") + c.name + ": " + c.detail);
    rep.checks.push_back(std::move(c));
  };
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      add({name, false, std::string("exception: ") + e.what()});
    }
  };

  guarded("ghost-force", [&] {
    const double g = ghost_force(config, setup, L.R_a);
    add({"ghost-force", g <= 1e-10, "max |residual(0)| = " + short_fmt(g) + " at R_a = " + short_fmt(L.R_a)});
  });
  guarded("reference-equilibrium", [&] {
    const double f = reference_force(setup, L.atomistic_rings);
    add({"reference-equilibrium", f <= 1e-12, "max |force| = " + short_fmt(f)});
  });
  guarded("derivatives", [&] {
    for (auto& c : derivative_checks(setup, L, config.check_samples, config.seed)) add(std::move(c));
  });
  guarded("layout", [&] {
    for (auto& c : layout_checks(setup, L)) add(std::move(c));
  });
  guarded("weak-form", [&] {
    auto problem = BqcfProblem::build(L.R_a, setup.lattice, setup.range, setup.potential, setup.defect_ptr(),
                                      config.layout, config.quadrature);
    const double g = weak_form_gap(*problem, 20, config.seed);
    add({"weak-form", g <= 1e-10, "20 pairs, worst relative gap " + short_fmt(g)});
  });
  return rep;
}

}  // namespace bqcf
