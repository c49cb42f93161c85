// Acceptance criteria 1-8, one PASS/FAIL line each.
// usage: acceptance [work_dir]   (reference cache and CSVs go there)

#include "bqcf/harness.hpp"
#include "bqcf/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace bqcf;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("criterion %d %s: %s  [%s]\n", id, title, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class Fn>
void guarded(int id, const char* title, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, title, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance-out");
  fs::create_directories(work);

  ExperimentConfig desk;
  desk.sweep = {8, 12, 16};
  desk.output_dir = (work / "run1").string();
  desk.reference_cache = (work / "reference.bin").string();
  const Setup setup = Setup::from_config(desk);
  const auto layouts = sweep_layouts(desk, setup);

  guarded(1, "ghost-force freedom", [&] {
    double worst = 0.0;
    std::string detail;
    for (const auto& L : layouts) {
      const double f = ghost_force(desk, setup, L.R_a);
      worst = std::max(worst, f);
      detail += "R_a=" + g(L.R_a) + ": " + g(f) + "  ";
    }
    report(1, "ghost-force freedom", worst <= 1e-10, detail + "bound 1e-10");
  });

  guarded(2, "reference equilibrium", [&] {
    const double f = reference_force(setup, 20);
    report(2, "reference equilibrium", f <= 1e-12, "max |force| = " + g(f) + ", bound 1e-12");
  });

  guarded(3, "derivative consistency", [&] {
    const auto checks = derivative_checks(setup, layouts.front(), 100, desk.seed);
    bool ok = true;
    std::string detail;
    for (const auto& c : checks) {
      ok = ok && c.pass;
      detail += c.name + ": " + c.detail + "; ";
    }
    report(3, "derivative consistency", ok, detail);
  });

  guarded(4, "weak-form identity", [&] {
    auto problem = BqcfProblem::build(8, setup.lattice, setup.range, setup.potential, setup.defect_ptr(),
                                      desk.layout, desk.quadrature);
    const double gap = weak_form_gap(*problem, 20, desk.seed);
    report(4, "weak-form identity", gap <= 1e-10, "20 pairs at R_a=8, worst relative gap " + g(gap));
  });

  std::optional<ConvergenceResult> run;
  guarded(5, "convergence rates", [&] {
    run = run_convergence(desk, [](const std::string& s) { std::cerr << s << std::endl; });
    const auto& r = *run;
    double R_o16 = 0;
    for (const auto& L : layouts) R_o16 = std::max(R_o16, L.R_o);
    std::ostringstream os;
    bool ok = r.R_ref >= 2 * R_o16;
    os << "R_ref=" << g(r.R_ref) << " (2 R_o=" << g(2 * R_o16) << ")";
    for (const auto& row : r.rows)
      if (!row.ok) {
        ok = false;
        os << "; " << row.method << " R_a=" << g(row.R_a) << " not converged (" << row.iterations
           << " its, residual " << g(row.final_residual) << ")";
      }
    auto slope = [](const SlopeFit& f) { return f.slope ? g(*f.slope) : std::string("n/a"); };
    os << "; bqcf slope " << slope(r.bqcf_slope) << " over " << r.bqcf_slope.points << " pts (<= -0.8)";
    os << "; atm slope " << slope(r.atm_slope) << " over " << r.atm_slope.points << " pts ([-0.65,-0.35])";
    ok = ok && r.bqcf_slope.slope && *r.bqcf_slope.slope <= -0.8;
    ok = ok && r.atm_slope.slope && *r.atm_slope.slope >= -0.65 && *r.atm_slope.slope <= -0.35;
    const std::size_t n = r.rows.size() / 2;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& b = r.rows[i];
      const auto& a = r.rows[i + n];
      const bool below = b.ok && a.ok && b.err_combined < a.err_combined;
      ok = ok && below;
      os << "; R_a=" << g(b.R_a) << " bqcf " << (b.ok ? g(b.err_combined) : "nan") << " vs atm "
         << (a.ok ? g(a.err_combined) : "nan");
    }
    if (r.truncation) os << "; reference truncation " << g(r.truncation->combined);
    report(5, "convergence rates", ok, os.str());
  });

  guarded(6, "decay rates", [&] {
    if (!run) throw std::runtime_error("no reference solution");
    const auto& d = run->decay;
    const bool ok = run->reference.converged && d.fitted && d.slope_DU <= -1.5 && d.slope_p <= -1.5;
    report(6, "decay rates", ok,
           "reference converged " + std::string(run->reference.converged ? "yes" : "no") + ", slope |DU| " +
               (d.fitted ? g(d.slope_DU) : "n/a") + ", slope |p| " + (d.fitted ? g(d.slope_p) : "n/a") +
               " (<= -1.5)");
  });

  guarded(7, "mesh/blend structure", [&] {
    bool ok = true;
    std::string detail;
    ExperimentConfig all;  // the default sweep covers the desk sweep
    for (const auto& L : sweep_layouts(all, setup)) {
      int failed = 0, total = 0;
      for (const auto& c : layout_checks(setup, L)) {
        ++total;
        if (!c.pass) {
          ++failed;
          detail += "R_a=" + g(L.R_a) + " " + c.name + ": " + c.detail + "; ";
        }
      }
      ok = ok && failed == 0;
      detail += "R_a=" + g(L.R_a) + " " + std::to_string(total - failed) + "/" + std::to_string(total) + "; ";
    }
    report(7, "mesh/blend structure", ok, detail);
  });

  guarded(8, "determinism", [&] {
    if (!run) throw std::runtime_error("first run missing");
    const std::string first = slurp(run->csv_path);
    ExperimentConfig again = desk;
    again.output_dir = (work / "run2").string();
    again.threads = 3;
    again.jobs = 2;
    const auto second = run_convergence(again);
    const bool same = !first.empty() && slurp(second.csv_path) == first;
    set_thread_count(1);
    report(8, "determinism", same,
           std::string("run1 (1 thread, 1 job) vs run2 (3 threads, 2 jobs): ") + (same ? "identical" : "different"));
  });

  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
