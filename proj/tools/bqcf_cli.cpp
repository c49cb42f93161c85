#include "bqcf/harness.hpp"
#include "bqcf/parallel.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace bqcf;

namespace {

void say(const std::string& s) { std::cerr << s << std::endl; }

std::string state_text(const Mesh& mesh, const DisplacementState& st) {
  std::ostringstream os;
  os.precision(17);
  os << "# x y U1 U2";
  for (std::size_t a = 0; a < st.p.size(); ++a) os << " p" << a + 1 << "_1 p" << a + 1 << "_2";
  os << "\n";
  for (std::size_t i = 0; i < st.size(); ++i) {
    os << mesh.nodes[i].x() << " " << mesh.nodes[i].y() << " " << st.U[i].x() << " " << st.U[i].y();
    for (const auto& p : st.p) os << " " << p[i].x() << " " << p[i].y();
    os << "\n";
  }
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blended force-based quasicontinuum for graphene with a Stone-Wales defect"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);

  std::map<std::string, std::string> overrides;
  ExperimentConfig defaults;
  for (const auto& k : config_keys())
    app.add_option("--" + k.name, overrides[k.name], k.help + " [default: " + defaults.get(k.name) + "]");

  auto* conv = app.add_subcommand("run-convergence", "reference, BQCF and ATM sweep, CSV and slopes");
  auto* checks = app.add_subcommand("run-checks", "consistency checks on the smallest layout (JSON report)");
  double ra = 0.0;
  auto* single = app.add_subcommand("solve-single", "solve one BQCF problem");
  single->add_option("--ra", ra, "atomistic radius R_a")->required();
  auto* reference = app.add_subcommand("make-reference", "compute or load the reference solution");
  auto* dump = app.add_subcommand("dump-mesh", "write the graded mesh of one layout");
  dump->add_option("--ra", ra, "atomistic radius R_a")->required();
  std::string mesh_out;
  dump->add_option("--out", mesh_out, "output file (default: stdout)");
  auto* keys = app.add_subcommand("show-config", "print every key with its effective value");
  (void)keys;

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    for (const auto& k : config_keys())
      if (app.count("--" + k.name) > 0) cfg.set(k.name, overrides[k.name]);
    cfg.validate();
    set_thread_count(cfg.threads);

    if (app.got_subcommand("show-config")) {
      for (const auto& k : config_keys()) std::cout << "# " << k.help << "\n" << k.name << " = " << cfg.get(k.name) << "\n";
      return 0;
    }
    if (conv->parsed()) {
      const auto res = run_convergence(cfg, say);
      std::cout << res.csv_path << "\n";
      return res.ok ? 0 : 1;
    }
    if (checks->parsed()) {
      const auto rep = run_checks(cfg, say);
      const auto text = rep.json();
      write_file_atomic((std::filesystem::path(cfg.output_dir) / "checks.json").string(), text);
      std::cout << text;
      return rep.ok() ? 0 : 1;
    }
    const Setup setup = Setup::from_config(cfg);
    if (reference->parsed()) {
      const auto ref = make_reference(cfg, setup, say);
      const double r_min = cfg.decay_r_min > 0 ? cfg.decay_r_min
                           : setup.defect     ? setup.defect->r_def()
                                              : 2.0 * setup.range.r_buff();
      const auto d = decay_profile(ref.state, ref.key.rings, setup.lattice, r_min);
      std::cout << "rings " << ref.key.rings << "\nconverged " << ref.converged << "\niterations " << ref.iterations
                << "\nresidual " << ref.residual_norm << "\n";
      if (d.fitted) std::cout << "decay_slope_DU " << d.slope_DU << "\ndecay_slope_p " << d.slope_p << "\n";
      return ref.converged ? 0 : 1;
    }
    const auto layout = DomainLayout::make(ra, setup.lattice, setup.range, cfg.layout);
    if (dump->parsed()) {
      const auto mesh = build_graded_mesh(layout, setup.lattice);
      if (mesh_out.empty()) {
        write_mesh(std::cout, mesh);
      } else {
        std::ostringstream os;
        write_mesh(os, mesh);
        write_file_atomic(mesh_out, os.str());
      }
      return 0;
    }
    if (single->parsed()) {
      auto problem = BqcfProblem::build(ra, setup.lattice, setup.range, setup.potential, setup.defect_ptr(),
                                        cfg.layout, cfg.quadrature);
      say("nodes " + std::to_string(problem->node_count()) + ", dof " + std::to_string(problem->dof_count()));
      const auto res = solve_bqcf(*problem, cfg.solver);
      const auto& r = res.report;
      std::cout << "converged " << r.converged << "\niterations " << r.iterations << "\nresidual_norm "
                << r.residual_norm << "\nresidual_max " << r.residual_max << "\nmax_displacement "
                << res.state.max_abs() << "\n";
      if (!r.message.empty()) std::cout << "message " << r.message << "\n";
      char name[64];
      std::snprintf(name, sizeof name, "solution_Ra%g.txt", ra);
      const auto path = (std::filesystem::path(cfg.output_dir) / name).string();
      write_file_atomic(path, state_text(problem->mesh(), res.state));
      say("wrote " + path);
      return r.converged ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
  return 0;
}
