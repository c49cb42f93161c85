#pragma once

#include "bqcf/metrics.hpp"
#include "bqcf/solver.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bqcf {

enum class TruncationCheck { kNone, kHalf, kDouble };

struct ExperimentConfig {
  std::string lattice = "graphene";  // graphene | custom
  std::string lattice_F;             // custom: "F11 F12 F21 F22"
  std::string lattice_shifts;        // custom: "x y; x y; ..." (first is 0 0)
  std::string lattice_triples;       // custom: "m1 m2 alpha beta; ..."
  std::string defect = "stone-wales";
  std::vector<double> sweep{8, 12, 16, 20, 24};
  LayoutOptions layout;
  double pair_length_scale = 0.0;  // 0: nearest-neighbour distance
  double ref_multiplier = 2.0;
  double ref_tol_factor = 0.1;
  SolverConfig solver{1e-8, 3000};
  Quadrature quadrature = Quadrature::kThreePoint;
  std::string output_dir = "bqcf-out";
  std::string reference_cache;  // empty: <output_dir>/reference.bin; "none" disables
  TruncationCheck truncation_check = TruncationCheck::kHalf;
  double decay_r_min = 0.0;  // 0: the defect radius
  std::uint64_t seed = 20140101;
  int check_samples = 100;
  int threads = 1;
  int jobs = 1;
  bool timing = false;  // wall_seconds is written as 0 unless set

  /// Throws ConfigError.
  void validate() const;
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::string reference_cache_path() const;

  static ExperimentConfig parse(std::istream& in);
  static ExperimentConfig load(const std::string& path);
  /// key = value lines for every key.
  std::string dump() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};
/// Every configuration key in file order, with its documentation.
const std::vector<ConfigKey>& config_keys();

/// Lattice, range, potential and defect named by a configuration.
struct Setup {
  MultiLattice lattice;
  InteractionRange range;
  double pair_length = 0.0;
  std::shared_ptr<const SitePotential> potential;
  std::optional<DefectField> defect;

  const DefectField* defect_ptr() const { return defect ? &*defect : nullptr; }
  static Setup from_config(const ExperimentConfig& config);
};

struct SweepRow {
  std::string method;  // bqcf | atm
  double R_a = 0, R_c = 0, R_o = 0;
  std::size_t dof = 0;
  double err_gradU = 0, err_shift = 0, err_combined = 0;
  int iterations = 0;
  double wall_seconds = 0;
  double final_residual = 0;
  bool ok = false;
  std::string message;
};

std::string csv_header();
std::string csv_line(const SweepRow& row);
/// Parses what write_csv produced.
std::vector<SweepRow> read_csv(const std::string& path);

struct SlopeFit {
  std::size_t points = 0;
  std::optional<double> slope;
};

struct ConvergenceResult {
  int reference_rings = 0;
  double R_ref = 0;
  ReferenceSolution reference;
  std::vector<SweepRow> rows;
  SlopeFit bqcf_slope, atm_slope;
  DecayProfile decay;
  std::optional<ErrorNorms> truncation;
  bool truncation_warning = false;
  std::string csv_path;
  bool ok = false;  // every point solved
};

using Log = std::function<void(const std::string&)>;

std::vector<DomainLayout> sweep_layouts(const ExperimentConfig& config, const Setup& setup);

/// Reference hexagon radius in lattice rings for a sweep.
int reference_rings(const ExperimentConfig& config, const Setup& setup);

ReferenceSolution make_reference(const ExperimentConfig& config, const Setup& setup, const Log& log = {});

/// Largest k whose ATM dof count hex(k)·S is nearest to `dof`.
int matched_atomistic_rings(std::size_t dof, int species);

ConvergenceResult run_convergence(const ExperimentConfig& config, const Log& log = {});

/// Directional finite-difference checks of the analytic derivatives,
/// `samples` random inputs each.
std::vector<CheckResult> derivative_checks(const Setup& setup, const DomainLayout& layout, int samples,
                                           std::uint64_t seed);

/// Max-norm atomistic force of the defect-free reference state.
double reference_force(const Setup& setup, int rings);

/// ‖bqcf_residual(0)‖_∞ of the defect-free problem at R_a.
double ghost_force(const ExperimentConfig& config, const Setup& setup, double R_a);

/// Worst relative difference of the two weak-form assemblies over random pairs.
double weak_form_gap(const BqcfProblem& problem, int pairs, std::uint64_t seed);

/// Mesh and blend structural checks for one layout.
std::vector<CheckResult> layout_checks(const Setup& setup, const DomainLayout& layout);

struct CheckReport {
  std::vector<CheckResult> checks;
  bool ok() const;
  std::string json() const;
};

/// Ghost force, reference equilibrium, derivatives, blend, mesh and
/// dual assembly on the smallest sweep layout.
CheckReport run_checks(const ExperimentConfig& config, const Log& log = {});

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& text);

std::string plot_script(const std::string& csv_name);

}  // namespace bqcf
