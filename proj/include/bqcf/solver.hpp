#pragma once

#include "bqcf/coupling.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace bqcf {

enum class PreconditionerKind { kIdentity, kMetric };

struct SolverConfig {
  double tol = 1e-8;  // on the preconditioned norm and on the max norm
  int max_iterations = 20000;
  int line_search_steps = 10;
  double line_search_reduction = 0.1;  // accept |g(t)| <= this · |g(0)|
  int restart = 50;
  PreconditionerKind preconditioner = PreconditionerKind::kMetric;

  void validate() const;
};

/// Scaling of the two blocks of the metric: w_U ≈ trace ∂²W/∂G² / 4 and
/// w_p ≈ trace ∂²W/∂p² / (2(S−1)) at the reference, by finite differences.
struct MetricWeights {
  double w_U = 1.0;
  double w_p = 1.0;
};
MetricWeights metric_weights(const MultiLattice& lattice, const InteractionRange& range,
                             const SitePotential& potential);

/// w_U·(P1 stiffness) on U and w_p·(lumped mass) on each shift, with the
/// Dirichlet nodes of the mesh eliminated. kIdentity only zeroes them.
class Preconditioner {
 public:
  Preconditioner(const Mesh& mesh, int species, MetricWeights weights, PreconditionerKind kind);
  ~Preconditioner();
  Preconditioner(Preconditioner&&) noexcept;

  PreconditionerKind kind() const { return kind_; }
  DisplacementState apply(const DisplacementState& r) const;

 private:
  struct Factor;
  PreconditionerKind kind_;
  int species_;
  MetricWeights weights_;
  std::vector<char> fixed_;
  std::vector<std::ptrdiff_t> free_index_;
  std::vector<double> mass_;
  std::unique_ptr<Factor> factor_;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  int residual_evaluations = 0;
  int restarts = 0;
  int line_search_failures = 0;
  double residual_norm = 0.0;  // preconditioned
  double residual_max = 0.0;
  std::vector<double> history;  // preconditioned norm at the start of each iteration
  std::vector<double> energy;   // only when an energy is supplied
  std::string message;
};

using ResidualFn = std::function<DisplacementState(const DisplacementState&)>;
using EnergyFn = std::function<double(const DisplacementState&)>;

/// Preconditioned nonlinear CG with Polak-Ribière+ updates, periodic
/// restarts and a secant line search on ⟨residual(x + t d), d⟩. The
/// residual must vanish on fixed entries.
SolveReport ncg_solve(const ResidualFn& residual, const Preconditioner& P, DisplacementState& x,
                      const SolverConfig& config, const EnergyFn& energy = {});

struct SolveResult {
  DisplacementState state;
  SolveReport report;
};

SolveResult solve_bqcf(const BqcfProblem& problem, const SolverConfig& config,
                       std::optional<DisplacementState> initial = std::nullopt);

/// Clamped atomistic problem: free sites on rings <= `rings`, zero outside.
/// The returned state covers exactly those sites.
SolveResult solve_atomistic_clamped(const MultiLattice& lattice, const InteractionRange& range,
                                    std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                                    int rings, const SolverConfig& config,
                                    std::optional<DisplacementState> initial = std::nullopt,
                                    bool track_energy = false);

/// Identifies a reference solution; a cache entry is reused only if every
/// field matches.
struct ReferenceKey {
  std::string potential_id;
  std::string lattice_id;
  std::string defect_id;
  int rings = 0;
  double tol = 0.0;

  friend bool operator==(const ReferenceKey&, const ReferenceKey&) = default;
};

struct ReferenceSolution {
  ReferenceKey key;
  DisplacementState state;  // sites of hex(rings), SiteIndexer order
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0.0;
  bool from_cache = false;
};

inline constexpr int kReferenceFormatVersion = 1;

void save_reference(const std::string& path, const ReferenceSolution& ref);
/// Empty when the file is missing, unreadable or built for another key.
std::optional<ReferenceSolution> load_reference(const std::string& path, const ReferenceKey& key);

/// Clamped solve on `rings` rings; loads from / stores to `cache_path`
/// when it is non-empty.
ReferenceSolution compute_reference(const MultiLattice& lattice, const InteractionRange& range,
                                    std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                                    int rings, const SolverConfig& config, const std::string& cache_path);

}  // namespace bqcf
