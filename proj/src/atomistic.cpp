#include "bqcf/atomistic.hpp"

#include "bqcf/parallel.hpp"

#include <algorithm>

namespace bqcf {

AtomisticModel::AtomisticModel(const MultiLattice& lattice, const InteractionRange& range,
                               std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                               int value_rings, int energy_rings)
    : lattice_(lattice),
      range_(range),
      potential_(std::move(potential)),
      value_rings_(value_rings),
      energy_rings_(energy_rings) {
  if (value_rings < 0 || energy_rings < 0) throw ConfigError("atomistic region radius must be non-negative");
  if (potential_->arity() != range_.size()) throw ConfigError("potential and interaction range disagree");
  if (defect) defect_ = *defect;
  const SiteIndexer values(value_rings), energies(energy_rings);
  value_count_ = values.size();
  energy_count_ = energies.size();
  offsets_ = range_.offsets().size();
  neighbours_.resize(energy_count_ * offsets_);
  variant_.assign(energy_count_, -1);
  for (std::size_t i = 0; i < energy_count_; ++i) {
    const LatticePoint xi = energies.point(i);
    for (std::size_t k = 0; k < offsets_; ++k)
      neighbours_[i * offsets_ + k] = static_cast<int>(values.find(xi + range_.offsets()[k]));
  }
  if (defect_) {
    const auto vs = defect_->variants();
    for (std::size_t v = 0; v < vs.size(); ++v) {
      const auto i = energies.find(vs[v].site);
      if (i >= 0) variant_[i] = static_cast<int>(v);
    }
  }
  reference_ = range_.reference_stencil(lattice_);
  offset_ = potential_->value(reference_);
}

AtomisticModel AtomisticModel::clamped(const MultiLattice& lattice, const InteractionRange& range,
                                       std::shared_ptr<const SitePotential> potential, const DefectField* defect,
                                       int rings) {
  return AtomisticModel(lattice, range, std::move(potential), defect, rings, rings + range.hex_reach());
}

double AtomisticModel::assemble(const DisplacementState& state, DisplacementState* grad) const {
  if (state.size() < value_count_) throw OutOfDomainError("state does not cover the atomistic value region");
  const int S = lattice_.species();
  const std::size_t T = range_.size();
  const auto triples = range_.triples();
  const auto variants = defect_ ? defect_->variants() : std::span<const SiteVariant>{};

  constexpr std::size_t kBatchChunks = 32;
  const std::size_t batch = kBatchChunks * kChunk;
  const std::size_t chunks = (energy_count_ + kChunk - 1) / kChunk;
  std::vector<double> chunk_energy(chunks, 0.0);
  std::vector<Vec2> G;
  std::vector<std::vector<Vec2>> g;  // per species ∂/∂u_α
  if (grad) {
    G.resize(std::min(batch, energy_count_) * T);
    g.assign(S, std::vector<Vec2>(value_count_, Vec2::Zero()));
  }

  auto u = [&](int alpha, int idx) -> Vec2 {
    if (idx < 0) return Vec2::Zero();
    return alpha == 0 ? state.U[idx] : Vec2(state.U[idx] + state.p[alpha - 1][idx]);
  };

  for (std::size_t b0 = 0; b0 < energy_count_; b0 += batch) {
    const std::size_t n = std::min(batch, energy_count_ - b0);
    parallel_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
      std::vector<Vec2> D(T), Gs(T);
      double sum = 0.0;
      for (std::size_t j = b; j < e; ++j) {
        const std::size_t i = b0 + j;
        const int* nb = &neighbours_[i * offsets_];
        const SitePotential* V = potential_.get();
        const Vec2* ref = reference_.data();
        double off = offset_;
        if (variant_[i] >= 0) {
          const auto& var = variants[variant_[i]];
          V = var.potential.get();
          ref = var.reference_stencil.data();
          off = var.offset;
        }
        for (std::size_t t = 0; t < T; ++t) {
          const Triple& tr = triples[t];
          D[t] = ref[t] + u(tr.beta, nb[range_.offset_slot(t)]) - u(tr.alpha, nb[0]);
        }
        if (grad) {
          sum += V->value_and_gradient(D, Gs) - off;
          std::copy(Gs.begin(), Gs.end(), G.begin() + j * T);
        } else {
          sum += V->value(D) - off;
        }
      }
      chunk_energy[b0 / kChunk + c] = sum;
    });
    if (!grad) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const int* nb = &neighbours_[(b0 + j) * offsets_];
      for (std::size_t t = 0; t < T; ++t) {
        const Triple& tr = triples[t];
        const Vec2& Gt = G[j * T + t];
        const int other = nb[range_.offset_slot(t)];
        if (other >= 0) g[tr.beta][other] += Gt;
        if (nb[0] >= 0) g[tr.alpha][nb[0]] -= Gt;
      }
    }
  }

  if (grad) {
    *grad = DisplacementState::zeros(value_count_, S, DofDomain::kLattice);
    for (std::size_t i = 0; i < value_count_; ++i) {
      Vec2 sU = g[0][i];
      for (int a = 1; a < S; ++a) {
        sU += g[a][i];
        grad->p[a - 1][i] = g[a][i];
      }
      grad->U[i] = sU;
    }
  }
  double total = 0.0;
  for (double e : chunk_energy) total += e;
  return total;
}

double AtomisticModel::energy(const DisplacementState& state) const { return assemble(state, nullptr); }

double AtomisticModel::energy_and_gradient(const DisplacementState& state, DisplacementState& grad) const {
  return assemble(state, &grad);
}

DisplacementState AtomisticModel::gradient(const DisplacementState& state) const {
  DisplacementState g;
  assemble(state, &g);
  return g;
}

}  // namespace bqcf
