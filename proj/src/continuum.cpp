#include "bqcf/continuum.hpp"

#include "bqcf/parallel.hpp"

namespace bqcf {

CauchyBornModel::CauchyBornModel(const MultiLattice& lattice, const InteractionRange& range,
                                 std::shared_ptr<const SitePotential> potential, std::shared_ptr<const Mesh> mesh,
                                 Quadrature quadrature)
    : lattice_(lattice),
      range_(range),
      potential_(std::move(potential)),
      mesh_(std::move(mesh)),
      quadrature_(quadrature),
      reference_(range.reference_stencil(lattice)) {
  for (const auto& t : range_.triples()) Frho_.push_back(lattice_.position(t.rho));
  offset_ = potential_->value(reference_);
}

double CauchyBornModel::w_cb(const Mat2& G, std::span<const Vec2> p) const {
  std::vector<Vec2> D(reference_.size());
  for (std::size_t t = 0; t < D.size(); ++t) {
    const Triple& tr = range_[t];
    D[t] = reference_[t] + G * Frho_[t];
    if (tr.beta > 0) D[t] += p[tr.beta - 1];
    if (tr.alpha > 0) D[t] -= p[tr.alpha - 1];
  }
  return potential_->value(D) - offset_;
}

CBDerivatives CauchyBornModel::w_cb_derivatives(const Mat2& G, std::span<const Vec2> p) const {
  const std::size_t T = reference_.size();
  std::vector<Vec2> D(T), V(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Triple& tr = range_[t];
    D[t] = reference_[t] + G * Frho_[t];
    if (tr.beta > 0) D[t] += p[tr.beta - 1];
    if (tr.alpha > 0) D[t] -= p[tr.alpha - 1];
  }
  CBDerivatives out;
  out.W = potential_->value_and_gradient(D, V) - offset_;
  out.dp.assign(lattice_.species() - 1, Vec2::Zero());
  for (std::size_t t = 0; t < T; ++t) {
    const Triple& tr = range_[t];
    out.dG += V[t] * Frho_[t].transpose();
    if (tr.beta > 0) out.dp[tr.beta - 1] += V[t];
    if (tr.alpha > 0) out.dp[tr.alpha - 1] -= V[t];
  }
  return out;
}

std::vector<CauchyBornModel::Point> CauchyBornModel::points() const {
  if (quadrature_ == Quadrature::kBarycenter) return {{{1.0 / 3, 1.0 / 3, 1.0 / 3}, 1.0}};
  const double a = 2.0 / 3, b = 1.0 / 6;
  return {{{a, b, b}, 1.0 / 3}, {{b, a, b}, 1.0 / 3}, {{b, b, a}, 1.0 / 3}};
}

namespace {

Mat2 element_gradient(const DisplacementState& f, const std::array<int, 3>& tri, const TriangleGeometry& g) {
  Mat2 G = Mat2::Zero();
  for (int k = 0; k < 3; ++k) G += f.U[tri[k]] * g.grad[k].transpose();
  return G;
}

}  // namespace

double CauchyBornModel::energy(const DisplacementState& f) const {
  const auto& mesh = *mesh_;
  if (f.size() != mesh.node_count()) throw std::invalid_argument("field does not match the mesh");
  const auto qp = points();
  const int S = lattice_.species();
  return parallel_sum(mesh.triangles.size(), [&](std::size_t t) {
    const auto& tri = mesh.triangles[t];
    const auto g = mesh.geometry(t);
    const Mat2 G = element_gradient(f, tri, g);
    std::vector<Vec2> p(S - 1);
    double e = 0.0;
    for (const auto& q : qp) {
      for (int a = 0; a + 1 < S; ++a) {
        p[a] = Vec2::Zero();
        for (int k = 0; k < 3; ++k) p[a] += q.bary[k] * f.p[a][tri[k]];
      }
      e += q.weight * w_cb(G, p);
    }
    return g.area * e;
  });
}

DisplacementState CauchyBornModel::gradient(const DisplacementState& f) const {
  const auto& mesh = *mesh_;
  if (f.size() != mesh.node_count()) throw std::invalid_argument("field does not match the mesh");
  const auto qp = points();
  const int S = lattice_.species();
  const std::size_t nt = mesh.triangles.size();
  // per element: 3 U rows then 3·(S−1) p rows
  const std::size_t rows = 3 * S;
  std::vector<Vec2> local(nt * rows);
  parallel_chunks(nt, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<Vec2> p(S - 1);
    for (std::size_t t = b; t < e; ++t) {
      const auto& tri = mesh.triangles[t];
      const auto g = mesh.geometry(t);
      const Mat2 G = element_gradient(f, tri, g);
      Vec2* out = &local[t * rows];
      for (std::size_t r = 0; r < rows; ++r) out[r] = Vec2::Zero();
      for (const auto& q : qp) {
        for (int a = 0; a + 1 < S; ++a) {
          p[a] = Vec2::Zero();
          for (int k = 0; k < 3; ++k) p[a] += q.bary[k] * f.p[a][tri[k]];
        }
        const auto d = w_cb_derivatives(G, p);
        const double w = g.area * q.weight;
        for (int k = 0; k < 3; ++k) {
          out[k] += w * (d.dG * g.grad[k]);
          for (int a = 0; a + 1 < S; ++a) out[3 + 3 * a + k] += (w * q.bary[k]) * d.dp[a];
        }
      }
    }
  });
  auto grad = DisplacementState::zeros(mesh.node_count(), S, DofDomain::kMesh);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2* in = &local[t * rows];
    for (int k = 0; k < 3; ++k) {
      grad.U[tri[k]] += in[k];
      for (int a = 0; a + 1 < S; ++a) grad.p[a][tri[k]] += in[3 + 3 * a + k];
    }
  }
  for (std::size_t i = 0; i < mesh.node_count(); ++i)
    if (mesh.boundary[i]) {
      grad.U[i] = Vec2::Zero();
      for (auto& arr : grad.p) arr[i] = Vec2::Zero();
    }
  return grad;
}

ContinuumStress CauchyBornModel::stress(const DisplacementState& f) const {
  const auto& mesh = *mesh_;
  const int S = lattice_.species();
  const std::size_t T = reference_.size();
  ContinuumStress out;
  out.S_d.assign(mesh.triangles.size(), std::vector<Mat2>(S, Mat2::Zero()));
  out.S_s.assign(mesh.triangles.size(), std::vector<Vec2>(S * S, Vec2::Zero()));
  std::vector<Vec2> D(T), V(T);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Mat2 G = element_gradient(f, tri, mesh.geometry(t));
    std::vector<Vec2> p(S - 1, Vec2::Zero());
    for (int a = 0; a + 1 < S; ++a)
      for (int k = 0; k < 3; ++k) p[a] += f.p[a][tri[k]] / 3.0;
    for (std::size_t j = 0; j < T; ++j) {
      const Triple& tr = range_[j];
      D[j] = reference_[j] + G * Frho_[j];
      if (tr.beta > 0) D[j] += p[tr.beta - 1];
      if (tr.alpha > 0) D[j] -= p[tr.alpha - 1];
    }
    potential_->value_and_gradient(D, V);
    for (std::size_t j = 0; j < T; ++j) {
      const Triple& tr = range_[j];
      out.S_d[t][tr.beta] += V[j] * Frho_[j].transpose();
      out.S_s[t][tr.alpha * S + tr.beta] += V[j];
    }
  }
  return out;
}

}  // namespace bqcf
