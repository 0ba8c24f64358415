// Computable terms of the generalization bound and empirical checks of the
// stability lemma behind it.
#pragma once

#include "mdgmix/model.hpp"

#include <set>

namespace mdgmix {

inline constexpr double kPowerTolerance = 1e-8;
inline constexpr int kPowerMaxIterations = 10000;

namespace detail {

template <class M>
double power_iteration(const M& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  Rng rng(stage_seed(0, "power-iteration"));
  Vector v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = uniform01(rng) + 0.5;
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < kPowerMaxIterations; ++it) {
    Vector av = a * v;
    Vector w = a.transpose() * av;
    const double s = std::sqrt(av.squaredNorm());
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    if (it > 0 && std::abs(s - sigma) <= kPowerTolerance * s) return std::sqrt((a * v).squaredNorm());
    sigma = s;
  }
  throw NumericalError("power iteration did not converge after " + std::to_string(kPowerMaxIterations) + " steps");
}

}  // namespace detail

/// Largest singular value by power iteration on A^T A (fixed start vector).
inline double spectral_norm(const Matrix& a) { return detail::power_iteration(a); }
inline double spectral_norm(const SparseMatrix& a) { return detail::power_iteration(a); }

/// L_f <= s(W1) s(W2) max_G ||A_G||^2 over the sampled subgraph adjacencies.
inline double lipschitz_upper(const EncoderParams& enc, const std::vector<SparseMatrix>& adjacencies) {
  require(!adjacencies.empty(), "lipschitz_upper: need at least one subgraph");
  double a = 0.0;
  for (const auto& adj : adjacencies) a = std::max(a, spectral_norm(adj));
  return spectral_norm(enc.w1) * spectral_norm(enc.w2) * a * a;
}

template <class Sub>
double lipschitz_upper(const EncoderParams& enc, const std::vector<Sub>& subgraphs) {
  std::vector<SparseMatrix> adj;
  adj.reserve(subgraphs.size());
  for (const auto& s : subgraphs) adj.push_back(normalized_adjacency(s));
  return lipschitz_upper(enc, adj);
}

/// |A n B| / min(|A|, |B|).
inline double overlap_ratio(const std::set<NodeId>& a, const std::set<NodeId>& b) {
  require(!a.empty() && !b.empty(), "overlap_ratio: empty node set");
  std::size_t common = 0;
  for (NodeId v : a) common += b.count(v);
  return static_cast<double>(common) / static_cast<double>(std::min(a.size(), b.size()));
}

/// Node set of a subgraph tagged with its source graph.
struct SubgraphNodes {
  DomainId domain = 0;
  std::set<NodeId> nodes;
};

inline double max_overlap(const std::vector<SubgraphNodes>& subs) {
  double best = 0.0;
  for (std::size_t i = 0; i < subs.size(); ++i)
    for (std::size_t j = i + 1; j < subs.size(); ++j)
      if (subs[i].domain == subs[j].domain) best = std::max(best, overlap_ratio(subs[i].nodes, subs[j].nodes));
  return best;
}

/// kappa * max pairwise overlap (pairs from different graphs count as 0).
inline double delta_max_bound(const std::vector<SubgraphNodes>& subs, double kappa = 0.25) {
  require(subs.size() >= 2, "delta_max_bound: need at least two subgraphs");
  require(kappa >= 0.0 && kappa <= 0.25, "kappa must lie in [0, 0.25]");
  return kappa * max_overlap(subs);
}

inline double sigma_dep(std::size_t n, double delta_max) {
  require(n >= 1, "sigma_dep: n must be >= 1");
  require(delta_max >= 0.0, "sigma_dep: delta_max must be >= 0");
  return std::sqrt(0.25 + static_cast<double>(n - 1) * delta_max);
}

/// sigma_dep * sqrt(ln(2/delta) / (2n)).
inline double sampling_term(std::size_t n, double delta_max, double delta_conf) {
  if (!(delta_conf > 0.0 && delta_conf < 1.0)) throw ValidationError("sampling_term: delta must lie in (0,1)");
  return sigma_dep(n, delta_max) * std::sqrt(std::log(2.0 / delta_conf) / (2.0 * static_cast<double>(n)));
}

struct BoundaryMass {
  std::vector<double> per_domain;
  double minimum = 0.0;
};

inline BoundaryMass boundary_mass(const std::vector<BoundarySet>& boundaries, const std::vector<DomainGraph>& graphs) {
  require(boundaries.size() == graphs.size() && !graphs.empty(), "boundary_mass: sets/graphs mismatch");
  BoundaryMass out;
  out.minimum = 1.0;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const double r = static_cast<double>(boundaries[k].node_ids.size()) / static_cast<double>(graphs[k].num_nodes);
    out.per_domain.push_back(r);
    out.minimum = std::min(out.minimum, r);
  }
  return out;
}

/* ------------------------------------------------------------------------- */
/* Stability of mixed representations                                        */
/* ------------------------------------------------------------------------- */

struct StabilityPair {
  EgoSubgraph g1;
  EgoSubgraph g2;
  double lambda = 0.5;
};

struct StabilityTerms {
  double lhs = 0.0;           // ||f(M) - f(G1)||
  double feature_gap = 0.0;   // ||X2 - X1|| over identified nodes
  std::size_t node_edits = 0; // nodes of M not coming from G1 (+ G1 nodes lost by collapse)
  std::size_t edge_edits = 0; // edges of M not coming from G1 (+ G1 edges lost by collapse)
  double rhs = 0.0;
};

struct StabilityReport {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();  // rhs - lhs
  double max_ratio = 0.0;                                      // lhs / rhs where rhs > 0
  std::vector<StabilityTerms> terms;
};

/// Right-hand side (1-lambda) L ||X2-X1||_{V1nV2} + L (|V2\V1| + |E2\E1|) and
/// the measured left-hand side for one pair. The identified set V1nV2 is the
/// merged center plus, within one graph, the shared node ids.
inline StabilityTerms stability_terms(const EncoderParams& enc, const StabilityPair& p, double lipschitz) {
  const std::size_t K = static_cast<std::size_t>(std::max(p.g1.source_domain, p.g2.source_domain)) + 1;
  const MixedSubgraph m = mix_subgraphs(p.g1, p.g2, p.lambda, K);
  StabilityTerms t;
  t.lhs = (embed_graph(m, enc) - embed_graph(p.g1, enc)).norm();

  std::vector<std::int64_t> from_g1(m.num_nodes, -1);
  for (std::size_t i = 0; i < m.local_of_a.size(); ++i)
    if (from_g1[m.local_of_a[i]] < 0) from_g1[m.local_of_a[i]] = static_cast<std::int64_t>(i);
  std::size_t image_nodes = 0;
  for (auto x : from_g1) image_nodes += x >= 0;

  double gap2 = 0.0;
  for (std::size_t j = 0; j < m.local_of_b.size(); ++j) {
    const auto i = from_g1[m.local_of_b[j]];
    if (i >= 0) gap2 += (p.g2.features.row(static_cast<Eigen::Index>(j)) - p.g1.features.row(i)).squaredNorm();
  }
  t.feature_gap = std::sqrt(gap2);

  std::set<std::pair<std::size_t, std::size_t>> g1_edges;
  for (auto [u, v] : p.g1.edges_local) {
    std::size_t x = m.local_of_a[u], y = m.local_of_a[v];
    if (x == y) continue;
    g1_edges.emplace(std::min(x, y), std::max(x, y));
  }
  std::size_t new_edges = 0;
  for (const auto& e : m.edges) new_edges += g1_edges.count(e) == 0;

  t.node_edits = (m.num_nodes - image_nodes) + (p.g1.num_nodes() - image_nodes);
  t.edge_edits = new_edges + (p.g1.edges_local.size() - g1_edges.size());
  t.rhs = (1.0 - p.lambda) * lipschitz * t.feature_gap +
          lipschitz * static_cast<double>(t.node_edits + t.edge_edits);
  return t;
}

inline StabilityReport stability_check(const EncoderParams& enc, const std::vector<StabilityPair>& pairs,
                                       double lipschitz, double tolerance = 1e-6) {
  StabilityReport r;
  for (const auto& p : pairs) {
    StabilityTerms t = stability_terms(enc, p, lipschitz);
    ++r.pairs;
    if (t.lhs > t.rhs + tolerance) ++r.violations;
    r.min_slack = std::min(r.min_slack, t.rhs - t.lhs);
    if (t.rhs > 0) r.max_ratio = std::max(r.max_ratio, t.lhs / t.rhs);
    r.terms.push_back(t);
  }
  return r;
}

}  // namespace mdgmix
