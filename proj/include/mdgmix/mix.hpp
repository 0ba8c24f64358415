// Cross-domain pair selection and center-merged subgraph mixing.
#pragma once

#include "mdgmix/boundary.hpp"
#include "mdgmix/ego.hpp"

#include <numeric>
#include <set>
#include <tuple>

namespace mdgmix {

struct NodePair {
  DomainId domain_a = 0;
  NodeId node_a = 0;
  DomainId domain_b = 0;
  NodeId node_b = 0;
  double similarity = 0.0;

  auto key() const { return std::tie(domain_a, node_a, domain_b, node_b); }
  bool operator==(const NodePair& o) const { return key() == o.key(); }
};

struct MixProvenance {
  DomainId domain_a = 0;
  NodeId node_a = 0;
  DomainId domain_b = 0;
  NodeId node_b = 0;
  double lambda = 0.5;
};

/// Two ego subgraphs merged at their centers. local_of_a[i] / local_of_b[j]
/// give the mixed-graph node that a's (b's) local node i (j) became.
struct MixedSubgraph {
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // a < b, sorted, unique
  Matrix features;
  std::size_t merged_center = 0;
  int coarse_label = 0;  // 1 = inter-domain, 0 = intra-domain
  Vector mix_label;      // K-simplex
  MixProvenance provenance;
  std::vector<std::size_t> local_of_a;
  std::vector<std::size_t> local_of_b;
};

struct MixBatch {
  std::vector<MixedSubgraph> inter;
  std::vector<MixedSubgraph> intra;
  std::size_t size() const { return inter.size() + intra.size(); }
};

/// How inter-domain pairs are chosen.
enum class PairSelection {
  kTopSimilarity,    // top-N boundary pairs by cosine similarity above gamma
  kRandomQualifying, // N random boundary pairs among those above gamma
  kRandomNodes,      // N random cross-domain node pairs, ignoring boundaries and gamma (ablation)
};

struct LambdaPolicy {
  enum class Mode { kFixed, kBeta } mode = Mode::kFixed;
  double value = 0.5;  // fixed lambda
  double alpha = 0.2;  // Beta(alpha, alpha)

  double draw(Rng& rng) const { return mode == Mode::kFixed ? value : sample_beta(rng, alpha, alpha); }
};

template <class A, class B>
double cosine_sim(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (x.size() != y.size())
    throw DimensionError("cosine_sim: length mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  double dot = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) dot += x(i) * y(i);
  return dot / (nx * ny);
}

struct PairSelectionResult {
  std::vector<NodePair> pairs;
  std::size_t shortfall = 0;  // requested minus returned
};

/// Cross-domain boundary pairs with similarity > gamma; top-N by similarity
/// (ties by (domain_a, node_a, domain_b, node_b)) or N random qualifiers.
inline PairSelectionResult select_pairs(const std::vector<BoundarySet>& boundaries,
                                        const std::vector<AlignedFeatures>& aligned, double gamma,
                                        std::size_t n_pairs, std::uint64_t seed,
                                        PairSelection mode = PairSelection::kTopSimilarity) {
  require(boundaries.size() >= 2 && boundaries.size() == aligned.size(), "select_pairs: need K >= 2 domains");
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0,1)");
  std::vector<NodePair> qualifying;
  for (std::size_t a = 0; a < boundaries.size(); ++a)
    for (std::size_t b = a + 1; b < boundaries.size(); ++b)
      for (NodeId u : boundaries[a].node_ids)
        for (NodeId v : boundaries[b].node_ids) {
          const double s = cosine_sim(aligned[a].matrix.row(u), aligned[b].matrix.row(v));
          if (s > gamma)
            qualifying.push_back({static_cast<DomainId>(a), u, static_cast<DomainId>(b), v, s});
        }
  if (qualifying.empty())
    throw NoMixablePairsError("no-mixable-pairs: no cross-domain boundary pair has similarity > " +
                              std::to_string(gamma) + "; lower gamma");

  PairSelectionResult out;
  if (mode == PairSelection::kRandomQualifying) {
    Rng rng(seed);
    std::shuffle(qualifying.begin(), qualifying.end(), rng);
    if (qualifying.size() > n_pairs) qualifying.resize(n_pairs);
  } else {
    std::sort(qualifying.begin(), qualifying.end(), [](const NodePair& x, const NodePair& y) {
      if (x.similarity != y.similarity) return x.similarity > y.similarity;
      return x.key() < y.key();
    });
    if (qualifying.size() > n_pairs) qualifying.resize(n_pairs);
  }
  out.shortfall = n_pairs - qualifying.size();
  out.pairs = std::move(qualifying);
  return out;
}

/// Uniformly random cross-domain node pairs (the "random mixup" ablation).
inline std::vector<NodePair> sample_random_inter_pairs(const std::vector<AlignedFeatures>& aligned,
                                                       std::size_t n_pairs, std::uint64_t seed) {
  require(aligned.size() >= 2, "random inter pairs need K >= 2 domains");
  Rng rng(seed);
  std::vector<NodePair> out;
  const std::size_t K = aligned.size();
  for (std::size_t i = 0; i < n_pairs; ++i) {
    std::size_t a = uniform_index(rng, K);
    std::size_t b = uniform_index(rng, K - 1);
    if (b >= a) ++b;
    if (a > b) std::swap(a, b);
    const auto u = static_cast<NodeId>(uniform_index(rng, aligned[a].num_nodes()));
    const auto v = static_cast<NodeId>(uniform_index(rng, aligned[b].num_nodes()));
    out.push_back({static_cast<DomainId>(a), u, static_cast<DomainId>(b), v,
                   cosine_sim(aligned[a].matrix.row(u), aligned[b].matrix.row(v))});
  }
  return out;
}

/// Per-domain pair counts: floor(N/K) each, remainder to domains 0..(N mod K)-1.
inline std::vector<std::size_t> intra_pair_counts(std::size_t n_pairs, std::size_t K) {
  std::vector<std::size_t> counts(K, n_pairs / K);
  for (std::size_t k = 0; k < n_pairs % K; ++k) ++counts[k];
  return counts;
}

/// Distinct unordered same-domain pairs drawn uniformly without replacement.
inline std::vector<NodePair> sample_intra_pairs(const std::vector<std::vector<NodeId>>& pools, std::size_t n_pairs,
                                                std::uint64_t seed) {
  const std::size_t K = pools.size();
  require(K >= 1, "sample_intra_pairs: no domains");
  const auto counts = intra_pair_counts(n_pairs, K);
  Rng rng(seed);
  std::vector<NodePair> out;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t want = counts[k];
    if (want == 0) continue;
    const auto& pool = pools[k];
    const std::size_t p = pool.size();
    const std::size_t available = p < 2 ? 0 : p * (p - 1) / 2;
    if (want > available)
      throw ValidationError("intra pool of domain " + std::to_string(k) + " has " + std::to_string(p) +
                            " nodes, too small for " + std::to_string(want) + " distinct pairs");
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    if (available <= 4 * want + 64) {
      std::vector<std::pair<std::size_t, std::size_t>> all;
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) all.emplace_back(i, j);
      for (std::size_t i = 0; i < want; ++i) {
        const std::size_t r = i + uniform_index(rng, all.size() - i);
        std::swap(all[i], all[r]);
      }
      chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
    } else {
      std::set<std::pair<std::size_t, std::size_t>> seen;
      while (chosen.size() < want) {
        std::size_t i = uniform_index(rng, p);
        std::size_t j = uniform_index(rng, p);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (seen.insert({i, j}).second) chosen.emplace_back(i, j);
      }
    }
    for (auto [i, j] : chosen)
      out.push_back({static_cast<DomainId>(k), pool[i], static_cast<DomainId>(k), pool[j], 0.0});
  }
  return out;
}

namespace detail {
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  }
};
}  // namespace detail

/// Merges two ego subgraphs. The centers become one node with feature
/// lambda*x_a + (1-lambda)*x_b. For two subgraphs of the same source graph,
/// shared global node ids are identified as well. Edges are the union of the
/// relabeled edge sets; edges that collapse onto one node are dropped.
inline MixedSubgraph mix_subgraphs(const EgoSubgraph& a, const EgoSubgraph& b, double lambda, std::size_t num_domains) {
  if (a.features.cols() != b.features.cols())
    throw DimensionError("mix_subgraphs: feature width " + std::to_string(a.features.cols()) + " vs " +
                         std::to_string(b.features.cols()));
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
  require(a.source_domain >= 0 && static_cast<std::size_t>(a.source_domain) < num_domains &&
              b.source_domain >= 0 && static_cast<std::size_t>(b.source_domain) < num_domains,
          "mix_subgraphs: source domain outside [0,K)");
  const std::size_t na = a.num_nodes();
  const std::size_t nb = b.num_nodes();
  detail::UnionFind uf(na + nb);
  uf.unite(a.center_local, na + b.center_local);
  const bool same_graph = a.source_domain == b.source_domain;
  if (same_graph) {
    std::size_t i = 0, j = 0;
    while (i < na && j < nb) {
      if (a.nodes_global[i] < b.nodes_global[j]) {
        ++i;
      } else if (b.nodes_global[j] < a.nodes_global[i]) {
        ++j;
      } else {
        uf.unite(i++, na + j++);
      }
    }
  }

  MixedSubgraph m;
  std::vector<std::size_t> class_of_root(na + nb, SIZE_MAX);
  std::vector<std::size_t> representative;
  auto local = [&](std::size_t x) {
    const std::size_t r = uf.find(x);
    if (class_of_root[r] == SIZE_MAX) {
      class_of_root[r] = representative.size();
      representative.push_back(x);
    }
    return class_of_root[r];
  };
  m.local_of_a.resize(na);
  m.local_of_b.resize(nb);
  for (std::size_t i = 0; i < na; ++i) m.local_of_a[i] = local(i);
  for (std::size_t j = 0; j < nb; ++j) m.local_of_b[j] = local(na + j);
  m.num_nodes = representative.size();
  m.merged_center = m.local_of_a[a.center_local];

  m.features.resize(static_cast<Eigen::Index>(m.num_nodes), a.features.cols());
  for (std::size_t c = 0; c < m.num_nodes; ++c) {
    const std::size_t x = representative[c];
    m.features.row(static_cast<Eigen::Index>(c)) =
        x < na ? a.features.row(static_cast<Eigen::Index>(x)) : b.features.row(static_cast<Eigen::Index>(x - na));
  }
  m.features.row(static_cast<Eigen::Index>(m.merged_center)) =
      lambda * a.features.row(static_cast<Eigen::Index>(a.center_local)) +
      (1.0 - lambda) * b.features.row(static_cast<Eigen::Index>(b.center_local));

  auto add_edges = [&](const auto& edges, const std::vector<std::size_t>& map) {
    for (auto [u, v] : edges) {
      std::size_t x = map[u], y = map[v];
      if (x == y) continue;
      if (x > y) std::swap(x, y);
      m.edges.emplace_back(x, y);
    }
  };
  add_edges(a.edges_local, m.local_of_a);
  add_edges(b.edges_local, m.local_of_b);
  std::sort(m.edges.begin(), m.edges.end());
  m.edges.erase(std::unique(m.edges.begin(), m.edges.end()), m.edges.end());

  m.coarse_label = same_graph ? 0 : 1;
  m.mix_label = Vector::Zero(static_cast<Eigen::Index>(num_domains));
  m.mix_label(a.source_domain) += lambda;
  m.mix_label(b.source_domain) += 1.0 - lambda;
  m.provenance = {a.source_domain, a.center_global, b.source_domain, b.center_global, lambda};
  return m;
}

/// Extracts the ego subgraphs of every pair endpoint and mixes them.
/// `graphs[k]` and `aligned[k]` must describe domain k.
inline MixBatch build_batch(const std::vector<NodePair>& inter_pairs, const std::vector<NodePair>& intra_pairs,
                            const std::vector<DomainGraph>& graphs, const std::vector<AlignedFeatures>& aligned,
                            int hops, const LambdaPolicy& policy, Rng& rng) {
  require(graphs.size() == aligned.size(), "build_batch: graphs/aligned size mismatch");
  const std::size_t K = graphs.size();
  auto make = [&](const NodePair& p) {
    require(p.domain_a >= 0 && static_cast<std::size_t>(p.domain_a) < K && p.domain_b >= 0 &&
                static_cast<std::size_t>(p.domain_b) < K,
            "build_batch: pair references unknown domain");
    const auto ea = extract_ego(graphs[static_cast<std::size_t>(p.domain_a)], p.node_a, hops,
                                aligned[static_cast<std::size_t>(p.domain_a)]);
    const auto eb = extract_ego(graphs[static_cast<std::size_t>(p.domain_b)], p.node_b, hops,
                                aligned[static_cast<std::size_t>(p.domain_b)]);
    return mix_subgraphs(ea, eb, policy.draw(rng), K);
  };
  MixBatch batch;
  for (const auto& p : inter_pairs) {
    require(p.domain_a != p.domain_b, "build_batch: inter pair within one domain");
    batch.inter.push_back(make(p));
  }
  for (const auto& p : intra_pairs) {
    require(p.domain_a == p.domain_b && p.node_a != p.node_b, "build_batch: invalid intra pair");
    batch.intra.push_back(make(p));
  }
  return batch;
}

}  // namespace mdgmix
