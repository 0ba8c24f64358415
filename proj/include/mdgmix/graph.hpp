// CSR graph storage for one domain.
#pragma once

#include "mdgmix/common.hpp"

#include <algorithm>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mdgmix {

using Edge = std::pair<NodeId, NodeId>;

/// One source or target domain: symmetric CSR topology without self-loops,
/// raw feature matrix and optional node labels.
struct DomainGraph {
  DomainId domain_id = 0;
  std::size_t num_nodes = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<NodeId> col_targets;
  Matrix features_raw;
  std::optional<std::vector<int>> labels;

  std::span<const NodeId> neighbors(NodeId u) const {
    return {col_targets.data() + row_offsets[u], row_offsets[u + 1] - row_offsets[u]};
  }
  std::size_t degree(NodeId u) const { return row_offsets[u + 1] - row_offsets[u]; }
  std::size_t num_directed_edges() const { return col_targets.size(); }
  std::size_t num_edges() const { return col_targets.size() / 2; }

  bool has_edge(NodeId u, NodeId v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }
};

/// Builds a canonical DomainGraph: edges symmetrized, deduplicated, self-loops
/// dropped and neighbor lists sorted.
inline DomainGraph build_graph(DomainId domain_id, std::size_t num_nodes, std::span<const Edge> edges,
                               Matrix features_raw, std::optional<std::vector<int>> labels = std::nullopt) {
  if (num_nodes == 0) throw ValidationError("graph has no nodes");
  if (static_cast<std::size_t>(features_raw.rows()) != num_nodes)
    throw DimensionError("feature rows (" + std::to_string(features_raw.rows()) + ") != node count (" +
                         std::to_string(num_nodes) + ")");
  if (labels && labels->size() != num_nodes)
    throw DimensionError("label count (" + std::to_string(labels->size()) + ") != node count (" +
                         std::to_string(num_nodes) + ")");

  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes)
      throw DimensionError("edge (" + std::to_string(u) + "," + std::to_string(v) + ") references node >= " +
                           std::to_string(num_nodes));
    if (u == v) continue;
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  DomainGraph g;
  g.domain_id = domain_id;
  g.num_nodes = num_nodes;
  g.row_offsets.assign(num_nodes + 1, 0);
  for (auto [u, v] : directed) ++g.row_offsets[u + 1];
  for (std::size_t i = 0; i < num_nodes; ++i) g.row_offsets[i + 1] += g.row_offsets[i];
  g.col_targets.reserve(directed.size());
  for (auto [u, v] : directed) g.col_targets.push_back(v);
  g.features_raw = std::move(features_raw);
  g.labels = std::move(labels);
  return g;
}

/// Undirected edge list (u < v) of a graph.
inline std::vector<Edge> edge_list(const DomainGraph& g) {
  std::vector<Edge> out;
  out.reserve(g.num_edges());
  for (NodeId u = 0; u < g.num_nodes; ++u)
    for (NodeId v : g.neighbors(u))
      if (u < v) out.emplace_back(u, v);
  return out;
}

/// Induced subgraph on `keep` (any order, no duplicates); nodes are renumbered
/// in ascending order of their original ids.
inline DomainGraph induced_subgraph(const DomainGraph& g, std::vector<NodeId> keep) {
  std::sort(keep.begin(), keep.end());
  std::vector<std::int64_t> remap(g.num_nodes, -1);
  for (std::size_t i = 0; i < keep.size(); ++i) remap[keep[i]] = static_cast<std::int64_t>(i);

  std::vector<Edge> edges;
  Matrix feats(static_cast<Eigen::Index>(keep.size()), g.features_raw.cols());
  std::optional<std::vector<int>> labels;
  if (g.labels) labels.emplace();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const NodeId u = keep[i];
    feats.row(static_cast<Eigen::Index>(i)) = g.features_raw.row(u);
    if (labels) labels->push_back((*g.labels)[u]);
    for (NodeId v : g.neighbors(u))
      if (u < v && remap[v] >= 0) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(remap[v]));
  }
  return build_graph(g.domain_id, keep.size(), edges, std::move(feats), std::move(labels));
}

}  // namespace mdgmix
