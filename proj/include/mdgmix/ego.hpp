// h-hop induced ego subgraphs.
#pragma once

#include "mdgmix/align.hpp"
#include "mdgmix/graph.hpp"

#include <deque>

namespace mdgmix {

/// Induced subgraph on the BFS ball around a center. Local index i refers to
/// nodes_global[i]; edges_local holds each undirected edge once with a < b.
struct EgoSubgraph {
  DomainId source_domain = 0;
  NodeId center_global = 0;
  std::size_t center_local = 0;
  std::vector<NodeId> nodes_global;
  std::vector<std::pair<std::size_t, std::size_t>> edges_local;
  Matrix features;

  std::size_t num_nodes() const { return nodes_global.size(); }
};

/// Nodes within `hops` of `center`, sorted ascending.
inline std::vector<NodeId> bfs_ball(const DomainGraph& g, NodeId center, int hops) {
  if (center >= g.num_nodes)
    throw IndexError("center " + std::to_string(center) + " out of range [0," + std::to_string(g.num_nodes) + ")");
  if (hops < 1) throw ValidationError("hops must be >= 1");
  std::vector<int> dist(g.num_nodes, -1);
  std::deque<NodeId> queue{center};
  dist[center] = 0;
  std::vector<NodeId> ball{center};
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    if (dist[u] == hops) continue;
    for (NodeId v : g.neighbors(u)) {
      if (dist[v] >= 0) continue;
      dist[v] = dist[u] + 1;
      ball.push_back(v);
      queue.push_back(v);
    }
  }
  std::sort(ball.begin(), ball.end());
  return ball;
}

inline EgoSubgraph extract_ego(const DomainGraph& g, NodeId center, int hops, const Matrix& aligned) {
  if (static_cast<std::size_t>(aligned.rows()) != g.num_nodes)
    throw DimensionError("aligned features have " + std::to_string(aligned.rows()) + " rows, graph has " +
                         std::to_string(g.num_nodes) + " nodes");
  EgoSubgraph sub;
  sub.source_domain = g.domain_id;
  sub.center_global = center;
  sub.nodes_global = bfs_ball(g, center, hops);
  const auto& nodes = sub.nodes_global;
  sub.center_local = static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), center) - nodes.begin());

  sub.features.resize(static_cast<Eigen::Index>(nodes.size()), aligned.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    sub.features.row(static_cast<Eigen::Index>(i)) = aligned.row(nodes[i]);
    for (NodeId v : g.neighbors(nodes[i])) {
      if (v <= nodes[i]) continue;
      auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
      if (it != nodes.end() && *it == v) sub.edges_local.emplace_back(i, static_cast<std::size_t>(it - nodes.begin()));
    }
  }
  return sub;
}

inline EgoSubgraph extract_ego(const DomainGraph& g, NodeId center, int hops, const AlignedFeatures& aligned) {
  return extract_ego(g, center, hops, aligned.matrix);
}

}  // namespace mdgmix
