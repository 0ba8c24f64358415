// Random fixtures and deliberately naive reference implementations used to
// check the library. Nothing here calls into the code paths under test except
// the plain data types.
#pragma once

#include "mdgmix/mdgmix.hpp"

#include <map>
#include <queue>
#include <set>

namespace oracle {

using namespace mdgmix;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

/// Erdos-Renyi style edge list with repeats, reversed duplicates and self loops mixed in.
inline std::vector<Edge> random_edges(std::size_t n, double p, Rng& rng) {
  std::vector<Edge> e;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = 0; v < n; ++v)
      if (uniform01(rng) < p) e.emplace_back(u, v);
  return e;
}

inline DomainGraph random_graph(DomainId id, std::size_t n, double p, Eigen::Index dim, Rng& rng) {
  const auto e = random_edges(n, p, rng);
  return build_graph(id, n, e, random_matrix(static_cast<Eigen::Index>(n), dim, rng));
}

/// Undirected adjacency as a set of (min, max) pairs.
inline std::set<std::pair<NodeId, NodeId>> edge_set(const std::vector<Edge>& edges) {
  std::set<std::pair<NodeId, NodeId>> s;
  for (auto [u, v] : edges)
    if (u != v) s.emplace(std::min(u, v), std::max(u, v));
  return s;
}

/* ---------------------------------- ego ---------------------------------- */

inline std::set<NodeId> bfs_nodes(const std::set<std::pair<NodeId, NodeId>>& edges, std::size_t n, NodeId c, int hops) {
  std::vector<std::vector<NodeId>> adj(n);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<int> dist(n, -1);
  std::queue<NodeId> q;
  dist[c] = 0;
  q.push(c);
  while (!q.empty()) {
    NodeId u = q.front();
    q.pop();
    for (NodeId v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  std::set<NodeId> out;
  for (NodeId v = 0; v < n; ++v)
    if (dist[v] >= 0 && dist[v] <= hops) out.insert(v);
  return out;
}

inline std::set<std::pair<NodeId, NodeId>> induced_edges(const std::set<std::pair<NodeId, NodeId>>& edges,
                                                         const std::set<NodeId>& nodes) {
  std::set<std::pair<NodeId, NodeId>> out;
  for (NodeId u : nodes)
    for (NodeId v : nodes)
      if (u < v && edges.count({u, v})) out.emplace(u, v);
  return out;
}

/* -------------------------------- boundary ------------------------------- */

struct BoundaryOracle {
  std::vector<std::set<NodeId>> sets;
  std::vector<bool> fallback;
};

/// rho = rho_num / 100 so the candidate count is an exact integer ceiling.
inline BoundaryOracle brute_force_boundaries(const std::vector<Matrix>& x, int rho_num) {
  const std::size_t K = x.size();
  std::vector<std::vector<double>> centers(K);
  for (std::size_t k = 0; k < K; ++k) {
    centers[k].assign(static_cast<std::size_t>(x[k].cols()), 0.0);
    for (Eigen::Index i = 0; i < x[k].rows(); ++i)
      for (Eigen::Index j = 0; j < x[k].cols(); ++j) centers[k][static_cast<std::size_t>(j)] += x[k](i, j);
    for (auto& c : centers[k]) c /= static_cast<double>(x[k].rows());
  }
  BoundaryOracle out;
  for (std::size_t k = 0; k < K; ++k) {
    const auto n = static_cast<std::size_t>(x[k].rows());
    std::vector<std::vector<double>> dist(n, std::vector<double>(K));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < K; ++m) {
        double s = 0;
        for (std::size_t j = 0; j < centers[m].size(); ++j) {
          const double d = x[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - centers[m][j];
          s += d * d;
        }
        dist[i][m] = std::sqrt(s);
      }
    const std::size_t take = std::min<std::size_t>(n, std::max<std::size_t>(1, (static_cast<std::size_t>(rho_num) * n + 99) / 100));
    std::vector<std::set<NodeId>> cands;
    for (std::size_t m = 0; m < K; ++m) {
      if (m == k) continue;
      std::vector<double> margin(n);
      for (std::size_t i = 0; i < n; ++i) margin[i] = std::abs(dist[i][k] - dist[i][m]);
      const double lo = *std::min_element(margin.begin(), margin.end());
      const double hi = *std::max_element(margin.begin(), margin.end());
      std::vector<std::pair<double, NodeId>> scored;
      for (std::size_t i = 0; i < n; ++i)
        scored.emplace_back(hi == lo ? 1.0 : 1.0 - (margin[i] - lo) / (hi - lo), static_cast<NodeId>(i));
      std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::set<NodeId> s;
      for (std::size_t i = 0; i < take; ++i) s.insert(scored[i].second);
      cands.push_back(s);
    }
    std::set<NodeId> inter = cands[0];
    for (const auto& c : cands) {
      std::set<NodeId> next;
      for (NodeId v : inter)
        if (c.count(v)) next.insert(v);
      inter = next;
    }
    if (!inter.empty()) {
      out.sets.push_back(inter);
      out.fallback.push_back(false);
    } else {
      std::set<NodeId> uni;
      for (const auto& c : cands) uni.insert(c.begin(), c.end());
      out.sets.push_back(uni);
      out.fallback.push_back(true);
    }
  }
  return out;
}

/* --------------------------------- pairs --------------------------------- */

inline double cosine(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    dot += a(i, c) * b(j, c);
    na += a(i, c) * a(i, c);
    nb += b(j, c) * b(j, c);
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct PairRecord {
  double sim;
  int da;
  NodeId a;
  int db;
  NodeId b;
};

inline std::vector<PairRecord> all_pairs_sorted(const std::vector<std::vector<NodeId>>& bnd, const std::vector<Matrix>& x,
                                                double gamma) {
  std::vector<PairRecord> all;
  for (std::size_t k = 0; k < x.size(); ++k)
    for (std::size_t m = k + 1; m < x.size(); ++m)
      for (NodeId u : bnd[k])
        for (NodeId v : bnd[m]) {
          const double s = cosine(x[k], u, x[m], v);
          if (s > gamma) all.push_back({s, static_cast<int>(k), u, static_cast<int>(m), v});
        }
  std::sort(all.begin(), all.end(), [](const PairRecord& p, const PairRecord& q) {
    if (p.sim != q.sim) return p.sim > q.sim;
    return std::tie(p.da, p.a, p.db, p.b) < std::tie(q.da, q.a, q.db, q.b);
  });
  return all;
}

/* ----------------------------------- nn ---------------------------------- */

/// Dense normalized adjacency from an edge list, by explicit loops.
inline Matrix dense_norm_adj(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  Matrix a = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (auto [u, v] : edges) {
    a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = 1;
    a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = 1;
  }
  std::vector<double> deg(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) /= std::sqrt(deg[i] * deg[j]);
  return a;
}

inline Matrix loop_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

inline Matrix loop_gcn(const Matrix& adj, const Matrix& x, const Matrix& w1, const Matrix& w2) {
  Matrix h = loop_matmul(loop_matmul(adj, x), w1);
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) = std::max(0.0, h(i, j));
  return loop_matmul(loop_matmul(adj, h), w2);
}

inline std::vector<double> softmax(std::vector<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (auto& v : z) s += (v = std::exp(v - m));
  for (auto& v : z) v /= s;
  return z;
}

inline double kl(const std::vector<double>& y, const std::vector<double>& p) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] > 0) s += y[i] * std::log(y[i] / std::max(p[i], 1e-12));
  return s;
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (eigenvalues descending).
inline std::pair<Vector, Matrix> jacobi_eigen(Matrix a) {
  const Eigen::Index n = a.rows();
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  Vector vals(n);
  Matrix vecs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals(i) = a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]);
    vecs.col(i) = v.col(idx[static_cast<std::size_t>(i)]);
  }
  return {vals, vecs};
}

}  // namespace oracle
