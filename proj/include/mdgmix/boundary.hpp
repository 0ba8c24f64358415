// Boundary-node selection: distances to every domain center, pairwise margins,
// min-max confidences, top-rho candidates and intersection consensus with a
// union fallback.
#pragma once

#include "mdgmix/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdgmix {

struct DistanceTable {
  DomainId domain_id = 0;
  Matrix matrix;  // |V_k| x K
};

struct BoundarySet {
  DomainId domain_id = 0;
  std::vector<NodeId> node_ids;  // sorted
  std::vector<double> confidences;
  bool used_fallback = false;
};

/// Candidate set B_{k,m} together with the confidence vector it was cut from.
struct CandidateSet {
  DomainId other = 0;
  std::vector<NodeId> node_ids;  // sorted
  std::vector<double> confidences;  // one per node of domain k
};

inline DistanceTable center_distances(const AlignedFeatures& aligned, const std::vector<DomainCenter>& centers) {
  DistanceTable t;
  t.domain_id = aligned.domain_id;
  const auto k = static_cast<Eigen::Index>(centers.size());
  t.matrix.resize(aligned.matrix.rows(), k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& center = centers[static_cast<std::size_t>(c)];
    if (center.domain_id != static_cast<DomainId>(c))
      throw ValidationError("centers must be ordered by domain id (position " + std::to_string(c) + " holds domain " +
                            std::to_string(center.domain_id) + ")");
    if (center.vector.size() != aligned.matrix.cols())
      throw DimensionError("center " + std::to_string(c) + " has dimension " + std::to_string(center.vector.size()) +
                           ", features have " + std::to_string(aligned.matrix.cols()));
    t.matrix.col(c) = (aligned.matrix.rowwise() - center.vector.transpose()).rowwise().norm();
  }
  return t;
}

inline Vector pairwise_margin(const DistanceTable& dist, DomainId k, DomainId m) {
  const auto K = static_cast<DomainId>(dist.matrix.cols());
  if (k == m) throw UsageError("pairwise_margin: k and m must differ");
  if (k < 0 || m < 0 || k >= K || m >= K) throw IndexError("pairwise_margin: domain index out of range");
  return (dist.matrix.col(k) - dist.matrix.col(m)).cwiseAbs();
}

/// s_i = 1 - minmax(margin_i); all ones when every margin is equal.
inline Vector confidence_scores(const Vector& margins) {
  require(margins.size() >= 1, "confidence_scores: empty margin vector");
  require(margins.allFinite(), "confidence_scores: non-finite margins");
  const double lo = margins.minCoeff();
  const double hi = margins.maxCoeff();
  if (hi == lo) return Vector::Ones(margins.size());
  return (1.0 - ((margins.array() - lo) / (hi - lo))).matrix();
}

/// ceil(rho * n), clamped to [1, n]. A tiny slack absorbs products such as
/// 0.07 * 100 landing just above an integer.
inline std::size_t candidate_count(double rho, std::size_t n) {
  const double raw = rho * static_cast<double>(n);
  auto c = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(c, 1, n);
}

/// Top ceil(rho*n) node ids by descending confidence, ties by ascending id.
inline std::vector<NodeId> select_candidates(const Vector& confidences, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("rho must lie in (0,1)");
  const auto n = static_cast<std::size_t>(confidences.size());
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return confidences(a) > confidences(b); });
  order.resize(candidate_count(rho, n));
  std::sort(order.begin(), order.end());
  return order;
}

/// Intersection of all candidate sets; union when the intersection is empty.
/// Each selected node carries the mean of its pairwise confidences over the
/// sets that contain it.
inline BoundarySet boundary_set(DomainId domain_id, const std::vector<CandidateSet>& sets) {
  if (sets.empty()) throw UsageError("boundary_set: need at least one candidate set (K >= 2)");
  BoundarySet out;
  out.domain_id = domain_id;

  std::vector<NodeId> acc = sets.front().node_ids;
  for (std::size_t s = 1; s < sets.size(); ++s) {
    std::vector<NodeId> next;
    std::set_intersection(acc.begin(), acc.end(), sets[s].node_ids.begin(), sets[s].node_ids.end(),
                          std::back_inserter(next));
    acc = std::move(next);
  }
  if (acc.empty()) {
    out.used_fallback = true;
    for (const auto& s : sets) {
      std::vector<NodeId> next;
      std::set_union(acc.begin(), acc.end(), s.node_ids.begin(), s.node_ids.end(), std::back_inserter(next));
      acc = std::move(next);
    }
  }
  out.node_ids = std::move(acc);
  out.confidences.reserve(out.node_ids.size());
  for (NodeId v : out.node_ids) {
    double sum = 0;
    int count = 0;
    for (const auto& s : sets) {
      if (std::binary_search(s.node_ids.begin(), s.node_ids.end(), v)) {
        sum += s.confidences[v];
        ++count;
      }
    }
    out.confidences.push_back(count ? sum / count : 0.0);
  }
  return out;
}

/// Full boundary pipeline over all domains. `aligned[k].domain_id` must be k.
inline std::vector<BoundarySet> select_boundaries(const std::vector<AlignedFeatures>& aligned, double rho) {
  require(aligned.size() >= 2, "boundary selection needs at least two domains");
  std::vector<DomainCenter> centers;
  for (const auto& a : aligned) centers.push_back(domain_center(a));
  const auto K = static_cast<DomainId>(aligned.size());
  std::vector<BoundarySet> out;
  for (DomainId k = 0; k < K; ++k) {
    const auto table = center_distances(aligned[static_cast<std::size_t>(k)], centers);
    std::vector<CandidateSet> sets;
    for (DomainId m = 0; m < K; ++m) {
      if (m == k) continue;
      CandidateSet cs;
      cs.other = m;
      const Vector conf = confidence_scores(pairwise_margin(table, k, m));
      cs.node_ids = select_candidates(conf, rho);
      cs.confidences.assign(conf.data(), conf.data() + conf.size());
      sets.push_back(std::move(cs));
    }
    out.push_back(boundary_set(k, sets));
  }
  return out;
}

}  // namespace mdgmix
