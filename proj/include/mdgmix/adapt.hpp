// Target-domain adaptation through a learnable mixture of source-domain
// centers, and prototype-based few-shot evaluation.
#pragma once

#include "mdgmix/adam.hpp"

#include <map>
#include <set>

namespace mdgmix {

struct PromptWeights {
  Vector alpha;  // one weight per source domain
};

enum class TaskMode { kNode, kGraph };

struct FewShotTask {
  int shots = 1;
  int num_classes = 0;
  TaskMode mode = TaskMode::kNode;
  std::vector<std::pair<NodeId, int>> support;  // (node, class index in [0, num_classes))
  std::vector<NodeId> query;
  std::vector<int> query_labels;
};

struct Prototypes {
  Matrix vectors;  // num_classes x h
};

/// Frozen target domain: graph, aligned features and normalized adjacency.
struct TargetDomain {
  DomainGraph graph;
  Matrix features;  // aligned, n x d
  SparseMatrix adj;

  TargetDomain(DomainGraph g, Matrix aligned) : graph(std::move(g)), features(std::move(aligned)) {
    if (static_cast<std::size_t>(features.rows()) != graph.num_nodes)
      throw DimensionError("target: aligned rows != node count");
    adj = normalized_adjacency(graph);
  }
};

inline Matrix center_matrix(const std::vector<DomainCenter>& centers) {
  require(!centers.empty(), "need at least one domain center");
  Matrix c(static_cast<Eigen::Index>(centers.size()), centers.front().vector.size());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (centers[k].vector.size() != c.cols()) throw DimensionError("domain centers differ in dimension");
    c.row(static_cast<Eigen::Index>(k)) = centers[k].vector.transpose();
  }
  return c;
}

/// p = sum_k alpha_k c_k.
inline Vector mixed_prompt(const PromptWeights& w, const std::vector<DomainCenter>& centers) {
  const Matrix c = center_matrix(centers);
  if (w.alpha.size() != c.rows())
    throw DimensionError("mixed_prompt: " + std::to_string(w.alpha.size()) + " weights for " +
                         std::to_string(c.rows()) + " centers");
  return c.transpose() * w.alpha;
}

/// Every row of x multiplied elementwise by p.
inline Matrix apply_prompt(const Matrix& x, const Vector& p) {
  if (x.cols() != p.size()) throw DimensionError("apply_prompt: feature width != prompt length");
  return x.array().rowwise() * p.transpose().array();
}

/// Averaging matrix M (C x S) with prototypes = M * support_embeddings.
inline Matrix prototype_weights(const std::vector<int>& support_labels, int num_classes) {
  Matrix m = Matrix::Zero(num_classes, static_cast<Eigen::Index>(support_labels.size()));
  std::vector<int> count(static_cast<std::size_t>(num_classes), 0);
  for (int y : support_labels) {
    if (y < 0 || y >= num_classes) throw IndexError("support label out of range");
    ++count[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < num_classes; ++c)
    if (count[static_cast<std::size_t>(c)] == 0)
      throw ValidationError("class " + std::to_string(c) + " has no support items");
  for (std::size_t i = 0; i < support_labels.size(); ++i)
    m(support_labels[i], static_cast<Eigen::Index>(i)) = 1.0 / count[static_cast<std::size_t>(support_labels[i])];
  return m;
}

inline Prototypes compute_prototypes(const Matrix& support_embeddings, const std::vector<int>& support_labels,
                                     int num_classes) {
  if (static_cast<std::size_t>(support_embeddings.rows()) != support_labels.size())
    throw DimensionError("compute_prototypes: one embedding per support item required");
  return {prototype_weights(support_labels, num_classes) * support_embeddings};
}

/// sum_i -log softmax_c(cos(h_i, proto_c) / tau)[y_i].
inline ad::Var loss_downstream(const ad::Var& embeddings, const std::vector<int>& labels, const ad::Var& prototypes,
                               double tau) {
  require(tau > 0, "tau must be > 0");
  return ad::cross_entropy_sum(ad::scale(ad::cosine_matrix(embeddings, prototypes), 1.0 / tau), labels);
}

inline double loss_downstream(const Matrix& embeddings, const std::vector<int>& labels, const Prototypes& protos,
                              double tau) {
  return loss_downstream(ad::Var::constant(embeddings), labels, ad::Var::constant(protos.vectors), tau).scalar();
}

/// Nearest prototype by cosine similarity (ties to the lower class index).
inline int predict(const RowVector& h, const Prototypes& protos) {
  int best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < protos.vectors.rows(); ++c) {
    const double s = cosine_sim(h, protos.vectors.row(c));
    if (s > best_sim) {
      best_sim = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

/// k labeled nodes per class for support, every other labeled node as query.
/// Classes are the distinct labels of the target, renumbered in ascending order.
inline FewShotTask sample_task(const DomainGraph& target, int shots, TaskMode mode, std::uint64_t seed) {
  require(target.labels.has_value(), "target domain has no labels");
  require(shots >= 1, "shots must be >= 1");
  std::map<int, std::vector<NodeId>> by_class;
  for (NodeId v = 0; v < target.num_nodes; ++v) by_class[(*target.labels)[v]].push_back(v);
  FewShotTask task;
  task.shots = shots;
  task.mode = mode;
  task.num_classes = static_cast<int>(by_class.size());
  Rng rng(seed);
  std::set<NodeId> in_support;
  int cls = 0;
  std::map<int, int> class_index;
  for (auto& [label, nodes] : by_class) {
    if (static_cast<int>(nodes.size()) < shots)
      throw ValidationError("class " + std::to_string(label) + " has fewer than " + std::to_string(shots) + " nodes");
    for (int i = 0; i < shots; ++i) {
      const std::size_t r = static_cast<std::size_t>(i) + uniform_index(rng, nodes.size() - static_cast<std::size_t>(i));
      std::swap(nodes[static_cast<std::size_t>(i)], nodes[r]);
      task.support.emplace_back(nodes[static_cast<std::size_t>(i)], cls);
      in_support.insert(nodes[static_cast<std::size_t>(i)]);
    }
    class_index[label] = cls++;
  }
  for (NodeId v = 0; v < target.num_nodes; ++v)
    if (!in_support.count(v)) {
      task.query.push_back(v);
      task.query_labels.push_back(class_index[(*target.labels)[v]]);
    }
  return task;
}

namespace detail {

/// Embeddings of `nodes` under prompt `prompt` (1 x d), differentiable in the prompt.
inline ad::Var prompted_embeddings(const TargetDomain& t, const std::vector<NodeId>& nodes, TaskMode mode, int hops,
                                   const ad::Var& prompt, const ad::Var& w1, const ad::Var& w2) {
  if (mode == TaskMode::kNode) {
    const EncodePlan plan = rows_plan(t.adj, nodes);
    // Only the rows read by plan.first matter; restrict the prompted matrix to them.
    return encode(plan, ad::mul_row(ad::Var::constant(t.features), prompt), w1, w2);
  }
  std::vector<ad::Var> pooled;
  for (NodeId v : nodes) {
    const EgoSubgraph ego = extract_ego(t.graph, v, hops, t.features);
    pooled.push_back(ad::mean_rows(encode(full_plan(normalized_adjacency(ego)),
                                          ad::mul_row(ad::Var::constant(ego.features), prompt), w1, w2)));
  }
  return ad::concat_rows(pooled);
}

}  // namespace detail

/// Tape-free embeddings of `nodes` under a fixed prompt.
inline Matrix prompted_embeddings(const EncoderParams& enc, const TargetDomain& t, const std::vector<NodeId>& nodes,
                                  TaskMode mode, int hops, const Vector& prompt) {
  if (mode == TaskMode::kNode) {
    const Matrix all = encode_values(full_plan(t.adj), apply_prompt(t.features, prompt), enc);
    Matrix out(static_cast<Eigen::Index>(nodes.size()), all.cols());
    for (std::size_t i = 0; i < nodes.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = all.row(nodes[i]);
    return out;
  }
  Matrix out(static_cast<Eigen::Index>(nodes.size()), enc.w2.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    EgoSubgraph ego = extract_ego(t.graph, nodes[i], hops, t.features);
    ego.features = apply_prompt(ego.features, prompt);
    out.row(static_cast<Eigen::Index>(i)) = embed_graph(ego, enc);
  }
  return out;
}

struct AdaptConfig {
  double lr = 1e-3;
  int steps = 200;
  double tau = 1.0;
  int hops = 1;  // ego radius for graph-level tasks
};

struct AdaptResult {
  PromptWeights weights;
  std::vector<double> loss_log;  // support loss before each step
  std::size_t trainable_parameters = 0;
};

/// Optimizes only the K prompt weights on the support loss; the encoder is read-only.
inline AdaptResult adapt(const EncoderParams& encoder, const TargetDomain& target,
                         const std::vector<DomainCenter>& centers, const FewShotTask& task, const AdaptConfig& cfg) {
  require(cfg.lr > 0 && cfg.steps >= 0 && cfg.tau > 0, "adapt: invalid configuration");
  require(!task.support.empty(), "adapt: empty support set");
  const Matrix c = center_matrix(centers);
  if (c.cols() != target.features.cols()) throw DimensionError("adapt: center width != target feature width");
  const auto K = c.rows();

  std::vector<NodeId> nodes;
  std::vector<int> labels;
  for (auto [v, y] : task.support) {
    nodes.push_back(v);
    labels.push_back(y);
  }
  const ad::Var avg = ad::Var::constant(prototype_weights(labels, task.num_classes));
  const ad::Var centers_var = ad::Var::constant(c);
  const ad::Var w1 = ad::Var::constant(encoder.w1);
  const ad::Var w2 = ad::Var::constant(encoder.w2);

  AdaptResult out;
  Matrix alpha = Matrix::Constant(1, K, 1.0 / static_cast<double>(K));
  AdamState opt;
  opt.lr = cfg.lr;
  opt.weight_decay = 0.0;
  std::vector<NamedParam> params{{"prompt.alpha", &alpha}};
  out.trainable_parameters = static_cast<std::size_t>(alpha.size());

  for (int step = 0; step < cfg.steps; ++step) {
    const ad::Var a = ad::Var::parameter(alpha);
    const ad::Var prompt = ad::matmul(a, centers_var);
    const ad::Var emb = detail::prompted_embeddings(target, nodes, task.mode, cfg.hops, prompt, w1, w2);
    const ad::Var loss = loss_downstream(emb, labels, ad::matmul(avg, emb), cfg.tau);
    loss.backward();
    out.loss_log.push_back(loss.scalar());
    adam_step(opt, params, {a.grad()});
  }
  out.weights.alpha = alpha.row(0).transpose();
  return out;
}

/// Fraction of query items whose nearest prototype has the right class.
inline double evaluate(const EncoderParams& encoder, const PromptWeights& weights, const TargetDomain& target,
                       const std::vector<DomainCenter>& centers, const FewShotTask& task, int hops = 1) {
  if (task.query.empty()) return 0.0;
  const Vector prompt = mixed_prompt(weights, centers);
  std::vector<NodeId> nodes;
  std::vector<int> labels;
  for (auto [v, y] : task.support) {
    nodes.push_back(v);
    labels.push_back(y);
  }
  const Prototypes protos =
      compute_prototypes(prompted_embeddings(encoder, target, nodes, task.mode, hops, prompt), labels, task.num_classes);
  const Matrix q = prompted_embeddings(encoder, target, task.query, task.mode, hops, prompt);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < task.query.size(); ++i)
    if (predict(q.row(static_cast<Eigen::Index>(i)), protos) == task.query_labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(task.query.size());
}

}  // namespace mdgmix
