// Two-layer GCN encoder, domain discriminator, gradient-reversed domain
// decomposer and the pre-training losses.
#pragma once

#include "mdgmix/autodiff.hpp"
#include "mdgmix/ego.hpp"
#include "mdgmix/mix.hpp"

#include <cmath>
#include <memory>
#include <string_view>

namespace mdgmix {

inline constexpr double kProbClamp = 1e-12;

struct EncoderParams {
  Matrix w1;  // d x h
  Matrix w2;  // h x h
};

struct DiscriminatorParams {
  Matrix w;  // h x 2
  Matrix b;  // 1 x 2
};

struct DecomposerParams {
  Matrix w;  // h x K
  Matrix b;  // 1 x K
};

struct AdamState {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

struct ModelState {
  EncoderParams encoder;
  DiscriminatorParams discriminator;
  DecomposerParams decomposer;
  AdamState adam;

  int in_dim() const { return static_cast<int>(encoder.w1.rows()); }
  int hidden() const { return static_cast<int>(encoder.w1.cols()); }
  int num_domains() const { return static_cast<int>(decomposer.w.cols()); }
};

struct NamedParam {
  std::string_view name;
  Matrix* value;
};

/// Canonical parameter order, shared by the optimizer and the checkpoint file.
inline std::vector<NamedParam> named_parameters(ModelState& s) {
  return {{"encoder.W1", &s.encoder.w1},         {"encoder.W2", &s.encoder.w2},
          {"discriminator.W", &s.discriminator.w}, {"discriminator.b", &s.discriminator.b},
          {"decomposer.W", &s.decomposer.w},       {"decomposer.b", &s.decomposer.b}};
}

inline Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j) m(i, j) = dist(rng);
  return m;
}

inline ModelState init_model(int in_dim, int hidden, int num_domains, std::uint64_t seed) {
  require(in_dim >= 1 && hidden >= 1 && num_domains >= 2, "init_model: invalid dimensions");
  Rng rng(stage_seed(seed, "init"));
  ModelState s;
  s.encoder.w1 = glorot_uniform(in_dim, hidden, rng);
  s.encoder.w2 = glorot_uniform(hidden, hidden, rng);
  s.discriminator.w = glorot_uniform(hidden, 2, rng);
  s.discriminator.b = Matrix::Zero(1, 2);
  s.decomposer.w = glorot_uniform(hidden, num_domains, rng);
  s.decomposer.b = Matrix::Zero(1, num_domains);
  return s;
}

/* ------------------------------------------------------------------------- */
/* Normalized adjacency D^-1/2 (A + I) D^-1/2                                */
/* ------------------------------------------------------------------------- */

inline SparseMatrix normalized_adjacency(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<double> deg(n, 1.0);
  for (auto [u, v] : edges) {
    deg[u] += 1.0;
    deg[v] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n + 2 * edges.size());
  for (std::size_t i = 0; i < n; ++i)
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 / deg[i]);
  for (auto [u, v] : edges) {
    const double w = 1.0 / std::sqrt(deg[u] * deg[v]);
    trip.emplace_back(static_cast<int>(u), static_cast<int>(v), w);
    trip.emplace_back(static_cast<int>(v), static_cast<int>(u), w);
  }
  SparseMatrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

inline SparseMatrix normalized_adjacency(const DomainGraph& g) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.num_nodes + g.col_targets.size());
  for (NodeId u = 0; u < g.num_nodes; ++u) {
    const double du = 1.0 + static_cast<double>(g.degree(u));
    trip.emplace_back(static_cast<int>(u), static_cast<int>(u), 1.0 / du);
    for (NodeId v : g.neighbors(u))
      trip.emplace_back(static_cast<int>(u), static_cast<int>(v),
                        1.0 / std::sqrt(du * (1.0 + static_cast<double>(g.degree(v)))));
  }
  SparseMatrix a(static_cast<Eigen::Index>(g.num_nodes), static_cast<Eigen::Index>(g.num_nodes));
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

inline SparseMatrix normalized_adjacency(const EgoSubgraph& s) { return normalized_adjacency(s.num_nodes(), s.edges_local); }
inline SparseMatrix normalized_adjacency(const MixedSubgraph& s) { return normalized_adjacency(s.num_nodes, s.edges); }

/* ------------------------------------------------------------------------- */
/* Encoder                                                                   */
/* ------------------------------------------------------------------------- */

/// Output = second * ReLU(first * X * W1) * W2. With first = second = A this is
/// the node-level GCN; other choices restrict the computation to the rows
/// actually needed (a subset of nodes, or mean-pooled subgraphs).
struct EncodePlan {
  std::shared_ptr<const SparseMatrix> first;
  std::shared_ptr<const SparseMatrix> second;
};

inline EncodePlan full_plan(SparseMatrix adj) {
  auto a = std::make_shared<const SparseMatrix>(std::move(adj));
  return {a, a};
}

/// Plan producing only the embeddings of `rows` (in that order).
inline EncodePlan rows_plan(const SparseMatrix& adj, const std::vector<NodeId>& rows) {
  std::vector<std::int64_t> pos(static_cast<std::size_t>(adj.cols()), -1);
  std::vector<NodeId> needed;
  for (NodeId r : rows)
    for (SparseMatrix::InnerIterator it(adj, r); it; ++it)
      if (pos[static_cast<std::size_t>(it.col())] < 0) {
        pos[static_cast<std::size_t>(it.col())] = 0;
        needed.push_back(static_cast<NodeId>(it.col()));
      }
  std::sort(needed.begin(), needed.end());
  for (std::size_t i = 0; i < needed.size(); ++i) pos[needed[i]] = static_cast<std::int64_t>(i);

  std::vector<Eigen::Triplet<double>> t1, t2;
  for (std::size_t i = 0; i < needed.size(); ++i)
    for (SparseMatrix::InnerIterator it(adj, needed[i]); it; ++it)
      t1.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (SparseMatrix::InnerIterator it(adj, rows[i]); it; ++it)
      t2.emplace_back(static_cast<int>(i), static_cast<int>(pos[static_cast<std::size_t>(it.col())]), it.value());
  auto first = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(needed.size()), adj.cols());
  first->setFromTriplets(t1.begin(), t1.end());
  auto second = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(rows.size()),
                                               static_cast<Eigen::Index>(needed.size()));
  second->setFromTriplets(t2.begin(), t2.end());
  return {first, second};
}

inline ad::Var encode(const EncodePlan& plan, const ad::Var& x, const ad::Var& w1, const ad::Var& w2) {
  if (x.cols() != w1.rows())
    throw DimensionError("encoder: feature width " + std::to_string(x.cols()) + " != " + std::to_string(w1.rows()));
  auto h = ad::relu(ad::matmul(ad::spmm(plan.first, x), w1));
  return ad::matmul(ad::spmm(plan.second, h), w2);
}

/// Plain (tape-free) forward of the same computation.
inline Matrix encode_values(const EncodePlan& plan, const Matrix& x, const EncoderParams& enc) {
  if (x.cols() != enc.w1.rows())
    throw DimensionError("encoder: feature width " + std::to_string(x.cols()) + " != " + std::to_string(enc.w1.rows()));
  Matrix h = (((*plan.first) * x) * enc.w1).cwiseMax(0.0);
  return ((*plan.second) * h) * enc.w2;
}

/// Node embeddings H = A ReLU(A X W1) W2 of one subgraph.
template <class Sub>
ad::Var gcn_encode(const Sub& sub, const ad::Var& w1, const ad::Var& w2) {
  return encode(full_plan(normalized_adjacency(sub)), ad::Var::constant(sub.features), w1, w2);
}

template <class Sub>
Matrix gcn_encode(const Sub& sub, const EncoderParams& enc) {
  return encode_values(full_plan(normalized_adjacency(sub)), sub.features, enc);
}

inline ad::Var mean_pool(const ad::Var& node_embeddings) { return ad::mean_rows(node_embeddings); }

/// Mean-pooled graph embedding of a subgraph (inference only).
template <class Sub>
RowVector embed_graph(const Sub& sub, const EncoderParams& enc) {
  return gcn_encode(sub, enc).colwise().mean();
}

/* ------------------------------------------------------------------------- */
/* Heads and losses                                                          */
/* ------------------------------------------------------------------------- */

inline ad::Var discriminate(const ad::Var& h, const ad::Var& w, const ad::Var& b) {
  return ad::softmax_rows(ad::add_row(ad::matmul(h, w), b));
}

/// 1 where p_inter > 0.5 (strict). Constant: no gradient through the gate.
inline Vector gate_mask(const Matrix& probs) {
  Vector m(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) m(i) = probs(i, 1) > 0.5 ? 1.0 : 0.0;
  return m;
}

/// softmax(GRL(h * m) W + b).
inline ad::Var decompose(const ad::Var& h, const Vector& mask, const ad::Var& w, const ad::Var& b, double grl_beta = 1.0) {
  return ad::softmax_rows(ad::add_row(ad::matmul(ad::grl(ad::scale_rows(h, mask), grl_beta), w), b));
}

/// Mean binary cross-entropy of the inter-domain probability (column 1).
inline ad::Var loss_dis(const ad::Var& probs, const std::vector<int>& coarse_labels) {
  if (probs.cols() != 2 || static_cast<std::size_t>(probs.rows()) != coarse_labels.size() || coarse_labels.empty())
    throw DimensionError("loss_dis: need one probability pair per label");
  const auto B = static_cast<double>(coarse_labels.size());
  double loss = 0;
  Matrix g = Matrix::Zero(probs.rows(), 2);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = coarse_labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw ValidationError("loss_dis: coarse labels must be 0 or 1");
    const Eigen::Index col = y == 1 ? 1 : 0;
    const double p = probs.value()(i, col);
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    loss -= std::log(pc);
    if (p == pc) g(i, col) = -1.0 / (B * p);
  }
  return ad::Var::make(Matrix::Constant(1, 1, loss / B), {probs},
                       [g](ad::Node& n) { n.inputs[0]->grad += n.grad(0, 0) * g; });
}

/// Masked KL(target || p), averaged over masked rows; 0 when nothing is masked.
inline ad::Var loss_fine(const ad::Var& probs, const Matrix& targets, const Vector& mask) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols() || mask.size() != probs.rows())
    throw DimensionError("loss_fine: shape mismatch");
  const double active = mask.sum();
  Matrix g = Matrix::Zero(probs.rows(), probs.cols());
  double loss = 0;
  if (active > 0) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      if (mask(i) == 0.0) continue;
      for (Eigen::Index d = 0; d < probs.cols(); ++d) {
        const double y = targets(i, d);
        if (y <= 0.0) continue;
        const double p = probs.value()(i, d);
        const double pc = std::max(p, kProbClamp);
        loss += y * std::log(y / pc);
        if (p == pc) g(i, d) = -y / (active * p);
      }
    }
    loss /= active;
  }
  return ad::Var::make(Matrix::Constant(1, 1, loss), {probs},
                       [g](ad::Node& n) { n.inputs[0]->grad += n.grad(0, 0) * g; });
}

/* ------------------------------------------------------------------------- */
/* Batched pre-training forward                                              */
/* ------------------------------------------------------------------------- */

/// Block-diagonal view of a MixBatch (inter subgraphs first, then intra).
struct BatchGraph {
  EncodePlan plan;  // second = P * A, one pooled row per subgraph
  Matrix features;
  std::vector<int> coarse_labels;
  Matrix mix_labels;  // B x K
};

/// Block-diagonal adjacency of several subgraphs plus the pooled second
/// factor, so that encode(plan, X) gives one mean-pooled row per subgraph.
struct StackedSubgraphs {
  EncodePlan plan;
  Matrix features;
};

inline StackedSubgraphs stack_subgraphs(const std::vector<SparseMatrix>& adjs, const std::vector<const Matrix*>& feats) {
  require(!adjs.empty() && adjs.size() == feats.size(), "stack_subgraphs: empty or mismatched input");
  std::size_t total = 0;
  for (const auto& a : adjs) total += static_cast<std::size_t>(a.rows());
  const Eigen::Index width = feats.front()->cols();
  StackedSubgraphs out;
  out.features.resize(static_cast<Eigen::Index>(total), width);
  std::vector<Eigen::Triplet<double>> adj_t, pool_t;
  std::size_t off = 0;
  for (std::size_t b = 0; b < adjs.size(); ++b) {
    const SparseMatrix& a = adjs[b];
    if (feats[b]->cols() != width || feats[b]->rows() != a.rows())
      throw DimensionError("stack_subgraphs: inconsistent subgraph shapes");
    out.features.middleRows(static_cast<Eigen::Index>(off), a.rows()) = *feats[b];
    for (Eigen::Index r = 0; r < a.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(a, r); it; ++it)
        adj_t.emplace_back(static_cast<int>(off + static_cast<std::size_t>(it.row())),
                           static_cast<int>(off + static_cast<std::size_t>(it.col())), it.value());
    // Mean pooling of A's rows: row b of P*A = column sums of A / n.
    const RowVector colsum = RowVector::Ones(a.rows()) * a;
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      pool_t.emplace_back(static_cast<int>(b), static_cast<int>(off + static_cast<std::size_t>(c)),
                          colsum(c) / static_cast<double>(a.rows()));
    off += static_cast<std::size_t>(a.rows());
  }
  auto adj = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  adj->setFromTriplets(adj_t.begin(), adj_t.end());
  auto pool = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(adjs.size()), static_cast<Eigen::Index>(total));
  pool->setFromTriplets(pool_t.begin(), pool_t.end());
  out.plan = {adj, pool};
  return out;
}

inline BatchGraph make_batch_graph(const MixBatch& batch) {
  std::vector<const MixedSubgraph*> subs;
  for (const auto& s : batch.inter) subs.push_back(&s);
  for (const auto& s : batch.intra) subs.push_back(&s);
  require(!subs.empty(), "empty batch");
  const Eigen::Index K = subs.front()->mix_label.size();
  BatchGraph bg;
  std::vector<SparseMatrix> adjs;
  std::vector<const Matrix*> feats;
  bg.mix_labels.resize(static_cast<Eigen::Index>(subs.size()), K);
  for (std::size_t b = 0; b < subs.size(); ++b) {
    if (subs[b]->mix_label.size() != K) throw DimensionError("batch: inconsistent mix label length");
    adjs.push_back(normalized_adjacency(*subs[b]));
    feats.push_back(&subs[b]->features);
    bg.coarse_labels.push_back(subs[b]->coarse_label);
    bg.mix_labels.row(static_cast<Eigen::Index>(b)) = subs[b]->mix_label.transpose();
  }
  auto stacked = stack_subgraphs(adjs, feats);
  bg.plan = std::move(stacked.plan);
  bg.features = std::move(stacked.features);
  return bg;
}

/// Tape handles for every model parameter, in named_parameters() order.
struct ParamVars {
  ad::Var w1, w2, dis_w, dis_b, dec_w, dec_b;

  explicit ParamVars(const ModelState& s)
      : w1(ad::Var::parameter(s.encoder.w1)),
        w2(ad::Var::parameter(s.encoder.w2)),
        dis_w(ad::Var::parameter(s.discriminator.w)),
        dis_b(ad::Var::parameter(s.discriminator.b)),
        dec_w(ad::Var::parameter(s.decomposer.w)),
        dec_b(ad::Var::parameter(s.decomposer.b)) {}

  std::vector<Matrix> grads() const {
    return {w1.grad(), w2.grad(), dis_w.grad(), dis_b.grad(), dec_w.grad(), dec_b.grad()};
  }
};

struct PretrainForward {
  ParamVars params;
  ad::Var pooled;
  ad::Var total, dis, fine;
  Matrix probs;       // B x 2
  Vector gate;        // B
  Matrix decomposed;  // B x K
  std::vector<int> coarse_labels;
};

/// encode -> pool -> discriminate -> gate -> GRL-decompose -> L_dis + L_fine.
inline PretrainForward forward_pretrain(const BatchGraph& bg, const ModelState& state, double grl_beta = 1.0) {
  PretrainForward f{ParamVars(state), {}, {}, {}, {}, {}, {}, {}, bg.coarse_labels};
  f.pooled = encode(bg.plan, ad::Var::constant(bg.features), f.params.w1, f.params.w2);
  const ad::Var probs = discriminate(f.pooled, f.params.dis_w, f.params.dis_b);
  f.probs = probs.value();
  f.gate = gate_mask(f.probs);
  const ad::Var dec = decompose(f.pooled, f.gate, f.params.dec_w, f.params.dec_b, grl_beta);
  f.decomposed = dec.value();
  f.dis = loss_dis(probs, bg.coarse_labels);
  f.fine = loss_fine(dec, bg.mix_labels, f.gate);
  f.total = ad::add(f.dis, f.fine);
  return f;
}

inline PretrainForward forward_pretrain(const MixBatch& batch, const ModelState& state, double grl_beta = 1.0) {
  return forward_pretrain(make_batch_graph(batch), state, grl_beta);
}

struct PretrainLoss {
  double total = 0, dis = 0, fine = 0;
  double gate_fraction_inter = 0;  // share of inter subgraphs with gate 1
  double gate_fraction_all = 0;
  std::vector<Matrix> grads;       // named_parameters() order
};

/// Forward + backward of the pre-training objective.
inline PretrainLoss loss_pretrain(const BatchGraph& bg, const ModelState& state, double grl_beta = 1.0) {
  auto f = forward_pretrain(bg, state, grl_beta);
  f.total.backward();
  PretrainLoss out;
  out.total = f.total.scalar();
  out.dis = f.dis.scalar();
  out.fine = f.fine.scalar();
  std::size_t inter = 0, inter_on = 0;
  for (std::size_t i = 0; i < f.coarse_labels.size(); ++i)
    if (f.coarse_labels[i] == 1) {
      ++inter;
      inter_on += f.gate(static_cast<Eigen::Index>(i)) > 0 ? 1 : 0;
    }
  out.gate_fraction_inter = inter ? static_cast<double>(inter_on) / static_cast<double>(inter) : 0.0;
  out.gate_fraction_all = f.gate.mean();
  out.grads = f.params.grads();
  return out;
}

inline PretrainLoss loss_pretrain(const MixBatch& batch, const ModelState& state, double grl_beta = 1.0) {
  return loss_pretrain(make_batch_graph(batch), state, grl_beta);
}

}  // namespace mdgmix
