#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace mdgmix;

namespace {

struct Setup {
  TargetDomain target;
  std::vector<DomainCenter> centers;
  EncoderParams enc;
};

Setup make_setup(std::uint64_t seed, std::size_t n = 40, Eigen::Index d = 6, int K = 3) {
  Rng rng(seed);
  auto g = oracle::random_graph(K, n, 0.1, d, rng);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 3) * 2;  // labels 0, 2, 4
  g.labels = labels;
  const Matrix x = oracle::random_matrix(static_cast<Eigen::Index>(n), d, rng);
  std::vector<DomainCenter> centers;
  for (int k = 0; k < K; ++k) centers.push_back({k, Vector(oracle::random_matrix(d, 1, rng, 0.2, 1.5))});
  EncoderParams enc{oracle::random_matrix(d, 8, rng), oracle::random_matrix(8, 8, rng)};
  return {TargetDomain(std::move(g), x), centers, enc};
}

double support_loss(const Setup& s, const FewShotTask& task, const Vector& alpha, double tau, int hops) {
  std::vector<NodeId> nodes;
  std::vector<int> labels;
  for (auto [v, y] : task.support) {
    nodes.push_back(v);
    labels.push_back(y);
  }
  const Matrix emb = prompted_embeddings(s.enc, s.target, nodes, task.mode, hops, mixed_prompt({alpha}, s.centers));
  return loss_downstream(emb, labels, compute_prototypes(emb, labels, task.num_classes), tau);
}

}  // namespace

TEST(Prompt, MixedPromptAndApply) {
  std::vector<DomainCenter> c{{0, (Vector(2) << 1, 2).finished()}, {1, (Vector(2) << 3, 4).finished()}};
  const Vector p = mixed_prompt({(Vector(2) << 0.25, 0.75).finished()}, c);
  EXPECT_EQ(p, (Vector(2) << 2.5, 3.5).finished());
  Matrix x(2, 2);
  x << 1, 1, -2, 0.5;
  const Matrix want = (Matrix(2, 2) << 2.5, 3.5, -5, 1.75).finished();
  EXPECT_EQ(apply_prompt(x, p), want);
  EXPECT_THROW(mixed_prompt({Vector::Ones(3)}, c), DimensionError);
  EXPECT_THROW(apply_prompt(Matrix::Ones(2, 3), p), DimensionError);
}

TEST(Prompt, UniformWeightsGiveCenterMean) {
  Rng rng(61);
  std::vector<DomainCenter> c;
  Vector mean = Vector::Zero(4);
  for (int k = 0; k < 5; ++k) {
    c.push_back({k, Vector(oracle::random_matrix(4, 1, rng))});
    mean += c.back().vector / 5.0;
  }
  EXPECT_LT((mixed_prompt({Vector::Constant(5, 0.2)}, c) - mean).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Prototypes, ClassMeans) {
  Matrix e(4, 2);
  e << 1, 0, 3, 2, 0, 5, 9, 9;
  const auto p = compute_prototypes(e, {0, 0, 1, 0}, 2);
  EXPECT_EQ(p.vectors, (Matrix(2, 2) << 13.0 / 3, 11.0 / 3, 0, 5).finished());
  EXPECT_THROW(compute_prototypes(e, {0, 0, 0, 0}, 2), ValidationError);
  EXPECT_THROW(compute_prototypes(e, {0, 0, 3, 1}, 2), IndexError);
}

TEST(DownstreamLoss, TwoClassExample) {
  Prototypes p{Matrix::Identity(2, 2)};
  const Matrix h = (Matrix(1, 2) << 1, 0).finished();
  EXPECT_NEAR(loss_downstream(h, {0}, p, 0.5), std::log1p(std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(loss_downstream(h, {0}, p, 0.5), 0.1269, 5e-5);
  EXPECT_NEAR(loss_downstream(h, {0}, p, 1.0), std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(DownstreamLoss, SingleClassIsZero) {
  Rng rng(62);
  const Matrix h = oracle::random_matrix(3, 4, rng);
  Prototypes p{oracle::random_matrix(1, 4, rng)};
  EXPECT_NEAR(loss_downstream(h, {0, 0, 0}, p, 0.7), 0.0, 1e-15);
}

TEST(Predict, NearestPrototypeAndScaleInvariance) {
  Rng rng(63);
  Prototypes p{oracle::random_matrix(4, 5, rng)};
  for (int i = 0; i < 50; ++i) {
    const RowVector h = oracle::random_matrix(1, 5, rng).row(0);
    int best = 0;
    double best_sim = -2;
    for (int c = 0; c < 4; ++c) {
      const double s = oracle::cosine(Matrix(h), 0, p.vectors, c);
      if (s > best_sim) {
        best_sim = s;
        best = c;
      }
    }
    EXPECT_EQ(predict(h, p), best);
    EXPECT_EQ(predict(h * 7.5, p), best);
  }
  Prototypes tie{Matrix::Ones(2, 3)};
  EXPECT_EQ(predict(RowVector::Ones(3), tie), 0);
}

TEST(Task, SupportQueryPartition) {
  const auto s = make_setup(64);
  const auto t = sample_task(s.target.graph, 2, TaskMode::kNode, 9);
  EXPECT_EQ(t.num_classes, 3);
  ASSERT_EQ(t.support.size(), 6u);
  std::vector<int> per(3, 0);
  std::set<NodeId> seen;
  for (auto [v, y] : t.support) {
    ++per[static_cast<std::size_t>(y)];
    EXPECT_EQ((*s.target.graph.labels)[v], 2 * y);
    seen.insert(v);
  }
  EXPECT_EQ(per, (std::vector<int>{2, 2, 2}));
  for (std::size_t i = 0; i < t.query.size(); ++i) {
    EXPECT_TRUE(seen.insert(t.query[i]).second);
    EXPECT_EQ((*s.target.graph.labels)[t.query[i]], 2 * t.query_labels[i]);
  }
  EXPECT_EQ(seen.size(), 40u);
  const auto again = sample_task(s.target.graph, 2, TaskMode::kNode, 9);
  EXPECT_EQ(again.support, t.support);
  EXPECT_THROW(sample_task(s.target.graph, 20, TaskMode::kNode, 9), ValidationError);
}

TEST(Adapt, FreezesEncoderAndTrainsKWeights) {
  auto s = make_setup(65);
  const auto before = encoder_hash(s.enc);
  const auto task = sample_task(s.target.graph, 1, TaskMode::kNode, 3);
  AdaptConfig cfg;
  cfg.steps = 20;
  const auto r = adapt(s.enc, s.target, s.centers, task, cfg);
  EXPECT_EQ(encoder_hash(s.enc), before);
  EXPECT_EQ(r.trainable_parameters, 3u);
  EXPECT_EQ(r.weights.alpha.size(), 3);
  EXPECT_EQ(r.loss_log.size(), 20u);
  EXPECT_NEAR(r.loss_log.front(), support_loss(s, task, Vector::Constant(3, 1.0 / 3), 1.0, 1), 1e-10);
}

TEST(Adapt, PromptGradientMatchesFiniteDifferences) {
  for (TaskMode mode : {TaskMode::kNode, TaskMode::kGraph}) {
    auto s = make_setup(66);
    const auto task = sample_task(s.target.graph, 2, mode, 4);
    // One Adam step from 1/K with lr tiny behaves like sign(grad) * lr; instead
    // compare the tape gradient directly.
    const Vector alpha = (Vector(3) << 0.2, 0.5, 0.3).finished();
    std::vector<NodeId> nodes;
    std::vector<int> labels;
    for (auto [v, y] : task.support) {
      nodes.push_back(v);
      labels.push_back(y);
    }
    const auto a = ad::Var::parameter(alpha.transpose());
    const auto prompt = ad::matmul(a, ad::Var::constant(center_matrix(s.centers)));
    const auto emb = detail::prompted_embeddings(s.target, nodes, mode, 1, prompt, ad::Var::constant(s.enc.w1),
                                                 ad::Var::constant(s.enc.w2));
    const auto loss =
        loss_downstream(emb, labels, ad::matmul(ad::Var::constant(prototype_weights(labels, 3)), emb), 0.8);
    loss.backward();
    EXPECT_NEAR(loss.scalar(), support_loss(s, task, alpha, 0.8, 1), 1e-10);
    for (Eigen::Index k = 0; k < 3; ++k) {
      Vector up = alpha, down = alpha;
      up(k) += 1e-6;
      down(k) -= 1e-6;
      const double numeric = (support_loss(s, task, up, 0.8, 1) - support_loss(s, task, down, 0.8, 1)) / 2e-6;
      EXPECT_NEAR(a.grad()(0, k), numeric, 1e-5 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST(Evaluate, QueryEqualToSupportIsPerfect) {
  auto s = make_setup(67);
  auto task = sample_task(s.target.graph, 1, TaskMode::kNode, 5);
  task.query.clear();
  task.query_labels.clear();
  for (auto [v, y] : task.support) {
    task.query.push_back(v);
    task.query_labels.push_back(y);
  }
  EXPECT_EQ(evaluate(s.enc, {Vector::Constant(3, 1.0 / 3)}, s.target, s.centers, task), 1.0);
}

TEST(Evaluate, GraphModeUsesPromptedEgoEmbeddings) {
  auto s = make_setup(68);
  const Vector prompt = mixed_prompt({Vector::Constant(3, 1.0 / 3)}, s.centers);
  const std::vector<NodeId> nodes{0, 5, 11};
  const Matrix got = prompted_embeddings(s.enc, s.target, nodes, TaskMode::kGraph, 1, prompt);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto ego = extract_ego(s.target.graph, nodes[i], 1, apply_prompt(s.target.features, prompt));
    const Matrix adj = oracle::dense_norm_adj(ego.num_nodes(), ego.edges_local);
    const Matrix h = oracle::loop_gcn(adj, ego.features, s.enc.w1, s.enc.w2);
    EXPECT_LT((got.row(static_cast<Eigen::Index>(i)) - h.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
  }
}
