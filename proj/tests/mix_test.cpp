#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace mdgmix;

namespace {

DomainGraph star(DomainId id, std::size_t leaves, const Matrix& x) {
  std::vector<Edge> e;
  for (NodeId i = 1; i <= leaves; ++i) e.push_back({0, i});
  return build_graph(id, leaves + 1, e, x);
}

}  // namespace

TEST(Pairs, CosineExamples) {
  const Vector a = (Vector(2) << 1, 0).finished();
  const Vector b = (Vector(2) << 0, 1).finished();
  const Vector c = (Vector(2) << 2, 0).finished();
  EXPECT_EQ(cosine_sim(a, b), 0.0);
  EXPECT_NEAR(cosine_sim(a, c), 1.0, 1e-15);
  EXPECT_EQ(cosine_sim(a, Vector(Vector::Zero(2))), 0.0);
  EXPECT_THROW(cosine_sim(a, Vector(Vector::Zero(3))), DimensionError);
}

TEST(Pairs, TopPairsMatchOracle) {
  Rng rng(31);
  for (int inst = 0; inst < 15; ++inst) {
    const std::size_t K = 2 + uniform_index(rng, 2);
    std::vector<Matrix> x;
    std::vector<AlignedFeatures> aligned;
    std::vector<BoundarySet> bnd;
    std::vector<std::vector<NodeId>> ids;
    for (std::size_t k = 0; k < K; ++k) {
      x.push_back(oracle::random_matrix(20, 3, rng, -0.2, 1.0));
      aligned.push_back({static_cast<DomainId>(k), x.back()});
      std::vector<NodeId> b;
      for (NodeId i = 0; i < 20; ++i)
        if (uniform_index(rng, 2)) b.push_back(i);
      if (b.empty()) b.push_back(0);
      ids.push_back(b);
      bnd.push_back({static_cast<DomainId>(k), b, std::vector<double>(b.size(), 1.0), false});
    }
    const double gamma = 0.5;
    const std::size_t n = 1 + uniform_index(rng, 30);
    const auto want = oracle::all_pairs_sorted(ids, x, gamma);
    if (want.empty()) {
      EXPECT_THROW(select_pairs(bnd, aligned, gamma, n, 0), NoMixablePairsError);
      continue;
    }
    const auto got = select_pairs(bnd, aligned, gamma, n, 0);
    const std::size_t expect_n = std::min(n, want.size());
    ASSERT_EQ(got.pairs.size(), expect_n);
    EXPECT_EQ(got.shortfall, n - expect_n);
    for (std::size_t i = 0; i < expect_n; ++i) {
      EXPECT_EQ(got.pairs[i].domain_a, want[i].da);
      EXPECT_EQ(got.pairs[i].node_a, want[i].a);
      EXPECT_EQ(got.pairs[i].domain_b, want[i].db);
      EXPECT_EQ(got.pairs[i].node_b, want[i].b);
      EXPECT_GT(got.pairs[i].similarity, gamma);
      EXPECT_NE(got.pairs[i].domain_a, got.pairs[i].domain_b);
    }
  }
}

TEST(Pairs, NoQualifyingPairIsError) {
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  std::vector<AlignedFeatures> aligned{{0, a}, {1, b}};
  std::vector<BoundarySet> bnd{{0, {0}, {1.0}, false}, {1, {0}, {1.0}, false}};
  EXPECT_THROW(select_pairs(bnd, aligned, 0.5, 3, 0), NoMixablePairsError);
}

TEST(Pairs, RandomQualifyingIsSubsetAndSeeded) {
  Rng rng(32);
  std::vector<AlignedFeatures> aligned;
  std::vector<BoundarySet> bnd;
  std::vector<NodeId> all(15);
  std::iota(all.begin(), all.end(), NodeId{0});
  for (int k = 0; k < 2; ++k) {
    aligned.push_back({k, oracle::random_matrix(15, 3, rng, 0.1, 1.0)});
    bnd.push_back({k, all, std::vector<double>(15, 1.0), false});
  }
  const auto a = select_pairs(bnd, aligned, 0.2, 7, 99, PairSelection::kRandomQualifying);
  const auto b = select_pairs(bnd, aligned, 0.2, 7, 99, PairSelection::kRandomQualifying);
  ASSERT_EQ(a.pairs.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(a.pairs[i], b.pairs[i]);
    EXPECT_GT(a.pairs[i].similarity, 0.2);
  }
}

TEST(Pairs, RandomInterPairsCrossDomains) {
  Rng rng(33);
  std::vector<AlignedFeatures> aligned;
  for (int k = 0; k < 3; ++k) aligned.push_back({k, oracle::random_matrix(10 + k, 2, rng)});
  const auto p = sample_random_inter_pairs(aligned, 50, 4);
  ASSERT_EQ(p.size(), 50u);
  for (const auto& q : p) {
    EXPECT_LT(q.domain_a, q.domain_b);
    EXPECT_LT(q.node_a, aligned[static_cast<std::size_t>(q.domain_a)].num_nodes());
    EXPECT_LT(q.node_b, aligned[static_cast<std::size_t>(q.domain_b)].num_nodes());
  }
}

TEST(Intra, CountsDistributeRemainder) {
  EXPECT_EQ(intra_pair_counts(10, 3), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(intra_pair_counts(2, 3), (std::vector<std::size_t>{1, 1, 0}));
}

TEST(Intra, PairsDistinctAndFromPool) {
  std::vector<std::vector<NodeId>> pools{{1, 4, 7, 9}, {0, 2, 3}, {5, 6, 8}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = sample_intra_pairs(pools, 10, seed);
    ASSERT_EQ(p.size(), 10u);
    std::set<std::tuple<DomainId, NodeId, NodeId>> seen;
    std::vector<std::size_t> per(3, 0);
    for (const auto& q : p) {
      EXPECT_EQ(q.domain_a, q.domain_b);
      EXPECT_NE(q.node_a, q.node_b);
      const auto& pool = pools[static_cast<std::size_t>(q.domain_a)];
      EXPECT_TRUE(std::count(pool.begin(), pool.end(), q.node_a));
      EXPECT_TRUE(std::count(pool.begin(), pool.end(), q.node_b));
      EXPECT_TRUE(seen.insert({q.domain_a, std::min(q.node_a, q.node_b), std::max(q.node_a, q.node_b)}).second);
      ++per[static_cast<std::size_t>(q.domain_a)];
    }
    EXPECT_EQ(per, (std::vector<std::size_t>{4, 3, 3}));
  }
  // Each two-node pool supplies one pair only.
  EXPECT_THROW(sample_intra_pairs({{0, 1}, {0, 1}, {0, 1}}, 6, 0), ValidationError);
}

TEST(Mix, StarTimesStar) {
  Matrix xa = Matrix::Zero(4, 2), xb = Matrix::Ones(3, 2);
  xa(0, 0) = 4;
  xb(0, 1) = 8;
  const auto ga = star(0, 3, xa), gb = star(1, 2, xb);
  const auto m = mix_subgraphs(extract_ego(ga, 0, 1, xa), extract_ego(gb, 0, 1, xb), 0.25, 2);
  EXPECT_EQ(m.num_nodes, 6u);
  EXPECT_EQ(m.edges.size(), 5u);
  EXPECT_EQ(m.coarse_label, 1);
  EXPECT_EQ(m.mix_label, (Vector(2) << 0.25, 0.75).finished());
  const RowVector center = m.features.row(static_cast<Eigen::Index>(m.merged_center));
  EXPECT_DOUBLE_EQ(center(0), 0.25 * 4 + 0.75 * 1);
  EXPECT_DOUBLE_EQ(center(1), 0.25 * 0 + 0.75 * 8);
  for (auto [u, v] : m.edges) EXPECT_TRUE(u == m.merged_center || v == m.merged_center);
}

TEST(Mix, SameDomainSharesNodes) {
  // Path 0-1-2: egos of 0 and 2 share node 1.
  const Matrix x = (Matrix(3, 1) << 1, 2, 3).finished();
  const auto g = build_graph(0, 3, std::vector<Edge>{{0, 1}, {1, 2}}, x);
  const auto m = mix_subgraphs(extract_ego(g, 0, 1, x), extract_ego(g, 2, 1, x), 0.5, 2);
  EXPECT_EQ(m.coarse_label, 0);
  EXPECT_EQ(m.num_nodes, 2u);  // merged center plus the shared node 1
  EXPECT_EQ(m.edges.size(), 1u);
  EXPECT_EQ(m.mix_label, (Vector(2) << 1.0, 0.0).finished());
}

TEST(Mix, PropertiesOnRandomGraphs) {
  Rng rng(34);
  for (int inst = 0; inst < 30; ++inst) {
    const auto ga = oracle::random_graph(0, 25, 0.12, 3, rng);
    const auto gb = oracle::random_graph(1, 25, 0.12, 3, rng);
    const Matrix xa = oracle::random_matrix(25, 3, rng), xb = oracle::random_matrix(25, 3, rng);
    const auto ea = extract_ego(ga, static_cast<NodeId>(uniform_index(rng, 25)), 2, xa);
    const auto eb = extract_ego(gb, static_cast<NodeId>(uniform_index(rng, 25)), 2, xb);
    const double lambda = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto ab = mix_subgraphs(ea, eb, lambda, 2);
    const auto ba = mix_subgraphs(eb, ea, 1.0 - lambda, 2);
    EXPECT_EQ(ab.num_nodes, ea.num_nodes() + eb.num_nodes() - 1);
    EXPECT_EQ(ab.edges.size(), ea.edges_local.size() + eb.edges_local.size());
    EXPECT_EQ(ab.num_nodes, ba.num_nodes);
    EXPECT_EQ(ab.edges.size(), ba.edges.size());
    EXPECT_LT((ab.mix_label - ba.mix_label).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(ab.mix_label.sum(), 1.0, 1e-15);
    EXPECT_GE(ab.mix_label.minCoeff(), 0.0);
    EXPECT_LT((ab.features.row(static_cast<Eigen::Index>(ab.merged_center)) -
               ba.features.row(static_cast<Eigen::Index>(ba.merged_center)))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    // Topology does not depend on lambda.
    const auto other = mix_subgraphs(ea, eb, 0.9, 2);
    EXPECT_EQ(other.edges, ab.edges);
    for (auto [u, v] : ab.edges) {
      EXPECT_LT(u, v);
      EXPECT_LT(v, ab.num_nodes);
    }
  }
}

TEST(Mix, Errors) {
  const Matrix x = Matrix::Zero(2, 2);
  const auto g = build_graph(0, 2, std::vector<Edge>{{0, 1}}, x);
  const auto e = extract_ego(g, 0, 1, x);
  auto wide = e;
  wide.features = Matrix::Zero(2, 3);
  EXPECT_THROW(mix_subgraphs(e, wide, 0.5, 2), DimensionError);
  EXPECT_THROW(mix_subgraphs(e, e, 1.5, 2), ValidationError);
  auto far = e;
  far.source_domain = 5;
  EXPECT_THROW(mix_subgraphs(e, far, 0.5, 2), ValidationError);
}

TEST(Mix, BetaLambdaInUnitInterval) {
  LambdaPolicy p{LambdaPolicy::Mode::kBeta, 0.5, 0.2};
  Rng rng(35);
  double sum = 0;
  for (int i = 0; i < 2000; ++i) {
    const double l = p.draw(rng);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    sum += l;
  }
  EXPECT_NEAR(sum / 2000, 0.5, 0.05);
}

TEST(Intra, SmallBoundaryPoolFallsBackToAllNodes) {
  std::vector<DomainGraph> graphs;
  for (DomainId k = 0; k < 2; ++k) graphs.push_back(build_graph(k, 5, std::vector<Edge>{}, Matrix::Zero(5, 1)));
  std::vector<BoundarySet> b{{0, {1}, {1.0}, false}, {1, {0, 2, 4}, {1, 1, 1}, false}};
  const auto pools = intra_pools(graphs, b, IntraPool::kBoundary, 4);
  EXPECT_EQ(pools[0], (std::vector<NodeId>{0, 1, 2, 3, 4}));
  EXPECT_EQ(pools[1], (std::vector<NodeId>{0, 2, 4}));
  EXPECT_EQ(intra_pools(graphs, b, IntraPool::kAllNodes, 4)[1].size(), 5u);
}
