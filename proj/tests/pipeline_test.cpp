#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace mdgmix;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthSpec small_spec() {
  SynthSpec s;
  s.nodes_per_domain = 60;
  s.feature_dim = 12;
  s.intra_edge_prob = 0.15;
  return s;
}

RunConfig small_config() {
  RunConfig c;
  c.pca_dim = 8;
  c.hidden = 16;
  c.epochs_pre = 5;
  c.steps_adapt = 10;
  c.repeats = 3;
  c.n_pairs = 4;
  c.gamma = 0.0;
  return c;
}

}  // namespace

TEST(Config, JsonRoundTripAndDefaults) {
  RunConfig c;
  c.seed = 12345678901234ULL;
  c.rho = 0.25;
  c.mode = "graph";
  c.lambda_mode = "beta";
  const auto j = nlohmann::json::parse(config_to_json(c).dump());
  EXPECT_EQ(config_from_json(j), c);
  EXPECT_EQ(config_from_json(nlohmann::json::object()), RunConfig{});
  EXPECT_EQ(config_from_json(nlohmann::json{{"rho", 0.4}}).rho, 0.4);
}

TEST(Config, ValidationErrorsNameTheField) {
  try {
    config_from_json(nlohmann::json{{"rho", 1.5}});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("rho"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(nlohmann::json{{"rho", "high"}}), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"learning_rate", 0.1}}), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"kappa", 0.3}}), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"mode", "edge"}}), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), ValidationError);
}

TEST(Synth, DeterministicAndByteIdenticalOnDisk) {
  const auto base = std::filesystem::temp_directory_path() / "mdgmix_synth_test";
  std::filesystem::remove_all(base);
  const auto spec = small_spec();
  write_synth(gen_synth(spec, 7), spec, 7, base / "a");
  write_synth(gen_synth(spec, 7), spec, 7, base / "b");
  for (const auto& e : std::filesystem::directory_iterator(base / "a"))
    EXPECT_EQ(slurp(e.path()), slurp(base / "b" / e.path().filename())) << e.path();
  write_synth(gen_synth(spec, 8), spec, 8, base / "c");
  EXPECT_NE(slurp(base / "a" / "domain_0.feat"), slurp(base / "c" / "domain_0.feat"));

  const Dataset ds = load_dataset(base / "a" / "dataset.json");
  const SynthData mem = gen_synth(spec, 7);
  ASSERT_EQ(ds.sources.size(), 3u);
  ASSERT_TRUE(ds.target.has_value());
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(ds.sources[k].features_raw, mem.sources[k].features_raw);
    EXPECT_EQ(ds.sources[k].col_targets, mem.sources[k].col_targets);
    EXPECT_EQ(*ds.sources[k].labels, *mem.sources[k].labels);
  }
  EXPECT_EQ(ds.target->domain_id, 3);
}

TEST(Synth, ShapesAndPlantedFraction) {
  const auto spec = small_spec();
  const auto d = gen_synth(spec, 3);
  ASSERT_EQ(d.planted.size(), 4u);
  for (const auto& g : d.sources) {
    EXPECT_EQ(g.num_nodes, 60u);
    EXPECT_EQ(g.features_raw.cols(), 12);
    std::set<int> classes(g.labels->begin(), g.labels->end());
    EXPECT_EQ(classes.size(), 3u);
  }
  for (const auto& p : d.planted) EXPECT_EQ(p.size(), 18u);
  SynthSpec bad = spec;
  bad.intra_edge_prob = 1.5;
  EXPECT_THROW(gen_synth(bad, 0), ValidationError);
}

TEST(Synth, BoundarySelectionEnrichesPlantedNodes) {
  // Planted nodes sit between the domain offsets, so the selected boundary
  // sets should contain them at a higher rate than their base share.
  SynthSpec spec;
  const auto data = gen_synth(spec, 11);
  const Dataset ds = dataset_from_synth(data);
  const Prepared p = prepare_sources(ds, RunConfig{});
  for (std::size_t k = 0; k < 3; ++k) {
    const std::set<NodeId> planted(data.planted[k].begin(), data.planted[k].end());
    std::size_t hits = 0;
    for (NodeId v : p.boundaries[k].node_ids) hits += planted.count(v);
    const double precision = static_cast<double>(hits) / static_cast<double>(p.boundaries[k].node_ids.size());
    EXPECT_GT(precision, spec.boundary_cluster_fraction) << "domain " << k;
  }
  const auto mass = boundary_mass(p.boundaries, ds.sources);
  EXPECT_GT(mass.minimum, 0.0);
  EXPECT_LE(mass.minimum, 1.0);
}

TEST(Dataset, DropSourceNodes) {
  const Dataset ds = dataset_from_synth(gen_synth(small_spec(), 4));
  const Dataset d = drop_source_nodes(ds, 0.9, 1);
  for (const auto& g : d.sources) EXPECT_EQ(g.num_nodes, 6u);
  EXPECT_EQ(d.target->num_nodes, 60u);
  EXPECT_EQ(drop_source_nodes(ds, 0.0, 1).sources[0].col_targets, ds.sources[0].col_targets);
  EXPECT_THROW(drop_source_nodes(ds, 1.0, 1), ValidationError);
}

TEST(Stats, MeanStdMedian) {
  const auto ms = mean_std({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(ms.mean, 2.5);
  EXPECT_DOUBLE_EQ(ms.std, std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2);
  EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), ValidationError);
}

TEST(Pipeline, MetricsLineFormat) {
  EXPECT_EQ(metrics_line({"t", 1, "node", 42, 0.5}),
            R"({"target":"t","shots":1,"mode":"node","seed":42,"accuracy":0.5})");
}

TEST(Pipeline, DeterministicAndThreadIndependent) {
  const Dataset ds = dataset_from_synth(gen_synth(small_spec(), 5));
  RunConfig c = small_config();
  const auto a = run_pipeline(ds, c);
  const auto b = run_pipeline(ds, c);
  c.threads = 3;
  const auto t = run_pipeline(ds, c);
  ASSERT_EQ(a.records.size(), 3u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(metrics_line(a.records[i]), metrics_line(b.records[i]));
    EXPECT_EQ(metrics_line(a.records[i]), metrics_line(t.records[i]));
    EXPECT_GE(a.records[i].accuracy, 0.0);
    EXPECT_LE(a.records[i].accuracy, 1.0);
  }
  EXPECT_EQ(a.pretrain.log.size(), 5u);
  EXPECT_EQ(encoder_hash(a.pretrain.state.encoder), encoder_hash(b.pretrain.state.encoder));
}

TEST(Pipeline, RandomMixupUsesAllNodesAndRandomPairs) {
  const Dataset ds = dataset_from_synth(gen_synth(small_spec(), 6));
  RunConfig c = small_config();
  c.pair_selection = "random";
  const Prepared p = prepare_sources(ds, c);
  const auto plan = plan_mixing(p, c);
  EXPECT_EQ(plan.inter.size(), 4u);
  EXPECT_EQ(pretrain_config(c).intra_pool, IntraPool::kAllNodes);
  c.pair_selection = "boundary";
  EXPECT_EQ(pretrain_config(c).intra_pool, IntraPool::kBoundary);
}

TEST(Pipeline, RedundancyRowsAndProbeShape) {
  const Dataset ds = dataset_from_synth(gen_synth(small_spec(), 9));
  RunConfig c = small_config();
  c.repeats = 2;
  const auto rows = redundancy_experiment(ds, c, {0.0, 0.5}, {1, 2});
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.accuracies.size(), 2u);
  EXPECT_EQ(rows[1].fraction, 0.5);

  const Prepared p = prepare_sources(ds, c);
  const auto probe = ambiguity_probe(ds.sources, p, c, 3);
  EXPECT_EQ(probe.center.count, 3u * 3);  // 6 nearest per domain, half held out
  EXPECT_EQ(probe.random.count, 3u * 3);
  std::size_t nb = 0;
  for (const auto& b : p.boundaries) nb += b.node_ids.size();
  EXPECT_EQ(probe.boundary.count, nb);
  for (const auto* row : {&probe.center, &probe.random, &probe.boundary}) {
    EXPECT_GE(row->accuracy, 0.0);
    EXPECT_LE(row->accuracy, 1.0);
    EXPECT_GT(row->loss, 0.0);
  }
}

TEST(Pipeline, DiagnoseReportInvariants) {
  const Dataset ds = dataset_from_synth(gen_synth(small_spec(), 10));
  const RunConfig c = small_config();
  const Prepared p = prepare_sources(ds, c);
  const auto plan = plan_mixing(p, c);
  const auto pre = run_pretrain(ds, p, plan, c);
  const auto r = diagnose(ds, p, plan, pre.state, c);
  EXPECT_GE(r.sigma_dep, 0.5);
  EXPECT_GE(r.delta_max_bound, 0.0);
  EXPECT_LE(r.delta_max_bound, 0.25);
  EXPECT_EQ(r.n, 8u);
  EXPECT_GT(r.lipschitz_bound, 0.0);
  EXPECT_EQ(r.stability.pairs, 8u);
  const auto j = report_to_json(r);
  for (const char* key : {"lipschitz_bound", "max_overlap", "delta_max_bound", "sigma_dep", "sampling_term",
                          "boundary_mass", "probe_accuracies", "stability"})
    EXPECT_TRUE(j.contains(key)) << key;
}
