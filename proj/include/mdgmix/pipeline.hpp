// End-to-end orchestration: dataset manifests, alignment, boundary selection,
// pre-training, few-shot evaluation and the experiment drivers built on them.
#pragma once

#include "mdgmix/adapt.hpp"
#include "mdgmix/checkpoint.hpp"
#include "mdgmix/config.hpp"
#include "mdgmix/diagnostics.hpp"
#include "mdgmix/pretrain.hpp"
#include "mdgmix/synth.hpp"

#include <thread>

namespace mdgmix {

/* ------------------------------------------------------------------------- */
/* Datasets                                                                  */
/* ------------------------------------------------------------------------- */

struct Dataset {
  std::vector<DomainGraph> sources;  // sources[k].domain_id == k
  std::optional<DomainGraph> target;
  std::vector<std::string> source_names;
  std::string target_name = "target";
};

inline Dataset dataset_from_synth(SynthData data) {
  Dataset ds;
  ds.sources = std::move(data.sources);
  ds.target = std::move(data.target);
  for (const auto& g : ds.sources) ds.source_names.push_back("domain_" + std::to_string(g.domain_id));
  if (ds.target) ds.target_name = "domain_" + std::to_string(ds.target->domain_id);
  return ds;
}

/// Reads a dataset.json manifest: {"sources": [{name, edges, features, labels?}], "target": {...}}.
/// Paths are relative to the manifest's directory.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open dataset manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(manifest_path.string(), 0, e.what());
  }
  const auto base = manifest_path.parent_path();
  auto load = [&](const nlohmann::json& e, DomainId id) {
    if (!e.contains("edges") || !e.contains("features"))
      throw ValidationError(manifest_path.string() + ": domain entry needs \"edges\" and \"features\"");
    std::optional<std::filesystem::path> labels;
    if (e.contains("labels")) labels = base / e["labels"].get<std::string>();
    return io::load_graph(base / e["edges"].get<std::string>(), base / e["features"].get<std::string>(), id, labels);
  };
  if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].size() < 2)
    throw ValidationError(manifest_path.string() + ": need at least two source domains");
  Dataset ds;
  for (const auto& e : j["sources"]) {
    const auto id = static_cast<DomainId>(ds.sources.size());
    ds.sources.push_back(load(e, id));
    ds.source_names.push_back(e.value("name", "domain_" + std::to_string(id)));
  }
  if (j.contains("target")) {
    ds.target = load(j["target"], static_cast<DomainId>(ds.sources.size()));
    ds.target_name = j["target"].value("name", std::string("target"));
  }
  return ds;
}

/// Removes floor(p * |V|) uniformly chosen nodes (and their edges) from every source graph.
inline Dataset drop_source_nodes(const Dataset& ds, double fraction, std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0 + 1e-12, "drop fraction must lie in [0,1]");
  Dataset out = ds;
  for (std::size_t k = 0; k < ds.sources.size(); ++k) {
    const auto& g = ds.sources[k];
    const auto drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(g.num_nodes) + 1e-9));
    if (drop >= g.num_nodes)
      throw ValidationError("drop fraction " + std::to_string(fraction) + " empties source domain " +
                            std::to_string(k));
    std::vector<NodeId> order(g.num_nodes);
    std::iota(order.begin(), order.end(), NodeId{0});
    Rng rng(stage_seed(seed, "drop", k));
    std::shuffle(order.begin(), order.end(), rng);
    order.erase(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(drop));
    out.sources[k] = induced_subgraph(g, std::move(order));
  }
  return out;
}

/* ------------------------------------------------------------------------- */
/* Stages                                                                    */
/* ------------------------------------------------------------------------- */

inline PcaOptions pca_options(const RunConfig& c) { return {c.pca_standardize, c.pca_center_output}; }

inline LambdaPolicy lambda_policy(const RunConfig& c) {
  LambdaPolicy p;
  p.mode = c.lambda_mode == "beta" ? LambdaPolicy::Mode::kBeta : LambdaPolicy::Mode::kFixed;
  p.value = c.lambda;
  p.alpha = c.lambda_alpha;
  return p;
}

inline TaskMode task_mode(const RunConfig& c) { return c.mode == "graph" ? TaskMode::kGraph : TaskMode::kNode; }

inline PretrainConfig pretrain_config(const RunConfig& c) {
  PretrainConfig p;
  p.hidden = c.hidden;
  p.hops = c.hops;
  p.n_pairs = static_cast<std::size_t>(c.n_pairs);
  p.lr = c.lr_pre;
  p.weight_decay = c.weight_decay;
  p.epochs = c.epochs_pre;
  p.grl_beta = c.grl_beta;
  p.lambda = lambda_policy(c);
  p.intra_pool = c.pair_selection == "random" ? IntraPool::kAllNodes : IntraPool::kBoundary;
  p.seed = stage_seed(c.seed, "pretrain");
  return p;
}

inline AdaptConfig adapt_config(const RunConfig& c) { return {c.lr_down, c.steps_adapt, c.tau, c.hops}; }

/// Aligned sources, their centers and boundary sets.
struct Prepared {
  std::vector<AlignedFeatures> aligned;
  std::vector<DomainCenter> centers;
  std::vector<BoundarySet> boundaries;
};

inline Prepared prepare_sources(const Dataset& ds, const RunConfig& c) {
  require(ds.sources.size() >= 2, "need at least two source domains");
  Prepared p;
  for (std::size_t k = 0; k < ds.sources.size(); ++k) {
    p.aligned.push_back(pca_project(ds.sources[k].features_raw, c.pca_dim, static_cast<DomainId>(k), pca_options(c)));
    p.centers.push_back(domain_center(p.aligned.back()));
  }
  p.boundaries = select_boundaries(p.aligned, c.rho);
  return p;
}

inline TargetDomain prepare_target(const Dataset& ds, const RunConfig& c) {
  if (!ds.target) throw ValidationError("dataset has no target domain");
  auto aligned = pca_project(ds.target->features_raw, c.pca_dim, ds.target->domain_id, pca_options(c));
  return TargetDomain(*ds.target, std::move(aligned.matrix));
}

struct MixingPlan {
  std::vector<NodePair> inter;
  std::size_t shortfall = 0;
};

/// Cross-domain pairs: top-similarity boundary pairs, or uniformly random node pairs.
inline MixingPlan plan_mixing(const Prepared& p, const RunConfig& c) {
  const auto seed = stage_seed(c.seed, "pairs");
  if (c.pair_selection == "random")
    return {sample_random_inter_pairs(p.aligned, static_cast<std::size_t>(c.n_pairs), seed), 0};
  auto r = select_pairs(p.boundaries, p.aligned, c.gamma, static_cast<std::size_t>(c.n_pairs), seed);
  return {std::move(r.pairs), r.shortfall};
}

inline PretrainResult run_pretrain(const Dataset& ds, const Prepared& p, const MixingPlan& plan, const RunConfig& c) {
  return pretrain(ds.sources, p.aligned, p.boundaries, plan.inter, pretrain_config(c));
}

/* ------------------------------------------------------------------------- */
/* Evaluation                                                                */
/* ------------------------------------------------------------------------- */

struct EvalRecord {
  std::string target;
  int shots = 1;
  std::string mode;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

inline std::string metrics_line(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["target"] = r.target;
  j["shots"] = r.shots;
  j["mode"] = r.mode;
  j["seed"] = r.seed;
  j["accuracy"] = r.accuracy;
  return j.dump();
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population standard deviation.
inline MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

inline double median(std::vector<double> xs) {
  require(!xs.empty(), "median of empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots so the outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F body) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// `repeats` independent label samplings, each adapted and evaluated.
inline std::vector<EvalRecord> run_eval(const EncoderParams& encoder, const TargetDomain& target,
                                        const std::vector<DomainCenter>& centers, const std::string& target_name,
                                        const RunConfig& c) {
  const std::uint64_t before = encoder_hash(encoder);
  std::vector<EvalRecord> out(static_cast<std::size_t>(c.repeats));
  parallel_for(out.size(), c.threads, [&](std::size_t r) {
    const std::uint64_t seed = stage_seed(c.seed, "eval", r);
    const FewShotTask task = sample_task(target.graph, c.shots, task_mode(c), seed);
    const AdaptResult adapted = adapt(encoder, target, centers, task, adapt_config(c));
    out[r] = {target_name, c.shots, c.mode, seed, evaluate(encoder, adapted.weights, target, centers, task, c.hops)};
  });
  if (encoder_hash(encoder) != before) throw Error("encoder parameters changed during adaptation");
  return out;
}

struct PipelineResult {
  Prepared prepared;
  MixingPlan mixing;
  PretrainResult pretrain;
  std::vector<EvalRecord> records;
  MeanStd accuracy;
};

inline PipelineResult run_pipeline(const Dataset& ds, const RunConfig& c) {
  validate(c);
  PipelineResult r;
  r.prepared = prepare_sources(ds, c);
  r.mixing = plan_mixing(r.prepared, c);
  r.pretrain = run_pretrain(ds, r.prepared, r.mixing, c);
  const TargetDomain target = prepare_target(ds, c);
  r.records = run_eval(r.pretrain.state.encoder, target, r.prepared.centers, ds.target_name, c);
  std::vector<double> acc;
  for (const auto& e : r.records) acc.push_back(e.accuracy);
  r.accuracy = mean_std(acc);
  return r;
}

/* ------------------------------------------------------------------------- */
/* Redundancy experiment                                                     */
/* ------------------------------------------------------------------------- */

struct RedundancyRow {
  double fraction = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> accuracies;  // one pipeline mean accuracy per seed
};

inline std::vector<RedundancyRow> redundancy_experiment(const Dataset& ds, const RunConfig& base,
                                                        const std::vector<double>& fractions,
                                                        const std::vector<std::uint64_t>& seeds) {
  require(!fractions.empty() && !seeds.empty(), "redundancy: need fractions and seeds");
  std::vector<RedundancyRow> rows;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    RedundancyRow row;
    row.fraction = fractions[f];
    for (std::uint64_t s : seeds) {
      RunConfig c = base;
      c.seed = s;
      const Dataset dropped = drop_source_nodes(ds, fractions[f], stage_seed(s, "redundancy", f));
      row.accuracies.push_back(run_pipeline(dropped, c).accuracy.mean);
    }
    const auto ms = mean_std(row.accuracies);
    row.mean = ms.mean;
    row.std = ms.std;
    rows.push_back(std::move(row));
  }
  return rows;
}

/* ------------------------------------------------------------------------- */
/* Domain-ambiguity probe                                                    */
/* ------------------------------------------------------------------------- */

struct ProbeRow {
  std::string name;
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t count = 0;
};

struct ProbeResult {
  ProbeRow center{"center"}, random{"random"}, boundary{"boundary"};
};

inline constexpr double kProbeCenterFraction = 0.1;
inline constexpr int kProbeEpochs = 50;
inline constexpr std::size_t kProbeBatch = 16;

/// Trains a fresh encoder + linear domain classifier on ego subgraphs of the
/// nodes nearest each domain center, then scores held-out center nodes,
/// uniformly random nodes and boundary nodes.
inline ProbeResult ambiguity_probe(const std::vector<DomainGraph>& graphs, const Prepared& p, const RunConfig& c,
                                   std::uint64_t seed) {
  const std::size_t K = graphs.size();
  require(K >= 2 && p.aligned.size() == K && p.boundaries.size() == K, "probe: inconsistent inputs");
  Rng rng(stage_seed(seed, "probe-split"));
  struct Item {
    SparseMatrix adj;
    Matrix features;
    int label;
  };
  auto item = [&](std::size_t k, NodeId v) {
    const EgoSubgraph ego = extract_ego(graphs[k], v, c.hops, p.aligned[k]);
    return Item{normalized_adjacency(ego), ego.features, static_cast<int>(k)};
  };
  std::vector<Item> train, center_eval, random_eval, boundary_eval;
  for (std::size_t k = 0; k < K; ++k) {
    const Matrix& x = p.aligned[k].matrix;
    const std::size_t n = graphs[k].num_nodes;
    std::vector<NodeId> order(n);
    std::iota(order.begin(), order.end(), NodeId{0});
    Vector dist = (x.rowwise() - p.centers[k].vector.transpose()).rowwise().norm();
    std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return dist(a) < dist(b); });
    const std::size_t pool =
        std::min(n, std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(kProbeCenterFraction * n))));
    std::vector<NodeId> nearest(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool));
    std::shuffle(nearest.begin(), nearest.end(), rng);
    const std::size_t n_train = (pool + 1) / 2;
    for (std::size_t i = 0; i < pool; ++i) (i < n_train ? train : center_eval).push_back(item(k, nearest[i]));

    std::vector<NodeId> all(n);
    std::iota(all.begin(), all.end(), NodeId{0});
    std::shuffle(all.begin(), all.end(), rng);
    for (std::size_t i = 0; i < std::min(n, pool - n_train); ++i) random_eval.push_back(item(k, all[i]));
    for (NodeId v : p.boundaries[k].node_ids) boundary_eval.push_back(item(k, v));
  }

  ModelState model = init_model(c.pca_dim, c.hidden, static_cast<int>(K), stage_seed(seed, "probe-init"));
  Rng head_rng(stage_seed(seed, "probe-head"));
  Matrix head_w = glorot_uniform(c.hidden, static_cast<Eigen::Index>(K), head_rng);
  Matrix head_b = Matrix::Zero(1, static_cast<Eigen::Index>(K));
  AdamState opt;
  opt.lr = c.lr_pre;
  opt.weight_decay = c.weight_decay;
  const std::vector<NamedParam> params{{"probe.W1", &model.encoder.w1},
                                       {"probe.W2", &model.encoder.w2},
                                       {"probe.head.W", &head_w},
                                       {"probe.head.b", &head_b}};

  auto stack = [](const std::vector<const Item*>& items) {
    std::vector<SparseMatrix> adjs;
    std::vector<const Matrix*> feats;
    for (auto* it : items) {
      adjs.push_back(it->adj);
      feats.push_back(&it->features);
    }
    return stack_subgraphs(adjs, feats);
  };

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng batch_rng(stage_seed(seed, "probe-batches"));
  for (int epoch = 0; epoch < kProbeEpochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng);
    for (std::size_t start = 0; start < order.size(); start += kProbeBatch) {
      std::vector<const Item*> items;
      std::vector<int> labels;
      for (std::size_t i = start; i < std::min(order.size(), start + kProbeBatch); ++i) {
        items.push_back(&train[order[i]]);
        labels.push_back(train[order[i]].label);
      }
      const auto s = stack(items);
      const ad::Var w1 = ad::Var::parameter(model.encoder.w1), w2 = ad::Var::parameter(model.encoder.w2);
      const ad::Var hw = ad::Var::parameter(head_w), hb = ad::Var::parameter(head_b);
      const ad::Var logits = ad::add_row(ad::matmul(encode(s.plan, ad::Var::constant(s.features), w1, w2), hw), hb);
      const ad::Var loss = ad::scale(ad::cross_entropy_sum(logits, labels), 1.0 / static_cast<double>(labels.size()));
      loss.backward();
      adam_step(opt, params, {w1.grad(), w2.grad(), hw.grad(), hb.grad()});
    }
  }

  auto score = [&](const std::vector<Item>& items, ProbeRow& row) {
    row.count = items.size();
    if (items.empty()) return;
    std::vector<const Item*> ptrs;
    for (const auto& it : items) ptrs.push_back(&it);
    const auto s = stack(ptrs);
    Matrix logits = encode_values(s.plan, s.features, model.encoder) * head_w;
    logits.rowwise() += head_b.row(0);
    std::size_t correct = 0;
    double loss = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double mx = logits.row(i).maxCoeff();
      const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
      const int y = items[static_cast<std::size_t>(i)].label;
      loss += lse - logits(i, y);
      Eigen::Index arg;
      logits.row(i).maxCoeff(&arg);
      correct += arg == y;
    }
    row.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
    row.loss = loss / static_cast<double>(items.size());
  };
  ProbeResult out;
  score(center_eval, out.center);
  score(random_eval, out.random);
  score(boundary_eval, out.boundary);
  return out;
}

/* ------------------------------------------------------------------------- */
/* Diagnostics report                                                        */
/* ------------------------------------------------------------------------- */

struct DiagnosticsReport {
  double lipschitz_bound = 0.0;
  double max_overlap = 0.0;
  double kappa = 0.25;
  double delta_max_bound = 0.0;
  std::size_t n = 0;
  double delta_conf = 0.05;
  double sigma_dep = 0.5;
  double sampling_term = 0.0;
  BoundaryMass boundary_mass;
  ProbeResult probe;
  StabilityReport stability;
};

/// Evaluates every computable bound term on the first pre-training batch
/// (inter pairs plus the epoch-0 intra pairs) under the given model.
inline DiagnosticsReport diagnose(const Dataset& ds, const Prepared& p, const MixingPlan& plan,
                                  const ModelState& model, const RunConfig& c) {
  const PretrainConfig pc = pretrain_config(c);
  const auto pools = intra_pools(ds.sources, p.boundaries, pc.intra_pool, pc.n_pairs);
  const auto intra = sample_intra_pairs(pools, pc.n_pairs, stage_seed(pc.seed, "intra", 0));
  std::vector<NodePair> pairs = plan.inter;
  pairs.insert(pairs.end(), intra.begin(), intra.end());

  Rng lambda_rng(stage_seed(pc.seed, "lambda", 0));
  std::vector<StabilityPair> stability_pairs;
  std::vector<SubgraphNodes> node_sets;
  std::vector<SparseMatrix> adjs;
  for (const auto& pr : pairs) {
    auto a = extract_ego(ds.sources[static_cast<std::size_t>(pr.domain_a)], pr.node_a, c.hops,
                         p.aligned[static_cast<std::size_t>(pr.domain_a)]);
    auto b = extract_ego(ds.sources[static_cast<std::size_t>(pr.domain_b)], pr.node_b, c.hops,
                         p.aligned[static_cast<std::size_t>(pr.domain_b)]);
    const double lambda = pc.lambda.draw(lambda_rng);
    adjs.push_back(normalized_adjacency(a));
    adjs.push_back(normalized_adjacency(b));
    adjs.push_back(normalized_adjacency(mix_subgraphs(a, b, lambda, ds.sources.size())));
    node_sets.push_back({a.source_domain, {a.nodes_global.begin(), a.nodes_global.end()}});
    node_sets.push_back({b.source_domain, {b.nodes_global.begin(), b.nodes_global.end()}});
    stability_pairs.push_back({std::move(a), std::move(b), lambda});
  }

  DiagnosticsReport r;
  r.lipschitz_bound = lipschitz_upper(model.encoder, adjs);
  r.kappa = c.kappa;
  r.max_overlap = max_overlap(node_sets);
  r.delta_max_bound = delta_max_bound(node_sets, c.kappa);
  r.n = pairs.size();
  r.delta_conf = c.delta_conf;
  r.sigma_dep = sigma_dep(r.n, r.delta_max_bound);
  r.sampling_term = sampling_term(r.n, r.delta_max_bound, c.delta_conf);
  r.boundary_mass = boundary_mass(p.boundaries, ds.sources);
  r.probe = ambiguity_probe(ds.sources, p, c, stage_seed(c.seed, "probe"));
  r.stability = stability_check(model.encoder, stability_pairs, r.lipschitz_bound);
  return r;
}

inline nlohmann::ordered_json report_to_json(const DiagnosticsReport& r) {
  nlohmann::ordered_json j;
  j["lipschitz_bound"] = r.lipschitz_bound;
  j["max_overlap"] = r.max_overlap;
  j["kappa"] = r.kappa;
  j["delta_max_bound"] = r.delta_max_bound;
  j["n"] = r.n;
  j["delta_conf"] = r.delta_conf;
  j["sigma_dep"] = r.sigma_dep;
  j["sampling_term"] = r.sampling_term;
  j["boundary_mass"] = {{"per_domain", r.boundary_mass.per_domain}, {"min", r.boundary_mass.minimum}};
  auto row = [](const ProbeRow& p) {
    return nlohmann::ordered_json{{"accuracy", p.accuracy}, {"loss", p.loss}, {"count", p.count}};
  };
  j["probe_accuracies"] = {{"center", row(r.probe.center)},
                           {"random", row(r.probe.random)},
                           {"boundary", row(r.probe.boundary)}};
  j["stability"] = {{"pairs", r.stability.pairs},
                    {"violations", r.stability.violations},
                    {"min_slack", r.stability.pairs ? r.stability.min_slack : 0.0},
                    {"max_ratio", r.stability.max_ratio}};
  j["not_computed"] = {"W1(P, R*)", "eps_struct", "eps_align", "C", "d_edit", "L_loss"};
  return j;
}

}  // namespace mdgmix
