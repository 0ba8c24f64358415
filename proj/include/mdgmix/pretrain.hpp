// Pre-training loop over mixed subgraph batches.
#pragma once

#include "mdgmix/adam.hpp"

namespace mdgmix {

enum class IntraPool { kBoundary, kAllNodes };

struct PretrainConfig {
  int hidden = 256;
  int hops = 1;
  std::size_t n_pairs = 10;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int epochs = 100;
  double grl_beta = 1.0;
  LambdaPolicy lambda;
  IntraPool intra_pool = IntraPool::kBoundary;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss_dis = 0;
  double loss_fine = 0;
  double gate_fraction_inter = 0;
  double gate_fraction_all = 0;
};

struct PretrainResult {
  ModelState state;
  std::vector<EpochLog> log;
};

/// Per-domain intra sampling pools. A boundary pool too small to supply the
/// domain's quota of distinct pairs is replaced by all nodes of that domain.
inline std::vector<std::vector<NodeId>> intra_pools(const std::vector<DomainGraph>& graphs,
                                                    const std::vector<BoundarySet>& boundaries, IntraPool mode,
                                                    std::size_t n_pairs) {
  const auto quota = intra_pair_counts(n_pairs, graphs.size());
  std::vector<std::vector<NodeId>> pools;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    if (mode == IntraPool::kBoundary) {
      const auto& b = boundaries.at(k).node_ids;
      const std::size_t available = b.size() < 2 ? 0 : b.size() * (b.size() - 1) / 2;
      if (available >= quota[k]) {
        pools.push_back(b);
        continue;
      }
    }
    std::vector<NodeId> all(graphs[k].num_nodes);
    std::iota(all.begin(), all.end(), NodeId{0});
    pools.push_back(std::move(all));
  }
  return pools;
}

/// Inter pairs stay fixed; intra pairs are resampled every epoch.
inline PretrainResult pretrain(const std::vector<DomainGraph>& graphs, const std::vector<AlignedFeatures>& aligned,
                               const std::vector<BoundarySet>& boundaries, const std::vector<NodePair>& inter_pairs,
                               const PretrainConfig& cfg) {
  require(!graphs.empty() && graphs.size() == aligned.size(), "pretrain: graphs/aligned mismatch");
  require(cfg.epochs >= 0 && cfg.lr > 0 && cfg.weight_decay >= 0, "pretrain: invalid optimizer settings");
  const auto K = static_cast<int>(graphs.size());
  PretrainResult out;
  out.state = init_model(aligned.front().d(), cfg.hidden, K, cfg.seed);
  out.state.adam.lr = cfg.lr;
  out.state.adam.weight_decay = cfg.weight_decay;
  const auto pools = intra_pools(graphs, boundaries, cfg.intra_pool, cfg.n_pairs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto intra = sample_intra_pairs(pools, cfg.n_pairs, stage_seed(cfg.seed, "intra", static_cast<std::uint64_t>(epoch)));
    Rng lambda_rng(stage_seed(cfg.seed, "lambda", static_cast<std::uint64_t>(epoch)));
    const MixBatch batch = build_batch(inter_pairs, intra, graphs, aligned, cfg.hops, cfg.lambda, lambda_rng);
    const PretrainLoss loss = loss_pretrain(batch, out.state, cfg.grl_beta);
    out.log.push_back({epoch, loss.dis, loss.fine, loss.gate_fraction_inter, loss.gate_fraction_all});
    adam_step(out.state.adam, named_parameters(out.state), loss.grads);
  }
  return out;
}

}  // namespace mdgmix
