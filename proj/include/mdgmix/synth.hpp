// Seeded multi-domain synthetic graphs: stochastic block model topology with
// Gaussian class features shifted by a per-domain offset, plus a planted
// cluster of nodes whose features sit at the midpoint of all domain offsets.
#pragma once

#include "mdgmix/config.hpp"
#include "mdgmix/io.hpp"

#include <nlohmann/json.hpp>

namespace mdgmix {

struct SynthSpec {
  int num_domains = 3;  // source domains; one extra target domain is generated
  int nodes_per_domain = 300;
  int classes_per_domain = 3;
  double intra_edge_prob = 0.05;
  double inter_block_prob = 0.005;
  int feature_dim = 32;
  double domain_center_separation = 4.0;
  double boundary_cluster_fraction = 0.3;
  double class_separation = 2.0;
  double noise_std = 1.0;
  bool with_target = true;

  bool operator==(const SynthSpec&) const = default;
};

template <class Spec, class F>
  requires std::same_as<std::remove_const_t<Spec>, SynthSpec>
void visit_fields(Spec& s, F&& f) {
  f("num_domains", s.num_domains);
  f("nodes_per_domain", s.nodes_per_domain);
  f("classes_per_domain", s.classes_per_domain);
  f("intra_edge_prob", s.intra_edge_prob);
  f("inter_block_prob", s.inter_block_prob);
  f("feature_dim", s.feature_dim);
  f("domain_center_separation", s.domain_center_separation);
  f("boundary_cluster_fraction", s.boundary_cluster_fraction);
  f("class_separation", s.class_separation);
  f("noise_std", s.noise_std);
  f("with_target", s.with_target);
}

inline void validate(const SynthSpec& s) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0,1]");
  };
  prob(s.intra_edge_prob, "intra_edge_prob");
  prob(s.inter_block_prob, "inter_block_prob");
  prob(s.boundary_cluster_fraction, "boundary_cluster_fraction");
  if (!(s.domain_center_separation > 0)) throw ValidationError("domain_center_separation must be > 0");
  if (s.num_domains < 2) throw ValidationError("num_domains must be >= 2");
  if (s.nodes_per_domain < 1) throw ValidationError("nodes_per_domain must be >= 1");
  if (s.classes_per_domain < 1 || s.classes_per_domain > s.nodes_per_domain)
    throw ValidationError("classes_per_domain must lie in [1, nodes_per_domain]");
  if (s.feature_dim < 1) throw ValidationError("feature_dim must be >= 1");
  if (!(s.noise_std >= 0) || !(s.class_separation >= 0))
    throw ValidationError("noise_std and class_separation must be >= 0");
}

struct SynthData {
  std::vector<DomainGraph> sources;
  std::optional<DomainGraph> target;
  std::vector<std::vector<NodeId>> planted;  // planted midpoint-cluster nodes, per domain (target last)
  std::vector<std::string> warnings;
};

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s = detail::fields_from_json<SynthSpec>(j, "synth spec");
  validate(s);
  return s;
}

inline SynthData gen_synth(const SynthSpec& spec, std::uint64_t seed) {
  validate(spec);
  const int total = spec.num_domains + (spec.with_target ? 1 : 0);
  const auto n = static_cast<std::size_t>(spec.nodes_per_domain);
  const auto D = static_cast<Eigen::Index>(spec.feature_dim);
  Rng shared(stage_seed(seed, "synth-shared"));
  std::normal_distribution<double> normal(0.0, 1.0);

  // Decaying per-coordinate scale keeps the covariance spectrum well separated,
  // so independent per-domain projections pick comparable directions.
  Vector scale(D);
  for (Eigen::Index j = 0; j < D; ++j) scale(j) = std::pow(0.25, static_cast<double>(j) / static_cast<double>(D));

  Matrix class_means(spec.classes_per_domain, D);
  for (Eigen::Index c = 0; c < class_means.rows(); ++c)
    for (Eigen::Index j = 0; j < D; ++j) class_means(c, j) = spec.class_separation * normal(shared);
  Matrix offsets(total, D);
  for (int k = 0; k < total; ++k) {
    Vector u(D);
    for (Eigen::Index j = 0; j < D; ++j) u(j) = normal(shared);
    offsets.row(k) = spec.domain_center_separation * u.normalized().transpose();
  }
  const RowVector midpoint = offsets.colwise().mean();

  SynthData out;
  for (int k = 0; k < total; ++k) {
    Rng rng(stage_seed(seed, "synth-domain", static_cast<std::uint64_t>(k)));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.classes_per_domain));
    std::shuffle(labels.begin(), labels.end(), rng);

    std::vector<NodeId> order(n);
    std::iota(order.begin(), order.end(), NodeId{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_planted = static_cast<std::size_t>(std::floor(spec.boundary_cluster_fraction * static_cast<double>(n)));
    std::vector<NodeId> planted(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_planted));
    std::sort(planted.begin(), planted.end());
    std::vector<char> is_planted(n, 0);
    for (NodeId v : planted) is_planted[v] = 1;

    Matrix x(static_cast<Eigen::Index>(n), D);
    for (std::size_t i = 0; i < n; ++i) {
      const RowVector base = is_planted[i] ? midpoint : RowVector(offsets.row(k));
      for (Eigen::Index j = 0; j < D; ++j)
        x(static_cast<Eigen::Index>(i), j) =
            (base(j) + class_means(labels[i], j) + spec.noise_std * normal(rng)) * scale(j);
    }

    // Stored as f32 on disk; round now so in-memory and reloaded data agree.
    x = x.cast<float>().cast<double>();

    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v) {
        const double p = labels[u] == labels[v] ? spec.intra_edge_prob : spec.inter_block_prob;
        if (uniform01(rng) < p) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
      }
    auto g = build_graph(k, n, edges, std::move(x), std::move(labels));
    std::size_t isolated = 0;
    for (NodeId v = 0; v < g.num_nodes; ++v) isolated += g.degree(v) == 0;
    if (g.num_edges() == 0)
      out.warnings.push_back("domain " + std::to_string(k) + " has no edges");
    else if (isolated * 2 > n)
      out.warnings.push_back("domain " + std::to_string(k) + " has " + std::to_string(isolated) + " isolated nodes");

    out.planted.push_back(std::move(planted));
    if (k < spec.num_domains)
      out.sources.push_back(std::move(g));
    else
      out.target = std::move(g);
  }
  return out;
}

/// Writes domain_<k>.{edges,feat,labels} and dataset.json into `dir`.
inline void write_synth(const SynthData& data, const SynthSpec& spec, std::uint64_t seed,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["spec"] = detail::fields_to_json(spec);
  auto entry = [&](const DomainGraph& g, const std::vector<NodeId>& planted) {
    const std::string stem = "domain_" + std::to_string(g.domain_id);
    const auto edges = edge_list(g);
    io::write_edge_list(dir / (stem + ".edges"), edges);
    io::write_matrix(dir / (stem + ".feat"), g.features_raw);
    io::write_labels(dir / (stem + ".labels"), *g.labels);
    return nlohmann::ordered_json{{"name", stem},
                          {"edges", stem + ".edges"},
                          {"features", stem + ".feat"},
                          {"labels", stem + ".labels"},
                          {"planted_boundary", planted}};
  };
  manifest["sources"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < data.sources.size(); ++k) manifest["sources"].push_back(entry(data.sources[k], data.planted[k]));
  if (data.target) manifest["target"] = entry(*data.target, data.planted.back());
  auto os = io::detail::open_out(dir / "dataset.json", false);
  os << manifest.dump(2) << '\n';
}

}  // namespace mdgmix
