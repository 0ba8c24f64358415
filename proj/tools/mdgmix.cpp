// mdgmix command-line front end.
//
// Every subcommand reads the run configuration from --config (JSON) and lets
// individual fields be overridden by flags of the same name (underscores may
// be written as dashes). Exit codes: 0 success, 1 invalid input, 2 runtime
// failure.
#include "mdgmix/mdgmix.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

using namespace mdgmix;
using Json = nlohmann::json;

std::string flag_name(const std::string& field) {
  std::string s = field;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

/// Raw override strings keyed by field name, filled by CLI11.
struct Overrides {
  std::map<std::string, std::string> values;

  template <class Cfg>
  void add_flags(CLI::App* app, Cfg defaults, const std::string& group) {
    visit_fields(defaults, [&](const char* name, auto& field) {
      std::ostringstream help;
      help << "override " << name << " (default " << Json(field).dump() << ")";
      app->add_option(flag_name(name), values[name], help.str())->group(group);
    });
  }

  /// Applies the flags given on the command line onto `base`.
  Json apply(Json base) const {
    for (const auto& [name, text] : values) {
      if (text.empty()) continue;
      const auto& current = base[name];
      try {
        if (current.is_string())
          base[name] = text;
        else if (current.is_boolean())
          base[name] = text == "1" || text == "true" || text == "on";
        else if (current.is_number_unsigned())
          base[name] = static_cast<std::uint64_t>(std::stoull(text));
        else if (current.is_number_integer())
          base[name] = std::stoll(text);
        else
          base[name] = std::stod(text);
      } catch (const std::exception&) {
        throw ValidationError("flag " + flag_name(name) + ": cannot parse \"" + text + "\"");
      }
    }
    return base;
  }
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
}

struct Common {
  std::string config_path;
  std::string data_path;
  std::string out_path;
  Overrides overrides;

  RunConfig config() const {
    Json base = Json::parse(config_to_json(RunConfig{}).dump());
    if (!config_path.empty()) {
      const Json file = read_json_file(config_path);
      if (!file.is_object()) throw ValidationError(config_path + ": expected a JSON object");
      for (const auto& [k, v] : file.items()) base[k] = v;
    }
    return config_from_json(overrides.apply(base));
  }
};

void add_common(CLI::App* app, Common& c, bool needs_data) {
  app->add_option("--config", c.config_path, "run configuration JSON")->check(CLI::ExistingFile);
  auto* data = app->add_option("--data", c.data_path, "dataset manifest (dataset.json)")->check(CLI::ExistingFile);
  if (needs_data) data->required();
  c.overrides.add_flags(app, RunConfig{}, "Config overrides");
}

/// Writes to --out when given, otherwise stdout.
template <class F>
void emit(const std::string& path, bool append, F write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  write(out);
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError(flag + ": cannot parse \"" + item + "\"");
    }
  }
  if (out.empty()) throw ValidationError(flag + ": empty list");
  return out;
}

ModelState load_or_train(const std::string& model_path, const Dataset& ds, const Prepared& p, const RunConfig& cfg) {
  if (!model_path.empty()) {
    ModelState s = load_checkpoint(std::filesystem::path(model_path));
    if (s.encoder.w1.rows() != cfg.pca_dim)
      throw DimensionError(model_path + ": encoder input width " + std::to_string(s.encoder.w1.rows()) +
                           " != pca_dim " + std::to_string(cfg.pca_dim));
    return s;
  }
  return run_pretrain(ds, p, plan_mixing(p, cfg), cfg).state;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-domain graph pre-training with boundary subgraph mixing"};
  app.require_subcommand(1);

  // gen-synth
  Common gen;
  Overrides synth_flags;
  std::string spec_path;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("gen-synth", "write a seeded synthetic multi-domain dataset");
  gen_cmd->add_option("--out", gen.out_path, "output directory")->required();
  gen_cmd->add_option("--spec", spec_path, "synthetic spec JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  synth_flags.add_flags(gen_cmd, SynthSpec{}, "Spec overrides");

  Common align, bnd, mix, pre, adp, ev, diag, red;
  auto* align_cmd = app.add_subcommand("align", "project every domain to the shared width and write centers");
  add_common(align_cmd, align, true);
  align_cmd->add_option("--out", align.out_path, "output directory")->required();

  auto* bnd_cmd = app.add_subcommand("boundaries", "select boundary nodes per source domain (JSON)");
  add_common(bnd_cmd, bnd, true);
  bnd_cmd->add_option("--out", bnd.out_path, "output JSON (default stdout)");

  auto* mix_cmd = app.add_subcommand("mix", "build the first mixed batch and dump each subgraph to a directory");
  add_common(mix_cmd, mix, true);
  mix_cmd->add_option("--out", mix.out_path, "output directory")->required();

  std::string pre_log;
  auto* pre_cmd = app.add_subcommand("pretrain", "pre-train the encoder and write a checkpoint");
  add_common(pre_cmd, pre, true);
  pre_cmd->add_option("--out", pre.out_path, "checkpoint path")->required();
  pre_cmd->add_option("--log", pre_log, "per-epoch loss log (JSON lines)");

  std::string adp_model;
  std::size_t adp_repeat = 0;
  auto* adp_cmd = app.add_subcommand("adapt", "fit the prompt weights for one sampled few-shot task (JSON)");
  add_common(adp_cmd, adp, true);
  adp_cmd->add_option("--model", adp_model, "checkpoint")->required()->check(CLI::ExistingFile);
  adp_cmd->add_option("--repeat", adp_repeat, "which label sampling to use");
  adp_cmd->add_option("--out", adp.out_path, "output JSON (default stdout)");

  std::string ev_model;
  auto* ev_cmd = app.add_subcommand("eval", "adapt and evaluate over repeated label samplings (JSON lines)");
  add_common(ev_cmd, ev, true);
  ev_cmd->add_option("--model", ev_model, "checkpoint")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--out", ev.out_path, "append JSON lines here (default stdout)");

  std::string diag_model;
  auto* diag_cmd = app.add_subcommand("diagnose", "compute bound terms, stability check and ambiguity probe (JSON)");
  add_common(diag_cmd, diag, true);
  diag_cmd->add_option("--model", diag_model, "checkpoint (default: pre-train first)")->check(CLI::ExistingFile);
  diag_cmd->add_option("--out", diag.out_path, "output JSON (default stdout)");

  std::string fractions_text = "0,0.5,0.9", seeds_text = "0";
  auto* red_cmd = app.add_subcommand("redundancy", "accuracy versus random source-node drop (CSV)");
  add_common(red_cmd, red, true);
  red_cmd->add_option("--fractions", fractions_text, "comma-separated drop fractions");
  red_cmd->add_option("--seeds", seeds_text, "comma-separated seeds");
  red_cmd->add_option("--out", red.out_path, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (*gen_cmd) {
    Json base = Json::parse(detail::fields_to_json(SynthSpec{}).dump());
    if (!spec_path.empty())
      for (const auto& [k, v] : read_json_file(spec_path).items()) base[k] = v;
    const SynthSpec spec = synth_spec_from_json(synth_flags.apply(base));
    const SynthData data = gen_synth(spec, gen_seed);
    for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
    write_synth(data, spec, gen_seed, gen.out_path);
    return 0;
  }

  auto load = [](const Common& c) { return std::make_pair(c.config(), load_dataset(c.data_path)); };

  if (*align_cmd) {
    const auto [cfg, ds] = load(align);
    std::filesystem::create_directories(align.out_path);
    const std::filesystem::path dir(align.out_path);
    const Prepared p = prepare_sources(ds, cfg);
    Matrix centers(static_cast<Eigen::Index>(p.centers.size()), cfg.pca_dim);
    for (std::size_t k = 0; k < p.aligned.size(); ++k) {
      io::write_matrix(dir / (ds.source_names[k] + ".aligned"), p.aligned[k].matrix);
      centers.row(static_cast<Eigen::Index>(k)) = p.centers[k].vector.transpose();
    }
    io::write_matrix(dir / "centers.feat", centers);
    if (ds.target) io::write_matrix(dir / (ds.target_name + ".aligned"), prepare_target(ds, cfg).features);
    return 0;
  }

  if (*bnd_cmd) {
    const auto [cfg, ds] = load(bnd);
    const Prepared p = prepare_sources(ds, cfg);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& b : p.boundaries)
      j.push_back({{"domain", ds.source_names[static_cast<std::size_t>(b.domain_id)]},
                   {"node_ids", b.node_ids},
                   {"confidences", b.confidences},
                   {"used_fallback", b.used_fallback}});
    emit(bnd.out_path, false, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    return 0;
  }

  if (*mix_cmd) {
    const auto [cfg, ds] = load(mix);
    const Prepared p = prepare_sources(ds, cfg);
    const MixingPlan plan = plan_mixing(p, cfg);
    if (plan.shortfall) std::cerr << "warning: only " << plan.inter.size() << " of " << cfg.n_pairs << " pairs qualify\n";
    const PretrainConfig pc = pretrain_config(cfg);
    const auto intra = sample_intra_pairs(intra_pools(ds.sources, p.boundaries, pc.intra_pool, pc.n_pairs), pc.n_pairs,
                                          stage_seed(pc.seed, "intra", 0));
    Rng lambda_rng(stage_seed(pc.seed, "lambda", 0));
    const MixBatch batch = build_batch(plan.inter, intra, ds.sources, p.aligned, cfg.hops, pc.lambda, lambda_rng);
    auto describe = [](const MixedSubgraph& m) {
      return nlohmann::ordered_json{{"domain_a", m.provenance.domain_a}, {"node_a", m.provenance.node_a},
                                    {"domain_b", m.provenance.domain_b}, {"node_b", m.provenance.node_b},
                                    {"lambda", m.provenance.lambda},     {"num_nodes", m.num_nodes},
                                    {"num_edges", m.edges.size()},       {"coarse_label", m.coarse_label},
                                    {"mix_label", std::vector<double>(m.mix_label.data(), m.mix_label.data() + m.mix_label.size())}};
    };
    // <kind>_<i>.edges / .feat / .json per subgraph, plus batch.json as an index.
    const std::filesystem::path dir(mix.out_path);
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json index;
    index["shortfall"] = plan.shortfall;
    auto dump = [&](const MixedSubgraph& m, const std::string& stem, std::optional<double> similarity) {
      std::vector<Edge> edges;
      for (auto [u, v] : m.edges) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
      io::write_edge_list(dir / (stem + ".edges"), edges);
      io::write_matrix(dir / (stem + ".feat"), m.features);
      auto d = describe(m);
      if (similarity) d["similarity"] = *similarity;
      std::ofstream(dir / (stem + ".json")) << d.dump() << '\n';
      d["files"] = stem;
      return d;
    };
    index["inter"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < batch.inter.size(); ++i)
      index["inter"].push_back(dump(batch.inter[i], "inter_" + std::to_string(i), plan.inter[i].similarity));
    index["intra"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < batch.intra.size(); ++i)
      index["intra"].push_back(dump(batch.intra[i], "intra_" + std::to_string(i), std::nullopt));
    std::ofstream(dir / "batch.json") << index.dump(2) << '\n';
    return 0;
  }

  if (*pre_cmd) {
    const auto [cfg, ds] = load(pre);
    const Prepared p = prepare_sources(ds, cfg);
    const MixingPlan plan = plan_mixing(p, cfg);
    if (plan.shortfall) std::cerr << "warning: only " << plan.inter.size() << " of " << cfg.n_pairs << " pairs qualify\n";
    PretrainResult r = run_pretrain(ds, p, plan, cfg);
    save_checkpoint(std::filesystem::path(pre.out_path), r.state);
    if (!pre_log.empty())
      emit(pre_log, false, [&](std::ostream& os) {
        for (const auto& e : r.log)
          os << nlohmann::ordered_json{{"epoch", e.epoch},
                                       {"loss_dis", e.loss_dis},
                                       {"loss_fine", e.loss_fine},
                                       {"gate_fraction_inter", e.gate_fraction_inter},
                                       {"gate_fraction_all", e.gate_fraction_all}}
                    .dump()
             << '\n';
      });
    return 0;
  }

  if (*adp_cmd) {
    const auto [cfg, ds] = load(adp);
    const Prepared p = prepare_sources(ds, cfg);
    const ModelState model = load_checkpoint(std::filesystem::path(adp_model));
    const TargetDomain target = prepare_target(ds, cfg);
    const std::uint64_t seed = stage_seed(cfg.seed, "eval", adp_repeat);
    const FewShotTask task = sample_task(target.graph, cfg.shots, task_mode(cfg), seed);
    const std::uint64_t before = encoder_hash(model.encoder);
    const AdaptResult r = adapt(model.encoder, target, p.centers, task, adapt_config(cfg));
    if (encoder_hash(model.encoder) != before) throw Error("encoder parameters changed during adaptation");
    nlohmann::ordered_json j;
    j["target"] = ds.target_name;
    j["seed"] = seed;
    j["alpha"] = std::vector<double>(r.weights.alpha.data(), r.weights.alpha.data() + r.weights.alpha.size());
    j["trainable_parameters"] = r.trainable_parameters;
    j["loss_first"] = r.loss_log.empty() ? 0.0 : r.loss_log.front();
    j["loss_last"] = r.loss_log.empty() ? 0.0 : r.loss_log.back();
    j["accuracy"] = evaluate(model.encoder, r.weights, target, p.centers, task, cfg.hops);
    emit(adp.out_path, false, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    return 0;
  }

  if (*ev_cmd) {
    const auto [cfg, ds] = load(ev);
    const Prepared p = prepare_sources(ds, cfg);
    const ModelState model = load_checkpoint(std::filesystem::path(ev_model));
    const auto records = run_eval(model.encoder, prepare_target(ds, cfg), p.centers, ds.target_name, cfg);
    emit(ev.out_path, true, [&](std::ostream& os) {
      for (const auto& r : records) os << metrics_line(r) << '\n';
    });
    std::vector<double> acc;
    for (const auto& r : records) acc.push_back(r.accuracy);
    const auto ms = mean_std(acc);
    std::cerr << "accuracy " << ms.mean << " +- " << ms.std << " over " << acc.size() << " samplings\n";
    return 0;
  }

  if (*diag_cmd) {
    const auto [cfg, ds] = load(diag);
    const Prepared p = prepare_sources(ds, cfg);
    const ModelState model = load_or_train(diag_model, ds, p, cfg);
    const auto report = diagnose(ds, p, plan_mixing(p, cfg), model, cfg);
    emit(diag.out_path, false, [&](std::ostream& os) { os << report_to_json(report).dump(2) << '\n'; });
    return 0;
  }

  if (*red_cmd) {
    const auto [cfg, ds] = load(red);
    const auto fractions = parse_list(fractions_text, "--fractions");
    std::vector<std::uint64_t> seeds;
    for (double s : parse_list(seeds_text, "--seeds")) {
      if (s < 0 || s != std::floor(s)) throw ValidationError("--seeds: expected non-negative integers");
      seeds.push_back(static_cast<std::uint64_t>(s));
    }
    const auto rows = redundancy_experiment(ds, cfg, fractions, seeds);
    emit(red.out_path, false, [&](std::ostream& os) {
      os << "fraction,mean,std\n";
      for (const auto& r : rows) os << r.fraction << ',' << r.mean << ',' << r.std << '\n';
    });
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mdgmix::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
