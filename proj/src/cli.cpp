// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/cli.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "conde/concepts.hpp"
#include "conde/evaluator.hpp"
#include "conde/io.hpp"
#include "conde/synth.hpp"

namespace conde {

using nlohmann::json;

// ---- library helpers -----------------------------------------------------------------

GraphArchive build_archive(std::span<const Interaction> interactions, std::span<const ItemConceptRecord> concepts,
                           const SplitFractions& fractions, std::uint64_t seed, BuildReport* report) {
  if (interactions.empty()) throw GraphError("no interactions");
  const double total = fractions.train + fractions.valid + fractions.test;
  if (fractions.train <= 0.0 || fractions.valid < 0.0 || fractions.test < 0.0 || std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be non-negative, train > 0, and sum to 1");
  }
  std::vector<std::size_t> order(interactions.size());
  std::iota(order.begin(), order.end(), 0);
  const bool timed = std::all_of(interactions.begin(), interactions.end(), [](const Interaction& i) { return i.timestamp.has_value(); });
  if (timed) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return *interactions[a].timestamp < *interactions[b].timestamp; });
  } else {
    Rng rng(derive_seed(seed, 0x5b1ull));
    shuffle(rng, order);
  }
  const auto n = interactions.size();
  const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n))));
  const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(std::floor(fractions.valid * static_cast<double>(n))));
  std::vector<Interaction> train;
  for (std::size_t i = 0; i < n_train; ++i) train.push_back(interactions[order[i]]);
  GraphArchive archive;
  archive.graph = build_graph(train, concepts, report);
  const auto& g = archive.graph;
  auto held = [&](std::size_t begin, std::size_t end) {
    EvalSplit split;
    std::set<UserItem> seen;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = interactions[order[i]];
      auto u = g.find(NodeKind::kUser, r.user);
      auto m = g.find(NodeKind::kItem, r.item);
      if (!u || !m || g.clicked(*u, *m)) continue;
      if (seen.insert({*u, *m}).second) split.positives.emplace_back(*u, *m);
    }
    split.negatives = sample_eval_negatives(g, split.positives, derive_seed(seed, begin));
    return split;
  };
  archive.splits["valid"] = held(n_train, n_train + n_valid);
  archive.splits["test"] = held(n_train + n_valid, n);
  return archive;
}

json explain_user(const TripartiteGraph& g, const DenoisedSubgraph& sub, const Tensor& user_vec) {
  auto name = [&](const NodeRef& r) -> const std::string& {
    switch (r.kind) {
      case NodeKind::kUser: return g.user_ids()[r.index];
      case NodeKind::kItem: return g.item_ids()[r.index];
      default: return g.concept_texts()[r.index];
    }
  };
  json items = json::array();
  std::size_t next = 0;
  for (std::size_t i = 0; i < sub.items.candidates.size(); ++i) {
    const bool kept = next < sub.items.retained.size() && sub.items.retained[next] == i;
    json item = {{"item", name(sub.items.candidates[i])},
                 {"score", sub.items.scores[i]},
                 {"weight", sub.items.weights[i]},
                 {"retained", kept}};
    if (kept) {
      const HopSelection& hop = sub.neighbors[next];
      json nbrs = json::array();
      std::set<std::uint32_t> keep(hop.retained.begin(), hop.retained.end());
      for (std::size_t j = 0; j < hop.candidates.size(); ++j) {
        nbrs.push_back({{"kind", to_string(hop.candidates[j].kind)},
                        {"name", name(hop.candidates[j])},
                        {"score", hop.scores[j]},
                        {"weight", hop.weights[j]},
                        {"retained", keep.count(static_cast<std::uint32_t>(j)) > 0}});
      }
      item["neighbors"] = std::move(nbrs);
      ++next;
    }
    items.push_back(std::move(item));
  }
  return {{"user", g.user_ids()[sub.user]},
          {"preference", std::vector<double>(user_vec.values().begin(), user_vec.values().end())},
          {"items", std::move(items)}};
}

namespace {

std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

std::string explain_dot(const TripartiteGraph& g, std::span<const DenoisedSubgraph> subs) {
  std::ostringstream os;
  os << "digraph conde {\n  rankdir=LR;\n";
  std::set<std::string> declared;
  auto node = [&](const std::string& id, const char* shape) {
    if (declared.insert(id).second) os << "  " << dot_quote(id) << " [shape=" << shape << "];\n";
  };
  for (const auto& sub : subs) {
    const std::string& u = g.user_ids()[sub.user];
    node(u, "box");
    std::size_t next = 0;
    for (std::size_t i = 0; i < sub.items.candidates.size(); ++i) {
      const bool kept = next < sub.items.retained.size() && sub.items.retained[next] == i;
      const std::string& m = g.item_ids()[sub.items.candidates[i].index];
      node(m, "ellipse");
      os << "  " << dot_quote(u) << " -> " << dot_quote(m) << " [label=" << dot_quote(fixed4(sub.items.scores[i]))
         << (kept ? "" : ", style=dashed, color=gray") << "];\n";
      if (!kept) continue;
      const HopSelection& hop = sub.neighbors[next++];
      for (auto j : hop.retained) {
        const NodeRef& v = hop.candidates[j];
        const std::string& vn = v.kind == NodeKind::kConcept ? g.concept_texts()[v.index] : g.user_ids()[v.index];
        node(vn, v.kind == NodeKind::kConcept ? "note" : "box");
        os << "  " << dot_quote(m) << " -> " << dot_quote(vn) << " [label=" << dot_quote(fixed4(hop.scores[j]))
           << (v.kind == NodeKind::kConcept ? ", color=blue" : ", color=darkgreen") << "];\n";
      }
    }
  }
  os << "}\n";
  return os.str();
}

std::vector<std::pair<std::string, TrainConfig>> sweep_settings(const std::string& axis, const TrainConfig& base,
                                                                const std::vector<std::string>& values) {
  std::vector<std::pair<std::string, TrainConfig>> all;
  if (axis == "n2") {
    for (std::size_t n2 : {6, 10, 20, 30}) {
      TrainConfig c = base;
      c.model.n2 = n2;
      all.emplace_back(std::to_string(n2), c);
    }
  } else if (axis == "G") {
    for (std::size_t k : {2, 4, 6}) {
      TrainConfig c = base;
      c.model.k = k;
      all.emplace_back(std::to_string(k), c);
    }
  } else if (axis == "tau0") {
    for (auto [tau0, eta, label] : {std::tuple{10.0, 2e-4, "10"}, std::tuple{100.0, 5e-4, "100"},
                                    std::tuple{1000.0, 1e-3, "1000"}}) {
      TrainConfig c = base;
      c.tau0 = tau0;
      c.eta = eta;
      all.emplace_back(label, c);
    }
  } else {
    throw std::invalid_argument("unknown sweep axis '" + axis + "' (expected n2, G or tau0)");
  }
  if (values.empty()) return all;
  std::vector<std::pair<std::string, TrainConfig>> picked;
  for (const auto& v : values) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& s) { return s.first == v; });
    if (it == all.end()) throw std::invalid_argument("value '" + v + "' is not on the " + axis + " axis");
    picked.push_back(*it);
  }
  return picked;
}

std::string sweep_table(const std::string& axis, std::span<const SweepRow> rows, std::size_t k) {
  std::ostringstream os;
  const std::string at = "@" + std::to_string(k);
  os << std::left << std::setw(8) << axis << std::right << std::setw(9) << "auc" << std::setw(10) << ("ndcg" + at)
     << std::setw(10) << ("hit" + at) << std::setw(10) << ("map" + at) << std::setw(10) << "seconds" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(8) << r.setting << std::right;
    if (r.test) {
      os << std::fixed << std::setprecision(4) << std::setw(9) << r.test->auc << std::setw(10) << r.test->ndcg
         << std::setw(10) << r.test->hit << std::setw(10) << r.test->map;
    } else {
      os << "  aborted: " << r.error;
    }
    os << std::setprecision(1) << std::setw(10) << r.seconds << '\n';
  }
  return os.str();
}

// ---- commands ------------------------------------------------------------------------

namespace {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string(what) + " is required");
  if (!std::filesystem::is_regular_file(path)) throw ValidationError(std::string(what) + " not found: " + path);
}

void require_out(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string(what) + " is required");
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw ValidationError(std::string(what) + ": directory does not exist: " + parent.string());
  }
}

struct TrainFlags {
  TrainConfig cfg;
  std::string variant = "denoise-1+2";
  std::string concept_vectors;
  std::string config;
  CLI::App* app = nullptr;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  TrainConfig& c = f.cfg;
  f.app = app;
  app->add_option("--dim", c.model.dim, "embedding size d")->capture_default_str();
  app->add_option("--n1", c.model.n1, "retained one-hop items")->capture_default_str();
  app->add_option("--n2", c.model.n2, "retained two-hop neighbors per item")->capture_default_str();
  app->add_option("--k,--G", c.model.k, "subgraphs per user")->capture_default_str();
  app->add_option("--lambda", c.model.lambda, "L2 coefficient")->capture_default_str();
  app->add_flag("--two-hop-users,--two_hop_users", c.model.two_hop_users, "add co-clicking users as two-hop candidates");
  app->add_option("--epochs", c.epochs)->capture_default_str();
  app->add_option("--batch-size,--batch_size", c.batch_size, "users per minibatch")->capture_default_str();
  app->add_option("--lr", c.lr, "learning rate")->capture_default_str();
  app->add_option("--tau0", c.tau0, "initial temperature")->capture_default_str();
  app->add_option("--eta", c.eta, "temperature anneal rate")->capture_default_str();
  app->add_option("--p", c.p, "neighbors sampled per node")->capture_default_str();
  app->add_option("--optimizer", c.optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  app->add_option("--seed", c.seed)->capture_default_str();
  app->add_flag("--freeze-concepts,--freeze_concepts", c.freeze_concepts, "keep concept embeddings fixed");
  app->add_option("--concept-vectors,--concept_vectors", f.concept_vectors, "TSV concept vectors (implies freezing)");
  app->add_option("--patience", c.patience, "early-stopping patience in epochs")->capture_default_str();
  app->add_option("--k-metrics,--k_metrics", c.k_metrics, "cutoff K for top-K metrics")->capture_default_str();
  app->add_option("--config", f.config, "TOML-style key = value file; flags override it");
}

TrainHooks hooks_for(const TrainFlags& f, const TripartiteGraph& g) {
  TrainHooks h;
  if (!f.concept_vectors.empty()) {
    h.on_init = [&f, &g](ModelParams& p) {
      const auto matched = load_concept_vectors(p, g, f.concept_vectors);
      spdlog::info("loaded {} concept vectors", matched);
    };
  }
  return h;
}

// Keys name long options of the subcommand; options given on the command line win.
void apply_config(CLI::App* app, const std::string& path) {
  require_file(path, "--config");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::ParseError& e) {
    throw ValidationError("--config: " + std::string(e.what()));
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string key = item.fullname();
    CLI::Option* opt = nullptr;
    try {
      opt = app->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw ValidationError("--config: unknown key '" + key + "'");
    }
    if (key == "config") throw ValidationError("--config: nested config files are not supported");
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    try {
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw ValidationError("--config: " + key + ": " + e.what());
    }
  }
}

void validate_train(TrainFlags& f) {
  if (!f.config.empty()) apply_config(f.app, f.config);
  f.cfg.variant = parse_variant(f.variant);
  f.cfg.validate();
  if (!f.concept_vectors.empty()) require_file(f.concept_vectors, "--concept-vectors");
}

json metrics_to_json(const std::optional<MetricSet>& m) {
  if (!m) return nullptr;
  return {{"auc", m->auc}, {"ndcg", m->ndcg}, {"hit", m->hit}, {"map", m->map}, {"users", m->users}};
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"conde: concept-aware denoising graph recommender"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // synth
  SynthConfig sc;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a planted-topic dataset");
  synth->add_option("--users", sc.users)->capture_default_str();
  synth->add_option("--items", sc.items)->capture_default_str();
  synth->add_option("--concepts", sc.concepts)->capture_default_str();
  synth->add_option("--topics", sc.topics)->capture_default_str();
  synth->add_option("--rho", sc.rho, "noise click probability")->capture_default_str();
  synth->add_option("--min-degree,--min_degree", sc.min_degree)->capture_default_str();
  synth->add_option("--max-degree,--max_degree", sc.max_degree)->capture_default_str();
  synth->add_option("--two-topic-prob,--two_topic_prob", sc.two_topic_prob)->capture_default_str();
  synth->add_option("--true-concepts,--true_concepts", sc.true_concepts)->capture_default_str();
  synth->add_option("--noise-concepts,--noise_concepts", sc.noise_concepts)->capture_default_str();
  synth->add_option("--zipf", sc.zipf)->capture_default_str();
  synth->add_option("--valid-per-user,--valid_per_user", sc.valid_per_user)->capture_default_str();
  synth->add_option("--test-per-user,--test_per_user", sc.test_per_user)->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();

  // build-graph
  std::string bg_inter, bg_concepts, bg_out;
  SplitFractions fractions;
  std::uint64_t bg_seed = 1;
  auto* build = app.add_subcommand("build-graph", "build a graph archive from TSV files");
  build->add_option("--interactions", bg_inter, "user \\t item [\\t timestamp]")->required();
  build->add_option("--concepts-tsv", bg_concepts, "item \\t concept \\t weight")->required();
  build->add_option("--out", bg_out)->required();
  build->add_option("--train-fraction", fractions.train)->capture_default_str();
  build->add_option("--valid-fraction", fractions.valid)->capture_default_str();
  build->add_option("--test-fraction", fractions.test)->capture_default_str();
  build->add_option("--seed", bg_seed)->capture_default_str();

  // concepts
  std::string cp_corpus, cp_inventory, cp_stop, cp_out;
  double cp_threshold = 0.0;
  auto* concepts = app.add_subcommand("concepts", "extract weighted item-concept edges from item text");
  concepts->add_option("--corpus", cp_corpus, "JSON lines {item_id, text}")->required();
  concepts->add_option("--inventory", cp_inventory, "one concept phrase per line")->required();
  concepts->add_option("--stop-list", cp_stop, "one stop word per line");
  concepts->add_option("--threshold", cp_threshold, "minimum TF-IDF score")->capture_default_str();
  concepts->add_option("--out", cp_out)->required();

  // train
  TrainFlags tf;
  std::string tr_graph, tr_ckpt, tr_csv, tr_tau;
  auto* trainc = app.add_subcommand("train", "train a model");
  trainc->add_option("--graph", tr_graph)->required();
  trainc->add_option("--out-checkpoint", tr_ckpt)->required();
  trainc->add_option("--metrics-csv", tr_csv);
  trainc->add_option("--tau-trace", tr_tau, "CSV of the temperature per minibatch");
  trainc->add_option("--variant", tf.variant)->capture_default_str();
  add_train_flags(trainc, tf);

  // evaluate
  std::string ev_graph, ev_ckpt, ev_split = "test", ev_report, ev_users, ev_variant = "denoise-1+2";
  std::size_t ev_k = 5, ev_lt = 50;
  std::uint64_t ev_seed = 1;
  auto* evaluate = app.add_subcommand("evaluate", "rank held-out clicks with a checkpoint");
  evaluate->add_option("--graph", ev_graph)->required();
  evaluate->add_option("--checkpoint", ev_ckpt)->required();
  evaluate->add_option("--split", ev_split)->capture_default_str();
  evaluate->add_option("--k-metrics", ev_k)->capture_default_str();
  evaluate->add_option("--longtail-threshold", ev_lt)->capture_default_str();
  evaluate->add_option("--report", ev_report, "JSON report path");
  evaluate->add_option("--user-csv", ev_users, "per-user detail CSV");
  evaluate->add_option("--variant", ev_variant)->capture_default_str();
  evaluate->add_option("--seed", ev_seed, "seed for random selection variants")->capture_default_str();

  // ablate
  TrainFlags af;
  std::string ab_graph, ab_report, ab_world;
  std::vector<std::string> ab_variants;
  std::size_t ab_lt = 50;
  auto* ablate = app.add_subcommand("ablate", "train and test denoising variants");
  ablate->add_option("--graph", ab_graph)->required();
  ablate->add_option("--variant", ab_variants, "variants to run (default: all six)")->delimiter(',');
  ablate->add_option("--longtail-threshold", ab_lt)->capture_default_str();
  ablate->add_option("--report", ab_report, "JSON report path");
  ablate->add_option("--world", ab_world, "synth output directory; adds denoising precision");
  add_train_flags(ablate, af);

  // sweep
  TrainFlags sf;
  std::string sw_graph, sw_axis, sw_out;
  std::vector<std::string> sw_values;
  auto* sweep = app.add_subcommand("sweep", "train one setting per axis value");
  sweep->add_option("--graph", sw_graph)->required();
  sweep->add_option("--axis", sw_axis)->required()->check(CLI::IsMember({"n2", "G", "tau0"}));
  sweep->add_option("--values", sw_values, "subset of the axis values")->delimiter(',');
  sweep->add_option("--out", sw_out, "table path (text)");
  sweep->add_option("--variant", sf.variant)->capture_default_str();
  add_train_flags(sweep, sf);

  // explain
  std::string ex_graph, ex_ckpt, ex_users, ex_json, ex_dot;
  auto* explain = app.add_subcommand("explain", "export denoised subgraphs of selected users");
  explain->add_option("--graph", ex_graph)->required();
  explain->add_option("--checkpoint", ex_ckpt)->required();
  explain->add_option("--users", ex_users, "comma-separated user ids")->required();
  explain->add_option("--json", ex_json, "JSON output path");
  explain->add_option("--dot", ex_dot, "DOT output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*synth) {
      sc.validate();
      require_out(synth_out, "--out");
      if (std::filesystem::exists(synth_out) && !std::filesystem::is_directory(synth_out)) {
        throw ValidationError("--out exists and is not a directory");
      }
      const SynthOutput out = generate(sc);
      write_synth(out, sc, synth_out);
      const json summary = world_summary(out, sc);
      spdlog::info("synth: {} clicks, noise fraction {:.4f}, {:.1f}% items under 10 clicks", summary["clicks"].get<std::size_t>(),
                   summary["noise_fraction"].get<double>(), 100.0 * summary["items_under_10_clicks"].get<double>());
      return 0;
    }
    if (*build) {
      require_file(bg_inter, "--interactions");
      require_file(bg_concepts, "--concepts-tsv");
      require_out(bg_out, "--out");
      const auto inter = read_interactions_tsv(bg_inter);
      const auto ic = read_item_concepts_tsv(bg_concepts);
      BuildReport rep;
      const GraphArchive archive = build_archive(inter, ic, fractions, bg_seed, &rep);
      archive.graph.validate();
      save_graph(archive, bg_out);
      spdlog::info("graph: {} users, {} items, {} concepts; {} duplicate clicks, {} duplicate tags, {} dropped tags",
                   archive.graph.num_users(), archive.graph.num_items(), archive.graph.num_concepts(),
                   rep.duplicate_clicks, rep.duplicate_tags, rep.dropped_concept_records);
      return 0;
    }
    if (*concepts) {
      require_file(cp_corpus, "--corpus");
      require_file(cp_inventory, "--inventory");
      if (!cp_stop.empty()) require_file(cp_stop, "--stop-list");
      require_out(cp_out, "--out");
      if (cp_threshold < 0.0) throw ValidationError("--threshold must be >= 0");
      const StopList stop = cp_stop.empty() ? StopList{} : read_stop_list(cp_stop);
      const ConceptInventory inv = ConceptInventory::read(cp_inventory, stop);
      if (inv.empty()) throw ValidationError("inventory is empty");
      const auto docs = read_corpus_jsonl(cp_corpus, stop);
      const auto rows = extract_item_concepts(docs, inv, cp_threshold);
      write_item_concepts_tsv(cp_out, rows);
      spdlog::info("concepts: {} documents, {} edges", docs.size(), rows.size());
      return 0;
    }
    if (*trainc) {
      require_file(tr_graph, "--graph");
      require_out(tr_ckpt, "--out-checkpoint");
      if (!tr_csv.empty()) require_out(tr_csv, "--metrics-csv");
      if (!tr_tau.empty()) require_out(tr_tau, "--tau-trace");
      validate_train(tf);
      const GraphArchive data = load_graph(tr_graph);
      const TrainResult r = train(data, tf.cfg, hooks_for(tf, data.graph));
      json meta = {{"variant", tf.variant}, {"best_epoch", r.best_epoch}, {"seed", tf.cfg.seed}};
      save_checkpoint(r.params, tr_ckpt, meta);
      if (!tr_csv.empty()) {
        std::optional<RankingReport> test;
        if (data.splits.count("test") && !data.splits.at("test").positives.empty()) {
          test = evaluate_split(r.params, data, "test", tf.cfg.variant, tf.cfg.k_metrics, std::nullopt, tf.cfg.seed);
        }
        write_metrics_csv(tr_csv, r, tf.cfg.k_metrics, test);
      }
      if (!tr_tau.empty()) {
        atomic_write(tr_tau, [&](std::ostream& os) {
          os.precision(17);
          os << "minibatch,tau\n";
          for (const auto& s : r.tau_trace) os << s.x << ',' << s.tau << '\n';
        });
      }
      return 0;
    }
    if (*evaluate) {
      require_file(ev_graph, "--graph");
      require_file(ev_ckpt, "--checkpoint");
      if (!ev_report.empty()) require_out(ev_report, "--report");
      if (!ev_users.empty()) require_out(ev_users, "--user-csv");
      if (ev_k == 0) throw ValidationError("--k-metrics must be >= 1");
      if (ev_lt == 0) throw ValidationError("--longtail-threshold must be >= 1");
      const Variant variant = parse_variant(ev_variant);
      const GraphArchive data = load_graph(ev_graph);
      if (!data.splits.count(ev_split)) throw ValidationError("graph archive has no split '" + ev_split + "'");
      const ModelParams params = load_checkpoint(ev_ckpt);
      const RankingReport rep = evaluate_split(params, data, ev_split, variant, ev_k, ev_lt, ev_seed);
      std::cout << to_text(rep);
      if (!ev_report.empty()) atomic_write(ev_report, to_json(rep).dump(2) + "\n");
      if (!ev_users.empty()) write_user_csv(rep, data.graph, ev_users);
      return 0;
    }
    if (*ablate) {
      require_file(ab_graph, "--graph");
      if (!ab_report.empty()) require_out(ab_report, "--report");
      validate_train(af);
      if (ab_variants.empty()) ab_variants = variant_names();
      std::vector<Variant> variants;
      for (const auto& v : ab_variants) variants.push_back(parse_variant(v));
      const GraphArchive data = load_graph(ab_graph);
      std::optional<PlantedWorld> world;
      if (!ab_world.empty()) world = read_world(ab_world, data.graph);
      json report = json::array();
      std::ostringstream table;
      table << std::left << std::setw(14) << "variant" << std::right << std::setw(8) << "auc" << std::setw(8) << "hot"
            << std::setw(10) << "long-tail" << std::setw(10) << "prec-1" << std::setw(10) << "prec-2" << '\n';
      for (std::size_t i = 0; i < variants.size(); ++i) {
        const AblationResult r = run_ablation(data, af.cfg, variants[i], ab_lt);
        json row = {{"variant", variant_name(variants[i])},
                    {"best_epoch", r.training.best_epoch},
                    {"test", metrics_to_json(r.test.overall)},
                    {"hot", metrics_to_json(r.test.hot)},
                    {"longtail", metrics_to_json(r.test.longtail)}};
        table << std::left << std::setw(14) << variant_name(variants[i]) << std::right << std::fixed
              << std::setprecision(4) << std::setw(8) << (r.test.overall ? r.test.overall->auc : 0.0) << std::setw(8)
              << (r.test.hot ? r.test.hot->auc : 0.0) << std::setw(10)
              << (r.test.longtail ? r.test.longtail->auc : 0.0);
        if (world) {
          DenoiseOptions o;
          o.n1 = af.cfg.model.n1;
          o.n2 = af.cfg.model.n2;
          o.mode = GumbelMode::kInference;
          o.phase1 = variants[i].phase1;
          o.phase2 = variants[i].phase2;
          const auto subs = inference_subgraphs(r.training.params, data.graph, o, af.cfg.seed);
          const DenoisingPrecision p = denoising_precision(subs, *world);
          row["precision"] = {{"one_hop", p.one_hop}, {"two_hop", p.two_hop}, {"users", p.users}};
          table << std::setw(10) << p.one_hop << std::setw(10) << p.two_hop;
        }
        table << '\n';
        report.push_back(std::move(row));
      }
      std::cout << table.str();
      if (!ab_report.empty()) atomic_write(ab_report, report.dump(2) + "\n");
      return 0;
    }
    if (*sweep) {
      require_file(sw_graph, "--graph");
      if (!sw_out.empty()) require_out(sw_out, "--out");
      validate_train(sf);
      const auto settings = sweep_settings(sw_axis, sf.cfg, sw_values);
      const GraphArchive data = load_graph(sw_graph);
      std::vector<SweepRow> rows;
      for (const auto& [label, cfg] : settings) {
        SweepRow row{label, std::nullopt, "", 0.0};
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const TrainResult r = train(data, cfg);
          row.test = evaluate_split(r.params, data, "test", cfg.variant, cfg.k_metrics, std::nullopt, cfg.seed).overall;
        } catch (const std::exception& e) {
          row.error = e.what();
          spdlog::error("sweep {}={} aborted: {}", sw_axis, label, e.what());
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
      }
      const std::string table = sweep_table(sw_axis, rows, sf.cfg.k_metrics);
      std::cout << table;
      if (!sw_out.empty()) atomic_write(sw_out, table);
      return 0;
    }
    if (*explain) {
      require_file(ex_graph, "--graph");
      require_file(ex_ckpt, "--checkpoint");
      if (ex_json.empty() && ex_dot.empty()) throw ValidationError("explain needs --json and/or --dot");
      if (!ex_json.empty()) require_out(ex_json, "--json");
      if (!ex_dot.empty()) require_out(ex_dot, "--dot");
      const GraphArchive data = load_graph(ex_graph);
      const ModelParams params = load_checkpoint(ex_ckpt);
      const TripartiteGraph& g = data.graph;
      if (g.num_users() != params.num_users() || g.num_items() != params.num_items() ||
          g.num_concepts() != params.num_concepts()) {
        throw ValidationError("checkpoint and graph disagree on node counts");
      }
      NoGradScope no_grad;
      const WarmupLists lists = WarmupLists::full(g);
      const HiddenStates hidden = warmup_pass(lists, params);
      DenoiseOptions opts;
      opts.n1 = params.config.n1;
      opts.n2 = params.config.n2;
      opts.mode = GumbelMode::kInference;
      json users = json::array(), skipped = json::array();
      std::vector<DenoisedSubgraph> subs;
      for (const auto& raw : split(ex_users, ',')) {
        const std::string id(trim(raw));
        if (id.empty()) continue;
        auto u = g.find(NodeKind::kUser, id);
        if (!u) {
          spdlog::warn("explain: unknown user '{}'", id);
          skipped.push_back(id);
          continue;
        }
        GumbelNoise noise(0);
        DenoisedSubgraph sub;
        const Tensor hu = infer_user(*u, lists, hidden, params, opts, noise, &sub);
        if (sub.empty()) spdlog::warn("explain: user '{}' has an empty neighborhood", id);
        users.push_back(explain_user(g, sub, hu));
        subs.push_back(std::move(sub));
      }
      if (!ex_json.empty()) atomic_write(ex_json, json{{"users", users}, {"skipped", skipped}}.dump(2) + "\n");
      if (!ex_dot.empty()) atomic_write(ex_dot, explain_dot(g, subs));
      return 0;
    }
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("conde");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace conde
