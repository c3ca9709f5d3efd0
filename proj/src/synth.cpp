// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "conde/evaluator.hpp"
#include "conde/io.hpp"

namespace conde {

using nlohmann::json;

void SynthConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid synth config: " + what);
  };
  need(users >= 1 && items >= 1 && concepts >= 1, "counts must be positive");
  need(topics >= 1, "topics must be >= 1");
  need(topics <= items && topics <= concepts, "every topic needs at least one item and one concept");
  need(rho >= 0.0 && rho < 1.0, "rho must be in [0, 1)");
  need(min_degree >= 1 && min_degree <= max_degree, "need 1 <= min_degree <= max_degree");
  need(max_degree + valid_per_user + test_per_user <= items / topics,
       "degree plus held-out clicks exceeds the items of a single topic");
  need(true_concepts >= 1 && true_concepts <= concepts / topics, "true_concepts exceeds the concepts of a topic");
  need(noise_concepts <= concepts - concepts / topics - 1 || topics == 1, "noise_concepts exceeds off-topic concepts");
  need(two_topic_prob >= 0.0 && two_topic_prob <= 1.0, "two_topic_prob must be in [0, 1]");
  need(zipf >= 0.0, "zipf must be >= 0");
}

bool PlantedWorld::user_likes(std::uint32_t user, std::uint32_t topic) const {
  const auto& t = user_topics.at(user);
  return std::find(t.begin(), t.end(), topic) != t.end();
}

namespace {

std::string fmt_id(const char* prefix, std::size_t width, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, static_cast<int>(width), i);
  return buf;
}

std::size_t digits(std::size_t n) {
  std::size_t d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

// Cumulative-weight sampler; portable across standard libraries.
struct WeightedPool {
  std::vector<std::uint32_t> ids;
  std::vector<double> cum;

  void add(std::uint32_t id, double w) {
    ids.push_back(id);
    cum.push_back((cum.empty() ? 0.0 : cum.back()) + w);
  }
  std::uint32_t draw(Rng& rng) const {
    const double r = uniform_open01(rng) * cum.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), r);
    return ids[std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), ids.size() - 1)];
  }
};

}  // namespace

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x5171ull));
  const auto T = static_cast<std::uint32_t>(cfg.topics);
  SynthOutput out;
  PlantedWorld& w = out.world;
  w.topics = cfg.topics;

  // Topics: concepts round-robin, items uniformly (every topic non-empty).
  w.concept_topic.resize(cfg.concepts);
  for (std::size_t c = 0; c < cfg.concepts; ++c) w.concept_topic[c] = static_cast<std::uint32_t>(c % T);
  w.item_topic.resize(cfg.items);
  for (std::size_t m = 0; m < cfg.items; ++m)
    w.item_topic[m] = m < T ? static_cast<std::uint32_t>(m) : static_cast<std::uint32_t>(uniform_index(rng, T));
  shuffle(rng, w.item_topic);
  w.user_topics.resize(cfg.users);
  for (auto& ut : w.user_topics) {
    ut.push_back(static_cast<std::uint32_t>(uniform_index(rng, T)));
    if (T > 1 && uniform_open01(rng) < cfg.two_topic_prob) {
      std::uint32_t t2;
      do t2 = static_cast<std::uint32_t>(uniform_index(rng, T));
      while (t2 == ut[0]);
      ut.push_back(t2);
    }
    std::sort(ut.begin(), ut.end());
  }

  // Zipf popularity over a random rank order.
  std::vector<std::uint32_t> rank(cfg.items);
  for (std::uint32_t i = 0; i < cfg.items; ++i) rank[i] = i;
  shuffle(rng, rank);
  std::vector<WeightedPool> by_topic(T);
  for (std::uint32_t m = 0; m < cfg.items; ++m)
    by_topic[w.item_topic[m]].add(m, 1.0 / std::pow(static_cast<double>(rank[m]) + 1.0, cfg.zipf));
  std::vector<std::vector<std::uint32_t>> concepts_of(T);
  for (std::uint32_t c = 0; c < cfg.concepts; ++c) concepts_of[w.concept_topic[c]].push_back(c);

  GraphBuilder builder(cfg.users, cfg.items, cfg.concepts);
  std::vector<std::set<std::uint32_t>> taken(cfg.users);
  auto in_topic_item = [&](std::uint32_t u) {
    const auto& ut = w.user_topics[u];
    for (int guard = 0; guard < 100000; ++guard) {
      const std::uint32_t t = ut[uniform_index(rng, ut.size())];
      const std::uint32_t m = by_topic[t].draw(rng);
      if (taken[u].insert(m).second) return m;
    }
    throw std::runtime_error("synth: could not place an in-topic click");
  };
  for (std::uint32_t u = 0; u < cfg.users; ++u) {
    const std::size_t degree = cfg.min_degree + uniform_index(rng, cfg.max_degree - cfg.min_degree + 1);
    for (std::size_t e = 0; e < degree; ++e) {
      std::uint32_t m;
      if (uniform_open01(rng) < cfg.rho) {
        // Noise: uniform over items outside the user's topics (all items if none).
        bool any_out = false;
        for (std::uint32_t t = 0; t < T && !any_out; ++t) any_out = !w.user_likes(u, t);
        do m = static_cast<std::uint32_t>(uniform_index(rng, cfg.items));
        while ((any_out && w.user_likes(u, w.item_topic[m])) || !taken[u].insert(m).second);
      } else {
        m = in_topic_item(u);
      }
      builder.add_edge({NodeKind::kUser, u}, {NodeKind::kItem, m});
      w.click_label[{u, m}] = w.user_likes(u, w.item_topic[m]);
    }
  }
  for (std::uint32_t m = 0; m < cfg.items; ++m) {
    const auto& own = concepts_of[w.item_topic[m]];
    for (auto i : sample_without_replacement(rng, static_cast<std::uint32_t>(own.size()),
                                             static_cast<std::uint32_t>(cfg.true_concepts))) {
      builder.add_edge({NodeKind::kItem, m}, {NodeKind::kConcept, own[i]});
    }
    if (T == 1) continue;
    for (std::size_t added = 0; added < cfg.noise_concepts;) {
      const auto c = static_cast<std::uint32_t>(uniform_index(rng, cfg.concepts));
      if (w.concept_topic[c] == w.item_topic[m]) continue;
      if (builder.add_edge({NodeKind::kItem, m}, {NodeKind::kConcept, c})) ++added;
    }
  }

  std::vector<std::string> uids, iids, ctexts;
  for (std::size_t u = 0; u < cfg.users; ++u) uids.push_back(fmt_id("u", digits(cfg.users - 1), u));
  for (std::size_t m = 0; m < cfg.items; ++m) iids.push_back(fmt_id("i", digits(cfg.items - 1), m));
  const std::size_t tw = std::max<std::size_t>(2, digits(T - 1));
  for (std::size_t c = 0; c < cfg.concepts; ++c) {
    ctexts.push_back(fmt_id("t", tw, w.concept_topic[c]) + fmt_id("_c", std::max<std::size_t>(4, digits(cfg.concepts - 1)), c));
  }
  out.archive.graph = TripartiteGraph(std::move(builder), std::move(uids), std::move(iids), std::move(ctexts));

  // Held-out splits: fresh in-topic clicks.
  for (const auto& [name, per_user, tag] : {std::tuple{"valid", cfg.valid_per_user, 0x7a1ull},
                                            std::tuple{"test", cfg.test_per_user, 0x7e5ull}}) {
    EvalSplit split;
    for (std::uint32_t u = 0; u < cfg.users; ++u)
      for (std::size_t j = 0; j < per_user; ++j) split.positives.emplace_back(u, in_topic_item(u));
    split.negatives = sample_eval_negatives(out.archive.graph, split.positives, derive_seed(cfg.seed, tag));
    out.archive.splits[name] = std::move(split);
  }
  return out;
}

json world_summary(const SynthOutput& out, const SynthConfig& cfg) {
  const auto& g = out.archive.graph;
  const auto& w = out.world;
  std::size_t noisy = 0;
  for (const auto& [e, ok] : w.click_label) noisy += ok ? 0 : 1;
  const auto freq = item_frequencies(g);
  const auto under10 = std::count_if(freq.begin(), freq.end(), [](std::size_t f) { return f < 10; });
  json users = json::object(), items = json::object(), concepts = json::object();
  for (std::size_t u = 0; u < g.num_users(); ++u) users[g.user_ids()[u]] = w.user_topics[u];
  for (std::size_t m = 0; m < g.num_items(); ++m) items[g.item_ids()[m]] = w.item_topic[m];
  for (std::size_t c = 0; c < g.num_concepts(); ++c) concepts[g.concept_texts()[c]] = w.concept_topic[c];
  return {{"config",
           {{"users", cfg.users}, {"items", cfg.items}, {"concepts", cfg.concepts}, {"topics", cfg.topics},
            {"rho", cfg.rho}, {"min_degree", cfg.min_degree}, {"max_degree", cfg.max_degree},
            {"two_topic_prob", cfg.two_topic_prob}, {"true_concepts", cfg.true_concepts},
            {"noise_concepts", cfg.noise_concepts}, {"zipf", cfg.zipf}, {"valid_per_user", cfg.valid_per_user},
            {"test_per_user", cfg.test_per_user}, {"seed", cfg.seed}}},
          {"clicks", w.click_label.size()},
          {"noisy_clicks", noisy},
          {"noise_fraction", w.click_label.empty() ? 0.0 : static_cast<double>(noisy) / static_cast<double>(w.click_label.size())},
          {"items_under_10_clicks", static_cast<double>(under10) / static_cast<double>(freq.size())},
          {"user_topics", users},
          {"item_topic", items},
          {"concept_topic", concepts}};
}

void write_synth(const SynthOutput& out, const SynthConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& g = out.archive.graph;
  const auto& w = out.world;
  atomic_write(dir / "interactions.tsv", [&](std::ostream& os) {
    std::size_t t = 0;
    for (std::uint32_t u = 0; u < g.num_users(); ++u)
      for (auto m : g.user_items()[u]) os << g.user_ids()[u] << '\t' << g.item_ids()[m] << '\t' << t++ << '\n';
  });
  atomic_write(dir / "item_concepts.tsv", [&](std::ostream& os) {
    for (std::uint32_t m = 0; m < g.num_items(); ++m)
      for (auto c : g.item_concepts()[m]) os << g.item_ids()[m] << '\t' << g.concept_texts()[c] << "\t1\n";
  });
  atomic_write(dir / "labels.tsv", [&](std::ostream& os) {
    for (const auto& [e, ok] : w.click_label)
      os << "user_item\t" << g.user_ids()[e.first] << '\t' << g.item_ids()[e.second] << '\t' << (ok ? 1 : 0) << '\n';
    for (std::uint32_t m = 0; m < g.num_items(); ++m)
      for (auto c : g.item_concepts()[m])
        os << "item_concept\t" << g.item_ids()[m] << '\t' << g.concept_texts()[c] << '\t'
           << (w.concept_topic[c] == w.item_topic[m] ? 1 : 0) << '\n';
  });
  atomic_write(dir / "world.json", world_summary(out, cfg).dump(2) + "\n");
  save_graph(out.archive, dir / "graph.json");
}

PlantedWorld read_world(const std::filesystem::path& dir, const TripartiteGraph& g) {
  PlantedWorld w;
  const json doc = json::parse(read_file(dir / "world.json"));
  w.topics = doc.at("config").at("topics").get<std::size_t>();
  auto index = [&](NodeKind kind, const std::string& key) {
    auto i = g.find(kind, key);
    if (!i) throw std::runtime_error("world.json: unknown " + std::string(to_string(kind)) + " '" + key + "'");
    return *i;
  };
  w.user_topics.assign(g.num_users(), {});
  w.item_topic.assign(g.num_items(), 0);
  w.concept_topic.assign(g.num_concepts(), 0);
  for (const auto& [k, v] : doc.at("user_topics").items()) w.user_topics[index(NodeKind::kUser, k)] = v.get<std::vector<std::uint32_t>>();
  for (const auto& [k, v] : doc.at("item_topic").items()) w.item_topic[index(NodeKind::kItem, k)] = v.get<std::uint32_t>();
  for (const auto& [k, v] : doc.at("concept_topic").items())
    w.concept_topic[index(NodeKind::kConcept, k)] = v.get<std::uint32_t>();
  std::ifstream in(dir / "labels.tsv");
  if (!in) throw std::runtime_error("cannot open " + (dir / "labels.tsv").string());
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split(line, '\t');
    if (f.size() != 4 || f[0] != "user_item") continue;
    w.click_label[{index(NodeKind::kUser, f[1]), index(NodeKind::kItem, f[2])}] = f[3] == "1";
  }
  return w;
}

DenoisingPrecision denoising_precision(std::span<const DenoisedSubgraph> subs, const PlantedWorld& world) {
  DenoisingPrecision p;
  double one = 0.0, two = 0.0;
  std::size_t two_users = 0;
  for (const auto& sub : subs) {
    if (sub.empty()) continue;
    std::size_t ok = 0;
    for (const auto& node : sub.items.retained_nodes()) {
      auto it = world.click_label.find({sub.user, node.index});
      if (it == world.click_label.end()) throw std::invalid_argument("denoising_precision: unlabeled click");
      ok += it->second ? 1 : 0;
    }
    one += static_cast<double>(ok) / static_cast<double>(sub.items.retained.size());
    ++p.users;
    std::size_t c_ok = 0, c_all = 0;
    for (const auto& hop : sub.neighbors) {
      for (const auto& node : hop.retained_nodes()) {
        if (node.kind != NodeKind::kConcept) continue;
        ++c_all;
        c_ok += world.user_likes(sub.user, world.concept_topic.at(node.index)) ? 1 : 0;
      }
    }
    if (c_all > 0) {
      two += static_cast<double>(c_ok) / static_cast<double>(c_all);
      ++two_users;
    }
  }
  if (p.users > 0) p.one_hop = one / static_cast<double>(p.users);
  if (two_users > 0) p.two_hop = two / static_cast<double>(two_users);
  return p;
}

}  // namespace conde
