// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/graph.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <unordered_set>

#include <json.hpp>

#include "conde/io.hpp"

namespace conde {

using json = nlohmann::json;

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kUser: return "user";
    case NodeKind::kItem: return "item";
    case NodeKind::kConcept: return "concept";
  }
  return "?";
}

// ---- Adjacency --------------------------------------------------------------

std::size_t Adjacency::max_degree() const {
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes(); ++i) best = std::max(best, degree(i));
  return best;
}

Adjacency Adjacency::from_lists(const std::vector<std::vector<std::uint32_t>>& lists) {
  Adjacency adj;
  adj.offsets.reserve(lists.size() + 1);
  for (const auto& l : lists) {
    adj.targets.insert(adj.targets.end(), l.begin(), l.end());
    adj.offsets.push_back(static_cast<std::uint32_t>(adj.targets.size()));
  }
  return adj;
}

Adjacency Adjacency::sample(std::size_t budget, Rng& rng) const {
  Adjacency out;
  out.offsets.reserve(offsets.size());
  for (std::size_t i = 0; i < nodes(); ++i) {
    auto nb = (*this)[i];
    if (nb.size() <= budget) {
      out.targets.insert(out.targets.end(), nb.begin(), nb.end());
    } else {
      auto picks = sample_without_replacement(rng, static_cast<std::uint32_t>(nb.size()),
                                              static_cast<std::uint32_t>(budget));
      std::sort(picks.begin(), picks.end());
      for (auto p : picks) out.targets.push_back(nb[p]);
    }
    out.offsets.push_back(static_cast<std::uint32_t>(out.targets.size()));
  }
  return out;
}

Adjacency Adjacency::truncate(std::size_t budget) const {
  Adjacency out;
  for (std::size_t i = 0; i < nodes(); ++i) {
    auto nb = (*this)[i];
    const std::size_t k = std::min(budget, nb.size());
    out.targets.insert(out.targets.end(), nb.begin(), nb.begin() + static_cast<std::ptrdiff_t>(k));
    out.offsets.push_back(static_cast<std::uint32_t>(out.targets.size()));
  }
  return out;
}

// ---- GraphBuilder -------------------------------------------------------------

GraphBuilder::GraphBuilder(std::size_t users, std::size_t items, std::size_t concepts)
    : counts_{users, items, concepts}, user_items_(users), item_concepts_(items) {}

bool GraphBuilder::add_edge(NodeRef a, NodeRef b, double weight) {
  for (const NodeRef& n : {a, b}) {
    if (n.index >= counts_[static_cast<int>(n.kind)]) {
      throw GraphError(std::string(to_string(n.kind)) + " index " + std::to_string(n.index) + " out of range");
    }
  }
  if (a.kind == b.kind) {
    throw GraphError(std::string("same-kind edge rejected: ") + to_string(a.kind) + "–" + to_string(b.kind));
  }
  if (static_cast<int>(a.kind) > static_cast<int>(b.kind)) std::swap(a, b);
  if (a.kind == NodeKind::kUser && b.kind == NodeKind::kConcept) {
    throw GraphError("user–concept edge rejected");
  }
  if (a.kind == NodeKind::kUser) {
    auto& l = user_items_[a.index];
    if (std::find(l.begin(), l.end(), b.index) != l.end()) return false;
    l.push_back(b.index);
    return true;
  }
  auto& l = item_concepts_[a.index];
  if (std::find_if(l.begin(), l.end(), [&](const auto& e) { return e.first == b.index; }) != l.end()) return false;
  l.emplace_back(b.index, weight);
  return true;
}

// ---- TripartiteGraph ------------------------------------------------------------

namespace {

Adjacency reverse(const Adjacency& fwd, std::size_t target_count) {
  std::vector<std::vector<std::uint32_t>> lists(target_count);
  for (std::size_t i = 0; i < fwd.nodes(); ++i) {
    for (auto t : fwd[i]) lists[t].push_back(static_cast<std::uint32_t>(i));
  }
  return Adjacency::from_lists(lists);
}

bool sorted_contains(std::span<const std::uint32_t> l, std::uint32_t v) {
  return std::binary_search(l.begin(), l.end(), v);
}

}  // namespace

TripartiteGraph::TripartiteGraph(GraphBuilder&& builder, std::vector<std::string> user_ids,
                                 std::vector<std::string> item_ids, std::vector<std::string> concept_texts)
    : user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)), concept_texts_(std::move(concept_texts)) {
  if (user_ids_.size() != builder.counts_[0] || item_ids_.size() != builder.counts_[1] ||
      concept_texts_.size() != builder.counts_[2]) {
    throw GraphError("id tables do not match node counts");
  }
  for (auto& l : builder.user_items_) std::sort(l.begin(), l.end());
  user_items_ = Adjacency::from_lists(builder.user_items_);

  std::vector<std::vector<std::uint32_t>> ic(builder.item_concepts_.size());
  for (std::size_t m = 0; m < ic.size(); ++m) {
    auto& l = builder.item_concepts_[m];
    std::sort(l.begin(), l.end());
    for (const auto& [c, w] : l) {
      ic[m].push_back(c);
      ic_weights_.push_back(w);
    }
  }
  item_concepts_ = Adjacency::from_lists(ic);
  item_users_ = reverse(user_items_, item_ids_.size());
  concept_items_ = reverse(item_concepts_, concept_texts_.size());

  const std::vector<std::string>* tables[3] = {&user_ids_, &item_ids_, &concept_texts_};
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < tables[k]->size(); ++i) {
      if (!index_[k].emplace((*tables[k])[i], static_cast<std::uint32_t>(i)).second) {
        throw GraphError(std::string("duplicate ") + to_string(static_cast<NodeKind>(k)) + " id '" +
                         (*tables[k])[i] + "'");
      }
    }
  }
}

std::size_t TripartiteGraph::count(NodeKind kind) const {
  switch (kind) {
    case NodeKind::kUser: return num_users();
    case NodeKind::kItem: return num_items();
    case NodeKind::kConcept: return num_concepts();
  }
  return 0;
}

std::span<const double> TripartiteGraph::item_concept_weights(std::uint32_t item) const {
  return {ic_weights_.data() + item_concepts_.offsets[item], item_concepts_.degree(item)};
}

bool TripartiteGraph::clicked(std::uint32_t user, std::uint32_t item) const {
  return sorted_contains(user_items_[user], item);
}

bool TripartiteGraph::has_edge(NodeRef a, NodeRef b) const {
  if (a.index >= count(a.kind) || b.index >= count(b.kind)) return false;
  if (static_cast<int>(a.kind) > static_cast<int>(b.kind)) std::swap(a, b);
  if (a.kind == NodeKind::kUser && b.kind == NodeKind::kItem) return clicked(a.index, b.index);
  if (a.kind == NodeKind::kItem && b.kind == NodeKind::kConcept) return sorted_contains(item_concepts_[a.index], b.index);
  return false;
}

std::optional<std::uint32_t> TripartiteGraph::find(NodeKind kind, const std::string& key) const {
  const auto& idx = index_[static_cast<int>(kind)];
  auto it = idx.find(key);
  if (it == idx.end()) return std::nullopt;
  return it->second;
}

void TripartiteGraph::validate() const {
  auto check_side = [](const Adjacency& fwd, const Adjacency& rev, std::size_t n_src, std::size_t n_dst,
                       const char* name) {
    if (fwd.nodes() != n_src || rev.nodes() != n_dst) throw GraphError(std::string(name) + ": node count mismatch");
    if (fwd.edges() != rev.edges()) throw GraphError(std::string(name) + ": forward/reverse edge counts differ");
    for (std::size_t i = 0; i < n_src; ++i) {
      auto l = fwd[i];
      for (std::size_t j = 0; j < l.size(); ++j) {
        if (l[j] >= n_dst) throw GraphError(std::string(name) + ": neighbor index out of range");
        if (j > 0 && l[j] <= l[j - 1]) throw GraphError(std::string(name) + ": duplicate or unsorted neighbor");
        if (!sorted_contains(rev[l[j]], static_cast<std::uint32_t>(i))) {
          throw GraphError(std::string(name) + ": reverse adjacency missing an edge");
        }
      }
    }
  };
  check_side(user_items_, item_users_, num_users(), num_items(), "user-item");
  check_side(item_concepts_, concept_items_, num_items(), num_concepts(), "item-concept");
  if (ic_weights_.size() != item_concepts_.edges()) throw GraphError("item-concept weights misaligned");
}

bool operator==(const TripartiteGraph& a, const TripartiteGraph& b) {
  return a.user_ids_ == b.user_ids_ && a.item_ids_ == b.item_ids_ && a.concept_texts_ == b.concept_texts_ &&
         a.user_items_.offsets == b.user_items_.offsets && a.user_items_.targets == b.user_items_.targets &&
         a.item_concepts_.offsets == b.item_concepts_.offsets &&
         a.item_concepts_.targets == b.item_concepts_.targets && a.ic_weights_ == b.ic_weights_;
}

// ---- build_graph ----------------------------------------------------------------

TripartiteGraph build_graph(std::span<const Interaction> interactions,
                            std::span<const ItemConceptRecord> item_concepts, BuildReport* report) {
  if (interactions.empty()) throw GraphError("no interactions");
  BuildReport local;
  BuildReport& rep = report ? *report : local;
  rep = {};

  std::unordered_map<std::string, std::uint32_t> users, items, concepts;
  std::vector<std::string> user_ids, item_ids, concept_texts;
  auto intern = [](auto& map, auto& table, const std::string& key) {
    auto [it, fresh] = map.emplace(key, static_cast<std::uint32_t>(table.size()));
    if (fresh) table.push_back(key);
    return it->second;
  };

  std::vector<UserItem> clicks;
  clicks.reserve(interactions.size());
  for (const Interaction& r : interactions) {
    clicks.emplace_back(intern(users, user_ids, r.user), intern(items, item_ids, r.item));
  }
  struct Tag {
    std::uint32_t item, concept_id;
    double weight;
  };
  std::vector<Tag> tags;
  for (const ItemConceptRecord& r : item_concepts) {
    auto it = items.find(r.item);
    if (it == items.end()) {
      ++rep.dropped_concept_records;
      continue;
    }
    tags.push_back({it->second, intern(concepts, concept_texts, r.concept_text), r.weight});
  }

  GraphBuilder b(user_ids.size(), item_ids.size(), concept_texts.size());
  for (const auto& [u, m] : clicks) {
    if (!b.add_edge({NodeKind::kUser, u}, {NodeKind::kItem, m})) ++rep.duplicate_clicks;
  }
  for (const Tag& t : tags) {
    if (!b.add_edge({NodeKind::kItem, t.item}, {NodeKind::kConcept, t.concept_id}, t.weight)) ++rep.duplicate_tags;
  }
  return TripartiteGraph(std::move(b), std::move(user_ids), std::move(item_ids), std::move(concept_texts));
}

namespace {

template <typename Row>
std::vector<Row> read_tsv(const std::filesystem::path& path, std::size_t min_fields, std::size_t max_fields,
                          const std::function<Row(const std::vector<std::string>&, std::size_t)>& make) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open " + path.string());
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    auto f = split(line, '\t');
    if (f.size() < min_fields || f.size() > max_fields) {
      throw GraphError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(min_fields) +
                       (max_fields != min_fields ? "-" + std::to_string(max_fields) : "") + " tab-separated fields, got " +
                       std::to_string(f.size()));
    }
    rows.push_back(make(f, lineno));
  }
  return rows;
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t lineno) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw GraphError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + s + "'");
  }
}

}  // namespace

std::vector<Interaction> read_interactions_tsv(const std::filesystem::path& path) {
  return read_tsv<Interaction>(path, 2, 3, [&](const std::vector<std::string>& f, std::size_t lineno) {
    Interaction r{f[0], f[1], std::nullopt};
    if (r.user.empty() || r.item.empty()) {
      throw GraphError(path.string() + ":" + std::to_string(lineno) + ": empty id");
    }
    if (f.size() == 3 && !f[2].empty()) r.timestamp = parse_number(f[2], path, lineno);
    return r;
  });
}

std::vector<ItemConceptRecord> read_item_concepts_tsv(const std::filesystem::path& path) {
  return read_tsv<ItemConceptRecord>(path, 3, 3, [&](const std::vector<std::string>& f, std::size_t lineno) {
    if (f[0].empty() || f[1].empty()) throw GraphError(path.string() + ":" + std::to_string(lineno) + ": empty field");
    return ItemConceptRecord{f[0], f[1], parse_number(f[2], path, lineno)};
  });
}

// ---- sampling ---------------------------------------------------------------------

namespace {
std::vector<std::uint32_t> pick(std::span<const std::uint32_t> nb, std::size_t budget, Rng& rng) {
  if (nb.size() <= budget) return {nb.begin(), nb.end()};
  auto pos = sample_without_replacement(rng, static_cast<std::uint32_t>(nb.size()), static_cast<std::uint32_t>(budget));
  std::sort(pos.begin(), pos.end());
  std::vector<std::uint32_t> out;
  out.reserve(pos.size());
  for (auto p : pos) out.push_back(nb[p]);
  return out;
}

std::vector<std::uint32_t> without(std::span<const std::uint32_t> nb, std::uint32_t drop) {
  std::vector<std::uint32_t> out;
  for (auto v : nb)
    if (v != drop) out.push_back(v);
  return out;
}
}  // namespace

SampledNeighborhood sample_neighborhood(const TripartiteGraph& g, std::uint32_t user, const SamplingBudget& budget,
                                        std::uint64_t seed) {
  if (budget.items == 0 || budget.concepts == 0) throw std::invalid_argument("sample_neighborhood: budget must be >= 1");
  if (user >= g.num_users()) throw std::out_of_range("sample_neighborhood: unknown user");
  Rng rng(derive_seed(seed, user));
  SampledNeighborhood nb;
  nb.user = user;
  nb.items = pick(g.user_items()[user], budget.items, rng);
  for (auto m : nb.items) {
    nb.concepts.push_back(pick(g.item_concepts()[m], budget.concepts, rng));
    if (budget.users > 0) {
      auto others = without(g.item_users()[m], user);
      nb.users.push_back(pick(others, budget.users, rng));
    } else {
      nb.users.emplace_back();
    }
  }
  return nb;
}

SampledNeighborhood full_neighborhood(const TripartiteGraph& g, std::uint32_t user, bool with_users) {
  SampledNeighborhood nb;
  nb.user = user;
  auto items = g.user_items()[user];
  nb.items.assign(items.begin(), items.end());
  for (auto m : nb.items) {
    auto cs = g.item_concepts()[m];
    nb.concepts.emplace_back(cs.begin(), cs.end());
    nb.users.push_back(with_users ? without(g.item_users()[m], user) : std::vector<std::uint32_t>{});
  }
  return nb;
}

// ---- archive ----------------------------------------------------------------------

namespace {

constexpr const char* kFormat = "conde-graph/1";

json pairs_to_json(const std::vector<UserItem>& v) {
  json a = json::array();
  for (const auto& [u, m] : v) a.push_back({u, m});
  return a;
}

std::vector<UserItem> pairs_from_json(const json& a, const std::string& where, const TripartiteGraph& g) {
  std::vector<UserItem> out;
  if (!a.is_array()) throw GraphError(where + ": expected an array");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const json& e = a[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
      throw GraphError(where + "[" + std::to_string(i) + "]: expected [user, item]");
    }
    const auto u = e[0].get<std::uint32_t>(), m = e[1].get<std::uint32_t>();
    if (u >= g.num_users() || m >= g.num_items()) {
      throw GraphError(where + "[" + std::to_string(i) + "]: index out of range");
    }
    out.emplace_back(u, m);
  }
  return out;
}

std::vector<std::string> strings_from_json(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) throw GraphError(std::string("missing array '") + key + "'");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < doc[key].size(); ++i) {
    if (!doc[key][i].is_string()) throw GraphError(std::string(key) + "[" + std::to_string(i) + "]: expected a string");
    out.push_back(doc[key][i].get<std::string>());
  }
  return out;
}

}  // namespace

void save_graph(const GraphArchive& archive, const std::filesystem::path& path) {
  const TripartiteGraph& g = archive.graph;
  json doc;
  doc["format"] = kFormat;
  doc["users"] = g.user_ids();
  doc["items"] = g.item_ids();
  doc["concepts"] = g.concept_texts();
  json ui = json::array();
  for (std::uint32_t u = 0; u < g.num_users(); ++u)
    for (auto m : g.user_items()[u]) ui.push_back({u, m});
  doc["edges_ui"] = std::move(ui);
  json ic = json::array();
  for (std::uint32_t m = 0; m < g.num_items(); ++m) {
    auto cs = g.item_concepts()[m];
    auto ws = g.item_concept_weights(m);
    for (std::size_t j = 0; j < cs.size(); ++j) ic.push_back({m, cs[j], ws[j]});
  }
  doc["edges_ic"] = std::move(ic);
  json splits = json::object();
  for (const auto& [name, s] : archive.splits) {
    splits[name] = {{"positives", pairs_to_json(s.positives)}, {"negatives", pairs_to_json(s.negatives)}};
  }
  doc["splits"] = std::move(splits);
  atomic_write(path, doc.dump(1));
}

GraphArchive load_graph(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw GraphError(path.string() + ": parse error at line " + std::to_string(line) + ", column " +
                     std::to_string(col) + " (offset " + std::to_string(e.byte) + ")");
  }
  if (!doc.is_object()) throw GraphError(path.string() + ": expected a JSON object");

  auto users = strings_from_json(doc, "users");
  auto items = strings_from_json(doc, "items");
  auto concepts = strings_from_json(doc, "concepts");
  if (!doc.contains("edges_ui") || !doc["edges_ui"].is_array()) throw GraphError("missing array 'edges_ui'");
  if (doc["edges_ui"].empty()) throw GraphError(path.string() + ": no interactions");

  GraphBuilder b(users.size(), items.size(), concepts.size());
  const json& ui = doc["edges_ui"];
  for (std::size_t i = 0; i < ui.size(); ++i) {
    const json& e = ui[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
      throw GraphError("edges_ui[" + std::to_string(i) + "]: expected [user, item]");
    }
    try {
      b.add_edge({NodeKind::kUser, e[0].get<std::uint32_t>()}, {NodeKind::kItem, e[1].get<std::uint32_t>()});
    } catch (const GraphError& err) {
      throw GraphError("edges_ui[" + std::to_string(i) + "]: " + err.what());
    }
  }
  if (doc.contains("edges_ic")) {
    const json& ic = doc["edges_ic"];
    if (!ic.is_array()) throw GraphError("'edges_ic' must be an array");
    for (std::size_t i = 0; i < ic.size(); ++i) {
      const json& e = ic[i];
      if (!e.is_array() || e.size() < 2 || e.size() > 3 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned() ||
          (e.size() == 3 && !e[2].is_number())) {
        throw GraphError("edges_ic[" + std::to_string(i) + "]: expected [item, concept, weight]");
      }
      try {
        b.add_edge({NodeKind::kItem, e[0].get<std::uint32_t>()}, {NodeKind::kConcept, e[1].get<std::uint32_t>()},
                   e.size() == 3 ? e[2].get<double>() : 1.0);
      } catch (const GraphError& err) {
        throw GraphError("edges_ic[" + std::to_string(i) + "]: " + err.what());
      }
    }
  }
  GraphArchive out{TripartiteGraph(std::move(b), std::move(users), std::move(items), std::move(concepts)), {}};
  if (doc.contains("splits")) {
    for (const auto& [name, s] : doc["splits"].items()) {
      EvalSplit split;
      if (s.contains("positives")) split.positives = pairs_from_json(s["positives"], "splits." + name + ".positives", out.graph);
      if (s.contains("negatives")) split.negatives = pairs_from_json(s["negatives"], "splits." + name + ".negatives", out.graph);
      out.splits.emplace(name, std::move(split));
    }
  }
  return out;
}

}  // namespace conde
