// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tripartite user–item–concept graph: construction, validation, neighbor
// sampling and the JSON archive format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "conde/rng.hpp"

namespace conde {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeKind : std::uint8_t { kUser, kItem, kConcept };

const char* to_string(NodeKind kind);

struct NodeRef {
  NodeKind kind;
  std::uint32_t index;
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

/// Compressed adjacency: neighbors of node i are targets[offsets[i] .. offsets[i+1]).
struct Adjacency {
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> targets;

  std::size_t nodes() const { return offsets.size() - 1; }
  std::size_t edges() const { return targets.size(); }
  std::size_t degree(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  std::span<const std::uint32_t> operator[](std::size_t i) const {
    return {targets.data() + offsets[i], degree(i)};
  }
  std::size_t max_degree() const;

  /// Builds from per-node lists (kept in the given order).
  static Adjacency from_lists(const std::vector<std::vector<std::uint32_t>>& lists);
  /// Uniform sample of at most `budget` neighbors per node, sorted ascending.
  Adjacency sample(std::size_t budget, Rng& rng) const;
  /// Keeps only the first `budget` neighbors of each node.
  Adjacency truncate(std::size_t budget) const;
};

/// Accumulates typed edges; rejects anything that is not User–Item or Item–Concept.
class GraphBuilder {
 public:
  GraphBuilder(std::size_t users, std::size_t items, std::size_t concepts);

  /// Returns false when the edge was already present.
  bool add_edge(NodeRef a, NodeRef b, double weight = 1.0);

 private:
  friend class TripartiteGraph;
  std::size_t counts_[3];
  std::vector<std::vector<std::uint32_t>> user_items_;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> item_concepts_;
};

class TripartiteGraph {
 public:
  TripartiteGraph() = default;
  TripartiteGraph(GraphBuilder&& builder, std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                  std::vector<std::string> concept_texts);

  std::size_t num_users() const { return user_ids_.size(); }
  std::size_t num_items() const { return item_ids_.size(); }
  std::size_t num_concepts() const { return concept_texts_.size(); }
  std::size_t count(NodeKind kind) const;
  std::size_t num_user_item_edges() const { return user_items_.edges(); }
  std::size_t num_item_concept_edges() const { return item_concepts_.edges(); }

  const Adjacency& user_items() const { return user_items_; }
  const Adjacency& item_users() const { return item_users_; }
  const Adjacency& item_concepts() const { return item_concepts_; }
  const Adjacency& concept_items() const { return concept_items_; }
  /// TF-IDF weights aligned with item_concepts().targets.
  std::span<const double> item_concept_weights(std::uint32_t item) const;

  bool has_edge(NodeRef a, NodeRef b) const;
  bool clicked(std::uint32_t user, std::uint32_t item) const;

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::vector<std::string>& concept_texts() const { return concept_texts_; }
  std::optional<std::uint32_t> find(NodeKind kind, const std::string& key) const;

  /// Checks the tripartite and adjacency-consistency invariants; throws GraphError.
  void validate() const;

  friend bool operator==(const TripartiteGraph& a, const TripartiteGraph& b);

 private:
  Adjacency user_items_, item_users_, item_concepts_, concept_items_;
  std::vector<double> ic_weights_;
  std::vector<std::string> user_ids_, item_ids_, concept_texts_;
  std::unordered_map<std::string, std::uint32_t> index_[3];
};

// ---- construction from raw records -------------------------------------------

struct Interaction {
  std::string user;
  std::string item;
  std::optional<double> timestamp;
};

struct ItemConceptRecord {
  std::string item;
  std::string concept_text;
  double weight = 1.0;
};

struct BuildReport {
  std::size_t duplicate_clicks = 0;
  std::size_t duplicate_tags = 0;
  std::size_t dropped_concept_records = 0;  // item absent from interactions
};

/// Dense re-indexing in order of first appearance; duplicates collapse.
TripartiteGraph build_graph(std::span<const Interaction> interactions,
                            std::span<const ItemConceptRecord> item_concepts, BuildReport* report = nullptr);

std::vector<Interaction> read_interactions_tsv(const std::filesystem::path& path);
std::vector<ItemConceptRecord> read_item_concepts_tsv(const std::filesystem::path& path);

// ---- sampling ------------------------------------------------------------------

struct SampledNeighborhood {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> items;
  std::vector<std::vector<std::uint32_t>> concepts;  // per sampled item
  std::vector<std::vector<std::uint32_t>> users;     // per sampled item, co-clickers (optional)

  bool empty() const { return items.empty(); }
};

struct SamplingBudget {
  std::size_t items = 40;
  std::size_t concepts = 40;
  std::size_t users = 0;  // 0 disables co-clicking user neighbors
};

SampledNeighborhood sample_neighborhood(const TripartiteGraph& g, std::uint32_t user, const SamplingBudget& budget,
                                        std::uint64_t seed);
/// Whole neighborhood, no sampling (inference).
SampledNeighborhood full_neighborhood(const TripartiteGraph& g, std::uint32_t user, bool with_users = false);

// ---- archive -------------------------------------------------------------------

using UserItem = std::pair<std::uint32_t, std::uint32_t>;

/// Held-out positives with their persisted evaluation negatives.
struct EvalSplit {
  std::vector<UserItem> positives;
  std::vector<UserItem> negatives;
  friend bool operator==(const EvalSplit&, const EvalSplit&) = default;
};

struct GraphArchive {
  TripartiteGraph graph;
  std::map<std::string, EvalSplit> splits;  // "valid", "test"
};

void save_graph(const GraphArchive& archive, const std::filesystem::path& path);
GraphArchive load_graph(const std::filesystem::path& path);

}  // namespace conde
