// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Item text → weighted item–concept edges: normalization, greedy longest-match
// extraction against a phrase inventory, and TF-IDF threshold filtering.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "conde/graph.hpp"

namespace conde {

using StopList = std::unordered_set<std::string>;

/// Lowercased tokens with punctuation, emoji and stop words removed. Tokens are
/// split on whitespace and punctuation; non-ASCII letters are kept verbatim.
std::vector<std::string> normalize(std::string_view text, const StopList& stop = {});

StopList read_stop_list(const std::filesystem::path& path);

class ConceptInventory {
 public:
  explicit ConceptInventory(const StopList& stop = {}) : stop_(stop) {}

  /// Adds a phrase; returns its id, or -1 if it normalizes to nothing. A phrase
  /// whose token sequence already exists maps to the existing id.
  std::int64_t add(std::string_view phrase);

  std::size_t size() const { return phrases_.size(); }
  bool empty() const { return phrases_.empty(); }
  const std::string& text(std::size_t id) const { return phrases_[id]; }
  const std::vector<std::string>& tokens(std::size_t id) const { return tokens_[id]; }
  const StopList& stop_list() const { return stop_; }

  /// Longest phrase starting at `pos`: (id, length) or (-1, 0).
  std::pair<std::int64_t, std::size_t> longest_match(std::span<const std::string> doc, std::size_t pos) const;

  static ConceptInventory read(const std::filesystem::path& path, const StopList& stop = {});

 private:
  struct TrieNode {
    std::unordered_map<std::string, std::uint32_t> next;
    std::int64_t phrase = -1;
  };
  StopList stop_;
  std::vector<TrieNode> trie_{TrieNode{}};
  std::vector<std::string> phrases_;
  std::vector<std::vector<std::string>> tokens_;
};

struct ItemDocument {
  std::string item_id;
  std::vector<std::string> tokens;
};

struct ConceptCount {
  std::size_t concept_id;
  std::size_t tf;
  friend bool operator==(const ConceptCount&, const ConceptCount&) = default;
};

/// Left-to-right greedy longest match; matched tokens are consumed. Counts are
/// returned in first-match order.
std::vector<ConceptCount> extract_concepts(const ItemDocument& doc, const ConceptInventory& inv);

struct ScoredConcept {
  std::string item_id;
  std::size_t concept_id;
  double score;
};

/// score = tf · ln(N / df) with N the number of documents; keeps score ≥ threshold.
std::vector<ScoredConcept> tfidf_filter(const std::vector<std::string>& item_ids,
                                        const std::vector<std::vector<ConceptCount>>& extractions, double threshold);

/// Corpus file: JSON lines {"item_id": ..., "text": ...}.
std::vector<ItemDocument> read_corpus_jsonl(const std::filesystem::path& path, const StopList& stop);

/// Full pipeline: normalize, extract, filter. Rows are item–concept records.
std::vector<ItemConceptRecord> extract_item_concepts(const std::vector<ItemDocument>& docs,
                                                     const ConceptInventory& inv, double threshold);

void write_item_concepts_tsv(const std::filesystem::path& path, const std::vector<ItemConceptRecord>& rows);

}  // namespace conde
