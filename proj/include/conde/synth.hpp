// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Planted-topic world generator with ground-truth edge labels, and the
// precision of a denoised subgraph against those labels.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "conde/graph.hpp"
#include "conde/model.hpp"

namespace conde {

struct SynthConfig {
  std::size_t users = 500;
  std::size_t items = 2000;
  std::size_t concepts = 300;
  std::size_t topics = 20;
  double rho = 0.2;             // probability a click is noise
  std::size_t min_degree = 10;  // training clicks per user
  std::size_t max_degree = 20;
  double two_topic_prob = 0.5;  // chance a user prefers a second topic
  std::size_t true_concepts = 3;   // per item, from its topic
  std::size_t noise_concepts = 2;  // per item, from other topics
  double zipf = 1.0;               // item popularity exponent
  std::size_t valid_per_user = 3;
  std::size_t test_per_user = 5;
  std::uint64_t seed = 7;

  void validate() const;
};

struct PlantedWorld {
  std::size_t topics = 0;
  std::vector<std::vector<std::uint32_t>> user_topics;
  std::vector<std::uint32_t> item_topic;
  std::vector<std::uint32_t> concept_topic;
  std::map<UserItem, bool> click_label;  // training clicks: true = in one of the user's topics

  bool user_likes(std::uint32_t user, std::uint32_t topic) const;
};

struct SynthOutput {
  GraphArchive archive;
  PlantedWorld world;
};

SynthOutput generate(const SynthConfig& cfg);

/// interactions.tsv, item_concepts.tsv, labels.tsv, world.json and graph.json.
void write_synth(const SynthOutput& out, const SynthConfig& cfg, const std::filesystem::path& dir);

nlohmann::json world_summary(const SynthOutput& out, const SynthConfig& cfg);

/// Reads labels.tsv back into a world usable by denoising_precision. Topic
/// information comes from world.json next to it.
PlantedWorld read_world(const std::filesystem::path& dir, const TripartiteGraph& g);

struct DenoisingPrecision {
  double one_hop = 0.0;  // retained items whose click is labeled true
  double two_hop = 0.0;  // retained concepts in one of the user's topics
  std::size_t users = 0;
};

/// Per-user precision averaged over non-empty subgraphs.
DenoisingPrecision denoising_precision(std::span<const DenoisedSubgraph> subs, const PlantedWorld& world);

}  // namespace conde
