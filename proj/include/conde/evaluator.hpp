// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-user ranking metrics (UAUC, NDCG@K, HIT@K, MAP@K), hot/long-tail
// splitting and report output.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "conde/graph.hpp"

namespace conde {

struct UserCandidates {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> items;
  std::vector<std::uint8_t> labels;  // 1 = held-out positive
  std::vector<double> scores;
};

struct EvalTask {
  std::vector<UserCandidates> users;
};

/// AUC over one user's positive–negative pairs, ties counted ½. NaN when the
/// user lacks a positive or a negative.
double user_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct UaucResult {
  double mean = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
};

UaucResult uauc(const EvalTask& task);

struct TopK {
  double ndcg = 0.0;
  double hit = 0.0;
  double map = 0.0;
};

/// Metrics at K for one user; ranking by descending score, ties by candidate
/// index. K beyond the list length evaluates the full list. nullopt when the
/// user has no positive.
std::optional<TopK> user_topk(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t k);

struct TopKResult {
  TopK mean;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
};

TopKResult topk_metrics(const EvalTask& task, std::size_t k);

/// Partitions every user's candidates by training click frequency of the item:
/// frequency ≥ threshold is hot.
std::pair<EvalTask, EvalTask> longtail_split(std::span<const std::size_t> item_frequency, const EvalTask& task,
                                             std::size_t threshold);

std::vector<std::size_t> item_frequencies(const TripartiteGraph& g);

struct MetricSet {
  double auc = 0.0;
  double ndcg = 0.0;
  double hit = 0.0;
  double map = 0.0;
  std::size_t users = 0;     // users with a defined AUC
  std::size_t excluded = 0;  // users lacking a positive or a negative
};

/// nullopt when no user is evaluable.
std::optional<MetricSet> compute_metrics(const EvalTask& task, std::size_t k);

struct UserDetail {
  std::uint32_t user;
  std::size_t positives;
  std::size_t negatives;
  double auc;  // NaN when undefined
  std::optional<TopK> topk;
};

struct RankingReport {
  std::size_t k = 5;
  std::optional<MetricSet> overall;
  std::optional<std::size_t> longtail_threshold;
  std::optional<MetricSet> hot;
  std::optional<MetricSet> longtail;
  std::vector<UserDetail> per_user;
};

RankingReport make_report(const EvalTask& task, std::size_t k, std::span<const std::size_t> item_frequency = {},
                          std::optional<std::size_t> longtail_threshold = std::nullopt);

nlohmann::json to_json(const RankingReport& r);
/// Aligned columns for terminals.
std::string to_text(const RankingReport& r);
void write_user_csv(const RankingReport& r, const TripartiteGraph& g, const std::filesystem::path& path);

// ---- evaluation candidates ---------------------------------------------------------

/// One unobserved item per held-out positive, drawn once per seed. Excludes the
/// user's training items and held-out positives.
std::vector<UserItem> sample_eval_negatives(const TripartiteGraph& train, std::span<const UserItem> positives,
                                            std::uint64_t seed);

/// Groups a split into per-user candidates and fills scores with score(user, items).
EvalTask make_task(const EvalSplit& split,
                   const std::function<std::vector<double>(std::uint32_t, std::span<const std::uint32_t>)>& score);

}  // namespace conde
