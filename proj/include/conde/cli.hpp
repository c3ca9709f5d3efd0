// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: synth, build-graph, concepts, train, evaluate, ablate,
// sweep and explain.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "conde/graph.hpp"
#include "conde/model.hpp"
#include "conde/trainer.hpp"

namespace conde {

/// Runs one command; returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

struct SplitFractions {
  double train = 0.7;
  double valid = 0.2;
  double test = 0.1;
};

/// Splits clicks chronologically when every record has a timestamp (ties kept in
/// file order), otherwise by a seeded shuffle. Held-out clicks on users or items
/// absent from the training part are dropped. Evaluation negatives are drawn
/// with `seed`.
GraphArchive build_archive(std::span<const Interaction> interactions, std::span<const ItemConceptRecord> concepts,
                           const SplitFractions& fractions, std::uint64_t seed, BuildReport* report = nullptr);

/// Inference-mode explanation of one user's denoised subgraph.
nlohmann::json explain_user(const TripartiteGraph& g, const DenoisedSubgraph& sub, const Tensor& user_vec);
std::string explain_dot(const TripartiteGraph& g, std::span<const DenoisedSubgraph> subs);

struct SweepRow {
  std::string setting;
  std::optional<MetricSet> test;  // nullopt when the run aborted
  std::string error;
  double seconds = 0.0;
};

/// Settings of one axis: n2 ∈ {6,10,20,30}, G ∈ {2,4,6}, tau0 ∈ {10,100,1000}
/// (η 2e-4, 5e-4, 1e-3). `values` narrows the axis.
std::vector<std::pair<std::string, TrainConfig>> sweep_settings(const std::string& axis, const TrainConfig& base,
                                                                const std::vector<std::string>& values = {});
std::string sweep_table(const std::string& axis, std::span<const SweepRow> rows, std::size_t k);

}  // namespace conde
