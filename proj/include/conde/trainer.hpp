// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minibatch training: 1:1 negative sampling, k denoised subgraphs per user,
// cross-entropy plus L2, temperature annealing, validation and early stopping.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conde/evaluator.hpp"
#include "conde/graph.hpp"
#include "conde/model.hpp"

namespace conde {

struct Variant {
  Selector phase1 = Selector::kDenoise;
  Selector phase2 = Selector::kDenoise;
  friend bool operator==(const Variant&, const Variant&) = default;
};

/// random-1, random-2, random-1+2, denoise-1, denoise-2, denoise-1+2 ("&" is
/// accepted for "+"). Throws std::invalid_argument on anything else.
Variant parse_variant(std::string_view name);
std::string variant_name(const Variant& v);
const std::vector<std::string>& variant_names();

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double tau0 = 10.0;
  double eta = 2e-4;
  std::size_t p = 40;  // neighbors sampled per node and relation
  std::string optimizer = "adam";
  std::uint64_t seed = 1;
  bool freeze_concepts = false;
  std::size_t patience = 5;
  std::size_t k_metrics = 5;
  Variant variant;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct TrainingExample {
  std::uint32_t user;
  std::uint32_t item;
  std::uint8_t label;
};

/// One unobserved item per positive, rejection-sampled against the user's
/// clicks. Users who clicked every item are skipped and counted.
std::vector<TrainingExample> sample_negatives(const TripartiteGraph& g, std::span<const UserItem> positives,
                                              std::uint64_t seed, std::size_t* skipped_users = nullptr);

/// −Σ [y ln ŷ + (1−y) ln(1−ŷ)], ŷ clamped to [1e-12, 1−1e-12].
Tensor bce_sum(const Tensor& yhat, std::span<const double> labels);

/// Σ over every trainable tensor of ‖t‖².
Tensor l2_penalty(const ModelParams& params);

/// Data term for one user: k subgraphs drawn from `noise`, cross-entropy over
/// the examples summed across subgraphs. Undefined tensor when the user's
/// neighborhood is empty.
Tensor user_data_loss(const UserRelevance& rel, std::span<const TrainingExample> examples, const HiddenStates& hidden,
                      const ModelParams& params, const DenoiseOptions& opts, std::size_t k, GumbelNoise& noise);

/// Data term plus λ‖Θ‖².
Tensor loss_for_user(const UserRelevance& rel, std::span<const TrainingExample> examples, const HiddenStates& hidden,
                     const ModelParams& params, const DenoiseOptions& opts, std::size_t k, double lambda,
                     GumbelNoise& noise);

struct Batch {
  std::vector<std::uint32_t> users;
  std::vector<std::vector<TrainingExample>> examples;  // per user
};

/// Full minibatch objective: warm-up over `lists`, per-user data terms, and the
/// L2 term counted once.
Tensor batch_loss(const Batch& batch, const WarmupLists& lists, const ModelParams& params, const DenoiseOptions& opts,
                  GumbelNoise& noise);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<Tensor> params) = 0;
};

class Adam : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<Tensor> params) override;

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

class Sgd : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<Tensor> params) override;

 private:
  double lr_;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr);

struct TauSample {
  std::uint64_t x;
  double tau;
};

struct EpochRecord {
  std::size_t epoch;
  double loss;
  double tau;
  std::optional<MetricSet> valid;
};

struct TrainResult {
  ModelParams params;  // best validation UAUC (final params without a validation split)
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<TauSample> tau_trace;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Replaces the random initialization (e.g. pretrained concept vectors).
  std::function<void(ModelParams&)> on_init;
};

TrainResult train(const GraphArchive& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Inference-mode ranking report on a named split of the archive.
RankingReport evaluate_split(const ModelParams& params, const GraphArchive& data, const std::string& split,
                             const Variant& variant, std::size_t k, std::optional<std::size_t> longtail_threshold,
                             std::uint64_t seed);

/// "epoch,split,auc,ndcg@K,hit@K,map@K,loss,tau"
void write_metrics_csv(const std::filesystem::path& path, const TrainResult& r, std::size_t k,
                       const std::optional<RankingReport>& test = std::nullopt);

struct AblationResult {
  Variant variant;
  TrainResult training;
  RankingReport test;
};

AblationResult run_ablation(const GraphArchive& data, TrainConfig cfg, const Variant& variant,
                            std::optional<std::size_t> longtail_threshold = std::nullopt);

}  // namespace conde
