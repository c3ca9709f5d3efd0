// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// The three-phase forward pass: warm-up propagation over the tripartite graph,
// per-user denoising with a shared GRU compositer and Gumbel-top-n selection,
// preference refinement over the retained subgraph, and score prediction.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conde/graph.hpp"
#include "conde/rng.hpp"
#include "conde/tensor.hpp"

namespace conde {

struct ModelConfig {
  std::size_t dim = 128;
  std::size_t n1 = 6;    // retained one-hop items
  std::size_t n2 = 10;   // retained two-hop neighbors per item
  std::size_t k = 4;     // subgraphs per user
  double lambda = 1e-5;  // L2 coefficient
  bool two_hop_users = false;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct AttentionParams {
  Tensor weight;  // d×d
  Tensor attn;    // 2d, split as [center ‖ neighbor]
};

struct GruParams {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;
};

struct ModelParams {
  ModelConfig config;
  Tensor user_emb, item_emb, concept_emb;
  AttentionParams concept_item, item_user, user_item;
  GruParams gru;
  Tensor denoise_w;
  bool freeze_concepts = false;

  static ModelParams init(std::size_t users, std::size_t items, std::size_t concepts, const ModelConfig& config,
                          std::uint64_t seed);

  /// Every tensor under a stable name, in checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  /// Tensors the optimizer updates (frozen concept embeddings excluded).
  std::vector<Tensor> trainable() const;
  /// Deep copy.
  ModelParams clone() const;

  std::size_t num_users() const { return user_emb.rows(); }
  std::size_t num_items() const { return item_emb.rows(); }
  std::size_t num_concepts() const { return concept_emb.rows(); }
};

/// Replaces concept embeddings from a TSV "concept_text \t v1 … vd" and freezes
/// them. Returns the number of concepts matched; unmatched rows keep their init.
std::size_t load_concept_vectors(ModelParams& params, const TripartiteGraph& g, const std::filesystem::path& path);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
ModelParams load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// ---- attention -------------------------------------------------------------------

/// Attention logits LeakyReLU(aᵀ[center ‖ x_i]) for each neighbor row.
Tensor attention_logits(const Tensor& center, const Tensor& neighbors, const AttentionParams& p);

/// LeakyReLU(Σ α_i W x_i) with α = softmax(logits [+ log_weights]). Returns
/// nullopt for an empty neighbor matrix (isolated node).
std::optional<Tensor> attention_aggregate(const Tensor& center, const Tensor& neighbors, const AttentionParams& p,
                                          const Tensor& log_weights = {});

/// The same aggregation for every node of `adj` at once. Row s of the result
/// aggregates sources[adj[s]] around centers[s]; isolated rows take fallback[s].
Tensor attention_layer(const Tensor& centers, const Tensor& sources, const Adjacency& adj, const AttentionParams& p,
                       const Tensor& fallback);

// ---- warm-up -----------------------------------------------------------------------

/// Neighbor lists the warm-up pass aggregates over (full or sampled).
struct WarmupLists {
  Adjacency item_concepts;
  Adjacency user_items;
  Adjacency item_users;

  static WarmupLists full(const TripartiteGraph& g);
  /// At most `budget` uniformly drawn neighbors per node and relation.
  static WarmupLists sampled(const TripartiteGraph& g, std::size_t budget, Rng& rng);

  SampledNeighborhood neighborhood(std::uint32_t user, bool with_users) const;
};

struct HiddenStates {
  Tensor item_concept;  // h_m after concept→item
  Tensor user;          // h_u
  Tensor item;          // h_m after user→item (used for prediction)
};

HiddenStates warmup_pass(const WarmupLists& lists, const ModelParams& params);

// ---- denoising ---------------------------------------------------------------------

/// GRU cell on matching vectors or row-aligned matrices (state, input).
Tensor gru_compose(const Tensor& state, const Tensor& input, const GruParams& p);

/// softmax over rows of f·w.
Tensor retention_scores(const Tensor& f, const Tensor& w);

enum class GumbelMode : std::uint8_t { kTraining, kInference };

/// τ = τ0·exp(−η·x).
struct GumbelConfig {
  double tau0 = 10.0;
  double eta = 2e-4;
  std::uint64_t x = 0;
  GumbelMode mode = GumbelMode::kTraining;

  double tau() const;
  static double tau_at(double tau0, double eta, std::uint64_t x);
};

/// Source of standard Gumbel draws −ln(−ln U). Record mode keeps every draw;
/// replay mode returns a recorded sequence and throws when it runs out.
class GumbelNoise {
 public:
  enum class Mode : std::uint8_t { kLive, kRecord, kReplay };

  explicit GumbelNoise(std::uint64_t seed, Mode mode = Mode::kLive);
  static GumbelNoise replay(std::vector<double> draws);

  double next();
  const std::vector<double>& recorded() const { return draws_; }
  void rewind() { pos_ = 0; }
  Mode mode() const { return mode_; }

 private:
  GumbelNoise() = default;
  Rng rng_;
  Mode mode_ = Mode::kLive;
  std::vector<double> draws_;
  std::size_t pos_ = 0;
};

struct GumbelSelection {
  std::vector<std::uint32_t> retained;  // ascending candidate positions
  std::vector<double> weights;          // π over candidates
  Tensor log_weights;                   // training: log π over all candidates
};

/// Training: retain the n largest ln s_i + ε_i, π = softmax((ln s + ε)/τ).
/// Inference: retain top-n by s (ties by index), π = s renormalized over the
/// retained set. Fewer than n candidates are all retained.
GumbelSelection gumbel_top_n(const Tensor& s, std::size_t n, double tau, GumbelMode mode, GumbelNoise& noise);
GumbelSelection gumbel_top_n(const Tensor& s, std::size_t n, double tau, GumbelMode mode, std::uint64_t seed);

/// How one denoising hop chooses its retained set.
enum class Selector : std::uint8_t { kDenoise, kRandom, kAll };

struct DenoiseOptions {
  std::size_t n1 = 6;
  std::size_t n2 = 10;
  double tau = 10.0;
  GumbelMode mode = GumbelMode::kTraining;
  Selector phase1 = Selector::kDenoise;
  Selector phase2 = Selector::kDenoise;
};

/// GRU relevance vectors and retention scores of a user's neighborhood; shared
/// by every subgraph drawn for the user in one minibatch.
struct UserRelevance {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> items;
  Tensor f1;  // K×d
  Tensor s1;  // K
  std::vector<std::vector<NodeRef>> candidates;  // per item
  std::vector<std::uint32_t> offsets;            // into s2 rows
  Tensor s2;  // per-item softmax segments, concatenated

  bool empty() const { return items.empty(); }
};

UserRelevance score_neighborhood(const SampledNeighborhood& nb, const HiddenStates& hidden, const ModelParams& params);

struct HopSelection {
  std::vector<NodeRef> candidates;
  std::vector<double> scores;           // s
  std::vector<double> weights;          // π
  std::vector<std::uint32_t> retained;  // ascending positions into candidates
  Tensor log_weights;                   // training: log π of retained, on the tape

  std::vector<NodeRef> retained_nodes() const;
};

struct DenoisedSubgraph {
  std::uint32_t user = 0;
  double tau = 0.0;
  HopSelection items;
  std::vector<HopSelection> neighbors;  // one per retained item, same order

  bool empty() const { return items.retained.empty(); }
};

DenoisedSubgraph select_subgraph(const UserRelevance& rel, const DenoiseOptions& opts, GumbelNoise& noise);

DenoisedSubgraph denoise_user(const SampledNeighborhood& nb, const HiddenStates& hidden, const ModelParams& params,
                              const DenoiseOptions& opts, GumbelNoise& noise);

// ---- refinement and prediction -------------------------------------------------------

struct Refined {
  Tensor user;   // h*_u
  Tensor items;  // h*_m, one row per retained item
};

Refined refine_preference(const DenoisedSubgraph& sub, const ModelParams& params, const HiddenStates& hidden);

Tensor predict(const Tensor& user_vec, const Tensor& item_vec);
/// sigmoid(h*_uᵀ h_m) for each listed item, using warm-up item states.
Tensor predict_items(const Tensor& user_vec, const HiddenStates& hidden, std::span<const std::uint32_t> items);

/// Inference-mode user vector over the user's lists. Denoising hops draw no
/// noise; random hops draw from `noise`. Users with no clicks fall back to
/// their warm-up state.
Tensor infer_user(std::uint32_t user, const WarmupLists& lists, const HiddenStates& hidden, const ModelParams& params,
                  const DenoiseOptions& opts, GumbelNoise& noise, DenoisedSubgraph* sub = nullptr);

/// Inference subgraph of every user over the full graph; random hops draw from
/// a per-user stream of `seed`.
std::vector<DenoisedSubgraph> inference_subgraphs(const ModelParams& params, const TripartiteGraph& g,
                                                  const DenoiseOptions& opts, std::uint64_t seed);

}  // namespace conde
