// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "conde/io.hpp"

namespace conde {

Variant parse_variant(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '&', '+');
  if (s == "random-1") return {Selector::kRandom, Selector::kDenoise};
  if (s == "random-2") return {Selector::kDenoise, Selector::kRandom};
  if (s == "random-1+2") return {Selector::kRandom, Selector::kRandom};
  if (s == "denoise-1") return {Selector::kDenoise, Selector::kAll};
  if (s == "denoise-2") return {Selector::kAll, Selector::kDenoise};
  if (s == "denoise-1+2") return {Selector::kDenoise, Selector::kDenoise};
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

std::string variant_name(const Variant& v) {
  for (const auto& n : variant_names())
    if (parse_variant(n) == v) return n;
  return "custom";
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"random-1",  "random-2",  "random-1+2",
                                                 "denoise-1", "denoise-2", "denoise-1+2"};
  return names;
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid config: ") + what);
  };
  need(model.dim >= 1, "dim must be >= 1");
  need(model.n1 >= 1, "n1 must be >= 1");
  need(model.n2 >= 1, "n2 must be >= 1");
  need(model.k >= 1, "k must be >= 1");
  need(model.lambda >= 0.0, "lambda must be >= 0");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(lr > 0.0, "lr must be > 0");
  need(tau0 > 0.0, "tau0 must be > 0");
  need(eta >= 0.0, "eta must be >= 0");
  need(p >= 1, "p must be >= 1");
  need(optimizer == "adam" || optimizer == "sgd", "optimizer must be adam or sgd");
  need(k_metrics >= 1, "k_metrics must be >= 1");
}

std::vector<TrainingExample> sample_negatives(const TripartiteGraph& g, std::span<const UserItem> positives,
                                              std::uint64_t seed, std::size_t* skipped_users) {
  std::vector<TrainingExample> out;
  out.reserve(2 * positives.size());
  std::size_t skipped = 0;
  std::int64_t last_user = -1;
  Rng rng;
  for (const auto& [u, m] : positives) {
    if (static_cast<std::int64_t>(u) != last_user) {
      last_user = u;
      rng.seed(derive_seed(seed, u));
      if (g.user_items().degree(u) >= g.num_items()) {
        spdlog::warn("user {} clicked every item; no negatives available", g.user_ids()[u]);
        ++skipped;
      }
    }
    if (g.user_items().degree(u) >= g.num_items()) continue;
    out.push_back({u, m, 1});
    std::uint32_t neg;
    do {
      neg = static_cast<std::uint32_t>(uniform_index(rng, g.num_items()));
    } while (g.clicked(u, neg));
    out.push_back({u, neg, 0});
  }
  if (skipped_users != nullptr) *skipped_users = skipped;
  return out;
}

Tensor bce_sum(const Tensor& yhat, std::span<const double> labels) {
  if (yhat.numel() != labels.size()) throw ShapeError("bce_sum: one label per prediction");
  const Tensor y = Tensor::vector({labels.begin(), labels.end()});
  std::vector<double> inv(labels.size());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - labels[i];
  const Tensor yc = clamp(yhat, 1e-12, 1.0 - 1e-12);
  const Tensor ll = add(mul(y, log(yc)), mul(Tensor::vector(std::move(inv)), log(add_scalar(scale(yc, -1.0), 1.0))));
  return scale(sum(ll), -1.0);
}

Tensor l2_penalty(const ModelParams& params) {
  Tensor total;
  for (const Tensor& t : params.trainable()) {
    Tensor sq = sum(mul(t, t));
    total = total.defined() ? add(total, sq) : sq;
  }
  return total;
}

Tensor user_data_loss(const UserRelevance& rel, std::span<const TrainingExample> examples, const HiddenStates& hidden,
                      const ModelParams& params, const DenoiseOptions& opts, std::size_t k, GumbelNoise& noise) {
  if (rel.empty() || examples.empty()) return {};
  std::vector<std::uint32_t> items;
  std::vector<double> labels;
  for (const auto& e : examples) {
    items.push_back(e.item);
    labels.push_back(e.label);
  }
  Tensor total;
  for (std::size_t j = 0; j < k; ++j) {
    const DenoisedSubgraph sub = select_subgraph(rel, opts, noise);
    if (sub.empty()) continue;
    const Refined r = refine_preference(sub, params, hidden);
    Tensor l = bce_sum(predict_items(r.user, hidden, items), labels);
    total = total.defined() ? add(total, l) : l;
  }
  return total;
}

Tensor loss_for_user(const UserRelevance& rel, std::span<const TrainingExample> examples, const HiddenStates& hidden,
                     const ModelParams& params, const DenoiseOptions& opts, std::size_t k, double lambda,
                     GumbelNoise& noise) {
  Tensor reg = scale(l2_penalty(params), lambda);
  Tensor data = user_data_loss(rel, examples, hidden, params, opts, k, noise);
  return data.defined() ? add(data, reg) : reg;
}

Tensor batch_loss(const Batch& batch, const WarmupLists& lists, const ModelParams& params, const DenoiseOptions& opts,
                  GumbelNoise& noise) {
  const HiddenStates hidden = warmup_pass(lists, params);
  Tensor total = scale(l2_penalty(params), params.config.lambda);
  for (std::size_t i = 0; i < batch.users.size(); ++i) {
    const UserRelevance rel =
        score_neighborhood(lists.neighborhood(batch.users[i], params.config.two_hop_users), hidden, params);
    Tensor l = user_data_loss(rel, batch.examples[i], hidden, params, opts, params.config.k, noise);
    if (l.defined()) total = add(total, l);
  }
  return total;
}

// ---- optimizers --------------------------------------------------------------------

void Adam::step(std::span<Tensor> params) {
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Sgd::step(std::span<Tensor> params) {
  for (Tensor& p : params) {
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_values();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr_ * g[j];
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr) {
  if (name == "adam") return std::make_unique<Adam>(lr);
  if (name == "sgd") return std::make_unique<Sgd>(lr);
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

// ---- training loop -----------------------------------------------------------------

namespace {

std::string param_norms(const ModelParams& params) {
  std::ostringstream os;
  for (const auto& [name, t] : params.named()) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    os << ' ' << name << '=' << std::sqrt(s);
  }
  return os.str();
}

DenoiseOptions options_for(const TrainConfig& cfg, double tau, GumbelMode mode) {
  DenoiseOptions o;
  o.n1 = cfg.model.n1;
  o.n2 = cfg.model.n2;
  o.tau = tau;
  o.mode = mode;
  o.phase1 = cfg.variant.phase1;
  o.phase2 = cfg.variant.phase2;
  return o;
}

}  // namespace

TrainResult train(const GraphArchive& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const TripartiteGraph& g = data.graph;
  std::vector<std::uint32_t> users;
  for (std::uint32_t u = 0; u < g.num_users(); ++u)
    if (g.user_items().degree(u) > 0) users.push_back(u);
  if (users.empty()) throw std::invalid_argument("train: graph has no user with a click");

  TrainResult result;
  result.params = ModelParams::init(g.num_users(), g.num_items(), g.num_concepts(), cfg.model, cfg.seed);
  if (hooks.on_init) hooks.on_init(result.params);
  if (cfg.freeze_concepts) {
    result.params.freeze_concepts = true;
    result.params.concept_emb.set_requires_grad(false);
  }
  ModelParams& params = result.params;
  auto optimizer = make_optimizer(cfg.optimizer, cfg.lr);
  std::vector<Tensor> trainable = params.trainable();

  const bool has_valid = data.splits.count("valid") > 0 && !data.splits.at("valid").positives.empty();
  ModelParams best = params.clone();
  double best_auc = -1.0;
  std::size_t since_best = 0;
  std::uint64_t x = 0;
  Rng order_rng(derive_seed(cfg.seed, 0x0dull));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order_rng, users);
    double epoch_loss = 0.0;
    double tau = GumbelConfig::tau_at(cfg.tau0, cfg.eta, x);
    for (std::size_t start = 0; start < users.size(); start += cfg.batch_size, ++x) {
      tau = GumbelConfig::tau_at(cfg.tau0, cfg.eta, x);
      result.tau_trace.push_back({x, tau});
      spdlog::debug("epoch {} minibatch {} tau {:.17g}", epoch, x, tau);

      Batch batch;
      std::vector<UserItem> positives;
      for (std::size_t i = start; i < std::min(users.size(), start + cfg.batch_size); ++i) {
        batch.users.push_back(users[i]);
        for (auto m : g.user_items()[users[i]]) positives.emplace_back(users[i], m);
      }
      const auto examples = sample_negatives(g, positives, derive_seed(cfg.seed, 0x4eull, epoch));
      batch.examples.resize(batch.users.size());
      for (std::size_t i = 0, e = 0; i < batch.users.size(); ++i)
        while (e < examples.size() && examples[e].user == batch.users[i]) batch.examples[i].push_back(examples[e++]);

      Rng sample_rng(derive_seed(cfg.seed, 0x5aull, x));
      const WarmupLists lists = WarmupLists::sampled(g, cfg.p, sample_rng);
      GumbelNoise noise(derive_seed(cfg.seed, 0x6bull, x));

      Tape tape;
      TapeScope scope(tape);
      const Tensor loss = batch_loss(batch, lists, params, options_for(cfg, tau, GumbelMode::kTraining), noise);
      if (!std::isfinite(loss.item())) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " minibatch " +
                                 std::to_string(x) + " tau " + std::to_string(tau) + "; parameter norms:" +
                                 param_norms(params));
      }
      epoch_loss += loss.item();
      tape.backward(loss);
      optimizer->step(trainable);
      for (Tensor& t : trainable) t.zero_grad();
    }

    EpochRecord rec{epoch, epoch_loss / static_cast<double>(users.size()), tau, std::nullopt};
    if (has_valid) {
      rec.valid = evaluate_split(params, data, "valid", cfg.variant, cfg.k_metrics, std::nullopt, cfg.seed).overall;
    }
    result.history.push_back(rec);
    spdlog::info("epoch {} loss {:.6f} tau {:.6f} valid auc {}", epoch, rec.loss, tau,
                 rec.valid ? std::to_string(rec.valid->auc) : std::string("n/a"));
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (!has_valid || !rec.valid) {
      result.best_epoch = epoch;
      continue;
    }
    if (rec.valid->auc > best_auc) {
      best_auc = rec.valid->auc;
      best = params.clone();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      spdlog::info("early stop at epoch {} (best {})", epoch, result.best_epoch);
      break;
    }
  }
  if (has_valid && result.best_epoch > 0) result.params = std::move(best);
  return result;
}

RankingReport evaluate_split(const ModelParams& params, const GraphArchive& data, const std::string& split,
                             const Variant& variant, std::size_t k, std::optional<std::size_t> longtail_threshold,
                             std::uint64_t seed) {
  auto it = data.splits.find(split);
  if (it == data.splits.end()) throw std::invalid_argument("archive has no split '" + split + "'");
  const TripartiteGraph& g = data.graph;
  if (g.num_users() != params.num_users() || g.num_items() != params.num_items() ||
      g.num_concepts() != params.num_concepts()) {
    throw std::invalid_argument("checkpoint and graph disagree on node counts");
  }
  NoGradScope no_grad;
  const WarmupLists lists = WarmupLists::full(g);
  const HiddenStates hidden = warmup_pass(lists, params);
  DenoiseOptions opts;
  opts.n1 = params.config.n1;
  opts.n2 = params.config.n2;
  opts.mode = GumbelMode::kInference;
  opts.phase1 = variant.phase1;
  opts.phase2 = variant.phase2;
  const EvalTask task = make_task(it->second, [&](std::uint32_t u, std::span<const std::uint32_t> items) {
    GumbelNoise noise(derive_seed(seed, 0xe7ull, u));
    const Tensor hu = infer_user(u, lists, hidden, params, opts, noise);
    const Tensor y = predict_items(hu, hidden, items);
    return std::vector<double>(y.values().begin(), y.values().end());
  });
  const auto freq = item_frequencies(g);
  return make_report(task, k, freq, longtail_threshold);
}

void write_metrics_csv(const std::filesystem::path& path, const TrainResult& r, std::size_t k,
                       const std::optional<RankingReport>& test) {
  atomic_write(path, [&](std::ostream& os) {
    os.precision(17);
    os << "epoch,split,auc,ndcg@" << k << ",hit@" << k << ",map@" << k << ",loss,tau\n";
    auto metrics = [&](const std::optional<MetricSet>& m) {
      if (m) os << m->auc << ',' << m->ndcg << ',' << m->hit << ',' << m->map;
      else os << ",,,";
    };
    for (const auto& e : r.history) {
      os << e.epoch << ",train,,,,," << e.loss << ',' << e.tau << '\n';
      if (e.valid) {
        os << e.epoch << ",valid,";
        metrics(e.valid);
        os << ',' << e.loss << ',' << e.tau << '\n';
      }
    }
    if (test) {
      os << r.best_epoch << ",test,";
      metrics(test->overall);
      os << ",,\n";
    }
  });
}

AblationResult run_ablation(const GraphArchive& data, TrainConfig cfg, const Variant& variant,
                            std::optional<std::size_t> longtail_threshold) {
  cfg.variant = variant;
  AblationResult r;
  r.variant = variant;
  r.training = train(data, cfg);
  r.test = evaluate_split(r.training.params, data, "test", variant, cfg.k_metrics, longtail_threshold, cfg.seed);
  return r;
}

}  // namespace conde
