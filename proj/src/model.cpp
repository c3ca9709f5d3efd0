// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "conde/io.hpp"

namespace conde {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "conde-checkpoint/1";
constexpr double kLogClamp = 1e-12;

Tensor uniform_init(Shape shape, double bound, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = (2.0 * uniform_open01(rng) - 1.0) * bound;
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Glorot-uniform bound for a square d×d map.
double glorot(std::size_t d) { return std::sqrt(3.0 / static_cast<double>(d)); }

AttentionParams init_attention(std::size_t d, std::uint64_t seed) {
  const double b = 1.0 / std::sqrt(static_cast<double>(d));
  return {uniform_init({d, d}, glorot(d), derive_seed(seed, 1)), uniform_init({2 * d}, b, derive_seed(seed, 2))};
}

Tensor bias(std::size_t d) { return Tensor::zeros({d}, true); }

std::vector<std::uint32_t> top_positions(std::span<const double> key, std::size_t n) {
  std::vector<std::uint32_t> order(key.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return key[a] > key[b]; });
  order.resize(std::min(n, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

Tensor add_bias(const Tensor& x, const Tensor& b) { return x.rank() == 2 ? add_row(x, b) : add(x, b); }

Tensor gate(const Tensor& x, const Tensor& h, const Tensor& w, const Tensor& u, const Tensor& b) {
  return add_bias(add(linear(x, w), linear(h, u)), b);
}

}  // namespace

// ---- parameters ------------------------------------------------------------------

ModelParams ModelParams::init(std::size_t users, std::size_t items, std::size_t concepts, const ModelConfig& config,
                              std::uint64_t seed) {
  const std::size_t d = config.dim;
  if (d == 0) throw std::invalid_argument("model dimension must be >= 1");
  if (config.n1 == 0 || config.n2 == 0 || config.k == 0) throw std::invalid_argument("n1, n2 and k must be >= 1");
  const double b = 1.0 / std::sqrt(static_cast<double>(d));
  ModelParams p;
  p.config = config;
  p.user_emb = uniform_init({users, d}, b, derive_seed(seed, 11));
  p.item_emb = uniform_init({items, d}, b, derive_seed(seed, 12));
  p.concept_emb = uniform_init({concepts, d}, b, derive_seed(seed, 13));
  p.concept_item = init_attention(d, derive_seed(seed, 21));
  p.item_user = init_attention(d, derive_seed(seed, 22));
  p.user_item = init_attention(d, derive_seed(seed, 23));
  auto mat = [&](std::uint64_t tag) { return uniform_init({d, d}, glorot(d), derive_seed(seed, 31, tag)); };
  p.gru = {mat(1), mat(2), bias(d), mat(3), mat(4), bias(d), mat(5), mat(6), bias(d)};
  p.denoise_w = uniform_init({d}, b, derive_seed(seed, 41));
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  return {{"user_emb", user_emb},
          {"item_emb", item_emb},
          {"concept_emb", concept_emb},
          {"concept_item.weight", concept_item.weight},
          {"concept_item.attn", concept_item.attn},
          {"item_user.weight", item_user.weight},
          {"item_user.attn", item_user.attn},
          {"user_item.weight", user_item.weight},
          {"user_item.attn", user_item.attn},
          {"gru.w_z", gru.w_z},
          {"gru.u_z", gru.u_z},
          {"gru.b_z", gru.b_z},
          {"gru.w_r", gru.w_r},
          {"gru.u_r", gru.u_r},
          {"gru.b_r", gru.b_r},
          {"gru.w_h", gru.w_h},
          {"gru.u_h", gru.u_h},
          {"gru.b_h", gru.b_h},
          {"denoise_w", denoise_w}};
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) {
    if (freeze_concepts && t.same_as(concept_emb)) continue;
    out.push_back(t);
  }
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams p = *this;
  auto cp = [](Tensor& t) { t = t.clone(t.requires_grad()); };
  for (Tensor* t : {&p.user_emb, &p.item_emb, &p.concept_emb, &p.concept_item.weight, &p.concept_item.attn,
                    &p.item_user.weight, &p.item_user.attn, &p.user_item.weight, &p.user_item.attn, &p.gru.w_z,
                    &p.gru.u_z, &p.gru.b_z, &p.gru.w_r, &p.gru.u_r, &p.gru.b_r, &p.gru.w_h, &p.gru.u_h, &p.gru.b_h,
                    &p.denoise_w}) {
    cp(*t);
  }
  return p;
}

std::size_t load_concept_vectors(ModelParams& params, const TripartiteGraph& g, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open concept vectors " + path.string());
  const std::size_t d = params.config.dim;
  std::size_t matched = 0, lineno = 0;
  std::string line;
  auto vals = params.concept_emb.mutable_values();
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": missing tab");
    std::string text(trim(std::string_view(line).substr(0, tab)));
    std::istringstream rest(line.substr(tab + 1));
    std::vector<double> v;
    double x;
    while (rest >> x) v.push_back(x);
    if (v.size() != d) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(d) +
                               " values, got " + std::to_string(v.size()));
    }
    if (auto c = g.find(NodeKind::kConcept, text)) {
      std::copy(v.begin(), v.end(), vals.begin() + static_cast<std::ptrdiff_t>(*c * d));
      ++matched;
    }
  }
  params.freeze_concepts = true;
  params.concept_emb.set_requires_grad(false);
  return matched;
}

json to_json(const ModelConfig& c) {
  return {{"dim", c.dim}, {"n1", c.n1}, {"n2", c.n2}, {"k", c.k}, {"lambda", c.lambda}, {"two_hop_users", c.two_hop_users}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.n1 = j.at("n1").get<std::size_t>();
  c.n2 = j.at("n2").get<std::size_t>();
  c.k = j.at("k").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.two_hop_users = j.at("two_hop_users").get<bool>();
  return c;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path, const json& meta) {
  json tensors = json::object();
  for (const auto& [name, t] : params.named()) {
    tensors[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  json doc = {{"format", kCheckpointFormat},
              {"config", to_json(params.config)},
              {"freeze_concepts", params.freeze_concepts},
              {"meta", meta},
              {"tensors", std::move(tensors)}};
  atomic_write(path, doc.dump());
}

ModelParams load_checkpoint(const std::filesystem::path& path, json* meta) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != kCheckpointFormat) throw std::runtime_error("checkpoint " + path.string() + ": unknown format");
  ModelParams p;
  p.config = model_config_from_json(doc.at("config"));
  p.freeze_concepts = doc.at("freeze_concepts").get<bool>();
  const json& tensors = doc.at("tensors");
  auto get = [&](const std::string& name) {
    if (!tensors.contains(name)) throw std::runtime_error("checkpoint " + path.string() + ": missing tensor " + name);
    const json& t = tensors[name];
    Shape shape = t.at("shape").get<Shape>();
    auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != shape_numel(shape)) throw std::runtime_error("checkpoint: size mismatch in " + name);
    return Tensor::from(std::move(shape), std::move(data), true);
  };
  p.user_emb = get("user_emb");
  p.item_emb = get("item_emb");
  p.concept_emb = get("concept_emb");
  p.concept_item = {get("concept_item.weight"), get("concept_item.attn")};
  p.item_user = {get("item_user.weight"), get("item_user.attn")};
  p.user_item = {get("user_item.weight"), get("user_item.attn")};
  p.gru = {get("gru.w_z"), get("gru.u_z"), get("gru.b_z"), get("gru.w_r"), get("gru.u_r"),
           get("gru.b_r"), get("gru.w_h"), get("gru.u_h"), get("gru.b_h")};
  p.denoise_w = get("denoise_w");
  if (p.freeze_concepts) p.concept_emb.set_requires_grad(false);
  if (meta != nullptr) *meta = doc.value("meta", json::object());
  return p;
}

// ---- attention -------------------------------------------------------------------

Tensor attention_logits(const Tensor& center, const Tensor& neighbors, const AttentionParams& p) {
  const std::size_t d = center.numel();
  const Tensor a1 = slice(p.attn, 0, d);
  const Tensor a2 = slice(p.attn, d, d);
  return leaky_relu(add(matmul(neighbors, a2), dot(center, a1)));
}

std::optional<Tensor> attention_aggregate(const Tensor& center, const Tensor& neighbors, const AttentionParams& p,
                                          const Tensor& log_weights) {
  if (neighbors.rank() != 2) throw ShapeError("attention_aggregate: neighbors must be a matrix");
  if (neighbors.rows() == 0) return std::nullopt;
  Tensor logits = attention_logits(center, neighbors, p);
  if (log_weights.defined()) logits = add(logits, log_weights);
  const Tensor alpha = softmax(logits);
  return leaky_relu(matmul(alpha, linear(neighbors, p.weight)));
}

Tensor attention_layer(const Tensor& centers, const Tensor& sources, const Adjacency& adj, const AttentionParams& p,
                       const Tensor& fallback) {
  const std::size_t d = centers.cols();
  const std::size_t s = adj.nodes();
  if (centers.rows() != s || fallback.rows() != s) throw ShapeError("attention_layer: one center per adjacency node");
  std::vector<std::uint32_t> owner(adj.edges());
  bool isolated = false;
  for (std::size_t i = 0; i < s; ++i) {
    std::fill(owner.begin() + adj.offsets[i], owner.begin() + adj.offsets[i + 1], static_cast<std::uint32_t>(i));
    isolated = isolated || adj.degree(i) == 0;
  }
  if (adj.edges() == 0) return fallback;
  const Tensor a1 = slice(p.attn, 0, d);
  const Tensor a2 = slice(p.attn, d, d);
  const Tensor c = matmul(centers, a1);
  const Tensor q = matmul(sources, a2);
  const Tensor transformed = linear(sources, p.weight);
  const Tensor logits = leaky_relu(add(gather_rows(c, owner), gather_rows(q, adj.targets)));
  const Tensor alpha = segment_softmax(logits, adj.offsets);
  Tensor out = leaky_relu(segment_weighted_sum(alpha, gather_rows(transformed, adj.targets), adj.offsets));
  if (!isolated) return out;
  std::vector<double> keep(s * d, 1.0), drop(s * d, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    if (adj.degree(i) != 0) continue;
    std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(i * d), d, 0.0);
    std::fill_n(drop.begin() + static_cast<std::ptrdiff_t>(i * d), d, 1.0);
  }
  return add(mul(out, Tensor::from({s, d}, std::move(keep))), mul(fallback, Tensor::from({s, d}, std::move(drop))));
}

// ---- warm-up ---------------------------------------------------------------------

WarmupLists WarmupLists::full(const TripartiteGraph& g) {
  return {g.item_concepts(), g.user_items(), g.item_users()};
}

WarmupLists WarmupLists::sampled(const TripartiteGraph& g, std::size_t budget, Rng& rng) {
  if (budget == 0) throw std::invalid_argument("sampling budget must be >= 1");
  WarmupLists l;
  l.item_concepts = g.item_concepts().sample(budget, rng);
  l.user_items = g.user_items().sample(budget, rng);
  l.item_users = g.item_users().sample(budget, rng);
  return l;
}

SampledNeighborhood WarmupLists::neighborhood(std::uint32_t user, bool with_users) const {
  SampledNeighborhood nb;
  nb.user = user;
  auto items = user_items[user];
  nb.items.assign(items.begin(), items.end());
  for (auto m : nb.items) {
    auto cs = item_concepts[m];
    nb.concepts.emplace_back(cs.begin(), cs.end());
    std::vector<std::uint32_t> us;
    if (with_users) {
      for (auto v : item_users[m])
        if (v != user) us.push_back(v);
    }
    nb.users.push_back(std::move(us));
  }
  return nb;
}

HiddenStates warmup_pass(const WarmupLists& lists, const ModelParams& params) {
  if (lists.item_concepts.nodes() != params.num_items() || lists.user_items.nodes() != params.num_users() ||
      lists.item_users.nodes() != params.num_items()) {
    throw std::invalid_argument("warmup_pass: graph and parameters disagree on node counts");
  }
  HiddenStates h;
  h.item_concept =
      attention_layer(params.item_emb, params.concept_emb, lists.item_concepts, params.concept_item, params.item_emb);
  h.user = attention_layer(params.user_emb, h.item_concept, lists.user_items, params.item_user, params.user_emb);
  h.item = attention_layer(params.item_emb, h.user, lists.item_users, params.user_item, h.item_concept);
  return h;
}

// ---- denoising -------------------------------------------------------------------

Tensor gru_compose(const Tensor& state, const Tensor& input, const GruParams& p) {
  if (state.shape() != input.shape()) throw ShapeError("gru_compose: state and input shapes differ");
  const Tensor z = sigmoid(gate(input, state, p.w_z, p.u_z, p.b_z));
  const Tensor r = sigmoid(gate(input, state, p.w_r, p.u_r, p.b_r));
  const Tensor cand = tanh(gate(input, mul(r, state), p.w_h, p.u_h, p.b_h));
  return add(state, mul(z, sub(cand, state)));
}

Tensor retention_scores(const Tensor& f, const Tensor& w) { return softmax(matmul(f, w)); }

double GumbelConfig::tau_at(double tau0, double eta, std::uint64_t x) {
  return tau0 * std::exp(-eta * static_cast<double>(x));
}

double GumbelConfig::tau() const { return tau_at(tau0, eta, x); }

GumbelNoise::GumbelNoise(std::uint64_t seed, Mode mode) : rng_(seed), mode_(mode) {
  if (mode == Mode::kReplay) throw std::invalid_argument("GumbelNoise: use GumbelNoise::replay");
}

GumbelNoise GumbelNoise::replay(std::vector<double> draws) {
  GumbelNoise n;
  n.mode_ = Mode::kReplay;
  n.draws_ = std::move(draws);
  return n;
}

double GumbelNoise::next() {
  if (mode_ == Mode::kReplay) {
    if (pos_ >= draws_.size()) throw std::runtime_error("GumbelNoise: replay sequence exhausted");
    return draws_[pos_++];
  }
  const double g = -std::log(-std::log(uniform_open01(rng_)));
  if (mode_ == Mode::kRecord) draws_.push_back(g);
  return g;
}

GumbelSelection gumbel_top_n(const Tensor& s, std::size_t n, double tau, GumbelMode mode, GumbelNoise& noise) {
  if (n == 0) throw std::invalid_argument("gumbel_top_n: n must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_top_n: tau must be > 0");
  if (s.rank() != 1) throw ShapeError("gumbel_top_n: scores must be a vector");
  const std::size_t k = s.numel();
  GumbelSelection out;
  if (k == 0) return out;
  if (mode == GumbelMode::kInference) {
    out.retained = top_positions(s.values(), n);
    double z = 0.0;
    for (auto i : out.retained) z += s[i];
    out.weights.assign(k, 0.0);
    for (auto i : out.retained) out.weights[i] = s[i] / z;
    return out;
  }
  std::vector<double> eps(k);
  for (double& e : eps) e = noise.next();
  const Tensor log_s = log(clamp(s, kLogClamp, std::numeric_limits<double>::infinity()));
  const Tensor perturbed = add(log_s, Tensor::vector(eps));
  out.retained = top_positions(perturbed.values(), n);
  out.log_weights = log_softmax(scale(perturbed, 1.0 / tau));
  out.weights.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.weights[i] = std::exp(out.log_weights[i]);
  return out;
}

GumbelSelection gumbel_top_n(const Tensor& s, std::size_t n, double tau, GumbelMode mode, std::uint64_t seed) {
  GumbelNoise noise(seed);
  return gumbel_top_n(s, n, tau, mode, noise);
}

std::vector<NodeRef> HopSelection::retained_nodes() const {
  std::vector<NodeRef> out;
  out.reserve(retained.size());
  for (auto i : retained) out.push_back(candidates[i]);
  return out;
}

UserRelevance score_neighborhood(const SampledNeighborhood& nb, const HiddenStates& hidden, const ModelParams& params) {
  UserRelevance rel;
  rel.user = nb.user;
  rel.items = nb.items;
  if (nb.items.empty()) return rel;
  const std::size_t k = nb.items.size();
  const std::vector<std::uint32_t> self(k, nb.user);
  rel.f1 = gru_compose(gather_rows(hidden.user, self), gather_rows(hidden.item, nb.items), params.gru);
  rel.s1 = retention_scores(rel.f1, params.denoise_w);

  // Two-hop candidates: concepts first, then co-clicking users.
  std::vector<std::uint32_t> state_rows, source_rows;
  rel.offsets.push_back(0);
  bool any_user = false;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<NodeRef> cands;
    for (auto c : nb.concepts[i]) {
      cands.push_back({NodeKind::kConcept, c});
      source_rows.push_back(c);
    }
    if (i < nb.users.size()) {
      for (auto v : nb.users[i]) {
        cands.push_back({NodeKind::kUser, v});
        source_rows.push_back(static_cast<std::uint32_t>(params.num_concepts() + v));
        any_user = true;
      }
    }
    state_rows.insert(state_rows.end(), cands.size(), static_cast<std::uint32_t>(i));
    rel.offsets.push_back(rel.offsets.back() + static_cast<std::uint32_t>(cands.size()));
    rel.candidates.push_back(std::move(cands));
  }
  if (state_rows.empty()) return rel;
  const Tensor sources = any_user ? concat_rows(params.concept_emb, hidden.user) : params.concept_emb;
  const Tensor f2 = gru_compose(gather_rows(rel.f1, state_rows), gather_rows(sources, source_rows), params.gru);
  rel.s2 = segment_softmax(matmul(f2, params.denoise_w), rel.offsets);
  return rel;
}

namespace {

HopSelection choose(const Tensor& s, std::vector<NodeRef> candidates, std::size_t n, Selector selector,
                    const DenoiseOptions& opts, GumbelNoise& noise) {
  HopSelection hop;
  hop.candidates = std::move(candidates);
  hop.scores.assign(s.values().begin(), s.values().end());
  const std::size_t k = hop.candidates.size();
  switch (selector) {
    case Selector::kDenoise: {
      GumbelSelection sel = gumbel_top_n(s, n, opts.tau, opts.mode, noise);
      hop.retained = std::move(sel.retained);
      hop.weights = std::move(sel.weights);
      if (sel.log_weights.defined()) hop.log_weights = gather_rows(sel.log_weights, hop.retained);
      break;
    }
    case Selector::kRandom: {
      std::vector<double> eps(k);
      for (double& e : eps) e = noise.next();
      hop.retained = top_positions(eps, n);
      hop.weights.assign(k, 1.0 / static_cast<double>(k));
      break;
    }
    case Selector::kAll:
      hop.retained.resize(k);
      std::iota(hop.retained.begin(), hop.retained.end(), 0u);
      hop.weights = hop.scores;
      break;
  }
  return hop;
}

}  // namespace

DenoisedSubgraph select_subgraph(const UserRelevance& rel, const DenoiseOptions& opts, GumbelNoise& noise) {
  DenoisedSubgraph sub;
  sub.user = rel.user;
  sub.tau = opts.tau;
  if (rel.empty()) return sub;
  std::vector<NodeRef> items;
  for (auto m : rel.items) items.push_back({NodeKind::kItem, m});
  sub.items = choose(rel.s1, std::move(items), opts.n1, opts.phase1, opts, noise);
  for (auto i : sub.items.retained) {
    const std::uint32_t len = rel.offsets[i + 1] - rel.offsets[i];
    if (len == 0) {
      sub.neighbors.emplace_back();
      continue;
    }
    sub.neighbors.push_back(
        choose(slice(rel.s2, rel.offsets[i], len), rel.candidates[i], opts.n2, opts.phase2, opts, noise));
  }
  return sub;
}

DenoisedSubgraph denoise_user(const SampledNeighborhood& nb, const HiddenStates& hidden, const ModelParams& params,
                              const DenoiseOptions& opts, GumbelNoise& noise) {
  return select_subgraph(score_neighborhood(nb, hidden, params), opts, noise);
}

// ---- refinement and prediction -----------------------------------------------------

Refined refine_preference(const DenoisedSubgraph& sub, const ModelParams& params, const HiddenStates& hidden) {
  if (sub.empty()) throw std::invalid_argument("refine_preference: empty subgraph");
  std::vector<Tensor> rows;
  rows.reserve(sub.items.retained.size());
  for (std::size_t j = 0; j < sub.items.retained.size(); ++j) {
    const std::uint32_t m = sub.items.candidates[sub.items.retained[j]].index;
    const Tensor center = row(params.item_emb, m);
    const HopSelection& hop = sub.neighbors[j];
    std::vector<std::uint32_t> cs, us;
    for (auto i : hop.retained) {
      const NodeRef& v = hop.candidates[i];
      (v.kind == NodeKind::kConcept ? cs : us).push_back(v.index);
    }
    if (cs.empty() && us.empty()) {
      rows.push_back(center);
      continue;
    }
    Tensor x;
    if (!cs.empty()) x = gather_rows(params.concept_emb, cs);
    if (!us.empty()) x = x.defined() ? concat_rows(x, gather_rows(hidden.user, us)) : gather_rows(hidden.user, us);
    rows.push_back(*attention_aggregate(center, x, params.concept_item, hop.log_weights));
  }
  Refined r;
  r.items = stack(rows);
  r.user = *attention_aggregate(row(params.user_emb, sub.user), r.items, params.item_user, sub.items.log_weights);
  return r;
}

Tensor predict(const Tensor& user_vec, const Tensor& item_vec) { return sigmoid(dot(user_vec, item_vec)); }

Tensor predict_items(const Tensor& user_vec, const HiddenStates& hidden, std::span<const std::uint32_t> items) {
  return sigmoid(matmul(gather_rows(hidden.item, items), user_vec));
}

Tensor infer_user(std::uint32_t user, const WarmupLists& lists, const HiddenStates& hidden, const ModelParams& params,
                  const DenoiseOptions& opts, GumbelNoise& noise, DenoisedSubgraph* sub) {
  DenoiseOptions o = opts;
  o.mode = GumbelMode::kInference;
  DenoisedSubgraph s = denoise_user(lists.neighborhood(user, params.config.two_hop_users), hidden, params, o, noise);
  Tensor out = s.empty() ? row(hidden.user, user) : refine_preference(s, params, hidden).user;
  if (sub != nullptr) *sub = std::move(s);
  return out;
}

std::vector<DenoisedSubgraph> inference_subgraphs(const ModelParams& params, const TripartiteGraph& g,
                                                  const DenoiseOptions& opts, std::uint64_t seed) {
  NoGradScope no_grad;
  const WarmupLists lists = WarmupLists::full(g);
  const HiddenStates hidden = warmup_pass(lists, params);
  std::vector<DenoisedSubgraph> subs(g.num_users());
  for (std::uint32_t u = 0; u < g.num_users(); ++u) {
    GumbelNoise noise(derive_seed(seed, 0xe7ull, u));
    infer_user(u, lists, hidden, params, opts, noise, &subs[u]);
  }
  return subs;
}

}  // namespace conde
