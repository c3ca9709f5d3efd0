// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "conde/model.hpp"
#include "support.hpp"

using namespace conde;
using conde::testing::random_tensor;
using conde::testing::TempDir;
using conde::testing::toy_graph;

namespace {

ModelConfig small_config(std::size_t dim = 4) {
  ModelConfig c;
  c.dim = dim;
  c.n1 = 2;
  c.n2 = 1;
  c.k = 2;
  return c;
}

ModelParams toy_params(const TripartiteGraph& g, std::size_t dim = 4, std::uint64_t seed = 1) {
  return ModelParams::init(g.num_users(), g.num_items(), g.num_concepts(), small_config(dim), seed);
}

AttentionParams identity_attention(std::size_t d) {
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  return {Tensor::from({d, d}, eye), Tensor::zeros({2 * d})};
}

double lrelu(double x) { return x > 0 ? x : kLeakySlope * x; }

// Plain-loop attention used as an oracle.
std::vector<double> attention_oracle(const std::vector<double>& center, const std::vector<std::vector<double>>& xs,
                                     const AttentionParams& p) {
  const std::size_t d = center.size();
  std::vector<double> logits;
  for (const auto& x : xs) {
    double z = 0.0;
    for (std::size_t i = 0; i < d; ++i) z += p.attn[i] * center[i] + p.attn[d + i] * x[i];
    logits.push_back(lrelu(z));
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& l : logits) total += (l = std::exp(l - mx));
  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    for (std::size_t r = 0; r < d; ++r) {
      double wx = 0.0;
      for (std::size_t c = 0; c < d; ++c) wx += p.weight.at(r, c) * xs[j][c];
      out[r] += logits[j] / total * wx;
    }
  }
  for (auto& v : out) v = lrelu(v);
  return out;
}

std::vector<double> row_values(const Tensor& m, std::size_t r) {
  const auto t = row(m, r);
  return {t.values().begin(), t.values().end()};
}

void check_close(std::span<const double> a, std::span<const double> b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("attention examples") {
  Rng rng(1);
  const std::size_t d = 3;
  AttentionParams p{random_tensor({d, d}, rng), random_tensor({2 * d}, rng)};
  const Tensor center = random_tensor({d}, rng);
  const Tensor x = random_tensor({1, d}, rng);

  SUBCASE("single neighbor") {
    const Tensor out = *attention_aggregate(center, x, p);
    const Tensor expect = leaky_relu(linear(row(x, 0), p.weight));
    check_close(out.values(), expect.values(), 1e-15);
  }
  SUBCASE("identical neighbors split evenly") {
    const Tensor two = concat_rows(x, x);
    const Tensor alpha = softmax(attention_logits(center, two, p));
    CHECK(alpha[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(alpha[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("identity map with zero attention vector") {
    const auto q = identity_attention(2);
    const Tensor out = *attention_aggregate(Tensor::vector({5.0, -7.0}), Tensor::from({1, 2}, {1.0, 0.0}), q);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 0.0);
    const Tensor neg = *attention_aggregate(Tensor::vector({0.0, 0.0}), Tensor::from({1, 2}, {1.0, -1.0}), q);
    CHECK(neg[1] == doctest::Approx(-0.2).epsilon(1e-15));
  }
  SUBCASE("isolated node") { CHECK_FALSE(attention_aggregate(center, Tensor::zeros({0, d}), p).has_value()); }
}

TEST_CASE("attention matches a loop oracle; weights sum to one") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 5);
    const std::size_t n = 1 + uniform_index(rng, 6);
    AttentionParams p{random_tensor({d, d}, rng), random_tensor({2 * d}, rng, -2, 2)};
    const Tensor center = random_tensor({d}, rng);
    const Tensor xs = random_tensor({n, d}, rng);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back(row_values(xs, i));
    const auto expect = attention_oracle({center.values().begin(), center.values().end()}, rows, p);
    check_close(attention_aggregate(center, xs, p)->values(), expect, 1e-12);
    const Tensor alpha = softmax(attention_logits(center, xs, p));
    CHECK(std::abs(std::accumulate(alpha.values().begin(), alpha.values().end(), 0.0) - 1.0) <= 1e-9);
  }
}

TEST_CASE("batched attention layer equals per-node aggregation with fallback") {
  Rng rng(3);
  const std::size_t d = 3;
  const Adjacency adj = Adjacency::from_lists({{0, 2}, {}, {1}, {2, 1, 0}});
  AttentionParams p{random_tensor({d, d}, rng), random_tensor({2 * d}, rng)};
  const Tensor centers = random_tensor({4, d}, rng);
  const Tensor sources = random_tensor({3, d}, rng);
  const Tensor fallback = random_tensor({4, d}, rng);
  const Tensor out = attention_layer(centers, sources, adj, p, fallback);
  for (std::uint32_t i = 0; i < 4; ++i) {
    const auto nbrs = adj[i];
    if (nbrs.empty()) {
      check_close(row_values(out, i), row_values(fallback, i), 0.0);
      continue;
    }
    const auto one = attention_aggregate(row(centers, i), gather_rows(sources, nbrs), p);
    check_close(row_values(out, i), one->values(), 1e-12);
  }
}

TEST_CASE("warm-up pass") {
  SUBCASE("item without concepts keeps its embedding") {
    std::vector<Interaction> clicks{{"u", "bare", {}}, {"u", "tagged", {}}};
    std::vector<ItemConceptRecord> tags{{"tagged", "c", 1.0}};
    const auto g = build_graph(clicks, tags);
    const auto params = toy_params(g);
    const auto h = warmup_pass(WarmupLists::full(g), params);
    const auto bare = *g.find(NodeKind::kItem, "bare");
    check_close(row_values(h.item_concept, bare), row_values(params.item_emb, bare), 0.0);
  }
  SUBCASE("single chain composes singleton cases") {
    std::vector<Interaction> clicks{{"u", "m", {}}};
    std::vector<ItemConceptRecord> tags{{"m", "c", 1.0}};
    const auto g = build_graph(clicks, tags);
    const auto p = toy_params(g);
    const auto h = warmup_pass(WarmupLists::full(g), p);
    const Tensor hm = leaky_relu(linear(row(p.concept_emb, 0), p.concept_item.weight));
    const Tensor hu = leaky_relu(linear(hm, p.item_user.weight));
    const Tensor hm2 = leaky_relu(linear(hu, p.user_item.weight));
    check_close(row_values(h.item_concept, 0), hm.values(), 1e-15);
    check_close(row_values(h.user, 0), hu.values(), 1e-15);
    check_close(row_values(h.item, 0), hm2.values(), 1e-15);
  }
  SUBCASE("neighbor order does not matter") {
    const auto g = toy_graph();
    const auto p = toy_params(g, 5);
    const WarmupLists a = WarmupLists::full(g);
    auto reversed = [](const Adjacency& adj) {
      std::vector<std::vector<std::uint32_t>> lists;
      for (std::size_t i = 0; i < adj.nodes(); ++i) lists.emplace_back(adj[i].rbegin(), adj[i].rend());
      return Adjacency::from_lists(lists);
    };
    const WarmupLists b{reversed(a.item_concepts), reversed(a.user_items), reversed(a.item_users)};
    const auto ha = warmup_pass(a, p);
    const auto hb = warmup_pass(b, p);
    check_close(ha.user.values(), hb.user.values(), 1e-9);
    check_close(ha.item.values(), hb.item.values(), 1e-9);
  }
  SUBCASE("count mismatch is rejected") {
    const auto g = toy_graph();
    const auto p = ModelParams::init(g.num_users() + 1, g.num_items(), g.num_concepts(), small_config(), 1);
    CHECK_THROWS_AS(warmup_pass(WarmupLists::full(g), p), std::invalid_argument);
  }
}

TEST_CASE("GRU cell") {
  const std::size_t d = 4;
  auto zero_gru = [&] {
    auto z = [&] { return Tensor::zeros({d, d}); };
    auto b = [&] { return Tensor::zeros({d}); };
    return GruParams{z(), z(), b(), z(), z(), b(), z(), z(), b()};
  };
  const Tensor h = Tensor::vector({1.0, -2.0, 0.5, 4.0});
  const Tensor x = Tensor::vector({3.0, 3.0, -1.0, 0.0});
  const Tensor half = gru_compose(h, x, zero_gru());
  for (std::size_t i = 0; i < d; ++i) CHECK(half[i] == 0.5 * h[i]);
  const Tensor none = gru_compose(Tensor::zeros({d}), x, zero_gru());
  for (std::size_t i = 0; i < d; ++i) CHECK(none[i] == 0.0);

  Rng rng(4);
  GruParams p{random_tensor({d, d}, rng), random_tensor({d, d}, rng), random_tensor({d}, rng),
              random_tensor({d, d}, rng), random_tensor({d, d}, rng), random_tensor({d}, rng),
              random_tensor({d, d}, rng), random_tensor({d, d}, rng), random_tensor({d}, rng)};

  // Plain-loop oracle of the standard cell.
  auto mv = [&](const Tensor& m, std::span<const double> v, std::size_t r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += m.at(r, c) * v[c];
    return s;
  };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const Tensor out = gru_compose(h, x, p);
  std::vector<double> rh(d);
  for (std::size_t i = 0; i < d; ++i) rh[i] = sig(mv(p.w_r, x.values(), i) + mv(p.u_r, h.values(), i) + p.b_r[i]) * h[i];
  for (std::size_t i = 0; i < d; ++i) {
    const double z = sig(mv(p.w_z, x.values(), i) + mv(p.u_z, h.values(), i) + p.b_z[i]);
    const double cand = std::tanh(mv(p.w_h, x.values(), i) + mv(p.u_h, rh, i) + p.b_h[i]);
    CHECK(out[i] == doctest::Approx((1 - z) * h[i] + z * cand).epsilon(1e-12));
  }

  // Row-aligned matrices compose row by row.
  const Tensor hs = random_tensor({3, d}, rng);
  const Tensor xs = random_tensor({3, d}, rng);
  const Tensor batched = gru_compose(hs, xs, p);
  for (std::size_t r = 0; r < 3; ++r) check_close(row_values(batched, r), gru_compose(row(hs, r), row(xs, r), p).values(), 1e-15);

  std::vector<Tensor> all{p.w_z, p.u_z, p.b_z, p.w_r, p.u_r, p.b_r, p.w_h, p.u_h, p.b_h};
  Tensor hv = h.clone(true), xv = x.clone(true);
  all.push_back(hv);
  all.push_back(xv);
  CHECK(finite_difference_check([&] { return sum(gru_compose(hv, xv, p)); }, all) <= 1e-4);
}

TEST_CASE("retention scores") {
  const std::size_t d = 3;
  Rng rng(5);
  const Tensor f = random_tensor({1, d}, rng);
  const Tensor same = concat_rows(concat_rows(f, f), f);
  const Tensor s = retention_scores(same, random_tensor({d}, rng));
  for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const Tensor w0 = retention_scores(random_tensor({4, d}, rng), Tensor::zeros({d}));
  for (std::size_t i = 0; i < 4; ++i) CHECK(w0[i] == 0.25);
  const Tensor two = retention_scores(Tensor::from({2, 1}, {std::log(2.0), 0.0}), Tensor::vector({1.0}));
  CHECK(two[0] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("gumbel top-n") {
  SUBCASE("n at least the candidate count keeps everything") {
    const Tensor s = Tensor::vector({0.2, 0.5, 0.3});
    for (double tau : {0.01, 1.0, 100.0}) {
      CHECK(gumbel_top_n(s, 3, tau, GumbelMode::kTraining, 9).retained == std::vector<std::uint32_t>{0, 1, 2});
      CHECK(gumbel_top_n(s, 5, tau, GumbelMode::kInference, 9).retained == std::vector<std::uint32_t>{0, 1, 2});
    }
  }
  SUBCASE("inference takes the argmax without noise") {
    GumbelNoise noise(0);
    const auto sel = gumbel_top_n(Tensor::vector({0.7, 0.2, 0.1}), 1, 1.0, GumbelMode::kInference, noise);
    CHECK(sel.retained == std::vector<std::uint32_t>{0});
    CHECK(sel.weights[0] == 1.0);
    CHECK(noise.recorded().empty());
  }
  SUBCASE("inference ties break by index and π renormalizes") {
    const auto sel = gumbel_top_n(Tensor::vector({0.3, 0.1, 0.3, 0.3}), 2, 1.0, GumbelMode::kInference, 0);
    CHECK(sel.retained == std::vector<std::uint32_t>{0, 2});
    CHECK(sel.weights[0] == 0.5);
    CHECK(sel.weights[3] == 0.0);
  }
  SUBCASE("training selection and π follow the perturbed log-scores") {
    const std::vector<double> eps{0.3, -1.2, 2.0, 0.1};
    const std::vector<double> sv{0.1, 0.6, 0.05, 0.25};
    auto noise = GumbelNoise::replay(eps);
    const double tau = 0.7;
    const auto sel = gumbel_top_n(Tensor::vector(sv), 2, tau, GumbelMode::kTraining, noise);
    std::vector<double> key(4), pi(4);
    for (int i = 0; i < 4; ++i) key[i] = std::log(sv[i]) + eps[i];
    std::vector<std::uint32_t> order{0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return key[a] > key[b]; });
    std::vector<std::uint32_t> expect(order.begin(), order.begin() + 2);
    std::sort(expect.begin(), expect.end());
    CHECK(sel.retained == expect);
    double z = 0.0;
    for (int i = 0; i < 4; ++i) z += std::exp(key[i] / tau);
    for (int i = 0; i < 4; ++i) CHECK(sel.weights[i] == doctest::Approx(std::exp(key[i] / tau) / z).epsilon(1e-12));
    CHECK(std::abs(std::accumulate(sel.weights.begin(), sel.weights.end(), 0.0) - 1.0) <= 1e-9);
  }
  SUBCASE("zero scores are clamped, not NaN") {
    const auto sel = gumbel_top_n(Tensor::vector({0.0, 1.0}), 1, 1.0, GumbelMode::kTraining, 3);
    for (double w : sel.weights) CHECK(std::isfinite(w));
    CHECK(sel.retained.size() == 1);
  }
  SUBCASE("uniform scores select each index a third of the time") {
    const Tensor s = Tensor::vector({1.0 / 3, 1.0 / 3, 1.0 / 3});
    GumbelNoise noise(2024);
    std::vector<int> hits(3, 0);
    const int draws = 30000;
    for (int t = 0; t < draws; ++t) ++hits[gumbel_top_n(s, 1, 10.0, GumbelMode::kTraining, noise).retained[0]];
    for (int h : hits) CHECK(std::abs(h / static_cast<double>(draws) - 1.0 / 3) <= 0.02);
  }
  SUBCASE("bad arguments") {
    const Tensor s = Tensor::vector({0.5, 0.5});
    CHECK_THROWS_AS(gumbel_top_n(s, 0, 1.0, GumbelMode::kTraining, 1), std::invalid_argument);
    CHECK_THROWS_AS(gumbel_top_n(s, 1, 0.0, GumbelMode::kTraining, 1), std::invalid_argument);
  }
}

TEST_CASE("gumbel noise record and replay") {
  GumbelNoise rec(77, GumbelNoise::Mode::kRecord);
  std::vector<double> live;
  for (int i = 0; i < 10; ++i) live.push_back(rec.next());
  CHECK(rec.recorded() == live);
  GumbelNoise plain(77);
  for (double v : live) CHECK(plain.next() == v);
  auto rep = GumbelNoise::replay(live);
  for (double v : live) CHECK(rep.next() == v);
  CHECK_THROWS_AS(rep.next(), std::runtime_error);
  rep.rewind();
  CHECK(rep.next() == live[0]);
}

TEST_CASE("temperature schedule") {
  CHECK(GumbelConfig::tau_at(10.0, 2e-4, 0) == 10.0);
  CHECK(GumbelConfig::tau_at(10.0, 2e-4, 10000) == doctest::Approx(10.0 * std::exp(-2.0)).epsilon(1e-14));
  CHECK(GumbelConfig::tau_at(10.0, 2e-4, 10000) == doctest::Approx(1.35335).epsilon(1e-5));
  double prev = GumbelConfig::tau_at(10.0, 2e-4, 0);
  for (std::uint64_t x = 1; x < 5000; x += 7) {
    const double t = GumbelConfig::tau_at(10.0, 2e-4, x);
    CHECK(t < prev);
    CHECK(t > 0.0);
    prev = t;
  }
  GumbelConfig c{100.0, 5e-4, 40, GumbelMode::kTraining};
  CHECK(c.tau() == GumbelConfig::tau_at(100.0, 5e-4, 40));
}

TEST_CASE("denoised subgraph structure") {
  const auto g = toy_graph();
  const auto p = toy_params(g, 6, 8);
  const WarmupLists lists = WarmupLists::full(g);
  const auto hidden = warmup_pass(lists, p);

  SUBCASE("single chain with n1 = n2 = 1") {
    std::vector<Interaction> clicks{{"u", "m", {}}};
    std::vector<ItemConceptRecord> tags{{"m", "c", 1.0}};
    const auto g1 = build_graph(clicks, tags);
    const auto p1 = toy_params(g1);
    const auto h1 = warmup_pass(WarmupLists::full(g1), p1);
    DenoiseOptions o;
    o.n1 = o.n2 = 1;
    for (auto mode : {GumbelMode::kTraining, GumbelMode::kInference}) {
      o.mode = mode;
      GumbelNoise noise(1);
      const auto sub = denoise_user(full_neighborhood(g1, 0), h1, p1, o, noise);
      REQUIRE(sub.items.retained.size() == 1);
      CHECK(sub.items.candidates[0] == NodeRef{NodeKind::kItem, 0});
      REQUIRE(sub.neighbors.size() == 1);
      CHECK(sub.neighbors[0].retained_nodes() == std::vector<NodeRef>{{NodeKind::kConcept, 0}});
    }
  }
  SUBCASE("large budgets keep the whole neighborhood") {
    DenoiseOptions o;
    o.n1 = 100;
    o.n2 = 100;
    for (std::uint32_t u = 0; u < g.num_users(); ++u) {
      GumbelNoise noise(u);
      const auto nb = full_neighborhood(g, u);
      const auto sub = denoise_user(nb, hidden, p, o, noise);
      CHECK(sub.items.retained.size() == nb.items.size());
      for (std::size_t j = 0; j < sub.neighbors.size(); ++j) {
        CHECK(sub.neighbors[j].retained.size() == nb.concepts[sub.items.retained[j]].size());
      }
    }
  }
  SUBCASE("retained sets are duplicate-free subsets; s and π sum to one") {
    for (auto mode : {GumbelMode::kTraining, GumbelMode::kInference}) {
      for (bool users : {false, true}) {
        DenoiseOptions o;
        o.n1 = 2;
        o.n2 = 1;
        o.mode = mode;
        o.tau = 0.5;
        for (std::uint32_t u = 0; u < g.num_users(); ++u) {
          GumbelNoise noise(100 + u);
          const auto nb = full_neighborhood(g, u, users);
          const auto sub = denoise_user(nb, hidden, p, o, noise);
          CHECK(sub.items.retained.size() == std::min<std::size_t>(2, nb.items.size()));
          auto check_hop = [](const HopSelection& hop, std::size_t n) {
            CHECK(hop.retained.size() == std::min(n, hop.candidates.size()));
            CHECK(std::is_sorted(hop.retained.begin(), hop.retained.end()));
            CHECK(std::adjacent_find(hop.retained.begin(), hop.retained.end()) == hop.retained.end());
            for (auto i : hop.retained) CHECK(i < hop.candidates.size());
            if (hop.candidates.empty()) return;
            CHECK(std::abs(std::accumulate(hop.scores.begin(), hop.scores.end(), 0.0) - 1.0) <= 1e-9);
            CHECK(std::abs(std::accumulate(hop.weights.begin(), hop.weights.end(), 0.0) - 1.0) <= 1e-9);
          };
          check_hop(sub.items, 2);
          for (const auto& hop : sub.neighbors) check_hop(hop, 1);
          for (std::size_t j = 0; j < sub.neighbors.size(); ++j) {
            const auto m = sub.items.candidates[sub.items.retained[j]].index;
            for (const auto& v : sub.neighbors[j].retained_nodes()) {
              if (v.kind == NodeKind::kConcept) CHECK(g.has_edge({NodeKind::kItem, m}, v));
              else CHECK((users && v.index != u && g.clicked(v.index, m)));
            }
          }
        }
      }
    }
  }
  SUBCASE("inference is bitwise deterministic") {
    DenoiseOptions o;
    o.n1 = 2;
    o.n2 = 1;
    for (std::uint32_t u = 0; u < g.num_users(); ++u) {
      GumbelNoise n1(1), n2(2);
      DenoisedSubgraph a, b;
      const Tensor ha = infer_user(u, lists, hidden, p, o, n1, &a);
      const Tensor hb = infer_user(u, lists, hidden, p, o, n2, &b);
      CHECK(std::equal(ha.values().begin(), ha.values().end(), hb.values().begin()));
      CHECK(a.items.retained == b.items.retained);
      CHECK(a.items.scores == b.items.scores);
    }
  }
}

TEST_CASE("refinement") {
  SUBCASE("singleton chain composes singleton attention") {
    std::vector<Interaction> clicks{{"u", "m", {}}};
    std::vector<ItemConceptRecord> tags{{"m", "c", 1.0}};
    const auto g = build_graph(clicks, tags);
    const auto p = toy_params(g);
    const auto h = warmup_pass(WarmupLists::full(g), p);
    DenoiseOptions o;
    o.mode = GumbelMode::kInference;
    GumbelNoise noise(0);
    const auto sub = denoise_user(full_neighborhood(g, 0), h, p, o, noise);
    const auto r = refine_preference(sub, p, h);
    const Tensor hm = leaky_relu(linear(row(p.concept_emb, 0), p.concept_item.weight));
    const Tensor hu = leaky_relu(linear(hm, p.item_user.weight));
    check_close(r.user.values(), hu.values(), 1e-15);
  }

  const auto g = toy_graph();
  const auto p = toy_params(g, 5, 3);
  const auto hidden = warmup_pass(WarmupLists::full(g), p);
  DenoiseOptions o;
  o.n1 = 3;
  o.n2 = 2;
  o.mode = GumbelMode::kInference;
  GumbelNoise noise(0);
  const auto sub = denoise_user(full_neighborhood(g, 0), hidden, p, o, noise);
  const Tensor base = refine_preference(sub, p, hidden).user;

  SUBCASE("uniform π over the retained set gives the inference output") {
    DenoisedSubgraph t = sub;
    auto uniform = [](std::size_t n) { return Tensor::full({n}, -std::log(static_cast<double>(n))); };
    t.items.log_weights = uniform(t.items.retained.size());
    for (auto& hop : t.neighbors)
      if (!hop.retained.empty()) hop.log_weights = uniform(hop.retained.size());
    check_close(refine_preference(t, p, hidden).user.values(), base.values(), 1e-12);
  }
  SUBCASE("permuting retained sets leaves the user vector unchanged") {
    DenoisedSubgraph t = sub;
    std::reverse(t.items.retained.begin(), t.items.retained.end());
    std::reverse(t.neighbors.begin(), t.neighbors.end());
    for (auto& hop : t.neighbors) std::reverse(hop.retained.begin(), hop.retained.end());
    check_close(refine_preference(t, p, hidden).user.values(), base.values(), 1e-9);
  }
  SUBCASE("empty subgraph is rejected") {
    CHECK_THROWS_AS(refine_preference(DenoisedSubgraph{}, p, hidden), std::invalid_argument);
  }
}

TEST_CASE("prediction") {
  CHECK(predict(Tensor::zeros({3}), Tensor::vector({1, 2, 3})).item() == 0.5);
  CHECK(predict(Tensor::vector({1, 0}), Tensor::vector({0, 5})).item() == 0.5);
  CHECK(predict(Tensor::vector({0.5, 0.5}), Tensor::vector({1, 1})).item() == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(predict(Tensor::vector({1.0}), Tensor::vector({1.0})).item() == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));

  const auto g = toy_graph();
  const auto p = toy_params(g);
  const auto h = warmup_pass(WarmupLists::full(g), p);
  const Tensor u = row(h.user, 0);
  const std::vector<std::uint32_t> items{4, 1};
  const Tensor batch = predict_items(u, h, items);
  CHECK(batch[0] == doctest::Approx(predict(u, row(h.item, 4)).item()).epsilon(1e-15));
  CHECK(batch[1] == doctest::Approx(predict(u, row(h.item, 1)).item()).epsilon(1e-15));
}

TEST_CASE("users with no clicks fall back to their warm-up state") {
  std::vector<Interaction> clicks{{"a", "m", {}}};
  const auto g = build_graph(clicks, {});
  // Parameters for an extra user that the graph never connects.
  const auto p = ModelParams::init(2, 1, 0, small_config(), 1);
  Adjacency ui = Adjacency::from_lists({{0}, {}});
  Adjacency iu = Adjacency::from_lists({{0}});
  WarmupLists lists{Adjacency::from_lists({{}}), ui, iu};
  const auto h = warmup_pass(lists, p);
  GumbelNoise noise(0);
  DenoisedSubgraph sub;
  const Tensor out = infer_user(1, lists, h, p, DenoiseOptions{}, noise, &sub);
  CHECK(sub.empty());
  check_close(out.values(), row_values(h.user, 1), 0.0);
}

TEST_CASE("checkpoint round trip is bitwise and concept vectors freeze") {
  TempDir dir("ckpt");
  const auto g = toy_graph();
  auto p = toy_params(g, 3, 21);
  p.config.two_hop_users = true;
  save_checkpoint(p, dir / "m.json", {{"note", "x"}});
  nlohmann::json meta;
  const auto q = load_checkpoint(dir / "m.json", &meta);
  CHECK(meta["note"] == "x");
  CHECK(q.config == p.config);
  const auto a = p.named();
  const auto b = q.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.shape() == b[i].second.shape());
    CHECK(std::equal(a[i].second.values().begin(), a[i].second.values().end(), b[i].second.values().begin()));
  }

  std::ofstream(dir / "vec.tsv") << "c1\t0.5\t-1\t2\nunknown\t1\t1\t1\n";
  const std::size_t matched = load_concept_vectors(p, g, dir / "vec.tsv");
  CHECK(matched == 1);
  CHECK(p.freeze_concepts);
  const auto c1 = *g.find(NodeKind::kConcept, "c1");
  CHECK(row_values(p.concept_emb, c1) == std::vector<double>{0.5, -1.0, 2.0});
  for (const auto& t : p.trainable()) CHECK_FALSE(t.same_as(p.concept_emb));

  std::ofstream(dir / "short.tsv") << "c1\t0.5\n";
  CHECK_THROWS(load_concept_vectors(p, g, dir / "short.tsv"));
}
