// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "conde/evaluator.hpp"
#include "conde/io.hpp"
#include "support.hpp"

using namespace conde;
using conde::testing::TempDir;

namespace {

UserCandidates make_user(std::vector<double> scores, std::vector<std::uint8_t> labels, std::uint32_t user = 0) {
  UserCandidates u;
  u.user = user;
  u.items.resize(scores.size());
  std::iota(u.items.begin(), u.items.end(), 0u);
  u.scores = std::move(scores);
  u.labels = std::move(labels);
  return u;
}

double pair_auc(const UserCandidates& u) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < u.scores.size(); ++i) {
    if (!u.labels[i]) continue;
    for (std::size_t j = 0; j < u.scores.size(); ++j) {
      if (u.labels[j]) continue;
      pairs += 1.0;
      good += u.scores[i] > u.scores[j] ? 1.0 : u.scores[i] == u.scores[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

// Ranking by enumeration: the first permutation (lexicographic) whose scores never increase.
std::vector<std::size_t> enumerated_ranking(const std::vector<double>& s) {
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  do {
    bool ok = true;
    for (std::size_t i = 1; i < perm.size() && ok; ++i) ok = s[perm[i - 1]] >= s[perm[i]];
    if (ok) return perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {};
}

TopK topk_oracle(const UserCandidates& u, std::size_t k) {
  const auto rank = enumerated_ranking(u.scores);
  const std::size_t cut = std::min(k, rank.size());
  const std::size_t rel = static_cast<std::size_t>(std::count(u.labels.begin(), u.labels.end(), 1));
  double dcg = 0.0, idcg = 0.0, ap = 0.0;
  std::size_t found = 0;
  for (std::size_t pos = 1; pos <= cut; ++pos) {
    if (u.labels[rank[pos - 1]]) {
      dcg += 1.0 / std::log2(pos + 1.0);
      ++found;
      std::size_t upto = 0;
      for (std::size_t q = 0; q < pos; ++q) upto += u.labels[rank[q]];
      ap += static_cast<double>(upto) / static_cast<double>(pos);
    }
  }
  for (std::size_t pos = 1; pos <= std::min(cut, rel); ++pos) idcg += 1.0 / std::log2(pos + 1.0);
  const double norm = static_cast<double>(std::min(cut, rel));
  return {dcg / idcg, found / norm, ap / norm};
}

EvalTask random_task(Rng& rng, std::size_t users) {
  EvalTask t;
  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(uniform_index(rng, 4)) / 4.0;  // coarse values force ties
      l[i] = static_cast<std::uint8_t>(uniform_index(rng, 2));
    }
    t.users.push_back(make_user(s, l, static_cast<std::uint32_t>(u)));
  }
  return t;
}

}  // namespace

TEST_CASE("AUC examples") {
  CHECK(user_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 1, 0}) == 1.0);
  CHECK(user_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<std::uint8_t>{1, 0, 1, 0}) == 0.5);
  CHECK(user_auc(std::vector<double>{0.9, 0.4, 0.6, 0.1}, std::vector<std::uint8_t>{1, 1, 0, 0}) == 0.75);
  CHECK(std::isnan(user_auc(std::vector<double>{0.2, 0.1}, std::vector<std::uint8_t>{1, 1})));
  EvalTask t;
  t.users.push_back(make_user({0.9, 0.4, 0.6, 0.1}, {1, 1, 0, 0}));
  t.users.push_back(make_user({0.5}, {1}));
  const auto r = uauc(t);
  CHECK(r.mean == 0.75);
  CHECK(r.evaluated == 1);
  CHECK(r.excluded == 1);
}

TEST_CASE("top-K examples") {
  const auto first = user_topk(std::vector<double>{0.9, 0.1, 0.2}, std::vector<std::uint8_t>{1, 0, 0}, 5);
  CHECK(first->ndcg == 1.0);
  CHECK(first->hit == 1.0);
  CHECK(first->map == 1.0);
  const auto second =
      user_topk(std::vector<double>{0.8, 0.9, 0.3, 0.2, 0.1}, std::vector<std::uint8_t>{1, 0, 0, 0, 0}, 5);
  CHECK(second->ndcg == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
  CHECK(second->ndcg == doctest::Approx(0.63093).epsilon(1e-5));
  CHECK(second->map == 0.5);
  CHECK(second->hit == 1.0);
  const auto missed =
      user_topk(std::vector<double>{0.1, 0.9, 0.8, 0.7}, std::vector<std::uint8_t>{1, 0, 0, 0}, 2);
  CHECK(missed->ndcg == 0.0);
  CHECK(missed->hit == 0.0);
  CHECK(missed->map == 0.0);
  CHECK_FALSE(user_topk(std::vector<double>{0.1}, std::vector<std::uint8_t>{0}, 1).has_value());
  CHECK_THROWS_AS(user_topk(std::vector<double>{0.1}, std::vector<std::uint8_t>{1}, 0), std::invalid_argument);
  // ties resolve by candidate index
  const auto tied = user_topk(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{0, 1}, 1);
  CHECK(tied->hit == 0.0);
}

TEST_CASE("metrics agree with brute-force oracles on 1000 random tasks") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const EvalTask t = random_task(rng, 1 + uniform_index(rng, 4));
    const std::size_t k = 1 + uniform_index(rng, 7);
    double auc_sum = 0.0, n_auc = 0.0;
    TopK sum{};
    double n_top = 0.0;
    for (const auto& u : t.users) {
      const auto pos = std::count(u.labels.begin(), u.labels.end(), 1);
      if (pos > 0 && pos < static_cast<long>(u.labels.size())) {
        auc_sum += pair_auc(u);
        n_auc += 1.0;
      }
      if (pos > 0) {
        const TopK o = topk_oracle(u, k);
        const auto got = user_topk(u.scores, u.labels, k);
        REQUIRE(got.has_value());
        CHECK(std::abs(got->ndcg - o.ndcg) <= 1e-9);
        CHECK(std::abs(got->hit - o.hit) <= 1e-9);
        CHECK(std::abs(got->map - o.map) <= 1e-9);
        sum.ndcg += o.ndcg;
        sum.hit += o.hit;
        sum.map += o.map;
        n_top += 1.0;
      }
    }
    const auto r = uauc(t);
    if (n_auc > 0) CHECK(std::abs(r.mean - auc_sum / n_auc) <= 1e-9);
    const auto top = topk_metrics(t, k);
    if (n_top > 0) {
      CHECK(std::abs(top.mean.ndcg - sum.ndcg / n_top) <= 1e-9);
      CHECK(std::abs(top.mean.hit - sum.hit / n_top) <= 1e-9);
      CHECK(std::abs(top.mean.map - sum.map / n_top) <= 1e-9);
    }
  }
}

TEST_CASE("raising a positive's score never lowers a metric") {
  Rng rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 6);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = unit(rng);
      l[i] = static_cast<std::uint8_t>(uniform_index(rng, 2));
    }
    l[0] = 1;
    l[1] = 0;
    const std::size_t k = 1 + uniform_index(rng, n);
    const double a0 = user_auc(s, l);
    const auto t0 = *user_topk(s, l, k);
    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < n; ++i)
      if (l[i]) positives.push_back(i);
    s[positives[uniform_index(rng, positives.size())]] += unit(rng);
    CHECK(user_auc(s, l) >= a0);
    const auto t1 = *user_topk(s, l, k);
    CHECK(t1.ndcg >= t0.ndcg - 1e-12);
    CHECK(t1.hit >= t0.hit - 1e-12);
    CHECK(t1.map >= t0.map - 1e-12);
  }
}

TEST_CASE("long-tail split") {
  EvalTask t;
  UserCandidates u;
  u.user = 0;
  u.items = {0, 1, 2, 3};
  u.labels = {1, 1, 0, 0};
  u.scores = {0.9, 0.2, 0.5, 0.1};
  t.users.push_back(u);
  const std::vector<std::size_t> freq{60, 3, 60, 3};
  SUBCASE("frequencies 60 and 3 land in different parts") {
    const auto [hot, tail] = longtail_split(freq, t, 50);
    CHECK(hot.users[0].items == std::vector<std::uint32_t>{0, 2});
    CHECK(tail.users[0].items == std::vector<std::uint32_t>{1, 3});
  }
  SUBCASE("threshold 1 makes every clicked item hot") {
    const auto [hot, tail] = longtail_split(freq, t, 1);
    CHECK(hot.users[0].items.size() == 4);
    CHECK_FALSE(compute_metrics(tail, 5).has_value());
  }
  SUBCASE("huge threshold makes everything long-tail") {
    const auto [hot, tail] = longtail_split(freq, t, std::numeric_limits<std::size_t>::max());
    CHECK(tail.users[0].items.size() == 4);
    CHECK_FALSE(compute_metrics(hot, 5).has_value());
  }
  SUBCASE("report carries both parts, absent when unevaluable") {
    const auto r = make_report(t, 5, freq, 50);
    REQUIRE(r.hot.has_value());
    REQUIRE(r.longtail.has_value());
    CHECK(r.hot->auc == 1.0);
    CHECK(r.longtail->auc == 1.0);
    CHECK(r.overall->auc == 0.75);
    const auto j = to_json(r);
    CHECK(j.contains("hot"));
    CHECK(j.contains("longtail"));
    const auto none = make_report(t, 5, freq, 1);
    CHECK(to_json(none)["longtail"].is_null());
    CHECK(to_text(r).find("long-tail") != std::string::npos);
  }
  CHECK_THROWS_AS(longtail_split(freq, t, 0), std::invalid_argument);
}

TEST_CASE("report values stay in [0, 1]") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const EvalTask t = random_task(rng, 5);
    const auto m = compute_metrics(t, 1 + uniform_index(rng, 5));
    if (!m) continue;
    for (double v : {m->auc, m->ndcg, m->hit, m->map}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("evaluation negatives and task assembly") {
  std::vector<Interaction> clicks;
  for (int u = 0; u < 4; ++u)
    for (int m = 0; m < 6; ++m)
      if ((u + m) % 2 == 0) clicks.push_back({"u" + std::to_string(u), "i" + std::to_string(m), {}});
  clicks.push_back({"u0", "i1", {}});
  const auto g = build_graph(clicks, {});
  std::vector<UserItem> positives;
  for (std::uint32_t u = 0; u < g.num_users(); ++u)
    for (std::uint32_t m = 0; m < g.num_items(); ++m)
      if (!g.clicked(u, m) && positives.size() < 2 * (u + 1)) positives.emplace_back(u, m);
  const auto neg = sample_eval_negatives(g, positives, 5);
  CHECK(neg == sample_eval_negatives(g, positives, 5));
  std::set<UserItem> held(positives.begin(), positives.end());
  for (const auto& n : neg) {
    CHECK_FALSE(g.clicked(n.first, n.second));
    CHECK(held.count(n) == 0);
  }
  EvalSplit split{positives, neg};
  const auto task = make_task(split, [](std::uint32_t, std::span<const std::uint32_t> items) {
    return std::vector<double>(items.size(), 0.5);
  });
  for (const auto& u : task.users) {
    std::set<std::uint32_t> uniq(u.items.begin(), u.items.end());
    CHECK(uniq.size() == u.items.size());
  }

  TempDir dir("eval");
  const auto report = make_report(task, 2);
  write_user_csv(report, g, dir / "users.csv");
  const std::string csv = read_file(dir / "users.csv");
  CHECK(csv.find("u0") != std::string::npos);
}
