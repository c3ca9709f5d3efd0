// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "conde/io.hpp"
#include "conde/rng.hpp"

namespace conde {

using nlohmann::json;

double user_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("user_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
  // Mann–Whitney with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) {
        rank_sum += mid;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

UaucResult uauc(const EvalTask& task) {
  UaucResult r;
  double total = 0.0;
  for (const auto& u : task.users) {
    const double a = user_auc(u.scores, u.labels);
    if (std::isnan(a)) {
      ++r.excluded;
    } else {
      total += a;
      ++r.evaluated;
    }
  }
  if (r.evaluated > 0) r.mean = total / static_cast<double>(r.evaluated);
  return r;
}

std::optional<TopK> user_topk(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t k) {
  if (k == 0) throw std::invalid_argument("topk_metrics: K must be >= 1");
  if (scores.size() != labels.size()) throw std::invalid_argument("user_topk: scores and labels differ in length");
  const std::size_t relevant = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (relevant == 0) return std::nullopt;
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  const std::size_t kk = std::min(k, order.size());
  double dcg = 0.0, idcg = 0.0, precision_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < kk; ++r) {
    const double gain = 1.0 / std::log2(static_cast<double>(r) + 2.0);
    if (r < relevant) idcg += gain;
    if (labels[order[r]] != 0) {
      dcg += gain;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  const double norm = static_cast<double>(std::min(kk, relevant));
  return TopK{dcg / idcg, static_cast<double>(hits) / norm, precision_sum / norm};
}

TopKResult topk_metrics(const EvalTask& task, std::size_t k) {
  TopKResult r;
  for (const auto& u : task.users) {
    auto m = user_topk(u.scores, u.labels, k);
    if (!m) {
      ++r.excluded;
      continue;
    }
    r.mean.ndcg += m->ndcg;
    r.mean.hit += m->hit;
    r.mean.map += m->map;
    ++r.evaluated;
  }
  if (r.evaluated > 0) {
    const double n = static_cast<double>(r.evaluated);
    r.mean.ndcg /= n;
    r.mean.hit /= n;
    r.mean.map /= n;
  }
  return r;
}

std::pair<EvalTask, EvalTask> longtail_split(std::span<const std::size_t> item_frequency, const EvalTask& task,
                                             std::size_t threshold) {
  if (threshold == 0) throw std::invalid_argument("longtail_split: threshold must be >= 1");
  EvalTask hot, tail;
  for (const auto& u : task.users) {
    UserCandidates h{u.user, {}, {}, {}}, t{u.user, {}, {}, {}};
    for (std::size_t i = 0; i < u.items.size(); ++i) {
      const std::uint32_t m = u.items[i];
      if (m >= item_frequency.size()) throw std::out_of_range("longtail_split: item without a frequency");
      UserCandidates& dst = item_frequency[m] >= threshold ? h : t;
      dst.items.push_back(m);
      dst.labels.push_back(u.labels[i]);
      dst.scores.push_back(u.scores[i]);
    }
    if (!h.items.empty()) hot.users.push_back(std::move(h));
    if (!t.items.empty()) tail.users.push_back(std::move(t));
  }
  return {std::move(hot), std::move(tail)};
}

std::vector<std::size_t> item_frequencies(const TripartiteGraph& g) {
  std::vector<std::size_t> f(g.num_items());
  for (std::size_t m = 0; m < f.size(); ++m) f[m] = g.item_users().degree(m);
  return f;
}

std::optional<MetricSet> compute_metrics(const EvalTask& task, std::size_t k) {
  const UaucResult a = uauc(task);
  if (a.evaluated == 0) return std::nullopt;
  // Top-K metrics use the same evaluable users as AUC.
  EvalTask usable;
  for (const auto& u : task.users)
    if (!std::isnan(user_auc(u.scores, u.labels))) usable.users.push_back(u);
  const TopKResult t = topk_metrics(usable, k);
  return MetricSet{a.mean, t.mean.ndcg, t.mean.hit, t.mean.map, a.evaluated, a.excluded};
}

RankingReport make_report(const EvalTask& task, std::size_t k, std::span<const std::size_t> item_frequency,
                          std::optional<std::size_t> longtail_threshold) {
  RankingReport r;
  r.k = k;
  r.overall = compute_metrics(task, k);
  if (longtail_threshold) {
    r.longtail_threshold = longtail_threshold;
    auto [hot, tail] = longtail_split(item_frequency, task, *longtail_threshold);
    r.hot = compute_metrics(hot, k);
    r.longtail = compute_metrics(tail, k);
  }
  for (const auto& u : task.users) {
    const auto pos = static_cast<std::size_t>(std::count(u.labels.begin(), u.labels.end(), std::uint8_t{1}));
    r.per_user.push_back({u.user, pos, u.labels.size() - pos, user_auc(u.scores, u.labels), user_topk(u.scores, u.labels, k)});
  }
  return r;
}

namespace {

json metrics_json(const std::optional<MetricSet>& m, std::size_t k) {
  if (!m) return nullptr;
  const std::string at = "@" + std::to_string(k);
  return {{"auc", m->auc},          {"ndcg" + at, m->ndcg}, {"hit" + at, m->hit},
          {"map" + at, m->map},     {"users", m->users},    {"excluded_users", m->excluded}};
}

void text_row(std::ostream& os, const std::string& name, const std::optional<MetricSet>& m) {
  os << std::left << std::setw(10) << name;
  if (!m) {
    os << "absent\n";
    return;
  }
  os << std::right << std::fixed << std::setprecision(4) << std::setw(8) << m->auc << std::setw(10) << m->ndcg
     << std::setw(10) << m->hit << std::setw(10) << m->map << std::setw(8) << m->users << '\n';
}

}  // namespace

json to_json(const RankingReport& r) {
  json j = {{"k", r.k}, {"overall", metrics_json(r.overall, r.k)}};
  if (r.longtail_threshold) {
    j["longtail_threshold"] = *r.longtail_threshold;
    j["hot"] = metrics_json(r.hot, r.k);
    j["longtail"] = metrics_json(r.longtail, r.k);
  }
  return j;
}

std::string to_text(const RankingReport& r) {
  std::ostringstream os;
  const std::string at = "@" + std::to_string(r.k);
  os << std::left << std::setw(10) << "split" << std::right << std::setw(8) << "auc" << std::setw(10) << ("ndcg" + at)
     << std::setw(10) << ("hit" + at) << std::setw(10) << ("map" + at) << std::setw(8) << "users" << '\n';
  text_row(os, "overall", r.overall);
  if (r.longtail_threshold) {
    text_row(os, "hot", r.hot);
    text_row(os, "long-tail", r.longtail);
  }
  return os.str();
}

void write_user_csv(const RankingReport& r, const TripartiteGraph& g, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& os) {
    os.precision(17);
    os << "user,positives,negatives,auc,ndcg@" << r.k << ",hit@" << r.k << ",map@" << r.k << '\n';
    for (const auto& u : r.per_user) {
      os << g.user_ids().at(u.user) << ',' << u.positives << ',' << u.negatives << ',';
      if (!std::isnan(u.auc)) os << u.auc;
      os << ',';
      if (u.topk) os << u.topk->ndcg << ',' << u.topk->hit << ',' << u.topk->map;
      else os << ",,";
      os << '\n';
    }
  });
}

std::vector<UserItem> sample_eval_negatives(const TripartiteGraph& train, std::span<const UserItem> positives,
                                            std::uint64_t seed) {
  std::map<std::uint32_t, std::set<std::uint32_t>> held;
  for (const auto& [u, m] : positives) held[u].insert(m);
  std::vector<UserItem> out;
  const std::size_t items = train.num_items();
  for (const auto& [u, pos] : held) {
    Rng rng(derive_seed(seed, u, 0x65u));
    std::set<std::uint32_t> taken;
    const std::size_t observed = (u < train.num_users() ? train.user_items().degree(u) : 0);
    const std::size_t available = items > observed ? items - observed : 0;
    std::size_t want = pos.size();
    for (std::size_t guard = 0; want > 0 && guard < 1000 * (pos.size() + 1); ++guard) {
      if (taken.size() + pos.size() >= available) break;
      const auto m = static_cast<std::uint32_t>(uniform_index(rng, items));
      if (pos.count(m) || taken.count(m) || (u < train.num_users() && train.clicked(u, m))) continue;
      taken.insert(m);
      out.emplace_back(u, m);
      --want;
    }
  }
  return out;
}

EvalTask make_task(const EvalSplit& split,
                   const std::function<std::vector<double>(std::uint32_t, std::span<const std::uint32_t>)>& score) {
  std::map<std::uint32_t, UserCandidates> by_user;
  auto add = [&](const UserItem& ui, std::uint8_t label) {
    auto& u = by_user[ui.first];
    u.user = ui.first;
    u.items.push_back(ui.second);
    u.labels.push_back(label);
  };
  for (const auto& p : split.positives) add(p, 1);
  for (const auto& n : split.negatives) add(n, 0);
  EvalTask task;
  for (auto& [uid, u] : by_user) {
    u.scores = score(uid, u.items);
    if (u.scores.size() != u.items.size()) throw std::runtime_error("make_task: scorer returned the wrong count");
    task.users.push_back(std::move(u));
  }
  return task;
}

}  // namespace conde
