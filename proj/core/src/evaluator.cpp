#include "l2aug/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "l2aug/error.hpp"
#include "l2aug/rng.hpp"

namespace l2aug::eval {

using data::Group;
using data::InteractionDataset;
using data::Split;

int rank_of_target(const ad::Tensor& scores, int target, const std::vector<int>& exclusion) {
  if (target < 0 || static_cast<std::size_t>(target) >= scores.numel()) {
    throw Error("rank_of_target: target " + std::to_string(target) + " outside the catalog");
  }
  std::vector<std::uint8_t> excluded(scores.numel(), 0);
  for (int e : exclusion) {
    if (e >= 0 && static_cast<std::size_t>(e) < scores.numel()) {
      excluded[static_cast<std::size_t>(e)] = 1;
    }
  }
  if (excluded[static_cast<std::size_t>(target)]) {
    throw Error("rank_of_target: target " + std::to_string(target) + " is excluded");
  }
  const double target_score = scores.data[static_cast<std::size_t>(target)];
  int above = 0;
  for (std::size_t c = 0; c < scores.numel(); ++c) {
    if (excluded[c] || static_cast<int>(c) == target) continue;
    if (scores.data[c] >= target_score) ++above;  // ties count against the target
  }
  return 1 + above;
}

double ht_at_k(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

double ndcg_at_k(int rank, int k) {
  if (rank > k) return 0.0;
  return 1.0 / std::log2(1.0 + static_cast<double>(rank));
}

namespace {

std::vector<int> eval_prefix(const InteractionDataset& ds, int user, Split split) {
  std::vector<int> prefix = ds.train_items(user);
  if (split == Split::Test) {
    if (auto ft = ds.finetune_item(user)) prefix.push_back(*ft);
  }
  return prefix;
}

std::optional<int> target_of(const InteractionDataset& ds, int user, Split split) {
  return split == Split::Test ? ds.test_item(user) : ds.finetune_item(user);
}

std::vector<int> exclusion_from_prefix(const std::vector<int>& prefix, int target) {
  std::vector<int> excl;
  for (int i : prefix) {
    if (i != target) excl.push_back(i);
  }
  return excl;
}

GroupMetrics summarize(const std::vector<int>& ranks, const std::vector<int>& k_list) {
  GroupMetrics g;
  g.n_users = ranks.size();
  for (int k : k_list) {
    double ht = 0.0, ndcg = 0.0;
    for (int r : ranks) {
      ht += ht_at_k(r, k);
      ndcg += ndcg_at_k(r, k);
    }
    const double n = ranks.empty() ? 1.0 : static_cast<double>(ranks.size());
    g.values["HT@" + std::to_string(k)] = ht / n;
    g.values["NDCG@" + std::to_string(k)] = ndcg / n;
  }
  return g;
}

}  // namespace

EvalResult evaluate(const rec::RecommenderModel& model, const InteractionDataset& dataset,
                    Split split, const EvalConfig& config) {
  if (split != Split::Finetune && split != Split::Test) {
    throw ConfigError("evaluate: split must be finetune or test");
  }
  EvalResult out;
  std::vector<int> core_ranks, casual_ranks, all_ranks;
  for (std::size_t u = 0; u < dataset.n_users(); ++u) {
    const int user = static_cast<int>(u);
    const auto target = target_of(dataset, user, split);
    if (!target) continue;
    const auto prefix = eval_prefix(dataset, user, split);
    if (prefix.empty()) {
      ++out.skipped_users;
      continue;
    }
    const ad::Tensor scores = model.score_next(prefix);
    const std::vector<int> exclusion =
        config.exclude_consumed ? exclusion_from_prefix(prefix, *target) : std::vector<int>{};
    const int rank = rank_of_target(scores, *target, exclusion);
    out.ranks.push_back({user, rank});
    all_ranks.push_back(rank);
    (dataset.users[u].group == Group::Core ? core_ranks : casual_ranks).push_back(rank);
  }
  if (!core_ranks.empty()) out.groups["core"] = summarize(core_ranks, config.k_list);
  if (!casual_ranks.empty()) out.groups["casual"] = summarize(casual_ranks, config.k_list);
  if (!all_ranks.empty()) out.groups["all"] = summarize(all_ranks, config.k_list);
  return out;
}

std::string to_json(const EvalResult& result) {
  nlohmann::ordered_json j;
  for (const auto& [name, metrics] : result.groups) {
    nlohmann::ordered_json g;
    for (const auto& [metric, value] : metrics.values) g[metric] = value;
    g["n_users"] = metrics.n_users;
    j[name] = g;
  }
  j["skipped_users"] = result.skipped_users;
  return j.dump(2);
}

MetricPair meta_metrics(const rec::RecommenderModel& model, const InteractionDataset& dataset,
                        const std::vector<int>& users, int k, bool exclude_consumed) {
  if (users.empty()) throw Error("meta_metrics: empty user set");
  MetricPair acc;
  std::size_t n = 0;
  for (int user : users) {
    const auto target = dataset.finetune_item(user);
    if (!target) continue;
    const auto prefix = dataset.train_items(user);
    if (prefix.empty()) continue;
    const ad::Tensor scores = model.score_next(prefix);
    const std::vector<int> exclusion =
        exclude_consumed ? exclusion_from_prefix(prefix, *target) : std::vector<int>{};
    const int rank = rank_of_target(scores, *target, exclusion);
    acc.ht += ht_at_k(rank, k);
    acc.ndcg += ndcg_at_k(rank, k);
    ++n;
  }
  if (n == 0) throw Error("meta_metrics: no user in the set has a finetune target");
  acc.ht /= static_cast<double>(n);
  acc.ndcg /= static_cast<double>(n);
  return acc;
}

SimilaritySource SimilaritySource::from_table(ad::Tensor table) {
  if (table.ndim() != 2) throw ShapeError("continuity: embedding table must be rank 2");
  SimilaritySource s;
  s.dense_ = true;
  s.table_ = std::move(table);
  return s;
}

SimilaritySource SimilaritySource::from_cooccurrence(const InteractionDataset& dataset) {
  SimilaritySource s;
  s.dense_ = false;
  s.item_users_.resize(dataset.n_items());
  for (std::size_t u = 0; u < dataset.n_users(); ++u) {
    for (const auto& e : dataset.users[u].events) {
      if (e.split == Split::Train) {
        s.item_users_[static_cast<std::size_t>(e.item)].push_back(static_cast<int>(u));
      }
    }
  }
  for (auto& v : s.item_users_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return s;
}

std::size_t SimilaritySource::n_items() const {
  return dense_ ? table_.shape[0] : item_users_.size();
}

std::optional<double> SimilaritySource::cosine(int item_a, int item_b) const {
  if (dense_) {
    const std::size_t d = table_.shape[1];
    const double* a = &table_.data[static_cast<std::size_t>(item_a) * d];
    const double* b = &table_.data[static_cast<std::size_t>(item_b) * d];
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    return dot / std::sqrt(na * nb);
  }
  const auto& ua = item_users_[static_cast<std::size_t>(item_a)];
  const auto& ub = item_users_[static_cast<std::size_t>(item_b)];
  if (ua.empty() || ub.empty()) return std::nullopt;
  std::size_t inter = 0;
  for (std::size_t i = 0, j = 0; i < ua.size() && j < ub.size();) {
    if (ua[i] == ub[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (ua[i] < ub[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(inter) /
         std::sqrt(static_cast<double>(ua.size()) * static_cast<double>(ub.size()));
}

namespace {

ContinuityGroup continuity_over(const std::vector<std::vector<int>>& sequences,
                                const SimilaritySource& source) {
  ContinuityGroup g;
  std::vector<double> user_means;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) continue;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const auto sim = source.cosine(seq[i - 1], seq[i]);
      if (!sim) {
        ++g.skipped_pairs;
        continue;
      }
      total += *sim;
      ++pairs;
    }
    if (pairs > 0) user_means.push_back(total / static_cast<double>(pairs));
  }
  g.n_users = user_means.size();
  if (user_means.empty()) return g;
  double sum = 0.0;
  for (double m : user_means) sum += m;
  g.mean = sum / static_cast<double>(user_means.size());
  std::sort(user_means.begin(), user_means.end());
  for (int dec = 1; dec <= 9; ++dec) {
    const double pos = static_cast<double>(dec) / 10.0 * static_cast<double>(user_means.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, user_means.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    g.deciles.push_back(user_means[lo] * (1.0 - frac) + user_means[hi] * frac);
  }
  return g;
}

std::vector<std::vector<int>> group_training_sequences(const InteractionDataset& dataset,
                                                       Group group) {
  std::vector<std::vector<int>> out;
  for (int u : dataset.training_users(group)) out.push_back(dataset.train_items(u));
  return out;
}

}  // namespace

ContinuityReport interest_continuity(
    const InteractionDataset& dataset, const SimilaritySource& source,
    const std::optional<std::vector<std::vector<int>>>& augmented_sequences) {
  if (source.n_items() < dataset.n_items()) {
    throw Error("continuity: similarity source does not cover the catalog");
  }
  ContinuityReport report;
  report.core = continuity_over(group_training_sequences(dataset, Group::Core), source);
  report.casual = continuity_over(group_training_sequences(dataset, Group::Casual), source);
  if (augmented_sequences) report.augmented = continuity_over(*augmented_sequences, source);
  return report;
}

std::string to_json(const ContinuityReport& report) {
  auto group_json = [](const ContinuityGroup& g) {
    nlohmann::ordered_json j;
    j["mean"] = g.mean;
    j["n_users"] = g.n_users;
    j["skipped_pairs"] = g.skipped_pairs;
    j["deciles"] = g.deciles;
    return j;
  };
  nlohmann::ordered_json j;
  j["core"] = group_json(report.core);
  j["casual"] = group_json(report.casual);
  if (report.augmented) j["augmented"] = group_json(*report.augmented);
  return j.dump(2);
}

std::vector<std::vector<int>> dropped_core_training_set(const InteractionDataset& dataset,
                                                        double rate, std::uint64_t seed,
                                                        std::vector<std::vector<int>>* exclusions,
                                                        std::vector<int>* users_out) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("sweep: drop rate must lie in [0,1]");
  Rng rng(seed);
  std::vector<std::vector<int>> sequences;
  if (exclusions) exclusions->clear();
  if (users_out) users_out->clear();
  for (std::size_t u = 0; u < dataset.n_users(); ++u) {
    std::vector<int> train = dataset.train_items(static_cast<int>(u));
    if (train.empty()) continue;
    if (dataset.users[u].group == Group::Core) {
      std::vector<int> kept;
      for (int item : train) {
        if (rng.uniform() >= rate) kept.push_back(item);
      }
      train = std::move(kept);
    }
    if (train.empty()) continue;
    sequences.push_back(std::move(train));
    if (exclusions) exclusions->push_back(dataset.full_sequence(static_cast<int>(u)));
    if (users_out) users_out->push_back(static_cast<int>(u));
  }
  return sequences;
}

std::vector<DropSweepRow> random_drop_sweep(const InteractionDataset& dataset,
                                            const DropSweepConfig& config) {
  std::vector<DropSweepRow> rows;
  for (std::size_t ri = 0; ri < config.drop_rates.size(); ++ri) {
    const double rate = config.drop_rates[ri];
    std::vector<std::vector<int>> exclusions;
    auto sequences = dropped_core_training_set(dataset, rate, Rng::mix(config.seed, 0x5EED + ri),
                                               &exclusions);
    rec::RecommenderConfig mc = config.model;
    mc.catalog_size = dataset.n_items();
    auto model = rec::RecommenderModel::init(mc, config.seed);
    ad::AdamConfig acfg;
    acfg.learning_rate = config.learning_rate;
    ad::AdamState opt(model.params(), acfg);
    for (std::size_t e = 0; e < config.epochs; ++e) {
      rec::train_epoch(model, opt, sequences, exclusions, config.batch_size,
                       Rng::mix(config.seed, 1000 + e));
    }
    EvalResult result = evaluate(model, dataset, config.eval_split, config.eval);
    DropSweepRow row;
    row.rate = rate;
    if (auto it = result.groups.find("casual"); it != result.groups.end()) {
      row.casual = it->second;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace l2aug::eval
