#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "l2aug/data.hpp"
#include "l2aug/recommender.hpp"
#include "l2aug/tensor.hpp"

namespace l2aug::eval {

struct EvalConfig {
  std::vector<int> k_list = {5, 10};
  bool exclude_consumed = true;
};

/// Rank of the target among candidates (catalog minus the exclusion set;
/// the target itself is always a candidate). Ties count against the target.
int rank_of_target(const ad::Tensor& scores, int target, const std::vector<int>& exclusion);

double ht_at_k(int rank, int k);
double ndcg_at_k(int rank, int k);

struct UserRank {
  int user = -1;
  int rank = 0;
};

struct GroupMetrics {
  std::size_t n_users = 0;
  std::map<std::string, double> values;  // "HT@5", "NDCG@5", ...
};

struct EvalResult {
  std::map<std::string, GroupMetrics> groups;  // "core", "casual", "all"
  std::vector<UserRank> ranks;                 // retained for audit
  std::size_t skipped_users = 0;               // no usable prefix
};

/// Scores every user holding a target in the split. The prefix is the full
/// training sequence, plus the finetune item when evaluating on test. Empty
/// groups are omitted.
EvalResult evaluate(const rec::RecommenderModel& model, const data::InteractionDataset& dataset,
                    data::Split split, const EvalConfig& config);

std::string to_json(const EvalResult& result);

/// HT@K / NDCG@K means over an explicit user subset, on finetune targets.
/// This is the reward probe used during policy training.
struct MetricPair {
  double ht = 0.0;
  double ndcg = 0.0;
};
MetricPair meta_metrics(const rec::RecommenderModel& model,
                        const data::InteractionDataset& dataset, const std::vector<int>& users,
                        int k, bool exclude_consumed);

/// Pairwise item similarity for continuity analysis: either a dense embedding
/// table or implicit co-occurrence vectors (cosine over the sets of users who
/// interacted with each item in training).
class SimilaritySource {
 public:
  static SimilaritySource from_table(ad::Tensor table);
  static SimilaritySource from_cooccurrence(const data::InteractionDataset& dataset);

  /// Cosine similarity, or nullopt when either vector has zero norm.
  std::optional<double> cosine(int item_a, int item_b) const;
  std::size_t n_items() const;

 private:
  SimilaritySource() = default;
  ad::Tensor table_;                           // dense route
  std::vector<std::vector<int>> item_users_;   // co-occurrence route, sorted
  bool dense_ = false;
};

struct ContinuityGroup {
  std::size_t n_users = 0;
  std::size_t skipped_pairs = 0;
  double mean = 0.0;
  std::vector<double> deciles;  // 10th..90th percentile of per-user means
};

struct ContinuityReport {
  ContinuityGroup core;
  ContinuityGroup casual;
  std::optional<ContinuityGroup> augmented;
};

/// Mean cosine similarity of consecutive training items per user, summarized
/// per group; optional augmented pseudo-user sequences are reported alongside.
ContinuityReport interest_continuity(
    const data::InteractionDataset& dataset, const SimilaritySource& source,
    const std::optional<std::vector<std::vector<int>>>& augmented_sequences = std::nullopt);

std::string to_json(const ContinuityReport& report);

struct DropSweepConfig {
  std::vector<double> drop_rates = {0.0, 0.25, 0.5, 0.75, 1.0};
  rec::RecommenderConfig model;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  EvalConfig eval;
  data::Split eval_split = data::Split::Test;
  std::uint64_t seed = 0;
};

struct DropSweepRow {
  double rate = 0.0;
  GroupMetrics casual;
};

/// For each rate, independently drops core-user training interactions with
/// that probability, retrains from scratch with a fixed seed, and reports
/// casual-user metrics. Rate 0 trains on the original data; rate 1 trains on
/// casual users only.
std::vector<DropSweepRow> random_drop_sweep(const data::InteractionDataset& dataset,
                                            const DropSweepConfig& config);

/// The training sequences a sweep run would use at the given rate; exposed so
/// the rate-0 identity and rate-1 emptiness contracts are directly testable.
std::vector<std::vector<int>> dropped_core_training_set(const data::InteractionDataset& dataset,
                                                        double rate, std::uint64_t seed,
                                                        std::vector<std::vector<int>>* exclusions,
                                                        std::vector<int>* users_out = nullptr);

}  // namespace l2aug::eval
