#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l2aug/adam.hpp"
#include "l2aug/params.hpp"
#include "l2aug/rng.hpp"
#include "l2aug/tape.hpp"

namespace l2aug::rec {

enum class Architecture { SelfAttention, Recurrent };

Architecture architecture_from_string(const std::string& s);
std::string to_string(Architecture a);

struct RecommenderConfig {
  Architecture architecture = Architecture::SelfAttention;
  std::size_t catalog_size = 0;
  std::size_t dim = 100;
  std::size_t max_len = 200;
  std::size_t blocks = 2;  // self-attention only; the recurrent net is single-layer
};

/// Sequences padded to a common width on the left so the newest item sits in
/// the last column. Masked positions contribute zero loss. Negatives are
/// sampled outside the originating sequence's item set.
struct TrainBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> items;              // rows x cols, left-padded with 0
  std::vector<int> targets;            // rows x cols; target at j is the item at j+1
  std::vector<int> negatives;          // rows x cols, aligned with targets
  std::vector<std::uint8_t> mask;      // 1 where a transition contributes loss
  std::size_t n_steps = 0;             // total unmasked transitions
};

/// Next-item model f: encodes an interaction prefix and scores the whole
/// catalog against the representation at the last position. Output scores
/// reuse the item embedding table (tied weights).
class RecommenderModel {
 public:
  RecommenderModel() = default;

  /// Uniform init in [-1/sqrt(D), +1/sqrt(D)], deterministic under seed.
  static RecommenderModel init(const RecommenderConfig& config, std::uint64_t seed);
  static RecommenderModel from_params(const RecommenderConfig& config, ad::ParamSet params);

  const RecommenderConfig& config() const { return config_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  struct Leafed {
    std::vector<ad::Var> vars;  // aligned with params() order
    ad::Var item_embedding() const { return vars[0]; }
  };
  Leafed leaf(ad::Tape& tape) const;
  std::vector<ad::Tensor> grads(const ad::Tape& tape, const Leafed& leafed) const;

  /// Per-step sequence representations, one row per position. Strictly
  /// causal for both architectures.
  ad::Var encode(ad::Tape& tape, const Leafed& leafed, const std::vector<int>& sequence) const;

  /// Preference scores over the full catalog given a non-empty prefix.
  /// Prefixes longer than max_len keep their most recent max_len items.
  ad::Tensor score_next(const std::vector<int>& prefix) const;

  /// Sum over unmasked steps of -[log sigmoid(pos) + log(1 - sigmoid(neg))].
  ad::Var batch_loss_sum(ad::Tape& tape, const Leafed& leafed, const TrainBatch& batch) const;
  /// batch_loss_sum / n_steps; zero for a fully masked batch.
  ad::Var batch_loss_mean(ad::Tape& tape, const Leafed& leafed, const TrainBatch& batch) const;

 private:
  RecommenderConfig config_;
  ad::ParamSet params_;

  ad::Var encode_attention(ad::Tape& tape, const Leafed& leafed,
                           const std::vector<int>& seq) const;
  ad::Var encode_recurrent(ad::Tape& tape, const Leafed& leafed,
                           const std::vector<int>& seq) const;
};

/// Uniform negative draw from the catalog outside the exclusion set.
int sample_negative(std::size_t catalog_size, const std::vector<int>& exclusion_sorted,
                    Rng& rng);

/// Assembles a left-padded batch. exclusions[i] lists items negatives must
/// avoid for sequences[i]; it does not need to be sorted.
TrainBatch make_train_batch(const std::vector<std::vector<int>>& sequences,
                            const std::vector<std::vector<int>>& exclusions,
                            std::size_t catalog_size, Rng& rng);

/// Eq.-style cross-entropy total over the batch (the sum form).
double training_loss(const RecommenderModel& model, const TrainBatch& batch);

struct EpochStats {
  double mean_loss = 0.0;  // per unmasked transition
  std::int64_t wall_ms = 0;
};

/// One pass over the given training sequences in shuffled batches with
/// negatives resampled per epoch; deterministic under seed.
EpochStats train_epoch(RecommenderModel& model, ad::AdamState& optimizer,
                       const std::vector<std::vector<int>>& sequences,
                       const std::vector<std::vector<int>>& exclusions,
                       std::size_t batch_size, std::uint64_t seed);

}  // namespace l2aug::rec
