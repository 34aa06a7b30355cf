#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "l2aug/data.hpp"
#include "l2aug/params.hpp"
#include "l2aug/rng.hpp"
#include "l2aug/tape.hpp"

namespace l2aug::aug {

/// Edit actions in their fixed serialization order.
enum class Action : int { Drop = 0, Keep = 1, Substitute = 2 };

/// For each item, its most correlated partner under inverse user frequency:
/// argmax_j |N(i) ∩ N(j)| / sqrt(|N(i)||N(j)|) over the sets of users who
/// interacted with each item in training. Items without any co-occurring
/// partner map to themselves.
class SubstitutionTable {
 public:
  static SubstitutionTable build(const data::InteractionDataset& dataset);

  int partner(int item) const;
  std::size_t size() const { return partner_.size(); }

 private:
  std::vector<int> partner_;
};

struct AugmentorConfig {
  std::size_t catalog_size = 0;
  std::size_t dim = 100;
  std::size_t max_len = 200;
  std::size_t n_actions = 2;  // 2 = {drop, keep}; 3 adds substitute
};

struct EditTrajectory {
  int source_user = -1;
  std::vector<int> source_sequence;
  std::vector<Action> actions;     // one per source position
  std::vector<double> log_probs;   // log pi(a_k | h_k) of the sampled actions
  std::vector<int> synthetic;      // empty when discarded
  bool discarded = false;
};

/// Sequence-editing policy: a single-head causal self-attention encoder over
/// item+positional embeddings produces per-position states, and a linear
/// action head turns each state into a distribution over the edit actions.
class AugmentorPolicy {
 public:
  AugmentorPolicy() = default;

  static AugmentorPolicy init(const AugmentorConfig& config, std::uint64_t seed);
  static AugmentorPolicy from_params(const AugmentorConfig& config, ad::ParamSet params);

  const AugmentorConfig& config() const { return config_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  struct Leafed {
    std::vector<ad::Var> vars;
  };
  Leafed leaf(ad::Tape& tape) const;
  std::vector<ad::Tensor> grads(const ad::Tape& tape, const Leafed& leafed) const;

  /// Per-position states h_1..h_t: causal scaled dot-product attention over
  /// e_k = item_k + position_k, values transformed by W_V.
  ad::Var encode_states(ad::Tape& tape, const Leafed& leafed,
                        const std::vector<int>& sequence) const;

  /// softmax(W_A h_k) rows, one per position.
  ad::Var action_logits(ad::Tape& tape, const Leafed& leafed, ad::Var states) const;

  /// Probabilities over the action space for every position (no gradients).
  ad::Tensor action_probabilities(const std::vector<int>& sequence) const;

  /// Sum over positions of log pi(a_k | h_k) for the trajectory's sampled
  /// actions; this is the differentiable piece of the policy surrogate.
  ad::Var trajectory_log_prob(ad::Tape& tape, const Leafed& leafed,
                              const EditTrajectory& trajectory) const;

 private:
  AugmentorConfig config_;
  ad::ParamSet params_;
};

/// Applies edit actions to a sequence. Returns nullopt (Discard) when fewer
/// than 2 items survive; a substitute action without a table is an error.
std::optional<std::vector<int>> apply_actions(const std::vector<int>& sequence,
                                              const std::vector<Action>& actions,
                                              const SubstitutionTable* table);

/// Samples one action per position from the policy and applies them.
/// Deterministic under the rng state.
EditTrajectory sample_trajectory(const AugmentorPolicy& policy, const std::vector<int>& sequence,
                                 Rng& rng, const SubstitutionTable* table = nullptr,
                                 int source_user = -1);

/// TSV export: source_user <TAB> comma-separated item ids <TAB>
/// comma-separated action codes. Discarded trajectories are not written.
void write_augmented_tsv(const std::string& path, const std::vector<EditTrajectory>& trajectories,
                         const data::InteractionDataset& dataset);

}  // namespace l2aug::aug
