#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "l2aug/adam.hpp"
#include "l2aug/augmentor.hpp"
#include "l2aug/data.hpp"
#include "l2aug/recommender.hpp"
#include "l2aug/simulator.hpp"

namespace l2aug::train {

struct RewardSpec {
  enum class Mode { Metric, Simulated };
  Mode mode = Mode::Metric;
  bool use_ht = true;    // Algorithm-1 fidelity: ht only
  bool use_ndcg = true;
  int k = 10;
  double scale = 100.0;
  // simulated mode
  std::size_t episode_steps = 3;
  std::size_t episode_list_size = 5;
};

struct TrainerConfig {
  std::size_t batch_size = 64;            // B
  double policy_learning_rate = 1e-3;     // alpha
  double recommender_learning_rate = 1e-3;
  std::size_t update_frequency = 5;       // replay every F iterations
  std::size_t max_iterations = 1000;
  std::size_t convergence_window = 200;
  double convergence_tolerance = 1e-4;    // <= 0 disables the moving-average stop
  bool persist_probe = false;
  bool use_baseline = false;              // EMA baseline subtracted from r_t
  double baseline_decay = 0.9;
  bool exclude_consumed = true;
  RewardSpec reward;
  std::uint64_t seed = 0;
  sim::SimConfig simulator;               // simulated reward mode only
};

struct RewardRecord {
  std::size_t t = 0;
  double ht_before = 0.0;
  double ht_after = 0.0;
  double ndcg_before = 0.0;
  double ndcg_after = 0.0;
  double reward = 0.0;
  bool replay = false;
  bool skipped = false;  // every trajectory in the batch was discarded
};

std::string to_json_lines(const std::vector<RewardRecord>& trace);

/// Initializes and trains the target model on all training sequences
/// (core + casual) for the given number of epochs.
rec::RecommenderModel pretrain(const rec::RecommenderConfig& model_config,
                               const data::InteractionDataset& dataset, std::size_t epochs,
                               std::size_t batch_size, double learning_rate, std::uint64_t seed,
                               std::vector<rec::EpochStats>* log = nullptr);

/// One optimizer step on the synthetic batch applied to a copy; the source
/// model and optimizer state stay untouched.
struct ProbeResult {
  rec::RecommenderModel model;
  ad::AdamState optimizer;
  std::size_t used_sequences = 0;
};
ProbeResult probe_finetune(const rec::RecommenderModel& model, const ad::AdamState& optimizer,
                           const std::vector<aug::EditTrajectory>& batch, std::uint64_t step_seed);

/// Reward components measured on the meta set before/after the probe.
struct RewardParts {
  double ht_before = 0.0, ht_after = 0.0;
  double ndcg_before = 0.0, ndcg_after = 0.0;
  double reward = 0.0;
};
RewardParts compute_reward(const rec::RecommenderModel& before, const rec::RecommenderModel& after,
                           const data::InteractionDataset& dataset,
                           const std::vector<int>& meta_users, const RewardSpec& spec,
                           bool exclude_consumed, const sim::Environment* env = nullptr);

/// REINFORCE ascent: params += alpha * r * grad of the summed log-probability
/// of the sampled actions across the batch. Exactly linear in r.
void policy_update(aug::AugmentorPolicy& policy,
                   const std::vector<aug::EditTrajectory>& trajectories, double reward,
                   double alpha);

/// One persistent optimizer step on synthetic and original batches with equal
/// weight; either side may be empty (but not both).
double replay_update(rec::RecommenderModel& model, ad::AdamState& optimizer,
                     const std::vector<aug::EditTrajectory>& synthetic,
                     const std::vector<std::vector<int>>& original_sequences,
                     const std::vector<std::vector<int>>& original_exclusions,
                     std::uint64_t step_seed);

struct L2AugResult {
  rec::RecommenderModel model;
  aug::AugmentorPolicy policy;
  std::vector<RewardRecord> trace;
  std::size_t iterations_run = 0;
  bool converged = false;
};

/// The full alternating loop: sample core sequences, edit them, probe
/// fine-tune, reward the policy, and periodically replay-update the
/// recommender on synthetic plus original data.
L2AugResult run_l2aug(const TrainerConfig& config, const data::InteractionDataset& dataset,
                      const std::vector<int>& meta_users, rec::RecommenderModel model,
                      aug::AugmentorPolicy policy, const aug::SubstitutionTable* table = nullptr,
                      const sim::Environment* env = nullptr);

}  // namespace l2aug::train
