#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l2aug/data.hpp"
#include "l2aug/recommender.hpp"
#include "l2aug/tensor.hpp"

namespace l2aug::sim {

struct SimConfig {
  std::size_t memory_size = 10;  // m
  bool response_noise = false;   // adds uniform jitter in [-0.25, 0.25]
};

struct StepTrace {
  std::vector<int> recommended;
  std::vector<double> ratings;
  double reward = 0.0;  // mean rating of the list
};

struct Episode {
  int user = -1;
  std::vector<StepTrace> steps;
  double cumulative_reward = 0.0;
  bool exhausted_early = false;
};

/// Memory-matching response environment: each simulated user keeps the last
/// m positively-received items; a candidate's rating is 1 + 4 * max(0, cosine
/// between its embedding and the mean memory embedding). Ratings of 3 or more
/// push the candidate into memory (and into the scoring prefix during an
/// episode). A deterministic state machine; the optional response noise draws
/// from a per-episode seeded stream.
class Environment {
 public:
  /// Memories start from the last m training items of each user; users with
  /// no training events are excluded.
  static Environment init(const data::InteractionDataset& dataset, ad::Tensor item_embeddings,
                          SimConfig config, std::uint64_t seed);

  bool has_user(int user) const;
  const std::vector<int>& initial_memory(int user) const;

  /// Per-episode mutable state.
  struct UserState {
    int user = -1;
    std::vector<int> memory;
    std::vector<int> prefix;
    std::vector<std::uint8_t> consumed;  // per catalog item
    std::uint64_t noise_stream = 0;
  };
  UserState start(int user) const;

  /// Rates each candidate against the current memory and updates it.
  std::vector<double> simulate_response(UserState& state, const std::vector<int>& candidates) const;

  /// Runs `steps` rounds of top-(list_size) unconsumed recommendations.
  Episode online_episode(const rec::RecommenderModel& model, int user, std::size_t steps,
                         std::size_t list_size) const;

  const SimConfig& config() const { return config_; }

 private:
  SimConfig config_;
  ad::Tensor embeddings_;
  std::vector<std::vector<int>> memories_;  // per dense user index; empty = excluded
  std::uint64_t seed_ = 0;
};

std::string to_json_lines(const std::vector<Episode>& episodes);

}  // namespace l2aug::sim
