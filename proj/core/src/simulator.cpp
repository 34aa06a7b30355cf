#include "l2aug/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "l2aug/error.hpp"
#include "l2aug/rng.hpp"

namespace l2aug::sim {

Environment Environment::init(const data::InteractionDataset& dataset, ad::Tensor item_embeddings,
                              SimConfig config, std::uint64_t seed) {
  if (config.memory_size == 0) throw ConfigError("simulator: memory size must be positive");
  if (item_embeddings.ndim() != 2 || item_embeddings.shape[0] < dataset.n_items()) {
    throw Error("simulator: embedding source does not cover the catalog");
  }
  Environment env;
  env.config_ = config;
  env.embeddings_ = std::move(item_embeddings);
  env.seed_ = seed;
  env.memories_.resize(dataset.n_users());
  for (std::size_t u = 0; u < dataset.n_users(); ++u) {
    const auto train = dataset.train_items(static_cast<int>(u));
    if (train.empty()) continue;  // excluded
    const std::size_t keep = std::min(config.memory_size, train.size());
    env.memories_[u].assign(train.end() - static_cast<std::ptrdiff_t>(keep), train.end());
  }
  return env;
}

bool Environment::has_user(int user) const {
  return user >= 0 && static_cast<std::size_t>(user) < memories_.size() &&
         !memories_[static_cast<std::size_t>(user)].empty();
}

const std::vector<int>& Environment::initial_memory(int user) const {
  if (!has_user(user)) throw Error("simulator: user has no training history");
  return memories_[static_cast<std::size_t>(user)];
}

Environment::UserState Environment::start(int user) const {
  if (!has_user(user)) throw Error("simulator: user has no training history");
  UserState s;
  s.user = user;
  s.memory = memories_[static_cast<std::size_t>(user)];
  s.prefix = s.memory;
  s.consumed.assign(embeddings_.shape[0], 0);
  for (int item : s.prefix) s.consumed[static_cast<std::size_t>(item)] = 1;
  s.noise_stream = Rng::mix(seed_, static_cast<std::uint64_t>(user));
  return s;
}

std::vector<double> Environment::simulate_response(UserState& state,
                                                   const std::vector<int>& candidates) const {
  if (state.memory.empty()) throw Error("simulator: empty memory");
  const std::size_t d = embeddings_.shape[1];
  std::vector<double> mean(d, 0.0);
  for (int item : state.memory) {
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] += embeddings_.at(static_cast<std::size_t>(item), j);
    }
  }
  for (double& v : mean) v /= static_cast<double>(state.memory.size());
  double mean_norm = 0.0;
  for (double v : mean) mean_norm += v * v;
  mean_norm = std::sqrt(mean_norm);

  Rng noise(state.noise_stream);

  std::vector<double> ratings;
  ratings.reserve(candidates.size());
  for (int c : candidates) {
    if (c < 0 || static_cast<std::size_t>(c) >= embeddings_.shape[0]) {
      throw Error("simulator: candidate " + std::to_string(c) + " outside the catalog");
    }
    double dot = 0.0, cnorm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = embeddings_.at(static_cast<std::size_t>(c), j);
      dot += e * mean[j];
      cnorm += e * e;
    }
    cnorm = std::sqrt(cnorm);
    const double cosine = (mean_norm == 0.0 || cnorm == 0.0) ? 0.0 : dot / (mean_norm * cnorm);
    double rating = 1.0 + 4.0 * std::max(0.0, cosine);
    if (config_.response_noise) {
      rating = std::clamp(rating + noise.range(-0.25, 0.25), 1.0, 5.0);
    }
    ratings.push_back(rating);
    if (rating >= 3.0) {
      state.memory.push_back(c);
      if (state.memory.size() > config_.memory_size) state.memory.erase(state.memory.begin());
      state.prefix.push_back(c);
    }
  }
  if (config_.response_noise) state.noise_stream = noise.next();
  return ratings;
}

Episode Environment::online_episode(const rec::RecommenderModel& model, int user,
                                    std::size_t steps, std::size_t list_size) const {
  if (steps == 0 || list_size == 0) {
    throw ConfigError("simulator: steps and list size must be positive");
  }
  UserState state = start(user);
  Episode ep;
  ep.user = user;
  for (std::size_t step = 0; step < steps; ++step) {
    const ad::Tensor scores = model.score_next(state.prefix);
    // top-(list size) unconsumed, ties by lower index
    std::vector<int> order(scores.numel());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double sa = scores.data[static_cast<std::size_t>(a)];
      const double sb = scores.data[static_cast<std::size_t>(b)];
      if (sa != sb) return sa > sb;
      return a < b;
    });
    std::vector<int> recommended;
    for (int c : order) {
      if (recommended.size() == list_size) break;
      if (!state.consumed[static_cast<std::size_t>(c)]) recommended.push_back(c);
    }
    if (recommended.empty()) {
      ep.exhausted_early = true;
      break;
    }
    for (int c : recommended) state.consumed[static_cast<std::size_t>(c)] = 1;
    StepTrace trace;
    trace.recommended = recommended;
    trace.ratings = simulate_response(state, recommended);
    double sum = 0.0;
    for (double r : trace.ratings) sum += r;
    trace.reward = sum / static_cast<double>(trace.ratings.size());
    ep.cumulative_reward += trace.reward;
    ep.steps.push_back(std::move(trace));
    if (recommended.size() < list_size) {
      ep.exhausted_early = true;
      break;
    }
  }
  return ep;
}

std::string to_json_lines(const std::vector<Episode>& episodes) {
  std::ostringstream os;
  for (const auto& ep : episodes) {
    for (std::size_t s = 0; s < ep.steps.size(); ++s) {
      nlohmann::ordered_json j;
      j["user"] = ep.user;
      j["step"] = s;
      j["recommended"] = ep.steps[s].recommended;
      j["ratings"] = ep.steps[s].ratings;
      j["reward"] = ep.steps[s].reward;
      os << j.dump() << "\n";
    }
  }
  return os.str();
}

}  // namespace l2aug::sim
