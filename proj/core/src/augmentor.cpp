#include "l2aug/augmentor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "l2aug/error.hpp"

namespace l2aug::aug {

using ad::Tape;
using ad::Tensor;
using ad::Var;

SubstitutionTable SubstitutionTable::build(const data::InteractionDataset& dataset) {
  const std::size_t n = dataset.n_items();
  // N(i): users who interacted with item i in training.
  std::vector<std::vector<int>> item_users(n);
  for (std::size_t u = 0; u < dataset.n_users(); ++u) {
    std::vector<int> distinct = dataset.train_items(static_cast<int>(u));
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (int item : distinct) {
      item_users[static_cast<std::size_t>(item)].push_back(static_cast<int>(u));
    }
  }
  if (dataset.n_events() == 0) throw Error("substitution table: no training events");

  // co-occurrence user counts per unordered item pair
  std::unordered_map<std::uint64_t, int> pair_count;
  for (std::size_t u = 0; u < dataset.n_users(); ++u) {
    std::vector<int> distinct = dataset.train_items(static_cast<int>(u));
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t a = 0; a < distinct.size(); ++a) {
      for (std::size_t b = a + 1; b < distinct.size(); ++b) {
        const std::uint64_t key = (static_cast<std::uint64_t>(distinct[a]) << 32) |
                                  static_cast<std::uint32_t>(distinct[b]);
        ++pair_count[key];
      }
    }
  }

  std::vector<double> best_corr(n, 0.0);
  SubstitutionTable table;
  table.partner_.resize(n);
  std::iota(table.partner_.begin(), table.partner_.end(), 0);  // self fallback
  std::vector<int> best(n, -1);
  for (const auto& [key, count] : pair_count) {
    const int i = static_cast<int>(key >> 32);
    const int j = static_cast<int>(key & 0xffffffffu);
    const double corr =
        static_cast<double>(count) /
        std::sqrt(static_cast<double>(item_users[static_cast<std::size_t>(i)].size()) *
                  static_cast<double>(item_users[static_cast<std::size_t>(j)].size()));
    auto consider = [&](int item, int candidate) {
      const auto idx = static_cast<std::size_t>(item);
      if (corr > best_corr[idx] ||
          (corr == best_corr[idx] && best[idx] >= 0 && candidate < best[idx])) {
        best_corr[idx] = corr;
        best[idx] = candidate;
      }
    };
    consider(i, j);
    consider(j, i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i] >= 0) table.partner_[i] = best[i];
  }
  return table;
}

int SubstitutionTable::partner(int item) const {
  if (item < 0 || static_cast<std::size_t>(item) >= partner_.size()) {
    throw Error("substitution table: item " + std::to_string(item) + " outside the catalog");
  }
  return partner_[static_cast<std::size_t>(item)];
}

AugmentorPolicy AugmentorPolicy::init(const AugmentorConfig& config, std::uint64_t seed) {
  if (config.n_actions != 2 && config.n_actions != 3) {
    throw ConfigError("augmentor: action space must have 2 or 3 actions");
  }
  if (config.dim == 0 || config.catalog_size == 0 || config.max_len < 1) {
    throw ConfigError("augmentor: dim and catalog must be positive");
  }
  AugmentorPolicy p;
  p.config_ = config;
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.dim));
  auto add = [&](const std::string& name, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.range(-bound, bound);
    p.params_.add(name, std::move(t));
  };
  const std::size_t d = config.dim;
  add("item_embedding", {config.catalog_size, d});
  add("position_embedding", {config.max_len, d});
  add("w_query", {d, d});
  add("w_key", {d, d});
  add("w_value", {d, d});
  add("w_action", {config.n_actions, d});
  return p;
}

AugmentorPolicy AugmentorPolicy::from_params(const AugmentorConfig& config, ad::ParamSet params) {
  AugmentorPolicy reference = init(config, 0);
  if (params.size() != reference.params_.size()) {
    throw Error("augmentor: checkpoint has " + std::to_string(params.size()) +
                " tensors, expected " + std::to_string(reference.params_.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != reference.params_[i].name ||
        params[i].value.shape != reference.params_[i].value.shape) {
      throw Error("augmentor: checkpoint tensor '" + params[i].name +
                  "' does not match the configured policy");
    }
  }
  reference.params_ = std::move(params);
  return reference;
}

AugmentorPolicy::Leafed AugmentorPolicy::leaf(Tape& tape) const {
  Leafed out;
  out.vars.reserve(params_.size());
  for (const auto& p : params_) out.vars.push_back(tape.leaf(p.value));
  return out;
}

std::vector<Tensor> AugmentorPolicy::grads(const Tape& tape, const Leafed& leafed) const {
  std::vector<Tensor> out;
  out.reserve(leafed.vars.size());
  for (Var v : leafed.vars) out.push_back(tape.grad(v));
  return out;
}

Var AugmentorPolicy::encode_states(Tape& tape, const Leafed& leafed,
                                   const std::vector<int>& sequence) const {
  if (sequence.empty()) throw Error("augmentor: cannot encode an empty sequence");
  if (sequence.size() > config_.max_len) {
    throw ShapeError("augmentor: sequence length " + std::to_string(sequence.size()) +
                     " exceeds the positional table size " + std::to_string(config_.max_len));
  }
  std::vector<int> positions(sequence.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var e = tape.add(tape.gather_rows(leafed.vars[0], sequence),
                   tape.gather_rows(leafed.vars[1], positions));
  Var q = tape.matmul(e, leafed.vars[2]);
  Var k = tape.matmul(e, leafed.vars[3]);
  Var v = tape.matmul(e, leafed.vars[4]);
  return ad::scaled_dot_attention(tape, q, k, v);
}

Var AugmentorPolicy::action_logits(Tape& tape, const Leafed& leafed, Var states) const {
  return tape.matmul(states, tape.transpose(leafed.vars[5]));
}

Tensor AugmentorPolicy::action_probabilities(const std::vector<int>& sequence) const {
  Tape tape(false);
  Leafed leafed = leaf(tape);
  Var states = encode_states(tape, leafed, sequence);
  return tape.value(tape.softmax_rows(action_logits(tape, leafed, states)));
}

Var AugmentorPolicy::trajectory_log_prob(Tape& tape, const Leafed& leafed,
                                         const EditTrajectory& trajectory) const {
  if (trajectory.actions.size() != trajectory.source_sequence.size()) {
    throw Error("augmentor: trajectory actions are not aligned to its sequence");
  }
  Var states = encode_states(tape, leafed, trajectory.source_sequence);
  Var logp = tape.log_softmax_rows(action_logits(tape, leafed, states));
  Tensor picks({trajectory.actions.size(), config_.n_actions});
  for (std::size_t k = 0; k < trajectory.actions.size(); ++k) {
    picks.at(k, static_cast<std::size_t>(trajectory.actions[k])) = 1.0;
  }
  return tape.sum_all(tape.mul(logp, tape.constant(std::move(picks))));
}

std::optional<std::vector<int>> apply_actions(const std::vector<int>& sequence,
                                              const std::vector<Action>& actions,
                                              const SubstitutionTable* table) {
  if (actions.size() != sequence.size()) {
    throw Error("apply_actions: " + std::to_string(actions.size()) + " actions for " +
                std::to_string(sequence.size()) + " items");
  }
  std::vector<int> out;
  out.reserve(sequence.size());
  for (std::size_t k = 0; k < sequence.size(); ++k) {
    switch (actions[k]) {
      case Action::Drop:
        break;
      case Action::Keep:
        out.push_back(sequence[k]);
        break;
      case Action::Substitute:
        if (table == nullptr) {
          throw Error("apply_actions: substitute action requires a substitution table");
        }
        out.push_back(table->partner(sequence[k]));
        break;
    }
  }
  if (out.size() < 2) return std::nullopt;
  return out;
}

EditTrajectory sample_trajectory(const AugmentorPolicy& policy, const std::vector<int>& sequence,
                                 Rng& rng, const SubstitutionTable* table, int source_user) {
  if (sequence.empty()) throw Error("sample_trajectory: empty sequence");
  EditTrajectory traj;
  traj.source_user = source_user;
  traj.source_sequence = sequence;

  const Tensor probs = policy.action_probabilities(sequence);
  const std::size_t n_actions = policy.config().n_actions;
  traj.actions.reserve(sequence.size());
  traj.log_probs.reserve(sequence.size());
  for (std::size_t k = 0; k < sequence.size(); ++k) {
    const double draw = rng.uniform();
    double cum = 0.0;
    std::size_t choice = n_actions - 1;
    for (std::size_t a = 0; a < n_actions; ++a) {
      cum += probs.at(k, a);
      if (draw < cum) {
        choice = a;
        break;
      }
    }
    traj.actions.push_back(static_cast<Action>(choice));
    traj.log_probs.push_back(std::log(probs.at(k, choice)));
  }
  auto synthetic = apply_actions(sequence, traj.actions, table);
  if (synthetic) {
    traj.synthetic = std::move(*synthetic);
  } else {
    traj.discarded = true;
  }
  return traj;
}

void write_augmented_tsv(const std::string& path, const std::vector<EditTrajectory>& trajectories,
                         const data::InteractionDataset& dataset) {
  std::ofstream os(path);
  if (!os) throw IoError("augment: cannot open '" + path + "' for writing");
  for (const auto& traj : trajectories) {
    if (traj.discarded) continue;
    os << (traj.source_user >= 0 ? dataset.users[static_cast<std::size_t>(traj.source_user)].id
                                 : std::string("?"));
    os << '\t';
    for (std::size_t i = 0; i < traj.synthetic.size(); ++i) {
      if (i) os << ',';
      os << dataset.item_ids[static_cast<std::size_t>(traj.synthetic[i])];
    }
    os << '\t';
    for (std::size_t i = 0; i < traj.actions.size(); ++i) {
      if (i) os << ',';
      os << static_cast<int>(traj.actions[i]);
    }
    os << '\n';
  }
  if (!os) throw IoError("augment: write failed for '" + path + "'");
}

}  // namespace l2aug::aug
