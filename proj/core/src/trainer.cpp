#include "l2aug/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "l2aug/error.hpp"
#include "l2aug/evaluator.hpp"
#include "l2aug/rng.hpp"

namespace l2aug::train {

using aug::AugmentorPolicy;
using aug::EditTrajectory;
using data::Group;
using data::InteractionDataset;
using rec::RecommenderModel;

std::string to_json_lines(const std::vector<RewardRecord>& trace) {
  std::ostringstream os;
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["t"] = r.t;
    j["ht_before"] = r.ht_before;
    j["ht_after"] = r.ht_after;
    j["ndcg_before"] = r.ndcg_before;
    j["ndcg_after"] = r.ndcg_after;
    j["r"] = r.reward;
    j["replay"] = r.replay;
    if (r.skipped) j["skipped"] = true;
    os << j.dump() << "\n";
  }
  return os.str();
}

rec::RecommenderModel pretrain(const rec::RecommenderConfig& model_config,
                               const InteractionDataset& dataset, std::size_t epochs,
                               std::size_t batch_size, double learning_rate, std::uint64_t seed,
                               std::vector<rec::EpochStats>* log) {
  std::vector<std::vector<int>> sequences;
  std::vector<std::vector<int>> exclusions;
  for (std::size_t u = 0; u < dataset.n_users(); ++u) {
    auto train = dataset.train_items(static_cast<int>(u));
    if (train.empty()) continue;
    sequences.push_back(std::move(train));
    exclusions.push_back(dataset.full_sequence(static_cast<int>(u)));
  }
  if (sequences.empty()) throw Error("pretrain: no training sequences");

  rec::RecommenderConfig cfg = model_config;
  cfg.catalog_size = dataset.n_items();
  auto model = RecommenderModel::init(cfg, seed);
  ad::AdamConfig acfg;
  acfg.learning_rate = learning_rate;
  ad::AdamState opt(model.params(), acfg);
  for (std::size_t e = 0; e < epochs; ++e) {
    auto stats =
        rec::train_epoch(model, opt, sequences, exclusions, batch_size, Rng::mix(seed, 1 + e));
    if (log) log->push_back(stats);
  }
  return model;
}

namespace {

void synthetic_batch_views(const std::vector<EditTrajectory>& batch,
                           std::vector<std::vector<int>>* sequences,
                           std::vector<std::vector<int>>* exclusions) {
  for (const auto& traj : batch) {
    if (traj.discarded) continue;
    sequences->push_back(traj.synthetic);
    exclusions->push_back(traj.synthetic);
  }
}

}  // namespace

ProbeResult probe_finetune(const RecommenderModel& model, const ad::AdamState& optimizer,
                           const std::vector<EditTrajectory>& batch, std::uint64_t step_seed) {
  std::vector<std::vector<int>> sequences, exclusions;
  synthetic_batch_views(batch, &sequences, &exclusions);
  if (sequences.empty()) throw Error("probe_finetune: every trajectory was discarded");

  ProbeResult out{model, optimizer, sequences.size()};
  Rng rng(step_seed);
  auto train_batch =
      rec::make_train_batch(sequences, exclusions, model.config().catalog_size, rng);
  if (train_batch.n_steps == 0) return out;  // nothing to learn from

  ad::Tape tape;
  auto leafed = out.model.leaf(tape);
  ad::Var loss = out.model.batch_loss_mean(tape, leafed, train_batch);
  tape.backward(loss);
  out.optimizer.step(out.model.params(), out.model.grads(tape, leafed));
  return out;
}

RewardParts compute_reward(const RecommenderModel& before, const RecommenderModel& after,
                           const InteractionDataset& dataset, const std::vector<int>& meta_users,
                           const RewardSpec& spec, bool exclude_consumed,
                           const sim::Environment* env) {
  RewardParts parts;
  if (spec.mode == RewardSpec::Mode::Simulated) {
    if (env == nullptr) throw Error("compute_reward: simulated mode needs an environment");
    double sum_before = 0.0, sum_after = 0.0;
    std::size_t n = 0;
    for (int user : meta_users) {
      if (!env->has_user(user)) continue;
      sum_before +=
          env->online_episode(before, user, spec.episode_steps, spec.episode_list_size)
              .cumulative_reward;
      sum_after += env->online_episode(after, user, spec.episode_steps, spec.episode_list_size)
                       .cumulative_reward;
      ++n;
    }
    if (n == 0) throw Error("compute_reward: no meta user is usable in the environment");
    parts.ht_before = sum_before / static_cast<double>(n);
    parts.ht_after = sum_after / static_cast<double>(n);
    parts.reward = spec.scale * (parts.ht_after - parts.ht_before);
    return parts;
  }
  const auto mb = eval::meta_metrics(before, dataset, meta_users, spec.k, exclude_consumed);
  const auto ma = eval::meta_metrics(after, dataset, meta_users, spec.k, exclude_consumed);
  parts.ht_before = mb.ht;
  parts.ht_after = ma.ht;
  parts.ndcg_before = mb.ndcg;
  parts.ndcg_after = ma.ndcg;
  double delta = 0.0;
  if (spec.use_ht) delta += ma.ht - mb.ht;
  if (spec.use_ndcg) delta += ma.ndcg - mb.ndcg;
  parts.reward = spec.scale * delta;
  return parts;
}

void policy_update(AugmentorPolicy& policy, const std::vector<EditTrajectory>& trajectories,
                   double reward, double alpha) {
  if (!std::isfinite(reward)) throw NonFiniteError("policy_update: non-finite reward");
  if (trajectories.empty()) throw Error("policy_update: empty trajectory batch");
  if (reward == 0.0) return;  // the surrogate gradient is scaled by r

  ad::Tape tape;
  auto leafed = policy.leaf(tape);
  ad::Var total = tape.constant(ad::Tensor::scalar(0.0));
  for (const auto& traj : trajectories) {
    total = tape.add(total, policy.trajectory_log_prob(tape, leafed, traj));
  }
  ad::Var surrogate = tape.scale(total, reward);
  if (!tape.value(surrogate).all_finite()) {
    throw NonFiniteError("policy_update: non-finite surrogate");
  }
  tape.backward(surrogate);
  // ascent, exactly linear in the reward
  auto grads = policy.grads(tape, leafed);
  for (std::size_t i = 0; i < policy.params().size(); ++i) {
    auto& p = policy.params()[i].value;
    const auto& g = grads[i];
    if (!g.all_finite()) {
      throw NonFiniteError("policy_update: non-finite gradient for '" + policy.params()[i].name +
                           "'");
    }
    for (std::size_t j = 0; j < p.numel(); ++j) p.data[j] += alpha * g.data[j];
  }
}

double replay_update(RecommenderModel& model, ad::AdamState& optimizer,
                     const std::vector<EditTrajectory>& synthetic,
                     const std::vector<std::vector<int>>& original_sequences,
                     const std::vector<std::vector<int>>& original_exclusions,
                     std::uint64_t step_seed) {
  std::vector<std::vector<int>> syn_sequences, syn_exclusions;
  synthetic_batch_views(synthetic, &syn_sequences, &syn_exclusions);

  Rng rng(step_seed);
  auto syn_batch =
      rec::make_train_batch(syn_sequences, syn_exclusions, model.config().catalog_size, rng);
  auto orig_batch = rec::make_train_batch(original_sequences, original_exclusions,
                                          model.config().catalog_size, rng);
  if (syn_batch.n_steps == 0 && orig_batch.n_steps == 0) {
    throw Error("replay_update: both batches are empty");
  }

  ad::Tape tape;
  auto leafed = model.leaf(tape);
  ad::Var loss = tape.constant(ad::Tensor::scalar(0.0));
  if (syn_batch.n_steps > 0 && orig_batch.n_steps > 0) {
    loss = tape.scale(tape.add(model.batch_loss_mean(tape, leafed, syn_batch),
                               model.batch_loss_mean(tape, leafed, orig_batch)),
                      0.5);
  } else if (syn_batch.n_steps > 0) {
    loss = model.batch_loss_mean(tape, leafed, syn_batch);
  } else {
    loss = model.batch_loss_mean(tape, leafed, orig_batch);
  }
  tape.backward(loss);
  optimizer.step(model.params(), model.grads(tape, leafed));
  return tape.value(loss).data[0];
}

namespace {

std::vector<int> sample_users(const std::vector<int>& pool, std::size_t n, Rng& rng) {
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[rng.index(pool.size())]);
  return out;
}

}  // namespace

L2AugResult run_l2aug(const TrainerConfig& config, const InteractionDataset& dataset,
                      const std::vector<int>& meta_users, RecommenderModel model,
                      AugmentorPolicy policy, const aug::SubstitutionTable* table,
                      const sim::Environment* env) {
  if (config.batch_size == 0 || config.update_frequency == 0) {
    throw ConfigError("trainer: batch size and update frequency must be positive");
  }
  if (policy.config().n_actions == 3 && table == nullptr) {
    throw Error("trainer: a 3-action policy needs a substitution table");
  }
  if (meta_users.empty()) throw Error("trainer: empty meta set");

  const std::vector<int> core_users = dataset.training_users(Group::Core);
  if (core_users.empty()) throw Error("trainer: no core training users");
  std::vector<int> all_users = core_users;
  for (int u : dataset.training_users(Group::Casual)) all_users.push_back(u);
  std::sort(all_users.begin(), all_users.end());

  ad::AdamConfig acfg;
  acfg.learning_rate = config.recommender_learning_rate;
  ad::AdamState optimizer(model.params(), acfg);

  L2AugResult result;
  result.trace.reserve(config.max_iterations);

  std::optional<RewardParts> cached_before;  // valid until the model changes
  double baseline = 0.0;
  std::vector<double> window;

  auto seq_of = [&dataset, &config](int user) {
    auto s = dataset.train_items(user);
    const std::size_t cap = config.batch_size;  // silence unused warning paths
    (void)cap;
    return s;
  };

  for (std::size_t t = 0; t < config.max_iterations; ++t) {
    Rng iter_rng(Rng::mix(config.seed, 0x17E5A110 + t));

    // --- augmentation by the data augmentor
    std::vector<EditTrajectory> trajectories;
    trajectories.reserve(config.batch_size);
    const auto batch_users = sample_users(core_users, config.batch_size, iter_rng);
    for (std::size_t b = 0; b < batch_users.size(); ++b) {
      Rng traj_rng(Rng::mix(config.seed, (t << 20) ^ (0xA5 + b)));
      trajectories.push_back(
          aug::sample_trajectory(policy, seq_of(batch_users[b]), traj_rng, table, batch_users[b]));
    }
    const bool all_discarded =
        std::all_of(trajectories.begin(), trajectories.end(),
                    [](const EditTrajectory& tr) { return tr.discarded; });

    RewardRecord record;
    record.t = t;

    if (all_discarded) {
      record.skipped = true;
    } else {
      // --- probe fine-tune and reward
      auto probe = probe_finetune(model, optimizer, trajectories,
                                  Rng::mix(config.seed, 0x9906E + t));
      if (!cached_before) {
        cached_before = compute_reward(model, model, dataset, meta_users, config.reward,
                                       config.exclude_consumed, env);
      }
      auto after = compute_reward(model, probe.model, dataset, meta_users, config.reward,
                                  config.exclude_consumed, env);
      // reuse the cached "before" side: the probe never mutates the model
      after.ht_before = cached_before->ht_before;
      after.ndcg_before = cached_before->ndcg_before;
      double reward = config.reward.scale * 0.0;
      {
        double delta = 0.0;
        if (config.reward.mode == RewardSpec::Mode::Simulated) {
          delta = after.ht_after - after.ht_before;
        } else {
          if (config.reward.use_ht) delta += after.ht_after - after.ht_before;
          if (config.reward.use_ndcg) delta += after.ndcg_after - after.ndcg_before;
        }
        reward = config.reward.scale * delta;
      }
      record.ht_before = after.ht_before;
      record.ht_after = after.ht_after;
      record.ndcg_before = after.ndcg_before;
      record.ndcg_after = after.ndcg_after;
      record.reward = reward;

      double effective = reward;
      if (config.use_baseline) {
        effective -= baseline;
        baseline = config.baseline_decay * baseline + (1.0 - config.baseline_decay) * reward;
      }
      policy_update(policy, trajectories, effective, config.policy_learning_rate);

      if (config.persist_probe) {
        model = std::move(probe.model);
        optimizer = std::move(probe.optimizer);
        cached_before.reset();
      }
      window.push_back(reward);
    }

    // --- replay and update the recommender
    if (t % config.update_frequency == 0) {
      record.replay = true;
      Rng replay_rng(Rng::mix(config.seed, 0x4EB1A7 + t));
      std::vector<EditTrajectory> replay_traj;
      for (int user : sample_users(core_users, config.batch_size, replay_rng)) {
        Rng traj_rng(Rng::mix(config.seed, (t << 20) ^ (0xB7000 + replay_traj.size())));
        replay_traj.push_back(aug::sample_trajectory(policy, seq_of(user), traj_rng, table, user));
      }
      std::vector<std::vector<int>> original, original_excl;
      for (int user : sample_users(all_users, config.batch_size, replay_rng)) {
        original.push_back(seq_of(user));
        original_excl.push_back(dataset.full_sequence(user));
      }
      replay_update(model, optimizer, replay_traj, original, original_excl,
                    Rng::mix(config.seed, 0x4E9541 + t));
      cached_before.reset();
    }

    result.trace.push_back(record);
    result.iterations_run = t + 1;

    if (config.convergence_tolerance > 0.0 && window.size() >= config.convergence_window) {
      double sum = 0.0;
      for (std::size_t i = window.size() - config.convergence_window; i < window.size(); ++i) {
        sum += window[i];
      }
      if (std::abs(sum / static_cast<double>(config.convergence_window)) <
          config.convergence_tolerance) {
        result.converged = true;
        break;
      }
    }
  }

  result.model = std::move(model);
  result.policy = std::move(policy);
  return result;
}

}  // namespace l2aug::train
