#include "l2aug/recommender.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "l2aug/error.hpp"

namespace l2aug::rec {

using ad::Tape;
using ad::Tensor;
using ad::Var;

Architecture architecture_from_string(const std::string& s) {
  if (s == "self_attention") return Architecture::SelfAttention;
  if (s == "recurrent") return Architecture::Recurrent;
  throw ConfigError("recommender: unknown architecture '" + s + "'");
}

std::string to_string(Architecture a) {
  return a == Architecture::SelfAttention ? "self_attention" : "recurrent";
}

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.range(-bound, bound);
  return t;
}

}  // namespace

RecommenderModel RecommenderModel::init(const RecommenderConfig& config, std::uint64_t seed) {
  if (config.dim == 0 || config.catalog_size == 0 || config.max_len < 2) {
    throw ConfigError("recommender: dim and catalog must be positive, max_len >= 2");
  }
  RecommenderModel m;
  m.config_ = config;
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.dim));
  const std::size_t d = config.dim;
  auto add = [&](const std::string& name, std::vector<std::size_t> shape) {
    m.params_.add(name, uniform_init(std::move(shape), bound, rng));
  };
  add("item_embedding", {config.catalog_size, d});
  if (config.architecture == Architecture::SelfAttention) {
    add("position_embedding", {config.max_len, d});
    for (std::size_t b = 0; b < config.blocks; ++b) {
      const std::string p = "block" + std::to_string(b) + ".";
      add(p + "w_query", {d, d});
      add(p + "w_key", {d, d});
      add(p + "w_value", {d, d});
      add(p + "ff_w1", {d, d});
      add(p + "ff_b1", {d});
      add(p + "ff_w2", {d, d});
      add(p + "ff_b2", {d});
    }
  } else {
    for (const char* gate : {"update", "reset", "candidate"}) {
      add(std::string("gru.w_") + gate, {d, d});
      add(std::string("gru.u_") + gate, {d, d});
      add(std::string("gru.b_") + gate, {d});
    }
  }
  return m;
}

RecommenderModel RecommenderModel::from_params(const RecommenderConfig& config,
                                               ad::ParamSet params) {
  RecommenderModel reference = init(config, 0);
  if (params.size() != reference.params_.size()) {
    throw Error("recommender: checkpoint has " + std::to_string(params.size()) +
                " tensors, expected " + std::to_string(reference.params_.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != reference.params_[i].name ||
        params[i].value.shape != reference.params_[i].value.shape) {
      throw Error("recommender: checkpoint tensor '" + params[i].name +
                  "' does not match the configured architecture");
    }
  }
  reference.params_ = std::move(params);
  return reference;
}

RecommenderModel::Leafed RecommenderModel::leaf(Tape& tape) const {
  Leafed out;
  out.vars.reserve(params_.size());
  for (const auto& p : params_) out.vars.push_back(tape.leaf(p.value));
  return out;
}

std::vector<Tensor> RecommenderModel::grads(const Tape& tape, const Leafed& leafed) const {
  std::vector<Tensor> out;
  out.reserve(leafed.vars.size());
  for (Var v : leafed.vars) out.push_back(tape.grad(v));
  return out;
}

Var RecommenderModel::encode(Tape& tape, const Leafed& leafed,
                             const std::vector<int>& sequence) const {
  if (sequence.empty()) throw Error("recommender: cannot encode an empty sequence");
  if (sequence.size() > config_.max_len) {
    throw ShapeError("recommender: sequence length " + std::to_string(sequence.size()) +
                     " exceeds max_len " + std::to_string(config_.max_len));
  }
  return config_.architecture == Architecture::SelfAttention
             ? encode_attention(tape, leafed, sequence)
             : encode_recurrent(tape, leafed, sequence);
}

Var RecommenderModel::encode_attention(Tape& tape, const Leafed& leafed,
                                       const std::vector<int>& seq) const {
  const std::size_t t = seq.size();
  std::vector<int> positions(t);
  std::iota(positions.begin(), positions.end(), 0);
  Var x = tape.add(tape.gather_rows(leafed.vars[0], seq),
                   tape.gather_rows(leafed.vars[1], positions));
  std::size_t i = 2;
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    Var q = tape.matmul(x, leafed.vars[i + 0]);
    Var k = tape.matmul(x, leafed.vars[i + 1]);
    Var v = tape.matmul(x, leafed.vars[i + 2]);
    x = tape.add(x, ad::scaled_dot_attention(tape, q, k, v));
    Var h1 = tape.relu(tape.add(tape.matmul(x, leafed.vars[i + 3]), leafed.vars[i + 4]));
    Var h2 = tape.add(tape.matmul(h1, leafed.vars[i + 5]), leafed.vars[i + 6]);
    x = tape.add(x, h2);
    i += 7;
  }
  return x;
}

Var RecommenderModel::encode_recurrent(Tape& tape, const Leafed& leafed,
                                       const std::vector<int>& seq) const {
  const auto& v = leafed.vars;
  // v layout: item_embedding, then w/u/b for update, reset, candidate gates
  Var h = tape.constant(Tensor({1, config_.dim}));
  std::vector<Var> states;
  states.reserve(seq.size());
  for (int item : seq) {
    Var x = tape.gather_rows(v[0], {item});
    Var z = tape.sigmoid(tape.add(tape.add(tape.matmul(x, v[1]), tape.matmul(h, v[2])), v[3]));
    Var r = tape.sigmoid(tape.add(tape.add(tape.matmul(x, v[4]), tape.matmul(h, v[5])), v[6]));
    Var cand = tape.tanh(
        tape.add(tape.add(tape.matmul(x, v[7]), tape.matmul(tape.mul(r, h), v[8])), v[9]));
    Var keep = tape.add_scalar(tape.scale(z, -1.0), 1.0);
    h = tape.add(tape.mul(keep, h), tape.mul(z, cand));
    states.push_back(h);
  }
  return tape.stack_rows(states);
}

Tensor RecommenderModel::score_next(const std::vector<int>& prefix) const {
  if (prefix.empty()) throw Error("recommender: score_next requires a non-empty prefix");
  std::vector<int> view = prefix;
  if (view.size() > config_.max_len) {
    view.assign(prefix.end() - static_cast<std::ptrdiff_t>(config_.max_len), prefix.end());
  }
  Tape tape(false);
  Leafed leafed = leaf(tape);
  Var h = encode(tape, leafed, view);
  Var last = tape.slice_rows(h, view.size() - 1, 1);
  Var scores = tape.matmul(leafed.vars[0], tape.transpose(last));
  Tensor out = tape.value(scores);
  out.shape = {config_.catalog_size};
  return out;
}

Var RecommenderModel::batch_loss_sum(Tape& tape, const Leafed& leafed,
                                     const TrainBatch& batch) const {
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const int* items = &batch.items[r * batch.cols];
    const std::uint8_t* mask = &batch.mask[r * batch.cols];
    std::vector<int> seq;
    std::vector<int> targets;
    std::vector<int> negatives;
    for (std::size_t c = 0; c < batch.cols; ++c) {
      if (mask[c]) {
        targets.push_back(batch.targets[r * batch.cols + c]);
        negatives.push_back(batch.negatives[r * batch.cols + c]);
      }
    }
    const std::size_t t = targets.size() + 1;
    for (std::size_t c = batch.cols - t; c < batch.cols; ++c) seq.push_back(items[c]);
    if (targets.empty()) continue;

    Var h = encode(tape, leafed, seq);
    Var pred = tape.slice_rows(h, 0, t - 1);
    Var pos_emb = tape.gather_rows(leafed.vars[0], targets);
    Var neg_emb = tape.gather_rows(leafed.vars[0], negatives);
    Var pos_logit = tape.sum_last(tape.mul(pred, pos_emb));
    Var neg_logit = tape.sum_last(tape.mul(pred, neg_emb));
    // log(1 - sigmoid(x)) == log_sigmoid(-x)
    Var step_losses =
        tape.add(tape.log_sigmoid(pos_logit), tape.log_sigmoid(tape.scale(neg_logit, -1.0)));
    total = tape.add(total, tape.scale(tape.sum_all(step_losses), -1.0));
  }
  return total;
}

Var RecommenderModel::batch_loss_mean(Tape& tape, const Leafed& leafed,
                                      const TrainBatch& batch) const {
  Var sum = batch_loss_sum(tape, leafed, batch);
  if (batch.n_steps == 0) return sum;
  return tape.scale(sum, 1.0 / static_cast<double>(batch.n_steps));
}

int sample_negative(std::size_t catalog_size, const std::vector<int>& exclusion_sorted,
                    Rng& rng) {
  if (exclusion_sorted.size() >= catalog_size) {
    throw Error("recommender: no negative candidates outside a sequence covering the catalog");
  }
  for (int tries = 0; tries < 128; ++tries) {
    const int k = static_cast<int>(rng.index(catalog_size));
    if (!std::binary_search(exclusion_sorted.begin(), exclusion_sorted.end(), k)) return k;
  }
  // Dense exclusion set: pick the r-th free item directly.
  const std::size_t free_count = catalog_size - exclusion_sorted.size();
  std::size_t r = rng.index(free_count);
  std::size_t cursor = 0;
  for (int k = 0; k < static_cast<int>(catalog_size); ++k) {
    if (cursor < exclusion_sorted.size() && exclusion_sorted[cursor] == k) {
      ++cursor;
      continue;
    }
    if (r == 0) return k;
    --r;
  }
  throw Error("recommender: negative sampling failed");
}

TrainBatch make_train_batch(const std::vector<std::vector<int>>& sequences,
                            const std::vector<std::vector<int>>& exclusions,
                            std::size_t catalog_size, Rng& rng) {
  if (sequences.size() != exclusions.size()) {
    throw Error("recommender: sequences/exclusions size mismatch");
  }
  TrainBatch b;
  b.rows = sequences.size();
  for (const auto& s : sequences) b.cols = std::max(b.cols, s.size());
  if (b.rows == 0 || b.cols == 0) return b;
  b.items.assign(b.rows * b.cols, 0);
  b.targets.assign(b.rows * b.cols, 0);
  b.negatives.assign(b.rows * b.cols, 0);
  b.mask.assign(b.rows * b.cols, 0);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& seq = sequences[r];
    std::vector<int> excl = exclusions[r];
    std::sort(excl.begin(), excl.end());
    excl.erase(std::unique(excl.begin(), excl.end()), excl.end());
    const std::size_t pad = b.cols - seq.size();
    for (std::size_t j = 0; j < seq.size(); ++j) b.items[r * b.cols + pad + j] = seq[j];
    for (std::size_t j = 0; j + 1 < seq.size(); ++j) {
      const std::size_t c = pad + j;
      b.targets[r * b.cols + c] = seq[j + 1];
      b.negatives[r * b.cols + c] = sample_negative(catalog_size, excl, rng);
      b.mask[r * b.cols + c] = 1;
      ++b.n_steps;
    }
  }
  return b;
}

double training_loss(const RecommenderModel& model, const TrainBatch& batch) {
  Tape tape(false);
  auto leafed = model.leaf(tape);
  return tape.value(model.batch_loss_sum(tape, leafed, batch)).data[0];
}

EpochStats train_epoch(RecommenderModel& model, ad::AdamState& optimizer,
                       const std::vector<std::vector<int>>& sequences,
                       const std::vector<std::vector<int>>& exclusions,
                       std::size_t batch_size, std::uint64_t seed) {
  if (sequences.empty()) throw Error("recommender: train_epoch needs training sequences");
  if (batch_size == 0) throw ConfigError("recommender: batch_size must be positive");
  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);

  double loss_total = 0.0;
  std::size_t steps_total = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    std::vector<std::vector<int>> seqs, excls;
    seqs.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      seqs.push_back(sequences[order[i]]);
      excls.push_back(exclusions[order[i]]);
    }
    TrainBatch batch = make_train_batch(seqs, excls, model.config().catalog_size, rng);
    if (batch.n_steps == 0) continue;
    Tape tape;
    auto leafed = model.leaf(tape);
    Var loss = model.batch_loss_mean(tape, leafed, batch);
    tape.backward(loss);
    optimizer.step(model.params(), model.grads(tape, leafed));
    loss_total += tape.value(loss).data[0] * static_cast<double>(batch.n_steps);
    steps_total += batch.n_steps;
  }
  EpochStats stats;
  stats.mean_loss = steps_total == 0 ? 0.0 : loss_total / static_cast<double>(steps_total);
  stats.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  return stats;
}

}  // namespace l2aug::rec
