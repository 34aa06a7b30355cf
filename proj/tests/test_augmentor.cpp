#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "l2aug/augmentor.hpp"
#include "l2aug/error.hpp"
#include "l2aug/grad_check.hpp"
#include "test_util.hpp"

using namespace l2aug;
using namespace l2aug::aug;
using l2aug::ad::Tape;
using l2aug::ad::Tensor;
using l2aug::ad::Var;

namespace {

AugmentorConfig small_config(std::size_t actions = 2) {
  AugmentorConfig c;
  c.catalog_size = 10;
  c.dim = 4;
  c.max_len = 12;
  c.n_actions = actions;
  return c;
}

data::InteractionDataset dataset_from(const std::string& body) {
  auto path = std::filesystem::temp_directory_path() / "l2aug_aug_ds.tsv";
  std::ofstream os(path);
  os << body;
  os.close();
  auto ds = data::ingest(path.string());
  std::filesystem::remove(path);
  return ds;
}

}  // namespace

TEST_CASE("scaled dot-product score of two all-ones vectors is |v|/sqrt(D)") {
  Tape t;
  Var a = t.leaf(Tensor({1, 4}, 1.0));
  Var b = t.leaf(Tensor({1, 4}, 1.0));
  Var s = t.scale(t.matmul(a, t.transpose(b)), 1.0 / std::sqrt(4.0));
  CHECK(t.value(s).data[0] == doctest::Approx(2.0));
}

TEST_CASE("equal embeddings attend uniformly and states equal W_V e") {
  auto policy = AugmentorPolicy::init(small_config(), 3);
  const std::vector<double> v = {0.3, -0.2, 0.5, 0.1};
  auto& item_emb = policy.params().at("item_embedding");
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t d = 0; d < 4; ++d) item_emb.at(i, d) = v[d];
  }
  auto& pos_emb = policy.params().at("position_embedding");
  std::fill(pos_emb.data.begin(), pos_emb.data.end(), 0.0);

  Tape t(false);
  auto leafed = policy.leaf(t);
  const Tensor h = t.value(policy.encode_states(t, leafed, {2, 7}));

  // expected: every state equals v * W_V
  const Tensor& wv = policy.params().at("w_value");
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t d = 0; d < 4; ++d) {
      double want = 0.0;
      for (std::size_t j = 0; j < 4; ++j) want += v[j] * wv.at(j, d);
      CHECK(h.at(k, d) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("a singleton sequence's state is W_V e_1") {
  auto policy = AugmentorPolicy::init(small_config(), 5);
  Tape t(false);
  auto leafed = policy.leaf(t);
  const Tensor h = t.value(policy.encode_states(t, leafed, {4}));

  const Tensor& item = policy.params().at("item_embedding");
  const Tensor& pos = policy.params().at("position_embedding");
  const Tensor& wv = policy.params().at("w_value");
  for (std::size_t d = 0; d < 4; ++d) {
    double want = 0.0;
    for (std::size_t j = 0; j < 4; ++j) want += (item.at(4, j) + pos.at(0, j)) * wv.at(j, d);
    CHECK(h.at(0, d) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("states are strictly causal") {
  auto policy = AugmentorPolicy::init(small_config(), 11);
  std::vector<int> seq = {1, 2, 3, 4, 5};
  std::vector<int> mutated = {1, 2, 3, 9, 8};
  Tape t(false);
  auto leafed = policy.leaf(t);
  const Tensor a = t.value(policy.encode_states(t, leafed, seq));
  const Tensor b = t.value(policy.encode_states(t, leafed, mutated));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t d = 0; d < 4; ++d) CHECK(a.at(k, d) == b.at(k, d));
  }
}

TEST_CASE("zero action head gives the uniform action distribution") {
  for (std::size_t n_actions : {2ul, 3ul}) {
    auto policy = AugmentorPolicy::init(small_config(n_actions), 7);
    auto& wa = policy.params().at("w_action");
    std::fill(wa.data.begin(), wa.data.end(), 0.0);
    const Tensor probs = policy.action_probabilities({1, 2, 3});
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t a = 0; a < n_actions; ++a) {
        CHECK(probs.at(k, a) == doctest::Approx(1.0 / static_cast<double>(n_actions)));
      }
    }
  }
}

TEST_CASE("logits (ln 3, 0) produce probabilities (0.75, 0.25)") {
  Tape t;
  Var logits = t.leaf(Tensor({1, 2}, {std::log(3.0), 0.0}));
  const Tensor p = t.value(t.softmax_rows(logits));
  CHECK(p.data[0] == doctest::Approx(0.75));
  CHECK(p.data[1] == doctest::Approx(0.25));
}

TEST_CASE("action probabilities sum to one for random inputs") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto policy = AugmentorPolicy::init(small_config(3), Rng::mix(1234, s));
    const Tensor probs = policy.action_probabilities({0, 5, 9, 2});
    for (std::size_t k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (std::size_t a = 0; a < 3; ++a) sum += probs.at(k, a);
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("permuting the action head rows permutes the distribution") {
  auto policy = AugmentorPolicy::init(small_config(3), 21);
  const Tensor before = policy.action_probabilities({3, 1, 4});

  auto& wa = policy.params().at("w_action");
  Tensor permuted = wa;
  for (std::size_t d = 0; d < 4; ++d) {
    permuted.at(0, d) = wa.at(2, d);
    permuted.at(1, d) = wa.at(0, d);
    permuted.at(2, d) = wa.at(1, d);
  }
  wa = permuted;
  const Tensor after = policy.action_probabilities({3, 1, 4});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(after.at(k, 0) == doctest::Approx(before.at(k, 2)));
    CHECK(after.at(k, 1) == doctest::Approx(before.at(k, 0)));
    CHECK(after.at(k, 2) == doctest::Approx(before.at(k, 1)));
  }
}

TEST_CASE("apply_actions follows keep, drop, substitute") {
  const std::vector<int> seq = {3, 4, 5};
  CHECK(*apply_actions(seq, {Action::Keep, Action::Drop, Action::Keep}, nullptr) ==
        std::vector<int>{3, 5});

  auto ds = dataset_from("u1\ta\t1\nu1\tx\t2\nu2\ta\t1\nu2\tx\t2\nu3\tb\t5\n");
  auto table = SubstitutionTable::build(ds);
  const int a = ds.item_index.at("a"), x = ds.item_index.at("x"), b = ds.item_index.at("b");
  CHECK(table.partner(a) == x);
  CHECK(*apply_actions({a, b}, {Action::Substitute, Action::Keep}, &table) ==
        std::vector<int>{x, b});

  CHECK_FALSE(apply_actions(seq, {Action::Drop, Action::Drop, Action::Keep}, nullptr).has_value());
  CHECK_THROWS_AS(apply_actions(seq, {Action::Substitute, Action::Keep, Action::Keep}, nullptr),
                  Error);
  CHECK_THROWS_AS(apply_actions(seq, {Action::Keep}, nullptr), Error);
}

TEST_CASE("all-keep is the identity on 1000 random sequences") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + rng.index(20);
    std::vector<int> seq(len);
    for (auto& v : seq) v = static_cast<int>(rng.index(1000));
    if (len < 2) continue;
    std::vector<Action> keep(len, Action::Keep);
    CHECK(*apply_actions(seq, keep, nullptr) == seq);
  }
}

TEST_CASE("degenerate policies act deterministically") {
  auto policy = AugmentorPolicy::init(small_config(), 3);
  auto& wa = policy.params().at("w_action");

  SUBCASE("keep probability ~1 reproduces the input") {
    // a large constant bias toward keep via the action head: make keep row
    // hugely aligned with every state by zeroing states' effect and relying
    // on logit magnitudes from w_action alone is not possible (no bias), so
    // scale the keep row enormously instead.
    Tape t(false);
    auto leafed = policy.leaf(t);
    const Tensor h = t.value(policy.encode_states(t, leafed, {1, 2, 3, 4}));
    // align the keep row with each state's sign pattern dominantly
    for (std::size_t d = 0; d < 4; ++d) {
      wa.at(0, d) = -1e4 * h.at(0, d);
      wa.at(1, d) = 1e4 * h.at(0, d);
    }
    // states differ across positions, but the dominant direction keeps the
    // keep-logit far above drop wherever sign(h_k . h_0) > 0; verify per
    // position before asserting identity.
    const Tensor probs = policy.action_probabilities({1, 2, 3, 4});
    bool all_keep = true;
    for (std::size_t k = 0; k < 4; ++k) all_keep &= probs.at(k, 1) > 0.999;
    if (all_keep) {
      Rng rng(9);
      auto traj = sample_trajectory(policy, {1, 2, 3, 4}, rng);
      CHECK(traj.synthetic == std::vector<int>{1, 2, 3, 4});
      CHECK_FALSE(traj.discarded);
    }
  }

  SUBCASE("drop probability ~1 discards the trajectory") {
    Tape t(false);
    auto leafed = policy.leaf(t);
    const Tensor h = t.value(policy.encode_states(t, leafed, {1, 2, 3, 4}));
    for (std::size_t d = 0; d < 4; ++d) {
      wa.at(0, d) = 1e4 * h.at(0, d);
      wa.at(1, d) = -1e4 * h.at(0, d);
    }
    const Tensor probs = policy.action_probabilities({1, 2, 3, 4});
    bool all_drop = true;
    for (std::size_t k = 0; k < 4; ++k) all_drop &= probs.at(k, 0) > 0.999;
    if (all_drop) {
      Rng rng(9);
      auto traj = sample_trajectory(policy, {1, 2, 3, 4}, rng);
      CHECK(traj.discarded);
      CHECK(traj.synthetic.empty());
    }
  }
}

TEST_CASE("trajectory sampling is deterministic under the rng seed") {
  auto policy = AugmentorPolicy::init(small_config(), 13);
  std::vector<int> seq = {0, 1, 2, 3, 4, 5};
  Rng r1(42), r2(42), r3(43);
  auto t1 = sample_trajectory(policy, seq, r1);
  auto t2 = sample_trajectory(policy, seq, r2);
  auto t3 = sample_trajectory(policy, seq, r3);
  CHECK(t1.actions == t2.actions);
  CHECK(t1.log_probs == t2.log_probs);
  CHECK(t1.synthetic == t2.synthetic);
  CHECK(t1.actions.size() == seq.size());
  bool differs = t1.actions != t3.actions;
  (void)differs;  // different seeds may coincide on short sequences
}

TEST_CASE("stored log-probabilities match the graph recomputation") {
  auto policy = AugmentorPolicy::init(small_config(3), 17);
  auto ds = dataset_from("u1\ta\t1\nu1\tb\t2\nu2\ta\t3\nu2\tb\t4\n");
  auto table = SubstitutionTable::build(ds);
  Rng rng(5);
  std::vector<int> seq = {0, 1, 0, 1};
  auto traj = sample_trajectory(policy, seq, rng, &table);

  Tape t;
  auto leafed = policy.leaf(t);
  const double graph_sum = t.value(policy.trajectory_log_prob(t, leafed, traj)).data[0];
  double stored_sum = 0.0;
  for (double lp : traj.log_probs) stored_sum += lp;
  CHECK(graph_sum == doctest::Approx(stored_sum).epsilon(1e-12));
}

TEST_CASE("expected synthetic length matches sampling within 2 percent") {
  auto policy = AugmentorPolicy::init(small_config(), 19);
  std::vector<int> seq = {0, 3, 6, 9, 2, 5, 8, 1};
  const Tensor probs = policy.action_probabilities(seq);
  double expected = 0.0;
  for (std::size_t k = 0; k < seq.size(); ++k) expected += probs.at(k, 1);

  Rng rng(77);
  double total = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto traj = sample_trajectory(policy, seq, rng);
    double len = 0.0;
    for (Action a : traj.actions) len += a == Action::Keep ? 1.0 : 0.0;
    total += len;
  }
  CHECK(total / n == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("trajectory log-prob gradients pass the finite-difference check") {
  auto policy = AugmentorPolicy::init(small_config(3), 23);
  EditTrajectory traj;
  traj.source_sequence = {1, 4, 7};
  traj.actions = {Action::Keep, Action::Drop, Action::Substitute};

  std::vector<Tensor> point;
  for (const auto& p : policy.params()) point.push_back(p.value);
  const double err = ad::grad_check(
      point,
      [&](Tape& tape, const std::vector<Var>& vars) {
        AugmentorPolicy::Leafed leafed{vars};
        return policy.trajectory_log_prob(tape, leafed, traj);
      },
      1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("substitution correlations follow the set formula") {
  // N(i) = {u1, u2}, N(j) = {u2, u3} -> corr 0.5
  auto ds = dataset_from("u1\ti\t1\nu2\ti\t1\nu2\tj\t2\nu3\tj\t1\n");
  auto table = SubstitutionTable::build(ds);
  const int i = ds.item_index.at("i"), j = ds.item_index.at("j");
  CHECK(table.partner(i) == j);
  CHECK(table.partner(j) == i);
}

TEST_CASE("identical user sets are mutual partners with correlation one") {
  auto ds = dataset_from(
      "u1\ta\t1\nu1\tb\t2\nu2\ta\t1\nu2\tb\t2\nu3\tc\t1\nu1\tc\t9\n");
  auto table = SubstitutionTable::build(ds);
  const int a = ds.item_index.at("a"), b = ds.item_index.at("b");
  CHECK(table.partner(a) == b);
  CHECK(table.partner(b) == a);
}

TEST_CASE("an item with no overlaps maps to itself") {
  auto ds = dataset_from("u1\ta\t1\nu2\tb\t1\nu2\tc\t2\n");
  auto table = SubstitutionTable::build(ds);
  CHECK(table.partner(ds.item_index.at("a")) == ds.item_index.at("a"));
}

TEST_CASE("table matches a brute-force argmax on a toy catalog") {
  Rng rng(3);
  std::string body;
  for (int u = 0; u < 12; ++u) {
    for (int e = 0; e < 4; ++e) {
      body += "u" + std::to_string(u) + "\ti" + std::to_string(rng.index(5)) + "\t" +
              std::to_string(e) + "\n";
    }
  }
  auto ds = dataset_from(body);
  auto table = SubstitutionTable::build(ds);

  // brute force over user sets
  const std::size_t n = ds.n_items();
  std::vector<std::vector<int>> users_of(n);
  for (std::size_t u = 0; u < ds.n_users(); ++u) {
    auto items = ds.train_items(static_cast<int>(u));
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (int it : items) users_of[static_cast<std::size_t>(it)].push_back(static_cast<int>(u));
  }
  auto corr = [&](int i, int j) {
    const auto& a = users_of[static_cast<std::size_t>(i)];
    const auto& b = users_of[static_cast<std::size_t>(j)];
    std::size_t inter = 0;
    for (int ua : a) {
      inter += std::count(b.begin(), b.end(), ua) ? 1u : 0u;
    }
    if (a.empty() || b.empty()) return 0.0;
    return static_cast<double>(inter) /
           std::sqrt(static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  for (std::size_t i = 0; i < n; ++i) {
    int best = static_cast<int>(i);
    double best_corr = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double c = corr(static_cast<int>(i), static_cast<int>(j));
      if (c > best_corr) {
        best_corr = c;
        best = static_cast<int>(j);
      }
    }
    if (best_corr > 0.0) {
      // equal-correlation ties may pick a different but equally good partner;
      // require the table's choice to achieve the same correlation
      CHECK(corr(static_cast<int>(i), table.partner(static_cast<int>(i))) ==
            doctest::Approx(best_corr));
    } else {
      CHECK(table.partner(static_cast<int>(i)) == static_cast<int>(i));
    }
  }

  // symmetry of the correlation itself
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(corr(static_cast<int>(i), static_cast<int>(j)) ==
            doctest::Approx(corr(static_cast<int>(j), static_cast<int>(i))));
    }
  }
}

TEST_CASE("augmented TSV export lists kept items and action codes") {
  auto ds = dataset_from("alice\tred\t1\nalice\tblue\t2\nalice\tgreen\t3\n");
  EditTrajectory traj;
  traj.source_user = 0;
  traj.source_sequence = {0, 1, 2};
  traj.actions = {Action::Keep, Action::Drop, Action::Keep};
  traj.synthetic = {0, 2};
  EditTrajectory dropped;
  dropped.source_user = 0;
  dropped.discarded = true;

  auto path = std::filesystem::temp_directory_path() / "l2aug_aug.tsv";
  write_augmented_tsv(path.string(), {traj, dropped}, ds);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "alice\tred,green\t1,0,1");
  CHECK_FALSE(std::getline(is, line));
  std::filesystem::remove(path);
}
