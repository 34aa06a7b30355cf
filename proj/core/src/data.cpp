#include "l2aug/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "l2aug/error.hpp"
#include "l2aug/rng.hpp"

namespace l2aug::data {

namespace {

constexpr double kSecondsPerDay = 86400.0;

int intern(std::vector<std::string>& ids, std::unordered_map<std::string, int>& index,
           const std::string& id) {
  auto it = index.find(id);
  if (it != index.end()) return it->second;
  const int dense = static_cast<int>(ids.size());
  ids.push_back(id);
  index.emplace(id, dense);
  return dense;
}

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace

std::size_t InteractionDataset::n_events() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.events.size();
  return n;
}

std::size_t InteractionDataset::count_group(Group g) const {
  std::size_t n = 0;
  for (const auto& u : users) {
    if (u.group == g) ++n;
  }
  return n;
}

std::vector<int> InteractionDataset::train_items(int user) const {
  std::vector<int> out;
  for (const auto& e : users[static_cast<std::size_t>(user)].events) {
    if (e.split == Split::Train) out.push_back(e.item);
  }
  return out;
}

std::vector<int> InteractionDataset::full_sequence(int user) const {
  std::vector<int> out;
  for (const auto& e : users[static_cast<std::size_t>(user)].events) out.push_back(e.item);
  return out;
}

std::optional<int> InteractionDataset::finetune_item(int user) const {
  for (const auto& e : users[static_cast<std::size_t>(user)].events) {
    if (e.split == Split::Finetune) return e.item;
  }
  return std::nullopt;
}

std::optional<int> InteractionDataset::test_item(int user) const {
  for (const auto& e : users[static_cast<std::size_t>(user)].events) {
    if (e.split == Split::Test) return e.item;
  }
  return std::nullopt;
}

std::vector<int> InteractionDataset::users_in_group(Group g) const {
  std::vector<int> out;
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (users[u].group == g) out.push_back(static_cast<int>(u));
  }
  return out;
}

std::vector<int> InteractionDataset::training_users(Group g) const {
  std::vector<int> out;
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (users[u].group != g) continue;
    for (const auto& e : users[u].events) {
      if (e.split == Split::Train) {
        out.push_back(static_cast<int>(u));
        break;
      }
    }
  }
  return out;
}

InteractionDataset ingest(const std::string& events_path) {
  std::ifstream is(events_path);
  if (!is) throw IoError("ingest: cannot open '" + events_path + "'");

  InteractionDataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_events = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos) {
      throw IoError("ingest: malformed line " + std::to_string(line_no) + " in '" +
                    events_path + "' (expected user<TAB>item<TAB>timestamp)");
    }
    const std::string user = line.substr(0, tab1);
    const std::string item = line.substr(tab1 + 1, tab2 - tab1 - 1);
    const std::string ts_str = line.substr(tab2 + 1);
    std::int64_t ts = 0;
    try {
      std::size_t used = 0;
      ts = std::stoll(ts_str, &used);
      while (used < ts_str.size() && (ts_str[used] == '\r' || ts_str[used] == ' ')) ++used;
      if (used != ts_str.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IoError("ingest: malformed timestamp on line " + std::to_string(line_no) + " in '" +
                    events_path + "'");
    }
    if (user.empty() || item.empty() || ts < 0) {
      throw IoError("ingest: malformed line " + std::to_string(line_no) + " in '" +
                    events_path + "'");
    }
    int ui;
    if (auto it = ds.user_index.find(user); it != ds.user_index.end()) {
      ui = it->second;
    } else {
      ui = static_cast<int>(ds.users.size());
      ds.user_index.emplace(user, ui);
      ds.users.push_back(UserData{user, {}, Group::Casual});
    }
    const int ii = intern(ds.item_ids, ds.item_index, item);
    ds.users[static_cast<std::size_t>(ui)].events.push_back({ii, ts, Split::Train});
    ++n_events;
  }
  if (n_events == 0) throw IoError("ingest: no events in '" + events_path + "'");

  for (auto& u : ds.users) {
    std::stable_sort(u.events.begin(), u.events.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
  }
  return ds;
}

void classify_users(InteractionDataset& dataset, double core_gap_threshold_days) {
  if (core_gap_threshold_days <= 0.0) {
    throw ConfigError("classify_users: core_gap_threshold must be positive");
  }
  for (auto& u : dataset.users) {
    if (u.events.size() < 2) {
      u.group = Group::Casual;
      continue;
    }
    double total_gap = 0.0;
    for (std::size_t i = 1; i < u.events.size(); ++i) {
      total_gap += static_cast<double>(u.events[i].timestamp - u.events[i - 1].timestamp);
    }
    const double mean_gap_days =
        total_gap / static_cast<double>(u.events.size() - 1) / kSecondsPerDay;
    u.group = mean_gap_days < core_gap_threshold_days ? Group::Core : Group::Casual;
  }
}

void classify_users_by_frequency(InteractionDataset& dataset, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction < 1.0)) {
    throw ConfigError("classify_users_by_frequency: fraction must be in (0,1)");
  }
  std::vector<int> order(dataset.users.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ca = dataset.users[static_cast<std::size_t>(a)].events.size();
    const auto cb = dataset.users[static_cast<std::size_t>(b)].events.size();
    if (ca != cb) return ca > cb;
    return a < b;
  });
  const std::size_t n_core = round_half_up(top_fraction * static_cast<double>(order.size()));
  for (std::size_t r = 0; r < order.size(); ++r) {
    dataset.users[static_cast<std::size_t>(order[r])].group =
        r < n_core ? Group::Core : Group::Casual;
  }
}

void split_by_time(InteractionDataset& dataset, std::int64_t cutting_timestamp) {
  std::int64_t max_ts = 0;
  for (const auto& u : dataset.users) {
    for (const auto& e : u.events) max_ts = std::max(max_ts, e.timestamp);
  }
  if (cutting_timestamp > max_ts) {
    throw Error("split_by_time: cutting timestamp " + std::to_string(cutting_timestamp) +
                " is after every event; no evaluation data");
  }
  for (auto& u : dataset.users) {
    int post = 0;
    for (auto& e : u.events) {
      if (e.timestamp < cutting_timestamp) {
        e.split = Split::Train;
      } else if (post == 0) {
        e.split = Split::Finetune;
        ++post;
      } else if (post == 1) {
        e.split = Split::Test;
        ++post;
      } else {
        e.split = Split::Dropped;
      }
    }
  }
}

void truncate_sequences(InteractionDataset& dataset, int max_sequence_length) {
  if (max_sequence_length < 2) {
    throw ConfigError("truncate_sequences: max_sequence_length must be at least 2");
  }
  for (auto& u : dataset.users) {
    int n_train = 0;
    for (const auto& e : u.events) {
      if (e.split == Split::Train) ++n_train;
    }
    int drop = n_train - max_sequence_length;
    for (auto& e : u.events) {
      if (drop <= 0) break;
      if (e.split == Split::Train) {
        e.split = Split::Dropped;
        --drop;
      }
    }
  }
}

std::vector<int> sample_meta_set(const InteractionDataset& dataset, double meta_ratio,
                                 std::uint64_t seed) {
  if (!(meta_ratio > 0.0 && meta_ratio < 1.0)) {
    throw ConfigError("sample_meta_set: meta_ratio must be in (0,1)");
  }
  std::vector<int> casual = dataset.training_users(Group::Casual);
  if (casual.empty()) throw Error("sample_meta_set: no casual training users");
  const std::size_t m = round_half_up(meta_ratio * static_cast<double>(casual.size()));
  if (m == 0) {
    throw Error("sample_meta_set: meta_ratio " + std::to_string(meta_ratio) + " rounds to an " +
                "empty meta set over " + std::to_string(casual.size()) +
                " casual users; increase the ratio");
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.index(casual.size() - i);
    std::swap(casual[i], casual[j]);
  }
  casual.resize(m);
  std::sort(casual.begin(), casual.end());
  return casual;
}

InteractionDataset prepare_dataset(const std::string& events_path, const SplitConfig& config) {
  InteractionDataset ds = ingest(events_path);
  classify_users(ds, config.core_gap_threshold_days);
  split_by_time(ds, config.cutting_timestamp);
  truncate_sequences(ds, config.max_sequence_length);
  return ds;
}

std::string summary_json(const InteractionDataset& dataset) {
  const std::size_t n_users = dataset.n_users();
  nlohmann::ordered_json j;
  j["n_items"] = dataset.n_items();
  j["n_core_users"] = dataset.count_group(Group::Core);
  j["n_casual_users"] = dataset.count_group(Group::Casual);
  j["avg_interactions"] =
      n_users == 0 ? 0.0 : static_cast<double>(dataset.n_events()) / static_cast<double>(n_users);
  return j.dump(2);
}

}  // namespace l2aug::data
