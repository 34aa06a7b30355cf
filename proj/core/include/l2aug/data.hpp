#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace l2aug::data {

enum class Group : std::uint8_t { Core, Casual };
enum class Split : std::uint8_t { Train, Finetune, Test, Dropped };

struct Event {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;  // seconds since epoch
};

struct Interaction {
  int item = -1;
  std::int64_t timestamp = 0;
  Split split = Split::Train;
};

struct UserData {
  std::string id;
  std::vector<Interaction> events;  // chronological, ties in input order
  Group group = Group::Casual;
};

struct SplitConfig {
  std::int64_t cutting_timestamp = 0;
  double core_gap_threshold_days = 30.0;
  double meta_ratio = 0.10;
  int max_sequence_length = 200;
};

/// Users, items, and timestamped interaction sequences with dense indices,
/// core/casual labels, and per-event split assignments. Immutable once built;
/// shareable across parallel readers.
struct InteractionDataset {
  std::vector<std::string> item_ids;                 // dense item index -> id
  std::unordered_map<std::string, int> item_index;   // id -> dense index
  std::vector<UserData> users;                       // dense user index order
  std::unordered_map<std::string, int> user_index;

  std::size_t n_items() const { return item_ids.size(); }
  std::size_t n_users() const { return users.size(); }
  std::size_t n_events() const;
  std::size_t count_group(Group g) const;

  std::vector<int> train_items(int user) const;
  std::vector<int> full_sequence(int user) const;  // every event incl. eval targets
  std::optional<int> finetune_item(int user) const;
  std::optional<int> test_item(int user) const;
  std::vector<int> users_in_group(Group g) const;
  /// Users of a group that carry at least one training event.
  std::vector<int> training_users(Group g) const;
};

/// Reads a UTF-8 TSV of `user<TAB>item<TAB>timestamp` lines. `#`-prefixed
/// lines are ignored; duplicates are kept as separate events. Index maps
/// follow first-appearance order, so re-ingesting a file reproduces the
/// dataset exactly.
InteractionDataset ingest(const std::string& events_path);

/// Labels users core when the mean gap between consecutive events is below
/// the threshold. Users with a single event have no defined gap and are
/// labeled casual.
void classify_users(InteractionDataset& dataset, double core_gap_threshold_days);

/// Alternative grouping: the given fraction of users with the highest event
/// counts become core (ties broken by dense user index).
void classify_users_by_frequency(InteractionDataset& dataset, double top_fraction);

/// Events before T train; per user the first event at/after T fine-tunes,
/// the second tests, and later ones are dropped.
void split_by_time(InteractionDataset& dataset, std::int64_t cutting_timestamp);

/// Keeps only the most recent max_sequence_length training events per user.
void truncate_sequences(InteractionDataset& dataset, int max_sequence_length);

/// Samples round(meta_ratio * N) casual training users uniformly without
/// replacement; deterministic under seed. Returned indices are sorted.
std::vector<int> sample_meta_set(const InteractionDataset& dataset, double meta_ratio,
                                 std::uint64_t seed);

/// ingest + classify + split + truncate in pipeline order.
InteractionDataset prepare_dataset(const std::string& events_path, const SplitConfig& config);

/// Dataset summary (items, core/casual users, mean interactions) as JSON.
std::string summary_json(const InteractionDataset& dataset);

}  // namespace l2aug::data
