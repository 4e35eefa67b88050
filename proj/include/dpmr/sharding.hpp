#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dpmr/records.hpp"

// High-frequency-feature sharding: a feature whose sample list exceeds
// max_units_per_shard is replaced by N sub-features "i_N|feature", each
// carrying a slice of the unit list. Bounds both line length and downstream
// reduce-group size.

namespace dpmr::shard {

struct SubFeatureKey {
  std::uint64_t index = 1;       // i, 1-based
  std::uint64_t num_shards = 1;  // N
  std::string parent;

  bool operator==(const SubFeatureKey&) const = default;
};

enum class Strategy {
  kRoundRobin,
  kDocIdLocality,  // pick i so the sub-key lands on the unit's docId reducer
};

struct ShardPolicy {
  std::uint64_t max_units_per_shard = 10000;
  Strategy strategy = Strategy::kRoundRobin;
  std::size_t num_reducers = 1;  // needed by kDocIdLocality
};

// N = ceil(c / max_units_per_shard); N == 1 means the key stays plain.
std::uint64_t shard_count(std::uint64_t total_units, const ShardPolicy& policy);

// "i_N|parent" for N > 1, plain parent for N == 1.
std::string format_subfeature(std::uint64_t i, std::uint64_t n,
                              std::string_view parent);

// Inverse of format_subfeature; a key without '|' is its own parent with
// i = N = 1. Throws records::ParseError on malformed prefixes.
SubFeatureKey parse_subfeature(std::string_view key);

// The fixed unit order used everywhere a unit list is canonicalized:
// (docId, count, label) ascending.
void sort_units(std::vector<records::DocUnit>& units);

// Stateless per-unit assignment. Round-robin hashes the docId; docid-locality
// searches i in [1, min(N, 4*num_reducers)] for a sub-key on the docId's
// reducer and falls back to the hash otherwise.
std::string assign_unit(const records::DocUnit& unit, std::string_view parent,
                        std::uint64_t n, const ShardPolicy& policy);

// Whole-group assignment used where the full unit list is available (the
// invert reducer). Units are first put in a fixed order (docId, count,
// label). Round-robin then places unit j on shard j mod N, which caps every
// shard at ceil(K/N) units; docid-locality applies assign_unit per unit.
// Returns sub-key -> unit slice with empty shards dropped; unit order within
// each slice follows the sorted input.
std::vector<std::pair<std::string, std::vector<records::DocUnit>>> assign_units(
    std::vector<records::DocUnit> units, std::string_view parent,
    std::uint64_t n, const ShardPolicy& policy);

// Exact per-feature unit counts over a corpus: c = number of samples that
// contain the feature (one unit per (sample, feature) pair).
class FeatureFrequencyTable {
 public:
  void add(std::string_view feature, std::uint64_t count);
  std::uint64_t get(std::string_view feature) const;  // 0 when absent
  bool contains(std::string_view feature) const;
  std::size_t size() const { return counts_.size(); }

  // Keeps only features with count > threshold (smaller features never shard).
  FeatureFrequencyTable truncated(std::uint64_t threshold) const;

  // Persisted as "feature\t<count>" lines so a map-reduce job can produce it
  // and mappers can load it.
  void save(const std::filesystem::path& file) const;
  static FeatureFrequencyTable load(const std::filesystem::path& file_or_dir);

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
};

FeatureFrequencyTable collect_frequencies(
    const std::vector<std::filesystem::path>& corpus_paths);

}  // namespace dpmr::shard
