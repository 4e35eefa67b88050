#include "dpmr/sharding.hpp"

#include <algorithm>
#include <fstream>
#include <tuple>

#include "dpmr/engine.hpp"

namespace dpmr::shard {

namespace fs = std::filesystem;

std::uint64_t shard_count(std::uint64_t total_units, const ShardPolicy& policy) {
  if (policy.max_units_per_shard == 0) {
    throw std::invalid_argument("max_units_per_shard must be positive");
  }
  if (total_units <= policy.max_units_per_shard) return 1;
  return (total_units + policy.max_units_per_shard - 1) /
         policy.max_units_per_shard;
}

std::string format_subfeature(std::uint64_t i, std::uint64_t n,
                              std::string_view parent) {
  if (i < 1 || i > n) {
    throw std::invalid_argument("sub-feature index out of range");
  }
  if (n == 1) return std::string(parent);
  std::string key;
  key.reserve(parent.size() + 8);
  key += std::to_string(i);
  key += '_';
  key += std::to_string(n);
  key += '|';
  key += parent;
  return key;
}

SubFeatureKey parse_subfeature(std::string_view key) {
  auto parts = records::split_key(key);
  return SubFeatureKey{parts.index, parts.num_shards, std::string(parts.parent)};
}

namespace {

std::uint64_t round_robin_index(const records::DocUnit& unit, std::uint64_t n) {
  return mr::fnv1a64(unit.doc_id) % n + 1;
}

}  // namespace

void sort_units(std::vector<records::DocUnit>& units) {
  std::sort(units.begin(), units.end(),
            [](const records::DocUnit& a, const records::DocUnit& b) {
              int c = a.doc_id.compare(b.doc_id);
              if (c != 0) return c < 0;
              return std::tie(a.count, a.label) < std::tie(b.count, b.label);
            });
}

std::string assign_unit(const records::DocUnit& unit, std::string_view parent,
                        std::uint64_t n, const ShardPolicy& policy) {
  if (n == 0) throw std::invalid_argument("shard count must be positive");
  if (n == 1) return std::string(parent);
  if (policy.strategy == Strategy::kDocIdLocality) {
    std::size_t target = mr::default_partition(unit.doc_id, policy.num_reducers);
    std::uint64_t limit = std::min<std::uint64_t>(n, 4 * policy.num_reducers);
    for (std::uint64_t i = 1; i <= limit; ++i) {
      std::string key = format_subfeature(i, n, parent);
      if (mr::default_partition(key, policy.num_reducers) == target) {
        return key;
      }
    }
  }
  return format_subfeature(round_robin_index(unit, n), n, parent);
}

std::vector<std::pair<std::string, std::vector<records::DocUnit>>> assign_units(
    std::vector<records::DocUnit> units, std::string_view parent,
    std::uint64_t n, const ShardPolicy& policy) {
  sort_units(units);
  std::vector<std::pair<std::string, std::vector<records::DocUnit>>> shards;
  if (n <= 1) {
    shards.emplace_back(std::string(parent), std::move(units));
    return shards;
  }
  std::vector<std::vector<records::DocUnit>> buckets(n);
  if (policy.strategy == Strategy::kRoundRobin) {
    for (std::size_t j = 0; j < units.size(); ++j) {
      buckets[j % n].push_back(std::move(units[j]));
    }
  } else {
    for (auto& u : units) {
      auto key = assign_unit(u, parent, n, policy);
      buckets[parse_subfeature(key).index - 1].push_back(std::move(u));
    }
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    if (buckets[i].empty()) continue;
    shards.emplace_back(format_subfeature(i + 1, n, parent),
                        std::move(buckets[i]));
  }
  return shards;
}

void FeatureFrequencyTable::add(std::string_view feature, std::uint64_t count) {
  counts_[std::string(feature)] += count;
}

std::uint64_t FeatureFrequencyTable::get(std::string_view feature) const {
  auto it = counts_.find(std::string(feature));
  return it == counts_.end() ? 0 : it->second;
}

bool FeatureFrequencyTable::contains(std::string_view feature) const {
  return counts_.count(std::string(feature)) > 0;
}

FeatureFrequencyTable FeatureFrequencyTable::truncated(
    std::uint64_t threshold) const {
  FeatureFrequencyTable out;
  for (const auto& [feature, count] : counts_) {
    if (count > threshold) out.counts_[feature] = count;
  }
  return out;
}

void FeatureFrequencyTable::save(const fs::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  std::vector<std::pair<std::string, std::uint64_t>> sorted(counts_.begin(),
                                                            counts_.end());
  std::sort(sorted.begin(), sorted.end());
  for (const auto& [feature, count] : sorted) {
    out << feature << '\t' << count << '\n';
  }
}

FeatureFrequencyTable FeatureFrequencyTable::load(const fs::path& file_or_dir) {
  FeatureFrequencyTable table;
  for (const auto& line : mr::read_lines(file_or_dir)) {
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw records::ParseError("malformed frequency line: \"" + line + "\"");
    }
    table.add(std::string_view(line).substr(0, tab),
              records::parse_count(std::string_view(line).substr(tab + 1)));
  }
  return table;
}

FeatureFrequencyTable collect_frequencies(
    const std::vector<fs::path>& corpus_paths) {
  FeatureFrequencyTable table;
  for (const auto& path : corpus_paths) {
    for (const auto& line : mr::read_lines(path)) {
      auto sample = records::parse_sample(line);
      for (const auto& token : sample.tokens) {
        table.add(token.feature, 1);
      }
    }
  }
  return table;
}

}  // namespace dpmr::shard
