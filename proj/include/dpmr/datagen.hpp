#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dpmr/records.hpp"

// Synthetic corpora for desk-scale experiments. Features are drawn from a
// Zipf-like distribution so a handful of features are high-frequency (the
// situation sharding exists for). In separable mode labels follow a planted
// weight vector with a margin, so the corpus is learnable by construction.
// Output is a pure function of the config: all randomness flows from seed.

namespace dpmr::datagen {

struct GenConfig {
  std::size_t samples = 1000;
  std::size_t features = 100;
  std::size_t tokens_per_sample = 10;
  double zipf_exponent = 1.0;
  bool separable = false;
  std::uint64_t seed = 0;
};

std::vector<records::Sample> generate_samples(const GenConfig&);

// Writes one corpus line per sample.
void write_corpus(const GenConfig&, const std::filesystem::path& file);

}  // namespace dpmr::datagen
