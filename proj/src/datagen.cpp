#include "dpmr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>

namespace dpmr::datagen {

namespace {

// Thin wrapper over mt19937_64 with hand-rolled draws: the standard leaves
// distribution classes implementation-defined, and output bytes must not
// depend on the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  std::uint64_t below(std::uint64_t n) {
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  double real() { return double(next() >> 11) * 0x1.0p-53; }

  double normal() {
    if (cached_) {
      double v = *cached_;
      cached_.reset();
      return v;
    }
    double u1 = real();
    while (u1 == 0.0) u1 = real();
    double u2 = real();
    double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * M_PI * u2);
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> cached_;
};

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) {
    cumulative_.reserve(n);
    double total = 0;
    for (std::size_t k = 0; k < n; ++k) {
      total += 1.0 / std::pow(double(k + 1), exponent);
      cumulative_.push_back(total);
    }
  }

  std::size_t draw(Rng& rng) const {
    double u = rng.real() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::size_t(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
};

std::uint64_t draw_count(Rng& rng) {
  std::uint64_t c = 1;
  while (c < 4 && rng.real() < 0.5) ++c;
  return c;
}

}  // namespace

std::vector<records::Sample> generate_samples(const GenConfig& cfg) {
  if (cfg.samples == 0 || cfg.features == 0 || cfg.tokens_per_sample == 0) {
    throw std::invalid_argument("corpus dimensions must be positive");
  }
  if (cfg.tokens_per_sample > cfg.features) {
    throw std::invalid_argument("tokens per sample exceeds feature count");
  }
  Rng rng(cfg.seed);
  ZipfSampler zipf(cfg.features, cfg.zipf_exponent);

  std::vector<double> planted;
  if (cfg.separable) {
    planted.reserve(cfg.features);
    for (std::size_t k = 0; k < cfg.features; ++k) {
      planted.push_back(rng.normal());
    }
  }

  std::vector<records::Sample> samples;
  samples.reserve(cfg.samples);
  std::vector<std::size_t> drawn;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    records::Sample s;
    constexpr double kMargin = 1.0;
    for (int attempt = 0; attempt < 50; ++attempt) {
      drawn.clear();
      while (drawn.size() < cfg.tokens_per_sample) {
        std::size_t f = zipf.draw(rng);
        if (std::find(drawn.begin(), drawn.end(), f) == drawn.end()) {
          drawn.push_back(f);
        }
      }
      std::sort(drawn.begin(), drawn.end());
      s.tokens.clear();
      double z = 0;
      for (std::size_t f : drawn) {
        std::uint64_t count = draw_count(rng);
        s.tokens.push_back(records::Token{"f" + std::to_string(f), count});
        if (cfg.separable) z += double(count) * planted[f];
      }
      if (!cfg.separable) {
        s.label = int(rng.below(2));
        break;
      }
      if (std::abs(z) >= kMargin) {
        s.label = z >= 0 ? 1 : 0;
        break;
      }
      s.label = z >= 0 ? 1 : 0;  // kept if every attempt lands in the margin
    }
    // Token names sort as strings in the output line.
    std::sort(s.tokens.begin(), s.tokens.end(),
              [](const records::Token& a, const records::Token& b) {
                return a.feature < b.feature;
              });
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_corpus(const GenConfig& cfg, const std::filesystem::path& file) {
  auto samples = generate_samples(cfg);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const auto& s : samples) {
    out << records::serialize(s) << '\n';
  }
  if (!out) throw std::runtime_error("short write: " + file.string());
}

}  // namespace dpmr::datagen
