#include "dpmr/lr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dpmr::lr {

double sigmoid(double z) {
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// theta^T x with entries folded in feature-byte order.
double linear_score(const records::SufficientSample& s, bool binary) {
  std::vector<std::size_t> order(s.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.entries[a].feature < s.entries[b].feature;
  });
  double z = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& e = s.entries[order[k]];
    if (k > 0 && e.feature == s.entries[order[k - 1]].feature) {
      throw std::invalid_argument("duplicate feature in sufficient sample: " +
                                  e.feature);
    }
    double x = binary ? 1.0 : double(e.count);
    z += x * e.para;
  }
  return z;
}

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  if (t > 0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

}  // namespace

double inference(const records::SufficientSample& s, bool binary_features) {
  return sigmoid(linear_score(s, binary_features));
}

double gradient_contribution(std::uint64_t count, double h, int label) {
  return double(count) * (h - double(label));
}

double sample_loss(const records::SufficientSample& s, bool binary_features) {
  if (s.entries.empty()) {
    throw std::invalid_argument("sufficient sample without entries");
  }
  double z = linear_score(s, binary_features);
  return s.entries.front().label == 1 ? softplus(-z) : softplus(z);
}

double optimize(double para, double grad, double alpha) {
  return para - alpha * grad;
}

}  // namespace dpmr::lr
