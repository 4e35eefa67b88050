#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dpmr/records.hpp"

// Logistic-regression mathematics. Everything here is a pure function; dot
// products and losses fold entries in feature-byte-sorted order so results
// are identical across runs and entry orderings.

namespace dpmr::lr {

// The model: feature -> weight. Absent feature means weight 0. std::map so
// iteration order is the fixed byte order.
using ParameterVector = std::map<std::string, double>;

struct Hyperparams {
  double alpha = 0.1;        // learning rate
  std::size_t max_iter = 5;  // gradient-descent iterations
  double tol = 1e-4;         // relative objective change for early stop
  bool binary_features = false;  // treat every count as 1
};

// 1/(1+exp(-z)), stable for large |z| (no overflow). NaN in, NaN out.
double sigmoid(double z);

// p(y=1 | x; theta) from the parameters stored in the sample itself.
// Throws std::invalid_argument on duplicate features.
double inference(const records::SufficientSample& s, bool binary_features = false);

// Single-sample term of the batch gradient: x_j * (h - y).
double gradient_contribution(std::uint64_t count, double h, int label);

// Negative log-likelihood of one sample, computed in the log domain so
// saturated predictions never produce log(0).
double sample_loss(const records::SufficientSample& s, bool binary_features = false);

// One gradient-descent step for one parameter.
double optimize(double para, double grad, double alpha);

inline double get_or_zero(const ParameterVector& params, const std::string& f) {
  auto it = params.find(f);
  return it == params.end() ? 0.0 : it->second;
}

}  // namespace dpmr::lr
