#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dpmr/lr.hpp"
#include "dpmr/records.hpp"

// Single-process, in-memory reference implementation of full-batch logistic
// regression. A deliberately independent code path from the pipeline: it
// shares only sigmoid, so pipeline-vs-oracle diffs isolate real defects.
// Fold orders are fixed — samples in corpus order, features sorted — and
// comparisons against the pipeline use relative tolerances to absorb the
// pipeline's different (value-sorted) summation order.

namespace dpmr::oracle {

struct DenseInstance {
  std::vector<records::Sample> samples;
  lr::ParameterVector params;
  bool binary_features = false;
};

// Eq.-by-eq per-feature batch gradient: sum_i x_j * (h_i - y_i).
std::map<std::string, double> oracle_gradient(const DenseInstance& instance);

// Total negative log-likelihood over the instance.
double oracle_objective(const DenseInstance& instance);

// Full-batch gradient descent from theta = 0.
lr::ParameterVector oracle_train(const std::vector<records::Sample>& samples,
                                 const lr::Hyperparams& hyper);

struct Prediction {
  std::string doc_id;
  int label = 0;
  int predicted = 0;
  double probability = 0;
};

// Thresholded at p >= 0.5; absent features contribute 0.
std::vector<Prediction> oracle_predict(
    const std::vector<records::Sample>& samples,
    const lr::ParameterVector& params, bool binary_features = false);

// Loads a corpus with docIds assigned exactly as the pipeline assigns them:
// derive_doc_id over the same input splits. Pass the split size the pipeline
// runs with.
std::vector<records::Sample> load_corpus(
    const std::vector<std::filesystem::path>& inputs,
    std::size_t split_size_bytes);

}  // namespace dpmr::oracle
