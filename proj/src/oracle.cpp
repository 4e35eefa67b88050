#include "dpmr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dpmr/engine.hpp"

namespace dpmr::oracle {

namespace {

double feature_value(const records::Token& t, bool binary) {
  return binary ? 1.0 : double(t.count);
}

// theta^T x, features folded in sorted order.
double score(const records::Sample& s, const lr::ParameterVector& params,
             bool binary) {
  std::vector<const records::Token*> tokens;
  tokens.reserve(s.tokens.size());
  for (const auto& t : s.tokens) tokens.push_back(&t);
  std::sort(tokens.begin(), tokens.end(),
            [](const records::Token* a, const records::Token* b) {
              return a->feature < b->feature;
            });
  double z = 0;
  for (const auto* t : tokens) {
    z += feature_value(*t, binary) * lr::get_or_zero(params, t->feature);
  }
  return z;
}

double softplus(double t) {
  if (t > 0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

}  // namespace

std::map<std::string, double> oracle_gradient(const DenseInstance& instance) {
  std::map<std::string, double> grad;
  for (const auto& s : instance.samples) {
    double h = lr::sigmoid(score(s, instance.params, instance.binary_features));
    for (const auto& t : s.tokens) {
      grad[t.feature] +=
          feature_value(t, instance.binary_features) * (h - double(s.label));
    }
  }
  return grad;
}

double oracle_objective(const DenseInstance& instance) {
  double total = 0;
  for (const auto& s : instance.samples) {
    double z = score(s, instance.params, instance.binary_features);
    total += s.label == 1 ? softplus(-z) : softplus(z);
  }
  return total;
}

lr::ParameterVector oracle_train(const std::vector<records::Sample>& samples,
                                 const lr::Hyperparams& hyper) {
  DenseInstance instance{samples, {}, hyper.binary_features};
  for (const auto& s : samples) {
    for (const auto& t : s.tokens) instance.params.emplace(t.feature, 0.0);
  }
  for (std::size_t iter = 0; iter < hyper.max_iter; ++iter) {
    auto grad = oracle_gradient(instance);
    for (const auto& [feature, g] : grad) {
      instance.params[feature] = lr::optimize(instance.params[feature], g,
                                              hyper.alpha);
    }
  }
  return std::move(instance.params);
}

std::vector<Prediction> oracle_predict(
    const std::vector<records::Sample>& samples,
    const lr::ParameterVector& params, bool binary_features) {
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    double p = lr::sigmoid(score(s, params, binary_features));
    out.push_back(Prediction{s.doc_id, s.label, p >= 0.5 ? 1 : 0, p});
  }
  return out;
}

std::vector<records::Sample> load_corpus(
    const std::vector<std::filesystem::path>& inputs,
    std::size_t split_size_bytes) {
  std::vector<records::Sample> samples;
  auto splits = mr::split_inputs(inputs, split_size_bytes);
  for (std::size_t t = 0; t < splits.size(); ++t) {
    std::ifstream in(splits[t].path, std::ios::binary);
    if (!in) {
      throw std::runtime_error("cannot read " + splits[t].path.string());
    }
    in.seekg(std::streamoff(splits[t].begin));
    std::uint64_t pos = splits[t].begin;
    std::string line;
    std::size_t line_index = 0;
    while (pos < splits[t].end && std::getline(in, line)) {
      pos += line.size() + 1;
      if (line.empty()) continue;
      auto s = records::parse_sample(line);
      s.doc_id = records::derive_doc_id(t, line_index++);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace dpmr::oracle
