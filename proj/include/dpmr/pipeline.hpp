#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpmr/engine.hpp"
#include "dpmr/lr.hpp"
#include "dpmr/sharding.hpp"

// The DPMR jobs and drivers: training and classification expressed entirely
// as map-reduce jobs over text-file stages, with parameters distributed
// alongside the data. The unsharded and sharded pipelines share one code
// path; disabling sharding is the degenerate single-shard case.

namespace dpmr::pipeline {

struct PipelineConfig {
  lr::Hyperparams hyper;
  shard::ShardPolicy shard_policy;
  mr::EngineConfig engine;
  std::size_t num_reducers = 1;
  bool sharding_enabled = true;
  bool compute_objective = true;
  // Shard in the mapper from a precomputed frequency table instead of in the
  // reducer. Requires frequency_table.
  bool mapper_side_sharding = false;
  std::optional<std::filesystem::path> frequency_table;
};

struct IterationReport {
  std::size_t iteration = 0;
  std::optional<double> objective;
  std::vector<std::pair<std::string, mr::JobStats>> job_stats;
  std::size_t param_count = 0;
  double wall_time_sec = 0;  // sum of this iteration's job wall times
};

// What happens when a sub-feature list has no parameter line for its parent:
// an error during training, a synthesized 0 during classification (test
// corpora legitimately contain unseen features).
enum class MissingParentPolicy { kError, kZero };

// ---------------------------------------------------------------------------
// Job builders. Exposed so tests can exercise single stages.

mr::JobSpec init_parameters_spec(const PipelineConfig&);
mr::JobSpec invert_documents_spec(const PipelineConfig&, bool with_combiner = true);
mr::JobSpec invert_documents_sharding_spec(const PipelineConfig&,
                                           bool with_combiner = true);
mr::JobSpec invert_parameters_spec(const PipelineConfig&);
mr::JobSpec distribute_parameters_sharding_spec(const PipelineConfig&,
                                                MissingParentPolicy);
mr::JobSpec distribute_parameters_spec(const PipelineConfig&);
mr::JobSpec restore_documents_spec(const PipelineConfig&);
mr::JobSpec compute_gradients_spec(const PipelineConfig&);
mr::JobSpec compute_objective_spec(const PipelineConfig&);
mr::JobSpec update_parameters_spec(const PipelineConfig&, double alpha);
mr::JobSpec logistic_test_spec(const PipelineConfig&);

// ---------------------------------------------------------------------------
// Single stages over concrete paths. Each runs one job and returns its stats.

mr::JobStats init_parameters(const std::filesystem::path& train_input,
                             const std::filesystem::path& para_value_output,
                             const PipelineConfig&);
mr::JobStats invert_documents(const std::filesystem::path& train_input,
                              const std::filesystem::path& doc_invert_output,
                              const PipelineConfig&);
mr::JobStats invert_documents_sharding(
    const std::filesystem::path& train_input,
    const std::filesystem::path& doc_invert_shard_output, const PipelineConfig&);
mr::JobStats invert_parameters(const std::filesystem::path& doc_invert_shard_output,
                               const std::filesystem::path& para_invert_output,
                               const PipelineConfig&);
mr::JobStats distribute_parameters_sharding(
    const std::filesystem::path& para_value_output,
    const std::filesystem::path& para_invert_output,
    const std::filesystem::path& para_distribute_shard_output,
    const PipelineConfig&, MissingParentPolicy = MissingParentPolicy::kError);
mr::JobStats distribute_parameters(
    const std::filesystem::path& para_input,
    const std::filesystem::path& doc_invert_input,
    const std::filesystem::path& para_distribute_output, const PipelineConfig&);
mr::JobStats restore_documents(const std::filesystem::path& para_distribute_output,
                               const std::filesystem::path& doc_restore_output,
                               const PipelineConfig&);
mr::JobStats compute_gradients(const std::filesystem::path& doc_restore_output,
                               const std::filesystem::path& grad_compute_output,
                               const PipelineConfig&);
// Returns the total objective J alongside the job stats.
std::pair<double, mr::JobStats> compute_objective(
    const std::filesystem::path& doc_restore_output,
    const std::filesystem::path& obj_output, const PipelineConfig&);
mr::JobStats update_parameters(const std::filesystem::path& para_value_output,
                               const std::filesystem::path& grad_compute_output,
                               const std::filesystem::path& para_update_output,
                               double alpha, const PipelineConfig&);

// ---------------------------------------------------------------------------
// Drivers

// Full training run under output_root: paraValue/, docInvert/, paraInvert/,
// then per iteration paraDistributeShard/, paraDistribute/, docRestore/,
// objCompute/, gradCompute/, paraUpdate/ (swapped into paraValue/), plus
// reports/iter-N.txt. Report 0 covers the jobs outside the loop. Stops at
// max_iter or when the relative objective change drops below tol.
std::vector<IterationReport> train(const std::filesystem::path& train_input,
                                   const std::filesystem::path& output_root,
                                   const PipelineConfig&);

// Classification run under output_root (same stage layout plus testOutput/
// holding "docId<TAB>example_label<TAB>predict_label" lines). model_dir is a
// trained paraValue directory.
std::vector<std::pair<std::string, mr::JobStats>> classify(
    const std::filesystem::path& test_input,
    const std::filesystem::path& model_dir,
    const std::filesystem::path& output_root, const PipelineConfig&);

// ---------------------------------------------------------------------------
// Evaluation of a predictions file/directory.

struct ClassMetrics {
  std::uint64_t actual = 0;     // examples of this class
  std::uint64_t predicted = 0;  // predictions of this class
  std::uint64_t hits = 0;       // correct predictions of this class
  double precision = 0;         // 0 when nothing predicted
  double recall = 0;
  double f1 = 0;                // 2pr/(p+r), 0 when p+r == 0
};

struct Evaluation {
  ClassMetrics positive;  // class 1
  ClassMetrics negative;  // class 0
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  double accuracy = 0;
};

Evaluation evaluate(const std::filesystem::path& predictions);

// ---------------------------------------------------------------------------
// Helpers shared by the CLI, tests, and drivers.

lr::ParameterVector load_parameters(const std::filesystem::path& para_dir);
std::map<std::string, double> load_gradients(const std::filesystem::path& grad_dir);
void write_report(const IterationReport&, const std::filesystem::path& file);

}  // namespace dpmr::pipeline
