#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "dpmr/datagen.hpp"
#include "dpmr/engine.hpp"
#include "dpmr/oracle.hpp"
#include "dpmr/pipeline.hpp"
#include "dpmr/records.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::size_t default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

struct CommonFlags {
  std::size_t workers = default_workers();
  std::size_t reducers = 0;  // 0: follow workers
  std::size_t split_size_bytes = 1 << 20;
  std::uint64_t shard_max_units = 10000;
  std::string shard_strategy = "round-robin";
  double alpha = 0.1;
  std::size_t iterations = 5;
  double tol = 1e-4;
  bool no_objective = false;
  bool binary_features = false;
  bool mapper_sharding = false;
  std::string freq_table;
  bool keep_intermediates = false;
  bool force = false;
};

void add_engine_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--workers", f.workers, "Max concurrent tasks");
  cmd.add_option("--reducers", f.reducers, "Reduce tasks per job (default: workers)");
  cmd.add_option("--split-size-bytes", f.split_size_bytes, "Input split size");
  cmd.add_flag("--keep-intermediates", f.keep_intermediates,
               "Keep shuffle spill files");
  cmd.add_flag("--force", f.force, "Replace existing output");
}

void add_model_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--shard-max-units", f.shard_max_units,
                 "Units per sub-feature shard (0 disables sharding)");
  cmd.add_option("--shard-strategy", f.shard_strategy,
                 "Shard assignment: round-robin or docid-locality")
      ->check(CLI::IsMember({"round-robin", "docid-locality"}));
  cmd.add_flag("--binary-features", f.binary_features,
               "Use feature presence instead of counts");
  cmd.add_flag("--mapper-sharding", f.mapper_sharding,
               "Shard in the mapper from a frequency table");
  cmd.add_option("--freq-table", f.freq_table,
                 "Feature frequency table for --mapper-sharding");
}

dpmr::pipeline::PipelineConfig make_config(const CommonFlags& f) {
  dpmr::pipeline::PipelineConfig cfg;
  cfg.hyper.alpha = f.alpha;
  cfg.hyper.max_iter = f.iterations;
  cfg.hyper.tol = f.tol;
  cfg.hyper.binary_features = f.binary_features;
  cfg.num_reducers = f.reducers == 0 ? std::max<std::size_t>(1, f.workers)
                                     : f.reducers;
  cfg.sharding_enabled = f.shard_max_units > 0;
  cfg.shard_policy.max_units_per_shard =
      f.shard_max_units > 0 ? f.shard_max_units : 1;
  cfg.shard_policy.strategy = f.shard_strategy == "docid-locality"
                                  ? dpmr::shard::Strategy::kDocIdLocality
                                  : dpmr::shard::Strategy::kRoundRobin;
  cfg.compute_objective = !f.no_objective;
  cfg.mapper_side_sharding = f.mapper_sharding;
  if (!f.freq_table.empty()) cfg.frequency_table = fs::path(f.freq_table);
  cfg.engine.workers = std::max<std::size_t>(1, f.workers);
  cfg.engine.split_size_bytes = f.split_size_bytes;
  cfg.engine.keep_intermediates = f.keep_intermediates;
  if (const char* wd = std::getenv("DPMR_WORKDIR"); wd != nullptr && *wd) {
    cfg.engine.work_dir = fs::path(wd);
  }
  return cfg;
}

void prepare_output(const fs::path& out, bool force) {
  if (force) fs::remove_all(out);
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out))) {
    throw std::runtime_error("output path already exists (use --force): " +
                             out.string());
  }
}

std::string fmt(double v) { return dpmr::records::format_real(v); }

int cmd_train(const std::string& input, const std::string& output,
              const CommonFlags& flags) {
  auto cfg = make_config(flags);
  prepare_output(output, flags.force);
  auto reports = dpmr::pipeline::train(input, output, cfg);
  for (const auto& r : reports) {
    if (r.iteration == 0) continue;
    std::printf("iteration %zu: paramCount=%zu wallTimeSec=%s", r.iteration,
                r.param_count, fmt(r.wall_time_sec).c_str());
    if (r.objective) std::printf(" objective=%s", fmt(*r.objective).c_str());
    std::printf("\n");
  }
  std::printf("model written to %s\n", (fs::path(output) / "paraValue").string().c_str());
  return kExitOk;
}

int cmd_classify(const std::string& input, const std::string& model,
                 const std::string& output, const CommonFlags& flags) {
  auto cfg = make_config(flags);
  prepare_output(output, flags.force);
  auto stats = dpmr::pipeline::classify(input, model, output, cfg);
  std::uint64_t predictions = stats.back().second.records_out;
  std::printf("%llu predictions written to %s\n",
              (unsigned long long)predictions,
              (fs::path(output) / "testOutput").string().c_str());
  return kExitOk;
}

int cmd_evaluate(const std::string& predictions) {
  auto ev = dpmr::pipeline::evaluate(predictions);
  std::printf("class 1: precision %-10s recall %-10s f1 %-10s (actual %llu, predicted %llu)\n",
              fmt(ev.positive.precision).c_str(), fmt(ev.positive.recall).c_str(),
              fmt(ev.positive.f1).c_str(), (unsigned long long)ev.positive.actual,
              (unsigned long long)ev.positive.predicted);
  std::printf("class 0: precision %-10s recall %-10s f1 %-10s (actual %llu, predicted %llu)\n",
              fmt(ev.negative.precision).c_str(), fmt(ev.negative.recall).c_str(),
              fmt(ev.negative.f1).c_str(), (unsigned long long)ev.negative.actual,
              (unsigned long long)ev.negative.predicted);
  std::printf("macro:   precision %-10s recall %-10s f1 %-10s\n",
              fmt(ev.macro_precision).c_str(), fmt(ev.macro_recall).c_str(),
              fmt(ev.macro_f1).c_str());
  std::printf("accuracy %s (%llu/%llu)\n", fmt(ev.accuracy).c_str(),
              (unsigned long long)ev.correct, (unsigned long long)ev.total);
  std::printf(
      "metrics precision_1=%s recall_1=%s f1_1=%s precision_0=%s recall_0=%s "
      "f1_0=%s macro_precision=%s macro_recall=%s macro_f1=%s accuracy=%s\n",
      fmt(ev.positive.precision).c_str(), fmt(ev.positive.recall).c_str(),
      fmt(ev.positive.f1).c_str(), fmt(ev.negative.precision).c_str(),
      fmt(ev.negative.recall).c_str(), fmt(ev.negative.f1).c_str(),
      fmt(ev.macro_precision).c_str(), fmt(ev.macro_recall).c_str(),
      fmt(ev.macro_f1).c_str(), fmt(ev.accuracy).c_str());
  return kExitOk;
}

int cmd_gen_data(const dpmr::datagen::GenConfig& gen, const std::string& output,
                 bool force) {
  if (force) fs::remove_all(output);
  if (fs::exists(output)) {
    throw std::runtime_error("output path already exists (use --force): " +
                             output);
  }
  dpmr::datagen::write_corpus(gen, output);
  std::printf("%zu samples over %zu features written to %s\n", gen.samples,
              gen.features, output.c_str());
  return kExitOk;
}

int cmd_oracle_train(const std::string& input, const std::string& output,
                     const CommonFlags& flags) {
  if (flags.force) fs::remove_all(output);
  if (fs::exists(output)) {
    throw std::runtime_error("output path already exists (use --force): " +
                             output);
  }
  auto samples = dpmr::oracle::load_corpus({input}, flags.split_size_bytes);
  dpmr::lr::Hyperparams hyper;
  hyper.alpha = flags.alpha;
  hyper.max_iter = flags.iterations;
  hyper.binary_features = flags.binary_features;
  auto params = dpmr::oracle::oracle_train(samples, hyper);
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + output);
  for (const auto& [feature, value] : params) {
    out << dpmr::records::serialize(
               dpmr::records::ParameterRecord{feature, value})
        << '\n';
  }
  std::printf("%zu parameters written to %s\n", params.size(), output.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed Parameter Map-Reduce: logistic regression as a "
               "chain of map-reduce jobs over text-file stages"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string input, output, model, predictions;

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--input", input, "Training corpus")->required();
  train->add_option("--output", output, "Output root directory")->required();
  train->add_option("--alpha", flags.alpha, "Learning rate");
  train->add_option("--iterations", flags.iterations, "Gradient-descent iterations");
  train->add_option("--tol", flags.tol, "Relative objective change for early stop");
  train->add_flag("--no-objective", flags.no_objective,
                  "Skip the per-iteration objective job");
  add_model_flags(*train, flags);
  add_engine_flags(*train, flags);

  auto* classify = app.add_subcommand("classify", "Classify a test corpus");
  classify->add_option("--input", input, "Test corpus")->required();
  classify->add_option("--model", model, "Trained paraValue directory")->required();
  classify->add_option("--output", output, "Output root directory")->required();
  add_model_flags(*classify, flags);
  add_engine_flags(*classify, flags);

  auto* evaluate = app.add_subcommand("evaluate", "Score a predictions file");
  evaluate->add_option("--predictions", predictions, "testOutput file or directory")
      ->required();

  dpmr::datagen::GenConfig gen;
  bool gen_force = false;
  auto* gen_data = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen_data->add_option("--samples", gen.samples, "Number of samples")->required();
  gen_data->add_option("--features", gen.features, "Feature space size")->required();
  gen_data->add_option("--output", output, "Corpus file to write")->required();
  gen_data->add_option("--tokens-per-sample", gen.tokens_per_sample,
                       "Distinct features per sample");
  gen_data->add_option("--zipf-exponent", gen.zipf_exponent,
                       "Feature frequency skew");
  gen_data->add_flag("--separable", gen.separable,
                     "Plant a weight vector with margin");
  gen_data->add_option("--seed", gen.seed, "RNG seed");
  gen_data->add_flag("--force", gen_force, "Replace existing output");

  auto* oracle_train =
      app.add_subcommand("oracle-train", "Train the in-memory reference model");
  oracle_train->add_option("--input", input, "Training corpus")->required();
  oracle_train->add_option("--output", output, "Parameter file to write")->required();
  oracle_train->add_option("--alpha", flags.alpha, "Learning rate");
  oracle_train->add_option("--iterations", flags.iterations,
                           "Gradient-descent iterations");
  oracle_train->add_flag("--binary-features", flags.binary_features,
                         "Use feature presence instead of counts");
  oracle_train->add_option("--split-size-bytes", flags.split_size_bytes,
                           "Split size used for docId assignment");
  oracle_train->add_flag("--force", flags.force, "Replace existing output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(input, output, flags);
    if (classify->parsed()) return cmd_classify(input, model, output, flags);
    if (evaluate->parsed()) return cmd_evaluate(predictions);
    if (gen_data->parsed()) return cmd_gen_data(gen, output, gen_force);
    if (oracle_train->parsed()) return cmd_oracle_train(input, output, flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
