#include "dpmr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "dpmr/records.hpp"

namespace dpmr::pipeline {

namespace fs = std::filesystem;

namespace {

PipelineConfig normalized(PipelineConfig cfg) {
  cfg.shard_policy.num_reducers = cfg.num_reducers;
  if (!cfg.sharding_enabled) cfg.mapper_side_sharding = false;
  return cfg;
}

mr::EngineConfig engine_for(const PipelineConfig& cfg, const fs::path& fallback) {
  mr::EngineConfig e = cfg.engine;
  if (e.work_dir.empty()) e.work_dir = fallback;
  return e;
}

mr::JobStats run(const PipelineConfig& cfg, const mr::JobSpec& spec,
                 const std::vector<fs::path>& inputs, const fs::path& output) {
  return mr::run_job(spec, inputs, output,
                     engine_for(cfg, output.string() + ".work"));
}

void identity_map(const mr::MapInput& in, mr::Emitter& out) {
  auto tab = in.line.find('\t');
  if (tab == std::string_view::npos) {
    throw records::ParseError("missing tab separator: \"" +
                              std::string(in.line) + "\"");
  }
  out.emit(std::string(in.line.substr(0, tab)),
           std::string(in.line.substr(tab + 1)));
}

char value_tag(const std::string& value) {
  return value.empty() ? '\0' : value[0];
}

// Splits a sufficient-sample value into entries, validating each against the
// docId key. Keeps the original entry text so bytes survive untouched.
struct RestoredEntry {
  std::string text;
  std::string feature;
  int label = 0;
};

std::vector<RestoredEntry> collect_entries(
    const std::string& key, const std::vector<std::string>& values) {
  std::vector<RestoredEntry> entries;
  for (const auto& value : values) {
    std::size_t start = 0;
    std::string_view v(value);
    while (start <= v.size()) {
      std::size_t end = v.find(' ', start);
      if (end == std::string_view::npos) end = v.size();
      if (end > start) {
        auto piece = v.substr(start, end - start);
        auto r = records::parse_distributed_param_kv(key, piece);
        entries.push_back(
            RestoredEntry{std::string(piece), std::move(r.feature), r.label});
      }
      start = end + 1;
    }
  }
  return entries;
}

}  // namespace

// ---------------------------------------------------------------------------
// Job builders

mr::JobSpec init_parameters_spec(const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  mr::JobSpec spec;
  spec.name = "initParameters";
  spec.num_reducers = cfg.num_reducers;
  spec.map = [](const mr::MapInput& in, mr::Emitter& out) {
    auto s = records::parse_sample(in.line);
    for (const auto& t : s.tokens) out.emit(t.feature, "1");
  };
  spec.combine = [](const std::string& key, const std::vector<std::string>&,
                    mr::Emitter& out) { out.emit(key, "1"); };
  spec.reduce = [](const std::string& key, const std::vector<std::string>&,
                   mr::Emitter& out) {
    out.emit(key, records::value_of(records::ParameterRecord{key, 0.0}));
  };
  return spec;
}

namespace {

mr::JobSpec invert_spec(const PipelineConfig& cfg, const std::string& name,
                        bool with_combiner) {
  std::shared_ptr<const shard::FeatureFrequencyTable> freq;
  if (cfg.mapper_side_sharding) {
    if (!cfg.frequency_table) {
      throw std::invalid_argument(
          "mapper-side sharding needs a frequency table");
    }
    freq = std::make_shared<const shard::FeatureFrequencyTable>(
        shard::FeatureFrequencyTable::load(*cfg.frequency_table)
            .truncated(cfg.shard_policy.max_units_per_shard));
  }
  const auto policy = cfg.shard_policy;
  const bool reducer_side_sharding =
      cfg.sharding_enabled && !cfg.mapper_side_sharding;

  mr::JobSpec spec;
  spec.name = name;
  spec.num_reducers = cfg.num_reducers;
  spec.map = [policy, freq](const mr::MapInput& in, mr::Emitter& out) {
    auto s = records::parse_sample(in.line);
    auto doc_id = records::derive_doc_id(in.split_index, in.line_index);
    for (const auto& t : s.tokens) {
      records::DocUnit unit{doc_id, t.count, s.label};
      std::string key = t.feature;
      if (freq) {
        auto c = freq->get(t.feature);
        if (c > policy.max_units_per_shard) {
          key = shard::assign_unit(unit, t.feature,
                                   shard::shard_count(c, policy), policy);
        }
      }
      records::InvertIndexRecord rec{std::move(key), 1, {std::move(unit)}};
      auto value = records::value_of(rec);
      out.emit(std::move(rec.key), std::move(value));
    }
  };
  if (with_combiner) {
    spec.combine = [](const std::string& key,
                      const std::vector<std::string>& values,
                      mr::Emitter& out) {
      records::InvertIndexRecord agg{key, 0, {}};
      for (const auto& v : values) {
        auto r = records::parse_invert_index_kv(key, v);
        agg.doc_units.insert(agg.doc_units.end(),
                             std::make_move_iterator(r.doc_units.begin()),
                             std::make_move_iterator(r.doc_units.end()));
      }
      shard::sort_units(agg.doc_units);
      agg.num = agg.doc_units.size();
      out.emit(key, records::value_of(agg));
    };
  }
  spec.reduce = [policy, reducer_side_sharding](
                    const std::string& key,
                    const std::vector<std::string>& values, mr::Emitter& out) {
    std::vector<records::DocUnit> units;
    for (const auto& v : values) {
      auto r = records::parse_invert_index_kv(key, v);
      units.insert(units.end(), std::make_move_iterator(r.doc_units.begin()),
                   std::make_move_iterator(r.doc_units.end()));
    }
    if (key.find('|') == std::string::npos) {
      std::uint64_t n =
          reducer_side_sharding ? shard::shard_count(units.size(), policy) : 1;
      for (auto& [sub_key, sub_units] :
           shard::assign_units(std::move(units), key, n, policy)) {
        records::InvertIndexRecord rec{sub_key, sub_units.size(),
                                       std::move(sub_units)};
        out.emit(sub_key, records::value_of(rec));
      }
    } else {
      // Already a sub-feature (mapper-side sharding): aggregate only.
      shard::sort_units(units);
      records::InvertIndexRecord rec{key, units.size(), std::move(units)};
      out.emit(key, records::value_of(rec));
    }
  };
  return spec;
}

}  // namespace

mr::JobSpec invert_documents_spec(const PipelineConfig& raw, bool with_combiner) {
  auto cfg = normalized(raw);
  cfg.sharding_enabled = false;
  cfg.mapper_side_sharding = false;
  return invert_spec(cfg, "invertDocuments", with_combiner);
}

mr::JobSpec invert_documents_sharding_spec(const PipelineConfig& raw,
                                           bool with_combiner) {
  auto cfg = normalized(raw);
  return invert_spec(cfg, "invertDocumentsSharding", with_combiner);
}

mr::JobSpec invert_parameters_spec(const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  mr::JobSpec spec;
  spec.name = "invertParameters";
  spec.num_reducers = cfg.num_reducers;
  spec.map = [](const mr::MapInput& in, mr::Emitter& out) {
    auto tab = in.line.find('\t');
    if (tab == std::string_view::npos || tab + 1 >= in.line.size() ||
        in.line[tab + 1] != 'i') {
      throw records::ParseError("expected invert index line: \"" +
                                std::string(in.line) + "\"");
    }
    auto key = in.line.substr(0, tab);
    auto parts = records::split_key(key);
    out.emit(std::string(parts.parent), std::string(key));
  };
  spec.reduce = [](const std::string& key,
                   const std::vector<std::string>& values, mr::Emitter& out) {
    records::SubFeatureListRecord rec{key, {}};
    for (const auto& v : values) {
      if (!rec.subs.empty() && rec.subs.back() == v) continue;  // dedupe
      if (records::split_key(v).parent != key) {
        throw records::ParseError("sub-feature with foreign parent: \"" + v +
                                  "\"");
      }
      rec.subs.push_back(v);
    }
    out.emit(key, records::value_of(rec));
  };
  return spec;
}

mr::JobSpec distribute_parameters_sharding_spec(const PipelineConfig& raw,
                                                MissingParentPolicy missing) {
  auto cfg = normalized(raw);
  mr::JobSpec spec;
  spec.name = "distributeParametersSharding";
  spec.num_reducers = cfg.num_reducers;
  spec.map = identity_map;
  spec.reduce = [missing](const std::string& key,
                          const std::vector<std::string>& values,
                          mr::Emitter& out) {
    std::optional<std::string> para_value;
    std::vector<std::string> subs;
    for (const auto& v : values) {
      switch (value_tag(v)) {
        case 'p': {
          records::parse_parameter_kv(key, v);
          if (para_value) {
            throw records::ParseError("duplicate parameter for \"" + key + "\"");
          }
          para_value = v;
          break;
        }
        case 'e': {
          auto r = records::parse_subfeature_list_kv(key, v);
          subs.insert(subs.end(), std::make_move_iterator(r.subs.begin()),
                      std::make_move_iterator(r.subs.end()));
          break;
        }
        default:
          throw records::ParseError("unexpected value in parameter "
                                    "distribution: \"" + v + "\"");
      }
    }
    if (subs.empty()) return;  // feature no longer present in the corpus
    if (!para_value) {
      if (missing == MissingParentPolicy::kError) {
        throw std::runtime_error("parent feature without parameter: \"" + key +
                                 "\"");
      }
      para_value = records::value_of(records::ParameterRecord{key, 0.0});
    }
    for (const auto& sub : subs) out.emit(sub, *para_value);
  };
  return spec;
}

mr::JobSpec distribute_parameters_spec(const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  mr::JobSpec spec;
  spec.name = "distributeParameters";
  spec.num_reducers = cfg.num_reducers;
  spec.map = identity_map;
  spec.reduce = [](const std::string& key,
                   const std::vector<std::string>& values, mr::Emitter& out) {
    std::optional<std::string> para_text;
    std::vector<records::DocUnit> units;
    for (const auto& v : values) {
      switch (value_tag(v)) {
        case 'p': {
          records::parse_parameter_kv(key, v);
          if (para_text) {
            throw records::ParseError("duplicate parameter for \"" + key + "\"");
          }
          para_text = v.substr(2);
          break;
        }
        case 'i': {
          auto r = records::parse_invert_index_kv(key, v);
          units.insert(units.end(), std::make_move_iterator(r.doc_units.begin()),
                       std::make_move_iterator(r.doc_units.end()));
          break;
        }
        default:
          throw records::ParseError("unexpected value in distribute: \"" + v +
                                    "\"");
      }
    }
    if (units.empty()) return;  // parameter for a feature with no samples
    if (!para_text) {
      throw std::runtime_error("feature with sample list but no parameter: \"" +
                               key + "\"");
    }
    for (const auto& u : units) {
      std::string value;
      value.reserve(key.size() + para_text->size() + 16);
      value += char('0' + u.label);
      value += ':';
      value += key;
      value += ':';
      value += std::to_string(u.count);
      value += ':';
      value += *para_text;
      out.emit(u.doc_id, std::move(value));
    }
  };
  return spec;
}

mr::JobSpec restore_documents_spec(const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  mr::JobSpec spec;
  spec.name = "restoreDocuments";
  spec.num_reducers = cfg.num_reducers;
  spec.map = identity_map;
  // Combiner and reducer are the same fold: gather this docId's entries,
  // order them by feature, join with spaces.
  mr::ReduceFn gather = [](const std::string& key,
                           const std::vector<std::string>& values,
                           mr::Emitter& out) {
    auto entries = collect_entries(key, values);
    if (entries.empty()) return;
    for (const auto& e : entries) {
      if (e.label != entries.front().label) {
        throw std::runtime_error("conflicting labels for docId \"" + key + "\"");
      }
    }
    std::sort(entries.begin(), entries.end(),
              [](const RestoredEntry& a, const RestoredEntry& b) {
                return a.feature < b.feature;
              });
    std::string joined;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (k > 0) {
        if (entries[k].feature == entries[k - 1].feature) {
          throw std::runtime_error("duplicate feature for docId \"" + key +
                                   "\"");
        }
        joined += ' ';
      }
      joined += entries[k].text;
    }
    out.emit(key, std::move(joined));
  };
  spec.combine = gather;
  spec.reduce = gather;
  return spec;
}

namespace {

mr::ReduceFn gradient_sum() {
  return [](const std::string& key, const std::vector<std::string>& values,
            mr::Emitter& out) {
    double sum = 0;
    for (const auto& v : values) sum += records::parse_gradient_kv(key, v).grad;
    out.emit(key, records::value_of(records::GradientRecord{key, sum}));
  };
}

}  // namespace

mr::JobSpec compute_gradients_spec(const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  const bool binary = cfg.hyper.binary_features;
  mr::JobSpec spec;
  spec.name = "computeGradients";
  spec.num_reducers = cfg.num_reducers;
  spec.map = [binary](const mr::MapInput& in, mr::Emitter& out) {
    auto s = records::parse_sufficient_sample(in.line);
    double h = lr::inference(s, binary);
    for (const auto& e : s.entries) {
      // Parent extraction: sub-shard gradients sum under one parameter.
      auto parent = records::split_key(e.feature).parent;
      double g = lr::gradient_contribution(binary ? 1 : e.count, h, e.label);
      std::string value = "q ";
      records::append_real(value, g);
      out.emit(std::string(parent), std::move(value));
    }
  };
  spec.combine = gradient_sum();
  spec.reduce = gradient_sum();
  return spec;
}

mr::JobSpec compute_objective_spec(const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  const bool binary = cfg.hyper.binary_features;
  mr::JobSpec spec;
  spec.name = "computeObjective";
  spec.num_reducers = 1;  // single global fold
  spec.map = [binary](const mr::MapInput& in, mr::Emitter& out) {
    auto s = records::parse_sufficient_sample(in.line);
    std::string value = "q ";
    records::append_real(value, lr::sample_loss(s, binary));
    out.emit("J", std::move(value));
  };
  spec.combine = gradient_sum();
  spec.reduce = gradient_sum();
  return spec;
}

mr::JobSpec update_parameters_spec(const PipelineConfig& raw, double alpha) {
  auto cfg = normalized(raw);
  mr::JobSpec spec;
  spec.name = "updateParameters";
  spec.num_reducers = cfg.num_reducers;
  spec.map = identity_map;
  spec.reduce = [alpha](const std::string& key,
                        const std::vector<std::string>& values,
                        mr::Emitter& out) {
    std::optional<double> para;
    double grad = 0;  // features without gradient keep their value
    for (const auto& v : values) {
      switch (value_tag(v)) {
        case 'p':
          if (para) {
            throw records::ParseError("duplicate parameter for \"" + key + "\"");
          }
          para = records::parse_parameter_kv(key, v).value;
          break;
        case 'q':
          grad = records::parse_gradient_kv(key, v).grad;
          break;
        default:
          throw records::ParseError("unexpected value in update: \"" + v + "\"");
      }
    }
    if (!para) {
      throw std::runtime_error("gradient without parameter: \"" + key + "\"");
    }
    out.emit(key, records::value_of(records::ParameterRecord{
                      key, lr::optimize(*para, grad, alpha)}));
  };
  return spec;
}

mr::JobSpec logistic_test_spec(const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  const bool binary = cfg.hyper.binary_features;
  mr::JobSpec spec;
  spec.name = "logisticTest";
  spec.map_only = true;
  spec.map = [binary](const mr::MapInput& in, mr::Emitter& out) {
    auto s = records::parse_sufficient_sample(in.line);
    double p = lr::inference(s, binary);
    int predicted = p >= 0.5 ? 1 : 0;
    std::string value;
    value += char('0' + s.entries.front().label);
    value += '\t';
    value += char('0' + predicted);
    out.emit(s.doc_id, std::move(value));
  };
  return spec;
}

// ---------------------------------------------------------------------------
// Single stages

mr::JobStats init_parameters(const fs::path& train_input, const fs::path& out,
                             const PipelineConfig& cfg) {
  return run(cfg, init_parameters_spec(cfg), {train_input}, out);
}

mr::JobStats invert_documents(const fs::path& train_input, const fs::path& out,
                              const PipelineConfig& cfg) {
  return run(cfg, invert_documents_spec(cfg), {train_input}, out);
}

mr::JobStats invert_documents_sharding(const fs::path& train_input,
                                       const fs::path& out,
                                       const PipelineConfig& cfg) {
  return run(cfg, invert_documents_sharding_spec(cfg), {train_input}, out);
}

mr::JobStats invert_parameters(const fs::path& doc_invert, const fs::path& out,
                               const PipelineConfig& cfg) {
  return run(cfg, invert_parameters_spec(cfg), {doc_invert}, out);
}

mr::JobStats distribute_parameters_sharding(const fs::path& para_value,
                                            const fs::path& para_invert,
                                            const fs::path& out,
                                            const PipelineConfig& cfg,
                                            MissingParentPolicy missing) {
  return run(cfg, distribute_parameters_sharding_spec(cfg, missing),
             {para_value, para_invert}, out);
}

mr::JobStats distribute_parameters(const fs::path& para_input,
                                   const fs::path& doc_invert_input,
                                   const fs::path& out,
                                   const PipelineConfig& cfg) {
  return run(cfg, distribute_parameters_spec(cfg),
             {para_input, doc_invert_input}, out);
}

mr::JobStats restore_documents(const fs::path& para_distribute,
                               const fs::path& out, const PipelineConfig& cfg) {
  return run(cfg, restore_documents_spec(cfg), {para_distribute}, out);
}

mr::JobStats compute_gradients(const fs::path& doc_restore, const fs::path& out,
                               const PipelineConfig& cfg) {
  return run(cfg, compute_gradients_spec(cfg), {doc_restore}, out);
}

std::pair<double, mr::JobStats> compute_objective(const fs::path& doc_restore,
                                                  const fs::path& out,
                                                  const PipelineConfig& cfg) {
  auto stats = run(cfg, compute_objective_spec(cfg), {doc_restore}, out);
  auto lines = mr::read_lines(out);
  if (lines.empty()) return {0.0, stats};
  if (lines.size() > 1) {
    throw std::runtime_error("objective output has more than one record");
  }
  return {records::parse_gradient(lines.front()).grad, stats};
}

mr::JobStats update_parameters(const fs::path& para_value,
                               const fs::path& grad_compute,
                               const fs::path& out, double alpha,
                               const PipelineConfig& cfg) {
  return run(cfg, update_parameters_spec(cfg, alpha), {para_value, grad_compute},
             out);
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

void require_fresh(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    throw std::runtime_error("output path already exists: " + dir.string());
  }
  fs::create_directories(dir);
}

struct StageDirs {
  fs::path para_value, doc_invert, para_invert, para_distribute_shard,
      para_distribute, doc_restore, obj_compute, grad_compute, para_update,
      reports, test_output;

  explicit StageDirs(const fs::path& root)
      : para_value(root / "paraValue"),
        doc_invert(root / "docInvert"),
        para_invert(root / "paraInvert"),
        para_distribute_shard(root / "paraDistributeShard"),
        para_distribute(root / "paraDistribute"),
        doc_restore(root / "docRestore"),
        obj_compute(root / "objCompute"),
        grad_compute(root / "gradCompute"),
        para_update(root / "paraUpdate"),
        reports(root / "reports"),
        test_output(root / "testOutput") {}
};

void reset(const fs::path& dir) { fs::remove_all(dir); }

double stats_sum(const std::vector<std::pair<std::string, mr::JobStats>>& js) {
  double total = 0;
  for (const auto& [name, stats] : js) total += stats.wall_time_sec;
  return total;
}

}  // namespace

std::vector<IterationReport> train(const fs::path& train_input,
                                   const fs::path& output_root,
                                   const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  require_fresh(output_root);
  if (cfg.engine.work_dir.empty()) {
    cfg.engine.work_dir = output_root / "work";
  }
  StageDirs dirs(output_root);
  fs::create_directories(dirs.reports);

  std::vector<IterationReport> reports;
  {
    IterationReport setup;
    setup.iteration = 0;
    setup.job_stats.emplace_back(
        "initParameters", init_parameters(train_input, dirs.para_value, cfg));
    setup.job_stats.emplace_back(
        "invertDocumentsSharding",
        invert_documents_sharding(train_input, dirs.doc_invert, cfg));
    setup.job_stats.emplace_back(
        "invertParameters",
        invert_parameters(dirs.doc_invert, dirs.para_invert, cfg));
    setup.param_count = mr::count_lines(dirs.para_value);
    setup.wall_time_sec = stats_sum(setup.job_stats);
    write_report(setup, dirs.reports / "iter-0.txt");
    reports.push_back(std::move(setup));
  }

  std::optional<double> previous_objective;
  for (std::size_t t = 1; t <= cfg.hyper.max_iter; ++t) {
    IterationReport report;
    report.iteration = t;

    reset(dirs.para_distribute_shard);
    reset(dirs.para_distribute);
    reset(dirs.doc_restore);
    reset(dirs.obj_compute);
    reset(dirs.grad_compute);
    reset(dirs.para_update);

    report.job_stats.emplace_back(
        "distributeParametersSharding",
        distribute_parameters_sharding(dirs.para_value, dirs.para_invert,
                                       dirs.para_distribute_shard, cfg,
                                       MissingParentPolicy::kError));
    report.job_stats.emplace_back(
        "distributeParameters",
        distribute_parameters(dirs.para_distribute_shard, dirs.doc_invert,
                              dirs.para_distribute, cfg));
    report.job_stats.emplace_back(
        "restoreDocuments",
        restore_documents(dirs.para_distribute, dirs.doc_restore, cfg));
    if (cfg.compute_objective) {
      auto [objective, stats] =
          compute_objective(dirs.doc_restore, dirs.obj_compute, cfg);
      report.objective = objective;
      report.job_stats.emplace_back("computeObjective", stats);
    }
    report.job_stats.emplace_back(
        "computeGradients",
        compute_gradients(dirs.doc_restore, dirs.grad_compute, cfg));
    report.job_stats.emplace_back(
        "updateParameters",
        update_parameters(dirs.para_value, dirs.grad_compute, dirs.para_update,
                          cfg.hyper.alpha, cfg));
    mr::replace_directory(dirs.para_update, dirs.para_value);

    report.param_count = mr::count_lines(dirs.para_value);
    report.wall_time_sec = stats_sum(report.job_stats);
    write_report(report, dirs.reports / ("iter-" + std::to_string(t) + ".txt"));
    bool converged = false;
    if (report.objective && previous_objective) {
      double denom = std::max(std::abs(*previous_objective), 1e-300);
      converged =
          std::abs(*report.objective - *previous_objective) / denom <
          cfg.hyper.tol;
    }
    previous_objective = report.objective;
    reports.push_back(std::move(report));
    if (converged) break;
  }
  return reports;
}

std::vector<std::pair<std::string, mr::JobStats>> classify(
    const fs::path& test_input, const fs::path& model_dir,
    const fs::path& output_root, const PipelineConfig& raw) {
  auto cfg = normalized(raw);
  if (!fs::exists(model_dir) || mr::expand_inputs({model_dir}).empty()) {
    throw std::runtime_error("model directory missing or empty: " +
                             model_dir.string());
  }
  require_fresh(output_root);
  if (cfg.engine.work_dir.empty()) {
    cfg.engine.work_dir = output_root / "work";
  }
  StageDirs dirs(output_root);

  std::vector<std::pair<std::string, mr::JobStats>> stats;
  stats.emplace_back(
      "invertDocumentsSharding",
      invert_documents_sharding(test_input, dirs.doc_invert, cfg));
  stats.emplace_back(
      "invertParameters",
      invert_parameters(dirs.doc_invert, dirs.para_invert, cfg));
  // Unknown test features resolve to theta = 0.
  stats.emplace_back(
      "distributeParametersSharding",
      distribute_parameters_sharding(model_dir, dirs.para_invert,
                                     dirs.para_distribute_shard, cfg,
                                     MissingParentPolicy::kZero));
  stats.emplace_back(
      "distributeParameters",
      distribute_parameters(dirs.para_distribute_shard, dirs.doc_invert,
                            dirs.para_distribute, cfg));
  stats.emplace_back(
      "restoreDocuments",
      restore_documents(dirs.para_distribute, dirs.doc_restore, cfg));
  stats.emplace_back("logisticTest",
                     run(cfg, logistic_test_spec(cfg), {dirs.doc_restore},
                         dirs.test_output));
  return stats;
}

// ---------------------------------------------------------------------------
// Evaluation

Evaluation evaluate(const fs::path& predictions) {
  auto lines = mr::read_lines(predictions);
  if (lines.empty()) {
    throw std::runtime_error("no predictions in " + predictions.string());
  }
  Evaluation ev;
  std::uint64_t actual[2] = {0, 0};
  std::uint64_t predicted[2] = {0, 0};
  std::uint64_t hits[2] = {0, 0};
  for (const auto& line : lines) {
    auto t1 = line.find('\t');
    auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos) {
      throw records::ParseError("malformed prediction line: \"" + line + "\"");
    }
    int label = records::parse_label(
        std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    int pred = records::parse_label(std::string_view(line).substr(t2 + 1));
    actual[label] += 1;
    predicted[pred] += 1;
    if (label == pred) hits[label] += 1;
  }
  auto fill = [&](int cls) {
    ClassMetrics m;
    m.actual = actual[cls];
    m.predicted = predicted[cls];
    m.hits = hits[cls];
    m.precision = m.predicted == 0 ? 0.0 : double(m.hits) / double(m.predicted);
    m.recall = m.actual == 0 ? 0.0 : double(m.hits) / double(m.actual);
    m.f1 = (m.precision + m.recall) == 0
               ? 0.0
               : 2 * m.precision * m.recall / (m.precision + m.recall);
    return m;
  };
  ev.positive = fill(1);
  ev.negative = fill(0);
  ev.macro_precision = (ev.positive.precision + ev.negative.precision) / 2;
  ev.macro_recall = (ev.positive.recall + ev.negative.recall) / 2;
  ev.macro_f1 = (ev.positive.f1 + ev.negative.f1) / 2;
  ev.total = lines.size();
  ev.correct = hits[0] + hits[1];
  ev.accuracy = double(ev.correct) / double(ev.total);
  return ev;
}

// ---------------------------------------------------------------------------
// Helpers

lr::ParameterVector load_parameters(const fs::path& para_dir) {
  lr::ParameterVector params;
  for (const auto& line : mr::read_lines(para_dir)) {
    auto r = records::parse_parameter(line);
    params[r.feature] = r.value;
  }
  return params;
}

std::map<std::string, double> load_gradients(const fs::path& grad_dir) {
  std::map<std::string, double> grads;
  for (const auto& line : mr::read_lines(grad_dir)) {
    auto r = records::parse_gradient(line);
    grads[r.feature] = r.grad;
  }
  return grads;
}

void write_report(const IterationReport& report, const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "iteration " << report.iteration << '\n';
  if (report.objective) {
    out << "objective " << records::format_real(*report.objective) << '\n';
  }
  out << "paramCount " << report.param_count << '\n';
  for (const auto& [name, s] : report.job_stats) {
    out << "job " << name << " mapTasks " << s.map_tasks << " reduceTasks "
        << s.reduce_tasks << " recordsIn " << s.records_in << " recordsOut "
        << s.records_out << " shuffledRecords " << s.shuffled_records
        << " localRecords " << s.local_records << " bytesShuffled "
        << s.bytes_shuffled << '\n';
    out << "jobtime " << name << " wallTimeSec "
        << records::format_real(s.wall_time_sec) << " perTaskTimesSec ";
    for (std::size_t i = 0; i < s.per_task_times_sec.size(); ++i) {
      if (i > 0) out << ',';
      out << records::format_real(s.per_task_times_sec[i]);
    }
    out << '\n';
  }
}

}  // namespace dpmr::pipeline
