#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// A local, parallel, file-backed map-reduce engine. One job reads text files
// ("key<TAB>value" or raw lines), runs mapper / optional combiner / reducer
// stages with a deterministic shuffle, and writes part-r-NNNNN files plus a
// _STATS summary. Output bytes are invariant under the worker count: map
// tasks are defined by input splits, every sort order is fixed (key bytes,
// then value bytes), and part files are sorted before they are finalized.

namespace dpmr::mr {

class JobError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Emitter {
 public:
  virtual ~Emitter() = default;
  virtual void emit(std::string key, std::string value) = 0;
};

struct MapInput {
  std::size_t split_index = 0;  // ordinal of the input split
  std::size_t line_index = 0;   // line ordinal within the split
  std::string_view line;        // whole input line
};

using MapFn = std::function<void(const MapInput&, Emitter&)>;
// Reducers and combiners see each key with its values sorted ascending by
// bytes, which pins the fold order of any arithmetic they do.
using ReduceFn = std::function<void(const std::string& key,
                                    const std::vector<std::string>& values,
                                    Emitter&)>;
using PartitionFn = std::function<std::size_t(std::string_view key,
                                              std::size_t num_reducers)>;

// FNV-1a, 64-bit. The partitioner must hash identically on every platform,
// so no std::hash here.
std::uint64_t fnv1a64(std::string_view bytes);
std::size_t default_partition(std::string_view key, std::size_t num_reducers);

struct JobSpec {
  std::string name;
  MapFn map;
  ReduceFn combine;  // optional; applied once per map task's output
  ReduceFn reduce;   // required unless map_only
  PartitionFn partition;  // defaults to default_partition
  std::size_t num_reducers = 1;
  bool map_only = false;
};

struct JobStats {
  std::size_t map_tasks = 0;
  std::size_t reduce_tasks = 0;
  std::uint64_t records_in = 0;
  std::uint64_t records_out = 0;
  std::uint64_t bytes_shuffled = 0;
  std::uint64_t shuffled_records = 0;
  // Records whose destination reducer equals the producing map task's
  // co-located reducer (task t lives with reducer t mod num_reducers); the
  // desk-scale stand-in for node locality.
  std::uint64_t local_records = 0;
  double wall_time_sec = 0;
  std::vector<double> per_task_times_sec;  // map tasks, then reduce tasks

  double local_fraction() const {
    return shuffled_records == 0
               ? 0.0
               : double(local_records) / double(shuffled_records);
  }
};

struct EngineConfig {
  std::size_t workers = 1;              // max concurrent tasks
  std::size_t split_size_bytes = 1 << 20;
  std::filesystem::path work_dir;       // spill files live here
  bool keep_intermediates = false;
};

// A run of whole lines of one file: byte range [begin, end).
struct InputSplit {
  std::filesystem::path path;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

// Expands directories to their contained part-* files, sorted by path.
// Plain file arguments pass through. Missing paths throw JobError.
std::vector<std::filesystem::path> expand_inputs(
    const std::vector<std::filesystem::path>& inputs);

// Splits inputs into line-aligned partitions of at least split_size_bytes
// (except the last per file). Deterministic: files sorted by path, then
// offsets ascending.
std::vector<InputSplit> split_inputs(
    const std::vector<std::filesystem::path>& inputs,
    std::size_t split_size_bytes);

// Runs one job. The output directory must not exist or be empty; on failure
// partial output is deleted and a JobError names the task and offending
// input. Output: part-r-NNNNN (or part-m-NNNNN for map-only jobs), each
// sorted by line bytes, plus a _STATS file.
JobStats run_job(const JobSpec& spec,
                 const std::vector<std::filesystem::path>& inputs,
                 const std::filesystem::path& output_dir,
                 const EngineConfig& config);

// Atomically replaces directory dst with src (rename swap; src is consumed).
void replace_directory(const std::filesystem::path& src,
                       const std::filesystem::path& dst);

// All non-empty lines of a file, or of every part-* file of a directory in
// sorted path order.
std::vector<std::string> read_lines(const std::filesystem::path& file_or_dir);

std::uint64_t count_lines(const std::filesystem::path& file_or_dir);

void write_stats_file(const JobStats& stats, const std::string& job_name,
                      const std::filesystem::path& output_dir);

}  // namespace dpmr::mr
