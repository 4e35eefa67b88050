#include "dpmr/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>
#include <tuple>

#include "dpmr/records.hpp"

namespace dpmr::mr {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::size_t default_partition(std::string_view key, std::size_t num_reducers) {
  if (num_reducers == 0) throw JobError("num_reducers must be positive");
  return num_reducers == 1 ? 0 : std::size_t(fnv1a64(key) % num_reducers);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string part_name(const char* kind, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "part-%s-%05zu", kind, index);
  return buf;
}

void check_record(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::invalid_argument("empty record key");
  if (key.find('\t') != std::string::npos ||
      key.find('\n') != std::string::npos) {
    throw std::invalid_argument("record key contains tab or newline: \"" + key +
                                "\"");
  }
  if (value.find('\n') != std::string::npos) {
    throw std::invalid_argument("record value contains newline");
  }
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw JobError("cannot write file: " + path.string());
  return out;
}

std::ifstream open_for_read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw JobError("cannot read file: " + path.string());
  return in;
}

// ---------------------------------------------------------------------------
// Sorted runs of "key\tvalue" lines and their k-way merge.

struct Record {
  std::string key;
  std::string value;
};

bool record_less(const Record& a, const Record& b) {
  int c = a.key.compare(b.key);
  return c != 0 ? c < 0 : a.value < b.value;
}

// Buffers records, spills them as sorted run files once the buffer exceeds
// the byte threshold. Tracks record and byte totals across all runs.
class RunWriter {
 public:
  RunWriter(fs::path dir, std::string prefix, std::size_t threshold)
      : dir_(std::move(dir)), prefix_(std::move(prefix)),
        threshold_(std::max<std::size_t>(threshold, std::size_t(64) << 10)) {}

  void add(std::string key, std::string value) {
    records_ += 1;
    bytes_ += key.size() + value.size();
    buffered_ += key.size() + value.size() + 32;
    buf_.push_back(Record{std::move(key), std::move(value)});
    if (buffered_ >= threshold_) flush();
  }

  std::vector<fs::path> finish() {
    if (!buf_.empty()) flush();
    return std::move(runs_);
  }

  std::uint64_t records() const { return records_; }
  std::uint64_t bytes() const { return bytes_; }

 private:
  void flush() {
    std::sort(buf_.begin(), buf_.end(), record_less);
    fs::path path = dir_ / (prefix_ + "_s" + std::to_string(runs_.size()) + ".run");
    auto out = open_for_write(path);
    for (const auto& r : buf_) {
      out << r.key << '\t' << r.value << '\n';
    }
    out.close();
    if (!out) throw JobError("short write: " + path.string());
    runs_.push_back(std::move(path));
    buf_.clear();
    buffered_ = 0;
  }

  fs::path dir_;
  std::string prefix_;
  std::size_t threshold_;
  std::vector<Record> buf_;
  std::size_t buffered_ = 0;
  std::vector<fs::path> runs_;
  std::uint64_t records_ = 0;
  std::uint64_t bytes_ = 0;
};

class RunReader {
 public:
  explicit RunReader(const fs::path& path) : in_(open_for_read(path)) {}

  bool next() {
    while (std::getline(in_, line_)) {
      if (line_.empty()) continue;
      tab_ = line_.find('\t');
      if (tab_ == std::string::npos) throw JobError("corrupt run line: " + line_);
      return true;
    }
    return false;
  }

  std::string_view key() const { return std::string_view(line_).substr(0, tab_); }
  std::string_view value() const { return std::string_view(line_).substr(tab_ + 1); }

 private:
  std::ifstream in_;
  std::string line_;
  std::size_t tab_ = 0;
};

// Merges sorted runs in (key, value, run index) order, delivering each key's
// values ascending by bytes.
class KWayMerge {
 public:
  explicit KWayMerge(const std::vector<fs::path>& runs) {
    readers_.reserve(runs.size());
    for (const auto& p : runs) readers_.emplace_back(p);
    for (std::size_t i = 0; i < readers_.size(); ++i) {
      if (readers_[i].next()) heap_.push_back(i);
    }
    std::make_heap(heap_.begin(), heap_.end(), Greater{this});
  }

  bool next(std::string_view& key, std::string_view& value) {
    if (heap_.empty()) return false;
    std::pop_heap(heap_.begin(), heap_.end(), Greater{this});
    std::size_t i = heap_.back();
    key = readers_[i].key();
    value = readers_[i].value();
    current_ = i;
    return true;
  }

  // Call after consuming key/value views of the last next().
  void advance() {
    if (readers_[current_].next()) {
      std::push_heap(heap_.begin(), heap_.end(), Greater{this});
    } else {
      heap_.pop_back();
    }
  }

 private:
  struct Greater {
    KWayMerge* m;
    bool operator()(std::size_t a, std::size_t b) const {
      int c = m->readers_[a].key().compare(m->readers_[b].key());
      if (c != 0) return c > 0;
      c = m->readers_[a].value().compare(m->readers_[b].value());
      if (c != 0) return c > 0;
      return a > b;
    }
  };

  std::vector<RunReader> readers_;
  std::vector<std::size_t> heap_;
  std::size_t current_ = 0;
};

template <typename GroupFn>
void for_each_group(KWayMerge& merge, GroupFn&& fn) {
  std::string current_key;
  std::vector<std::string> values;
  std::string_view key;
  std::string_view value;
  while (merge.next(key, value)) {
    if (!values.empty() && key != current_key) {
      fn(current_key, values);
      values.clear();
    }
    if (values.empty()) current_key = std::string(key);
    values.emplace_back(value);
    merge.advance();
  }
  if (!values.empty()) fn(current_key, values);
}

// Reads whole lines of a sorted run; no key/value splitting, so lines may
// contain tabs.
class LineRunReader {
 public:
  explicit LineRunReader(const fs::path& path) : in_(open_for_read(path)) {}

  bool next() {
    while (std::getline(in_, line_)) {
      if (!line_.empty()) return true;
    }
    return false;
  }

  const std::string& line() const { return line_; }

 private:
  std::ifstream in_;
  std::string line_;
};

// Sorted final output files (part-r / part-m): buffers lines, spills sorted
// runs, merges them into the destination file.
class LineWriter {
 public:
  LineWriter(fs::path dir, std::string prefix, std::size_t threshold)
      : dir_(std::move(dir)), prefix_(std::move(prefix)),
        threshold_(std::max<std::size_t>(threshold, std::size_t(64) << 10)) {}

  void add(std::string line) {
    records_ += 1;
    buffered_ += line.size() + 32;
    buf_.push_back(std::move(line));
    if (buffered_ >= threshold_) flush();
  }

  // Writes all lines, sorted by bytes, to `path`.
  void finalize(const fs::path& path) {
    if (!runs_.empty() && !buf_.empty()) flush();
    auto out = open_for_write(path);
    if (runs_.empty()) {
      std::sort(buf_.begin(), buf_.end());
      for (const auto& l : buf_) out << l << '\n';
      buf_.clear();
    } else {
      std::vector<LineRunReader> readers;
      readers.reserve(runs_.size());
      for (const auto& p : runs_) readers.emplace_back(p);
      std::vector<std::size_t> heap;
      for (std::size_t i = 0; i < readers.size(); ++i) {
        if (readers[i].next()) heap.push_back(i);
      }
      auto greater = [&](std::size_t a, std::size_t b) {
        int c = readers[a].line().compare(readers[b].line());
        return c != 0 ? c > 0 : a > b;
      };
      std::make_heap(heap.begin(), heap.end(), greater);
      while (!heap.empty()) {
        std::pop_heap(heap.begin(), heap.end(), greater);
        std::size_t i = heap.back();
        out << readers[i].line() << '\n';
        if (readers[i].next()) {
          std::push_heap(heap.begin(), heap.end(), greater);
        } else {
          heap.pop_back();
        }
      }
    }
    out.close();
    if (!out) throw JobError("short write: " + path.string());
  }

  std::uint64_t records() const { return records_; }

 private:
  void flush() {
    std::sort(buf_.begin(), buf_.end());
    fs::path path = dir_ / (prefix_ + "_o" + std::to_string(runs_.size()) + ".run");
    auto out = open_for_write(path);
    for (const auto& l : buf_) out << l << '\n';
    out.close();
    if (!out) throw JobError("short write: " + path.string());
    runs_.push_back(std::move(path));
    buf_.clear();
    buffered_ = 0;
  }

  fs::path dir_;
  std::string prefix_;
  std::size_t threshold_;
  std::vector<std::string> buf_;
  std::size_t buffered_ = 0;
  std::vector<fs::path> runs_;
  std::uint64_t records_ = 0;
};

// ---------------------------------------------------------------------------
// Emitters

class MapEmitter : public Emitter {
 public:
  MapEmitter(const JobSpec& spec, fs::path dir, std::size_t task,
             std::size_t threshold)
      : spec_(spec), dir_(std::move(dir)), task_(task),
        threshold_(std::max<std::size_t>(threshold, std::size_t(64) << 10)) {
    spills_.resize(spec.num_reducers);
    records_.resize(spec.num_reducers, 0);
    bytes_.resize(spec.num_reducers, 0);
  }

  void emit(std::string key, std::string value) override {
    check_record(key, value);
    std::size_t bucket = spec_.partition(key, spec_.num_reducers);
    if (bucket >= spec_.num_reducers) {
      throw std::invalid_argument("partition index out of range for key \"" +
                                  key + "\"");
    }
    buffered_ += key.size() + value.size() + 40;
    buf_.emplace_back(std::uint32_t(bucket), std::move(key), std::move(value));
    if (buffered_ >= threshold_) flush();
  }

  // Sorted spill runs per bucket.
  std::vector<std::vector<fs::path>> finish() {
    if (!buf_.empty()) flush();
    return std::move(spills_);
  }

  std::uint64_t bucket_records(std::size_t b) const { return records_[b]; }
  std::uint64_t bucket_bytes(std::size_t b) const { return bytes_[b]; }

 private:
  void flush() {
    std::sort(buf_.begin(), buf_.end());
    std::size_t i = 0;
    while (i < buf_.size()) {
      std::uint32_t bucket = std::get<0>(buf_[i]);
      fs::path path = dir_ / ("m" + std::to_string(task_) + "_b" +
                              std::to_string(bucket) + "_s" +
                              std::to_string(spills_[bucket].size()) + ".run");
      auto out = open_for_write(path);
      for (; i < buf_.size() && std::get<0>(buf_[i]) == bucket; ++i) {
        const auto& key = std::get<1>(buf_[i]);
        const auto& value = std::get<2>(buf_[i]);
        out << key << '\t' << value << '\n';
        records_[bucket] += 1;
        bytes_[bucket] += key.size() + value.size();
      }
      out.close();
      if (!out) throw JobError("short write: " + path.string());
      spills_[bucket].push_back(std::move(path));
    }
    buf_.clear();
    buffered_ = 0;
  }

  const JobSpec& spec_;
  fs::path dir_;
  std::size_t task_;
  std::size_t threshold_;
  std::vector<std::tuple<std::uint32_t, std::string, std::string>> buf_;
  std::size_t buffered_ = 0;
  std::vector<std::vector<fs::path>> spills_;
  std::vector<std::uint64_t> records_;
  std::vector<std::uint64_t> bytes_;
};

// Combiner output: keys must stay in the bucket they were grouped under.
class CombineEmitter : public Emitter {
 public:
  CombineEmitter(const JobSpec& spec, std::size_t bucket, RunWriter& out)
      : spec_(spec), bucket_(bucket), out_(out) {}

  void emit(std::string key, std::string value) override {
    check_record(key, value);
    if (spec_.partition(key, spec_.num_reducers) != bucket_) {
      throw std::invalid_argument(
          "combiner moved key \"" + key + "\" out of its partition");
    }
    out_.add(std::move(key), std::move(value));
  }

 private:
  const JobSpec& spec_;
  std::size_t bucket_;
  RunWriter& out_;
};

class OutputEmitter : public Emitter {
 public:
  explicit OutputEmitter(LineWriter& out) : out_(out) {}

  void emit(std::string key, std::string value) override {
    check_record(key, value);
    std::string line;
    line.reserve(key.size() + value.size() + 1);
    line += key;
    line += '\t';
    line += value;
    out_.add(std::move(line));
  }

 private:
  LineWriter& out_;
};

// ---------------------------------------------------------------------------
// Input handling

void for_each_line_of_file(const fs::path& path,
                           const std::function<void(std::string_view)>& fn) {
  auto in = open_for_read(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) fn(line);
  }
}

struct SplitReader {
  // Streams the non-empty lines of one split.
  template <typename Fn>
  static void read(const InputSplit& split, Fn&& fn) {
    auto in = open_for_read(split.path);
    in.seekg(std::streamoff(split.begin));
    std::uint64_t pos = split.begin;
    std::string line;
    while (pos < split.end && std::getline(in, line)) {
      pos += line.size() + 1;
      if (!line.empty()) fn(std::string_view(line));
    }
  }
};

void run_tasks(std::size_t n_tasks, std::size_t workers,
               const std::function<void(std::size_t)>& task) {
  if (n_tasks == 0) return;
  std::vector<std::exception_ptr> errors(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t t = next.fetch_add(1);
      if (t >= n_tasks) break;
      try {
        task(t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  std::size_t n_threads = std::min(workers, n_tasks);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct MapTaskResult {
  std::uint64_t records_in = 0;
  std::uint64_t shuffled_records = 0;
  std::uint64_t bytes_shuffled = 0;
  std::uint64_t local_records = 0;
  std::uint64_t records_out = 0;  // map-only jobs
  double seconds = 0;
  std::vector<std::vector<fs::path>> runs;  // per bucket
};

}  // namespace

// ---------------------------------------------------------------------------

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& input : inputs) {
    if (fs::is_directory(input)) {
      std::vector<fs::path> here;
      for (const auto& entry : fs::directory_iterator(input)) {
        if (entry.is_regular_file() &&
            entry.path().filename().string().rfind("part-", 0) == 0) {
          here.push_back(entry.path());
        }
      }
      std::sort(here.begin(), here.end());
      files.insert(files.end(), here.begin(), here.end());
    } else if (fs::is_regular_file(input)) {
      files.push_back(input);
    } else {
      throw JobError("input does not exist: " + input.string());
    }
  }
  return files;
}

std::vector<InputSplit> split_inputs(const std::vector<fs::path>& inputs,
                                     std::size_t split_size_bytes) {
  if (split_size_bytes == 0) throw JobError("split size must be positive");
  auto files = expand_inputs(inputs);
  std::sort(files.begin(), files.end());
  std::vector<InputSplit> splits;
  for (const auto& file : files) {
    std::uint64_t size = fs::file_size(file);
    if (size == 0) continue;
    auto in = open_for_read(file);
    std::string line;
    std::uint64_t pos = 0;
    std::uint64_t begin = 0;
    while (std::getline(in, line)) {
      pos = std::min<std::uint64_t>(pos + line.size() + 1, size);
      if (pos - begin >= split_size_bytes) {
        splits.push_back(InputSplit{file, begin, pos});
        begin = pos;
      }
    }
    if (pos > begin) splits.push_back(InputSplit{file, begin, pos});
  }
  return splits;
}

JobStats run_job(const JobSpec& spec, const std::vector<fs::path>& inputs,
                 const fs::path& output_dir, const EngineConfig& config) {
  if (!spec.map) throw JobError("job '" + spec.name + "' has no map function");
  if (spec.map_only && (spec.combine || spec.reduce)) {
    throw JobError("map-only job '" + spec.name + "' must not have reducers");
  }
  if (!spec.map_only && !spec.reduce) {
    throw JobError("job '" + spec.name + "' has no reduce function");
  }
  if (spec.num_reducers == 0) {
    throw JobError("job '" + spec.name + "' needs at least one reducer");
  }
  if (config.workers == 0) throw JobError("workers must be positive");
  if (fs::exists(output_dir) && !fs::is_empty(output_dir)) {
    throw JobError("output path already exists: " + output_dir.string());
  }

  PartitionFn partition = spec.partition ? spec.partition : default_partition;
  JobSpec effective = spec;
  effective.partition = partition;

  fs::path job_dir = config.work_dir / spec.name;
  fs::remove_all(job_dir);
  fs::create_directories(job_dir);
  fs::create_directories(output_dir);

  auto job_start = Clock::now();
  JobStats stats;
  bool ok = false;
  struct Cleanup {
    const fs::path& job_dir;
    const fs::path& output_dir;
    const bool& keep;
    const bool& ok;
    ~Cleanup() {
      if (!ok) {
        std::error_code ec;
        fs::remove_all(output_dir, ec);
      }
      if (!ok || !keep) {
        std::error_code ec;
        fs::remove_all(job_dir, ec);
      }
    }
  } cleanup{job_dir, output_dir, config.keep_intermediates, ok};

  auto splits = split_inputs(inputs, config.split_size_bytes);
  stats.map_tasks = splits.size();

  std::vector<MapTaskResult> map_results(splits.size());

  run_tasks(splits.size(), config.workers, [&](std::size_t t) {
    auto task_start = Clock::now();
    MapTaskResult& result = map_results[t];
    std::string current;
    try {
      if (effective.map_only) {
        LineWriter out(job_dir, "m" + std::to_string(t),
                       config.split_size_bytes);
        OutputEmitter emitter(out);
        std::size_t line_index = 0;
        SplitReader::read(splits[t], [&](std::string_view line) {
          current.assign(line);
          effective.map(MapInput{t, line_index++, line}, emitter);
          result.records_in += 1;
        });
        out.finalize(output_dir / part_name("m", t));
        result.records_out = out.records();
      } else {
        MapEmitter emitter(effective, job_dir, t, config.split_size_bytes);
        std::size_t line_index = 0;
        SplitReader::read(splits[t], [&](std::string_view line) {
          current.assign(line);
          effective.map(MapInput{t, line_index++, line}, emitter);
          result.records_in += 1;
        });
        auto spills = emitter.finish();
        result.runs.resize(effective.num_reducers);
        for (std::size_t b = 0; b < effective.num_reducers; ++b) {
          if (effective.combine) {
            RunWriter combined(job_dir,
                               "c" + std::to_string(t) + "_b" + std::to_string(b),
                               config.split_size_bytes);
            if (!spills[b].empty()) {
              KWayMerge merge(spills[b]);
              CombineEmitter combine_out(effective, b, combined);
              for_each_group(merge, [&](const std::string& key,
                                        const std::vector<std::string>& values) {
                current = key;
                effective.combine(key, values, combine_out);
              });
            }
            result.runs[b] = combined.finish();
            result.shuffled_records += combined.records();
            result.bytes_shuffled += combined.bytes();
            if (b == t % effective.num_reducers) {
              result.local_records += combined.records();
            }
            for (const auto& p : spills[b]) fs::remove(p);
          } else {
            result.runs[b] = spills[b];
            result.shuffled_records += emitter.bucket_records(b);
            result.bytes_shuffled += emitter.bucket_bytes(b);
            if (b == t % effective.num_reducers) {
              result.local_records += emitter.bucket_records(b);
            }
          }
        }
      }
    } catch (const std::exception& e) {
      throw JobError("job '" + effective.name + "': map task " +
                     std::to_string(t) + " failed on \"" + current +
                     "\": " + e.what());
    }
    result.seconds = seconds_since(task_start);
  });

  for (const auto& r : map_results) {
    stats.records_in += r.records_in;
    stats.shuffled_records += r.shuffled_records;
    stats.bytes_shuffled += r.bytes_shuffled;
    stats.local_records += r.local_records;
    stats.records_out += r.records_out;
    stats.per_task_times_sec.push_back(r.seconds);
  }

  if (!effective.map_only) {
    // All map tasks have finished (run_tasks joins): the shuffle barrier.
    stats.reduce_tasks = effective.num_reducers;
    std::vector<std::uint64_t> reduce_records(effective.num_reducers, 0);
    std::vector<double> reduce_seconds(effective.num_reducers, 0);
    run_tasks(effective.num_reducers, config.workers, [&](std::size_t r) {
      auto task_start = Clock::now();
      std::string current;
      try {
        std::vector<fs::path> runs;
        for (const auto& m : map_results) {
          if (r < m.runs.size()) {
            runs.insert(runs.end(), m.runs[r].begin(), m.runs[r].end());
          }
        }
        LineWriter out(job_dir, "r" + std::to_string(r),
                       config.split_size_bytes);
        OutputEmitter emitter(out);
        KWayMerge merge(runs);
        for_each_group(merge, [&](const std::string& key,
                                  const std::vector<std::string>& values) {
          current = key;
          effective.reduce(key, values, emitter);
        });
        out.finalize(output_dir / part_name("r", r));
        reduce_records[r] = out.records();
      } catch (const std::exception& e) {
        throw JobError("job '" + effective.name + "': reduce task " +
                       std::to_string(r) + " failed on key \"" + current +
                       "\": " + e.what());
      }
      reduce_seconds[r] = seconds_since(task_start);
    });
    for (std::size_t r = 0; r < effective.num_reducers; ++r) {
      stats.records_out += reduce_records[r];
      stats.per_task_times_sec.push_back(reduce_seconds[r]);
    }
  }

  stats.wall_time_sec = seconds_since(job_start);
  write_stats_file(stats, effective.name, output_dir);
  ok = true;
  return stats;
}

void replace_directory(const fs::path& src, const fs::path& dst) {
  fs::path old = dst;
  old += ".old";
  fs::remove_all(old);
  if (fs::exists(dst)) fs::rename(dst, old);
  fs::rename(src, dst);
  fs::remove_all(old);
}

std::vector<std::string> read_lines(const fs::path& file_or_dir) {
  std::vector<std::string> lines;
  auto files = expand_inputs({file_or_dir});
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    for_each_line_of_file(f, [&](std::string_view line) {
      lines.emplace_back(line);
    });
  }
  return lines;
}

std::uint64_t count_lines(const fs::path& file_or_dir) {
  std::uint64_t n = 0;
  auto files = expand_inputs({file_or_dir});
  for (const auto& f : files) {
    for_each_line_of_file(f, [&](std::string_view) { ++n; });
  }
  return n;
}

void write_stats_file(const JobStats& stats, const std::string& job_name,
                      const fs::path& output_dir) {
  auto out = open_for_write(output_dir / "_STATS");
  out << "\"name\": \"" << job_name << "\"\n";
  out << "\"mapTasks\": " << stats.map_tasks << '\n';
  out << "\"reduceTasks\": " << stats.reduce_tasks << '\n';
  out << "\"recordsIn\": " << stats.records_in << '\n';
  out << "\"recordsOut\": " << stats.records_out << '\n';
  out << "\"bytesShuffled\": " << stats.bytes_shuffled << '\n';
  out << "\"shuffledRecords\": " << stats.shuffled_records << '\n';
  out << "\"localRecords\": " << stats.local_records << '\n';
  out << "\"wallTimeSec\": " << records::format_real(stats.wall_time_sec) << '\n';
  out << "\"perTaskTimesSec\": [";
  for (std::size_t i = 0; i < stats.per_task_times_sec.size(); ++i) {
    if (i > 0) out << ", ";
    out << records::format_real(stats.per_task_times_sec[i]);
  }
  out << "]\n";
}

}  // namespace dpmr::mr
