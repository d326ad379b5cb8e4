#pragma once

// File-backed experiment store.
//
// Layout under a root directory:
//   runs/<run_id>/meta.json        one RunMeta object
//   runs/<run_id>/metrics.ndjson   {"c":component,"t":tag,"s":step,"w":wall_time,"v":value} per line
//   studies/<study_id>/study.json, trials.ndjson
//
// The spool root mirrors runs/ and receives chunks the primary could not take.
// Every file update is a temp-file write followed by an atomic rename.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gateflow/value.hpp"

namespace gateflow::store {

namespace fs = std::filesystem;

struct MetricRecord {
  std::string run_id;
  std::string component;
  std::string tag;
  std::uint64_t step = 0;
  double wall_time = 0;
  Value value;
};

struct RunMeta {
  std::string run_id;  // generated when empty
  std::string experiment;
  std::string start_time;  // ISO-8601 UTC, filled on open when empty
  std::int64_t seed = 0;
  ArgMap args;
  std::string outcome = "open";
  std::uint64_t records = 0;
  std::uint64_t spooled = 0;
  std::uint64_t write_failures = 0;
  std::uint64_t dropped = 0;
};

struct WriterOptions {
  std::size_t chunk = 256;
  std::chrono::milliseconds interval{1000};
  std::size_t queue_capacity = 65536;
  std::size_t writers = 1;
  // Simulated commit latency, applied before every flush.
  std::chrono::milliseconds flush_delay{0};
};

namespace detail {
struct RunState;
struct ProxyState;
}  // namespace detail

// Per-component recording handle. Steps count per (component, tag) from 0.
class ProxyLogger {
 public:
  ProxyLogger() = default;

  void record(const std::string& tag, Value value);
  const std::string& component() const;
  explicit operator bool() const noexcept { return static_cast<bool>(state_); }

 private:
  friend class RunHandle;
  explicit ProxyLogger(std::shared_ptr<detail::ProxyState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::ProxyState> state_;
};

// An open run: owns the record queues and the writer threads.
class RunHandle {
 public:
  ~RunHandle();
  RunHandle(const RunHandle&) = delete;
  RunHandle& operator=(const RunHandle&) = delete;

  const std::string& run_id() const;

  // Same proxy state for the same component name.
  ProxyLogger logger(const std::string& component);

  // Blocks until everything recorded so far is committed to primary or spool.
  void flush();

  // Flushes residual records, writes the final meta.json and rejects further
  // records with RunClosed. Idempotent; returns the final meta.
  RunMeta close(const std::string& outcome);

  bool spooling() const;
  std::vector<std::size_t> primary_flush_sizes() const;
  std::vector<std::size_t> spool_flush_sizes() const;

 private:
  friend class ExperimentStore;
  explicit RunHandle(std::shared_ptr<detail::RunState> state);
  std::shared_ptr<detail::RunState> state_;
};

struct QueryFilter {
  std::set<std::string> run_ids;  // empty = any
  std::optional<std::string> experiment;
  std::optional<std::string> component;
  std::optional<std::string> tag;
  std::optional<std::uint64_t> step_min;
  std::optional<std::uint64_t> step_max;
};

struct MergeReport {
  std::uint64_t merged = 0;
  std::uint64_t skipped = 0;
};

class ExperimentStore {
 public:
  ExperimentStore(fs::path primary_root, fs::path spool_root);

  const fs::path& primary_root() const noexcept { return primary_; }
  const fs::path& spool_root() const noexcept { return spool_; }

  std::unique_ptr<RunHandle> open_run(RunMeta meta, WriterOptions options = {});

 private:
  fs::path primary_;
  fs::path spool_;
};

// Sorted by (run_id, component, tag, step). Throws PrimaryUnavailable when the
// root cannot be read.
std::vector<MetricRecord> query(const fs::path& root, const QueryFilter& filter = {});

std::vector<RunMeta> list_runs(const fs::path& root);
std::optional<RunMeta> load_meta(const fs::path& root, const std::string& run_id);

// Moves spooled records into the primary, skipping (run, component, tag, step)
// duplicates, and empties the spool. PrimaryUnavailable leaves the spool as is.
MergeReport merge_spool(const fs::path& primary_root, const fs::path& spool_root);

std::string new_run_id();

// Building blocks shared with the study ledger.
void write_file_atomic(const fs::path& path, const std::string& content);
void append_file_atomic(const fs::path& path, const std::string& content);
std::string encode_record(const MetricRecord& r);
MetricRecord decode_record(const std::string& run_id, const std::string& line);
std::string encode_meta(const RunMeta& meta);
RunMeta decode_meta(const std::string& text);

}  // namespace gateflow::store
