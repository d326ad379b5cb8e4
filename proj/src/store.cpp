#include "gateflow/store.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include "gateflow/error.hpp"
#include "gateflow/json_value.hpp"

namespace gateflow::store {

namespace {

using Clock = std::chrono::steady_clock;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::StoreIO, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_sibling(const fs::path& path) {
  std::ostringstream ss;
  ss << path.filename().string() << ".tmp." << std::this_thread::get_id();
  return path.parent_path() / ss.str();
}

fs::path run_dir(const fs::path& root, const std::string& run_id) { return root / "runs" / run_id; }

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  try {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = temp_sibling(path);
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.flush();
      if (!out) throw Error(ErrorCode::StoreIO, "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::StoreIO, e.what());
  }
}

void append_file_atomic(const fs::path& path, const std::string& content) {
  try {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = temp_sibling(path);
    if (fs::exists(path)) {
      fs::copy_file(path, tmp, fs::copy_options::overwrite_existing);
    }
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::app);
      out << content;
      out.flush();
      if (!out) throw Error(ErrorCode::StoreIO, "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::StoreIO, e.what());
  }
}

std::string encode_record(const MetricRecord& r) {
  std::string out = "{\"c\":";
  append_json(out, r.component);
  out += ",\"t\":";
  append_json(out, r.tag);
  out += ",\"s\":";
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, r.step);
  out.append(buf, end);
  out += ",\"w\":";
  append_json(out, Value(r.wall_time));
  out += ",\"v\":";
  append_json(out, r.value);
  out += '}';
  return out;
}

MetricRecord decode_record(const std::string& run_id, const std::string& line) {
  try {
    auto j = ordered_json::parse(line);
    MetricRecord r;
    r.run_id = run_id;
    r.component = j.at("c").get<std::string>();
    r.tag = j.at("t").get<std::string>();
    r.step = j.at("s").get<std::uint64_t>();
    r.wall_time = j.at("w").get<double>();
    r.value = value_from_json(j.at("v"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::StoreIO, "malformed record in run " + run_id + ": " + e.what());
  }
}

std::string encode_meta(const RunMeta& m) {
  ordered_json j;
  j["run_id"] = m.run_id;
  j["experiment"] = m.experiment;
  j["start_time"] = m.start_time;
  j["seed"] = m.seed;
  j["args"] = to_json(m.args);
  j["outcome"] = m.outcome;
  j["records"] = m.records;
  j["spooled"] = m.spooled;
  j["write_failures"] = m.write_failures;
  j["dropped"] = m.dropped;
  return dump_json(j) + "\n";
}

RunMeta decode_meta(const std::string& text) {
  try {
    auto j = ordered_json::parse(text);
    RunMeta m;
    m.run_id = j.at("run_id").get<std::string>();
    m.experiment = j.value("experiment", "");
    m.start_time = j.value("start_time", "");
    m.seed = j.value("seed", std::int64_t{0});
    if (j.contains("args")) m.args = args_from_json(j["args"]);
    m.outcome = j.value("outcome", "");
    m.records = j.value("records", std::uint64_t{0});
    m.spooled = j.value("spooled", std::uint64_t{0});
    m.write_failures = j.value("write_failures", std::uint64_t{0});
    m.dropped = j.value("dropped", std::uint64_t{0});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::StoreIO, std::string("malformed meta.json: ") + e.what());
  }
}

std::string new_run_id() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", &tm);
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char out[64];
  std::snprintf(out, sizeof out, "%s%03dZ-%012llx", stamp, static_cast<int>(ms),
                static_cast<unsigned long long>(rng() & 0xffffffffffffULL));
  return out;
}

namespace detail {

struct Pending {
  MetricRecord record;
  Clock::time_point enqueued;
};

struct Partition {
  std::mutex mu;
  std::condition_variable data_cv;   // writer waits for records
  std::condition_variable space_cv;  // producers wait for capacity
  std::condition_variable committed_cv;
  std::deque<Pending> queue;
  bool closing = false;
  std::uint64_t enqueued = 0;
  std::uint64_t committed = 0;
  std::uint64_t urgent_target = 0;
  std::thread thread;
};

struct RunState {
  fs::path primary;
  fs::path spool;
  RunMeta meta;
  WriterOptions opts;
  Clock::time_point t0 = Clock::now();
  std::atomic<bool> closed{false};
  std::atomic<bool> spooling{false};

  std::mutex commit_mu;
  std::vector<std::size_t> primary_sizes;
  std::vector<std::size_t> spool_sizes;

  std::vector<std::unique_ptr<Partition>> parts;

  std::mutex proxies_mu;
  std::map<std::string, std::shared_ptr<ProxyState>> proxies;

  std::mutex close_mu;
  std::optional<RunMeta> final_meta;

  void commit(std::vector<MetricRecord>& batch);
  void writer_loop(Partition& p);
  void push(std::size_t part, const std::string& component, const std::string& tag, std::uint64_t step,
            Value value, Clock::time_point now);
  void write_meta(const RunMeta& m);
};

struct ProxyState {
  std::string component;
  std::size_t partition = 0;
  std::weak_ptr<RunState> run;
  std::mutex mu;
  std::map<std::string, std::uint64_t> steps;
};

void RunState::push(std::size_t part, const std::string& component, const std::string& tag, std::uint64_t step,
                    Value value, Clock::time_point now) {
  Partition& p = *parts[part];
  std::unique_lock lk(p.mu);
  p.space_cv.wait(lk, [&] { return p.closing || p.queue.size() < opts.queue_capacity; });
  if (p.closing) throw Error(ErrorCode::RunClosed, "run " + meta.run_id + " is closed");
  double wall = std::chrono::duration<double>(now - t0).count();
  p.queue.push_back({MetricRecord{{}, component, tag, step, wall, std::move(value)}, now});
  ++p.enqueued;
  if (p.queue.size() >= opts.chunk || p.queue.size() == 1) p.data_cv.notify_one();
}

void RunState::commit(std::vector<MetricRecord>& batch) {
  if (opts.flush_delay.count() > 0) std::this_thread::sleep_for(opts.flush_delay);
  std::string content;
  for (const auto& r : batch) content += encode_record(r) + "\n";

  std::lock_guard g(commit_mu);
  if (!spooling.load()) {
    try {
      append_file_atomic(run_dir(primary, meta.run_id) / "metrics.ndjson", content);
      primary_sizes.push_back(batch.size());
      meta.records += batch.size();
      return;
    } catch (const Error&) {
      ++meta.write_failures;
      spooling = true;
    }
  }
  try {
    append_file_atomic(run_dir(spool, meta.run_id) / "metrics.ndjson", content);
    spool_sizes.push_back(batch.size());
    meta.spooled += batch.size();
  } catch (const Error&) {
    ++meta.write_failures;
    meta.dropped += batch.size();
  }
}

void RunState::writer_loop(Partition& p) {
  std::unique_lock lk(p.mu);
  while (true) {
    auto due = [&] {
      if (p.queue.empty()) return false;
      return p.queue.size() >= opts.chunk || p.closing || p.urgent_target > p.committed ||
             Clock::now() >= p.queue.front().enqueued + opts.interval;
    };
    while (!due()) {
      if (p.closing && p.queue.empty()) return;
      if (p.queue.empty()) {
        p.data_cv.wait(lk);
      } else {
        p.data_cv.wait_until(lk, p.queue.front().enqueued + opts.interval);
      }
    }
    std::size_t n = std::min(opts.chunk, p.queue.size());
    std::vector<MetricRecord> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(std::move(p.queue.front().record));
      p.queue.pop_front();
    }
    p.space_cv.notify_all();
    lk.unlock();
    commit(batch);
    lk.lock();
    p.committed += n;
    p.committed_cv.notify_all();
  }
}

void RunState::write_meta(const RunMeta& m) {
  if (!spooling.load()) {
    try {
      write_file_atomic(run_dir(primary, m.run_id) / "meta.json", encode_meta(m));
      return;
    } catch (const Error&) {
      spooling = true;
    }
  }
  write_file_atomic(run_dir(spool, m.run_id) / "meta.json", encode_meta(m));
}

}  // namespace detail

void ProxyLogger::record(const std::string& tag, Value value) {
  if (!state_) throw Error(ErrorCode::RunClosed, "logger is not attached to a run");
  auto run = state_->run.lock();
  if (!run || run->closed.load()) throw Error(ErrorCode::RunClosed, "record after run close");
  std::lock_guard lk(state_->mu);
  std::uint64_t step = state_->steps[tag]++;
  run->push(state_->partition, state_->component, tag, step, std::move(value), Clock::now());
}

const std::string& ProxyLogger::component() const {
  static const std::string empty;
  return state_ ? state_->component : empty;
}

RunHandle::RunHandle(std::shared_ptr<detail::RunState> state) : state_(std::move(state)) {}

RunHandle::~RunHandle() {
  try {
    close("abandoned");
  } catch (...) {
  }
}

const std::string& RunHandle::run_id() const { return state_->meta.run_id; }

ProxyLogger RunHandle::logger(const std::string& component) {
  std::lock_guard lk(state_->proxies_mu);
  auto& slot = state_->proxies[component];
  if (!slot) {
    slot = std::make_shared<detail::ProxyState>();
    slot->component = component;
    slot->partition = std::hash<std::string>{}(component) % state_->parts.size();
    slot->run = state_;
  }
  return ProxyLogger(slot);
}

void RunHandle::flush() {
  for (auto& part : state_->parts) {
    auto& p = *part;
    std::unique_lock lk(p.mu);
    std::uint64_t target = p.enqueued;
    p.urgent_target = std::max(p.urgent_target, target);
    p.data_cv.notify_all();
    p.committed_cv.wait(lk, [&] { return p.committed >= target || !p.thread.joinable(); });
  }
}

RunMeta RunHandle::close(const std::string& outcome) {
  std::lock_guard close_lk(state_->close_mu);
  if (state_->final_meta) return *state_->final_meta;
  state_->closed = true;
  for (auto& part : state_->parts) {
    {
      std::lock_guard lk(part->mu);
      part->closing = true;
    }
    part->data_cv.notify_all();
    part->space_cv.notify_all();
  }
  for (auto& part : state_->parts) {
    if (part->thread.joinable()) part->thread.join();
  }
  RunMeta final_meta;
  {
    std::lock_guard g(state_->commit_mu);
    state_->meta.outcome = outcome;
    final_meta = state_->meta;
  }
  state_->write_meta(final_meta);
  state_->final_meta = final_meta;
  return final_meta;
}

bool RunHandle::spooling() const { return state_->spooling.load(); }

std::vector<std::size_t> RunHandle::primary_flush_sizes() const {
  std::lock_guard g(state_->commit_mu);
  return state_->primary_sizes;
}

std::vector<std::size_t> RunHandle::spool_flush_sizes() const {
  std::lock_guard g(state_->commit_mu);
  return state_->spool_sizes;
}

ExperimentStore::ExperimentStore(fs::path primary_root, fs::path spool_root)
    : primary_(std::move(primary_root)), spool_(std::move(spool_root)) {}

std::unique_ptr<RunHandle> ExperimentStore::open_run(RunMeta meta, WriterOptions options) {
  if (options.chunk == 0) options.chunk = 1;
  if (options.writers == 0) options.writers = 1;
  if (options.queue_capacity == 0) options.queue_capacity = 1;
  if (meta.run_id.empty()) meta.run_id = new_run_id();
  if (meta.start_time.empty()) {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    meta.start_time = buf;
  }
  meta.outcome = "open";

  auto state = std::make_shared<detail::RunState>();
  state->primary = primary_;
  state->spool = spool_;
  state->meta = meta;
  state->opts = options;
  state->write_meta(meta);
  for (std::size_t i = 0; i < options.writers; ++i) state->parts.push_back(std::make_unique<detail::Partition>());
  for (auto& part : state->parts) {
    detail::Partition* p = part.get();
    detail::RunState* s = state.get();
    p->thread = std::thread([s, p] { s->writer_loop(*p); });
  }
  return std::unique_ptr<RunHandle>(new RunHandle(std::move(state)));
}

std::optional<RunMeta> load_meta(const fs::path& root, const std::string& run_id) {
  fs::path path = run_dir(root, run_id) / "meta.json";
  if (!fs::exists(path)) return std::nullopt;
  return decode_meta(read_file(path));
}

std::vector<RunMeta> list_runs(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::PrimaryUnavailable, root.string() + " is not a directory");
  std::vector<RunMeta> out;
  fs::path runs = root / "runs";
  if (!fs::is_directory(runs, ec)) return out;
  for (const auto& entry : fs::directory_iterator(runs)) {
    if (!entry.is_directory()) continue;
    if (auto m = load_meta(root, entry.path().filename().string())) out.push_back(std::move(*m));
  }
  std::sort(out.begin(), out.end(), [](const RunMeta& a, const RunMeta& b) { return a.run_id < b.run_id; });
  return out;
}

std::vector<MetricRecord> query(const fs::path& root, const QueryFilter& filter) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::PrimaryUnavailable, root.string() + " is not a directory");
  std::vector<MetricRecord> out;
  fs::path runs = root / "runs";
  if (!fs::is_directory(runs, ec)) return out;
  for (const auto& entry : fs::directory_iterator(runs)) {
    if (!entry.is_directory()) continue;
    std::string run_id = entry.path().filename().string();
    if (!filter.run_ids.empty() && !filter.run_ids.contains(run_id)) continue;
    if (filter.experiment) {
      auto meta = load_meta(root, run_id);
      if (!meta || meta->experiment != *filter.experiment) continue;
    }
    fs::path metrics = entry.path() / "metrics.ndjson";
    if (!fs::exists(metrics)) continue;
    for (const auto& line : split_lines(read_file(metrics))) {
      MetricRecord r = decode_record(run_id, line);
      if (filter.component && r.component != *filter.component) continue;
      if (filter.tag && r.tag != *filter.tag) continue;
      if (filter.step_min && r.step < *filter.step_min) continue;
      if (filter.step_max && r.step > *filter.step_max) continue;
      out.push_back(std::move(r));
    }
  }
  std::sort(out.begin(), out.end(), [](const MetricRecord& a, const MetricRecord& b) {
    return std::tie(a.run_id, a.component, a.tag, a.step) < std::tie(b.run_id, b.component, b.tag, b.step);
  });
  return out;
}

MergeReport merge_spool(const fs::path& primary_root, const fs::path& spool_root) {
  MergeReport report;
  std::error_code ec;
  fs::path spool_runs = spool_root / "runs";
  fs::create_directories(primary_root / "runs", ec);
  if (ec || !fs::is_directory(primary_root / "runs")) {
    throw Error(ErrorCode::PrimaryUnavailable, "cannot open " + (primary_root / "runs").string());
  }
  if (!fs::is_directory(spool_runs, ec)) return report;

  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(spool_runs))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());

  for (const auto& dir : dirs) {
    std::string run_id = dir.filename().string();
    fs::path target = run_dir(primary_root, run_id);
    using Key = std::tuple<std::string, std::string, std::uint64_t>;
    std::set<Key> seen;
    if (fs::exists(target / "metrics.ndjson")) {
      for (const auto& line : split_lines(read_file(target / "metrics.ndjson"))) {
        auto r = decode_record(run_id, line);
        seen.emplace(r.component, r.tag, r.step);
      }
    }
    std::string fresh;
    std::uint64_t merged = 0;
    std::uint64_t skipped = 0;
    if (fs::exists(dir / "metrics.ndjson")) {
      for (const auto& line : split_lines(read_file(dir / "metrics.ndjson"))) {
        auto r = decode_record(run_id, line);
        if (!seen.emplace(r.component, r.tag, r.step).second) {
          ++skipped;
          continue;
        }
        fresh += line + "\n";
        ++merged;
      }
    }
    try {
      if (!fresh.empty()) append_file_atomic(target / "metrics.ndjson", fresh);
      if (fs::exists(dir / "meta.json")) write_file_atomic(target / "meta.json", read_file(dir / "meta.json"));
    } catch (const Error& e) {
      throw Error(ErrorCode::PrimaryUnavailable, e.what());
    }
    fs::remove_all(dir);
    report.merged += merged;
    report.skipped += skipped;
  }
  return report;
}

}  // namespace gateflow::store
