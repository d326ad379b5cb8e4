#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <tuple>

#include "gateflow/component.hpp"
#include "gateflow/error.hpp"

namespace gateflow {

namespace {

using Clock = std::chrono::steady_clock;

const dsl::CalleeTable& no_callees() {
  static const dsl::CalleeTable empty;
  return empty;
}

void check_native(const NativeBody& body, const std::set<std::string>& io_names, const std::string& component,
                  bool is_init) {
  if (!body.fn) throw Error(ErrorCode::InvalidState, "native body of '" + component + "' has no function");
  for (const auto& r : body.reads) {
    if (!io_names.contains(r)) {
      throw Error(ErrorCode::UnknownInternalName, "'" + r + "' is not in the io map of '" + component + "'", {r});
    }
  }
  if (is_init && !body.reads.empty()) {
    throw Error(ErrorCode::InitReadsInput, "init body of '" + component + "' reads '" + body.reads.front() + "'",
                {body.reads.front()});
  }
  std::set<std::string> seen;
  for (const auto& w : body.writes) {
    if (!io_names.contains(w)) {
      throw Error(ErrorCode::UnknownInternalName, "'" + w + "' is not in the io map of '" + component + "'", {w});
    }
    if (!seen.insert(w).second) throw Error(ErrorCode::DoubleWrite, "'" + w + "' is declared twice", {w});
  }
}

}  // namespace

Script script(std::string source) {
  dsl::Program program = dsl::parse(source);
  return Script{std::move(source), std::move(program)};
}

std::string Component::init_script() const {
  const auto* s = std::get_if<Script>(&def_.init);
  return s ? s->source : std::string();
}

std::string Component::step_script() const {
  const auto* s = std::get_if<Script>(&def_.step);
  return s ? s->source : std::string();
}

Component make_component(ComponentDef def, const std::optional<IOMap>& io_map_override) {
  if (def.name.empty()) throw Error(ErrorCode::InvalidIOMap, "component name must not be empty");
  Component c;
  c.default_map_ = def.io_map;
  if (io_map_override) {
    for (const auto& [internal, external] : *io_map_override) {
      auto it = def.io_map.find(internal);
      if (it == def.io_map.end()) {
        throw Error(ErrorCode::BadOverride,
                    "override key '" + internal + "' is not an internal name of '" + def.name + "'", {internal});
      }
      it->second = external;
    }
  }
  std::set<std::string> io_names;
  for (const auto& [internal, external] : def.io_map) {
    if (internal.empty() || external.empty()) {
      throw Error(ErrorCode::InvalidIOMap, "empty name in the io map of '" + def.name + "'");
    }
    io_names.insert(internal);
  }
  const dsl::CalleeTable& callees = def.callees ? *def.callees : no_callees();

  if (const auto* s = std::get_if<Script>(&def.step)) {
    dsl::IOSets io = dsl::validate(s->program, io_names, callees);
    c.reads_ = io.reads;
    c.writes_ = io.writes;
  } else if (const auto* n = std::get_if<NativeBody>(&def.step)) {
    check_native(*n, io_names, def.name, false);
    c.reads_.insert(n->reads.begin(), n->reads.end());
    c.writes_.insert(n->writes.begin(), n->writes.end());
  }
  if (const auto* s = std::get_if<Script>(&def.init)) {
    c.init_writes_ = dsl::validate_init(s->program, io_names, callees).writes;
  } else if (const auto* n = std::get_if<NativeBody>(&def.init)) {
    check_native(*n, io_names, def.name, true);
    c.init_writes_.insert(n->writes.begin(), n->writes.end());
  }

  std::map<std::string, std::string> writer_of;  // external -> internal
  std::set<std::string> all_writes = c.writes_;
  all_writes.insert(c.init_writes_.begin(), c.init_writes_.end());
  for (const auto& w : all_writes) {
    const std::string& ext = def.io_map.at(w);
    auto [it, fresh] = writer_of.emplace(ext, w);
    if (!fresh) {
      throw Error(ErrorCode::InvalidIOMap,
                  "'" + it->second + "' and '" + w + "' of '" + def.name + "' both write namespace '" + ext + "'",
                  {ext});
    }
  }
  c.def_ = std::move(def);
  return c;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Completed: return "completed";
    case Outcome::Stopped: return "stopped";
    case Outcome::Timeout: return "timeout";
    case Outcome::Error: return "error";
  }
  return "?";
}

std::string_view to_string(PendingOp op) { return op == PendingOp::Publish ? "publish" : "observe"; }

struct ComponentCollection::Runtime {
  struct Slot {
    std::mutex mu;
    std::optional<PendingOp> op;
    std::string ns;
    const Observer* observer = nullptr;
    const Subject* subject = nullptr;
    std::uint64_t mark = 0;
    Clock::time_point since;
    std::uint64_t seq = 0;
    bool live = true;
    std::uint64_t steps = 0;
    Trace trace;
  };

  ComponentCollection& owner;
  const RunOptions& options;
  std::vector<std::unique_ptr<Slot>> slots;

  std::mutex mu;
  std::condition_variable cv;
  std::size_t live = 0;
  bool timed_out = false;
  std::optional<ErrorCode> error_code;
  std::string error_message;

  Runtime(ComponentCollection& o, const RunOptions& opts) : owner(o), options(opts) {}

  void fail(ErrorCode code, const std::string& message) {
    {
      std::lock_guard lk(mu);
      if (timed_out || error_code) return;
      error_code = code;
      error_message = message;
    }
    owner.registry_->poison();
  }

  Value observe(Slot& slot, Observer& o) {
    {
      std::lock_guard lk(slot.mu);
      slot.op = PendingOp::Observe;
      slot.ns = o.name();
      slot.observer = &o;
      slot.subject = nullptr;
      slot.mark = o.last_consumed();
      slot.since = Clock::now();
    }
    Value v = o.observe(kNoTimeout);
    std::lock_guard lk(slot.mu);
    slot.op.reset();
    ++slot.seq;
    return v;
  }

  void publish(Slot& slot, Subject& s, const Value& v) {
    {
      std::lock_guard lk(slot.mu);
      slot.op = PendingOp::Publish;
      slot.ns = s.name();
      slot.subject = &s;
      slot.observer = nullptr;
      slot.mark = s.generation();
      slot.since = Clock::now();
    }
    s.publish(v, kNoTimeout);
    std::lock_guard lk(slot.mu);
    slot.op.reset();
    ++slot.seq;
  }

  void run_body(const Component& c, Slot& slot, bool is_init, StepContext& ctx) {
    const Body& body = is_init ? c.init_body() : c.step_body();
    auto& observers = owner.observers_.at(c.name());
    auto& subjects = owner.subjects_.at(c.name());
    std::map<std::string, Value> cache;  // by external namespace, one step only

    auto read = [&](const std::string& internal) -> Value {
      const std::string& ext = c.external(internal);
      if (auto it = cache.find(ext); it != cache.end()) return it->second;
      Value v = observe(slot, *observers.at(ext));
      cache.emplace(ext, v);
      return v;
    };
    auto write = [&](const std::string& internal, const Value& v) {
      const std::string& ext = c.external(internal);
      Subject& s = *subjects.at(ext);
      if (is_init) {
        s.initialise_state(v);
      } else {
        publish(slot, s, v);
      }
      slot.trace[ext].push_back(v);
      if (ctx.logger) ctx.logger.record(internal, v);
    };

    if (const auto* s = std::get_if<Script>(&body)) {
      dsl::EvalEnv env;
      for (const auto& [internal, external] : c.io_map()) env.io_names.insert(internal);
      env.callees = c.callees();
      env.input_source = read;
      env.write_sink = write;
      dsl::evaluate(s->program, env);
    } else if (const auto* n = std::get_if<NativeBody>(&body)) {
      std::map<std::string, Value> inputs;
      for (const auto& r : n->reads) inputs.emplace(r, read(r));
      std::map<std::string, Value> out = n->fn(inputs, ctx);
      for (const auto& w : n->writes) {
        auto it = out.find(w);
        if (it == out.end()) {
          throw Error(ErrorCode::InvalidState, "native body of '" + c.name() + "' did not produce '" + w + "'", {w});
        }
        write(w, it->second);
      }
      if (out.size() != n->writes.size()) {
        throw Error(ErrorCode::InvalidState, "native body of '" + c.name() + "' produced undeclared writes");
      }
    }
  }

  void component_main(std::size_t index) {
    const Component& c = owner.components_[index];
    Slot& slot = *slots[index];
    std::optional<std::uint64_t> limit = c.max_steps() ? c.max_steps() : options.max_steps;
    StepContext ctx;
    ctx.component = c.name();
    if (options.run) ctx.logger = options.run->logger(c.name());
    ctx.stop = [this] { owner.signal_stop(); };
    auto stop = owner.stop_;
    try {
      if (!stop->load()) {
        run_body(c, slot, true, ctx);
        while (!stop->load() && (!limit || slot.steps < *limit)) {
          ctx.step = slot.steps;
          run_body(c, slot, false, ctx);
          {
            std::lock_guard lk(slot.mu);
            ++slot.steps;
          }
          if (options.on_step) options.on_step(c.name(), slot.steps);
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ChannelPoisoned) fail(e.code(), "component '" + c.name() + "': " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCode::InvalidState, "component '" + c.name() + "': " + e.what());
    }
    {
      std::lock_guard lk(slot.mu);
      slot.live = false;
    }
    {
      std::lock_guard lk(mu);
      --live;
    }
    cv.notify_all();
  }

  // Every live component is blocked on an operation nobody can complete.
  bool all_stuck() {
    auto pass = [&](std::vector<std::uint64_t>& seqs) {
      for (auto& s : slots) {
        std::lock_guard lk(s->mu);
        if (!s->live) {
          seqs.push_back(UINT64_MAX);
          continue;
        }
        if (!s->op) return false;
        bool waiting = *s->op == PendingOp::Observe ? s->observer->waiting_at(s->mark) : s->subject->waiting_at(s->mark);
        if (!waiting) return false;
        seqs.push_back(s->seq);
      }
      return true;
    };
    std::vector<std::uint64_t> first;
    std::vector<std::uint64_t> second;
    return pass(first) && pass(second) && first == second;
  }

  std::optional<std::vector<BlockedOn>> check_timeout() {
    auto now = Clock::now();
    bool expired = false;
    std::vector<BlockedOn> pending;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      auto& s = *slots[i];
      std::lock_guard lk(s.mu);
      if (!s.live || !s.op) continue;
      pending.push_back({owner.components_[i].name(), s.ns, *s.op});
      if (now - s.since > options.step_timeout) expired = true;
    }
    if (!expired) return std::nullopt;
    return pending;
  }

  RunReport supervise() {
    live = slots.size();
    std::vector<std::thread> threads;
    threads.reserve(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) threads.emplace_back([this, i] { component_main(i); });

    auto tick = std::clamp<Duration>(options.step_timeout / 20, std::chrono::milliseconds(1), std::chrono::milliseconds(20));
    std::vector<BlockedOn> blocked;
    bool released = false;
    while (true) {
      {
        std::unique_lock lk(mu);
        if (cv.wait_for(lk, tick, [&] { return live == 0; })) break;
      }
      if (released) continue;
      if (auto timeout = check_timeout()) {
        bool first = false;
        {
          std::lock_guard lk(mu);
          if (!error_code) {
            timed_out = true;
            first = true;
          }
        }
        if (first) blocked = std::move(*timeout);
        owner.registry_->poison();
        released = true;
      } else if (owner.stop_->load() && all_stuck()) {
        owner.registry_->poison();
        released = true;
      }
    }
    for (auto& t : threads) t.join();

    RunReport report;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      report.steps[owner.components_[i].name()] = slots[i]->steps;
      for (auto& [ns, values] : slots[i]->trace) {
        auto& dst = report.trace[ns];
        dst.insert(dst.end(), values.begin(), values.end());
      }
    }
    if (error_code) {
      report.outcome = Outcome::Error;
      report.error_code = error_code;
      report.error_message = error_message;
    } else if (timed_out) {
      report.outcome = Outcome::Timeout;
      std::sort(blocked.begin(), blocked.end(), [](const BlockedOn& a, const BlockedOn& b) {
        return std::tie(a.component, a.ns) < std::tie(b.component, b.ns);
      });
      report.blocked_on = std::move(blocked);
    } else if (owner.stop_->load()) {
      report.outcome = Outcome::Stopped;
    }
    return report;
  }
};

ComponentCollection::ComponentCollection()
    : registry_(std::make_unique<ChannelRegistry>()), stop_(std::make_shared<std::atomic<bool>>(false)) {}

ComponentCollection::~ComponentCollection() = default;

void ComponentCollection::add(Component c) {
  if (bound_) throw Error(ErrorCode::RegistrySealed, "cannot add '" + c.name() + "' after bind");
  if (find(c.name())) throw Error(ErrorCode::DuplicateComponent, "component '" + c.name() + "' already added", {c.name()});
  components_.push_back(std::move(c));
}

const Component* ComponentCollection::find(const std::string& name) const {
  for (const auto& c : components_)
    if (c.name() == name) return &c;
  return nullptr;
}

BindReport ComponentCollection::bind() {
  if (bound_) throw Error(ErrorCode::RegistrySealed, "collection already bound");
  for (const auto& c : components_) {
    observers_[c.name()];
    subjects_[c.name()];
    std::set<std::string> writes = c.writes();
    writes.insert(c.init_writes().begin(), c.init_writes().end());
    for (const auto& w : writes) {
      const std::string& ext = c.external(w);
      subjects_[c.name()][ext] = registry_->create_subject(ext, c.name());
    }
    for (const auto& r : c.reads()) {
      const std::string& ext = c.external(r);
      observers_[c.name()][ext] = registry_->acquire_observer(ext, c.name());
    }
  }
  BindReport report = registry_->seal_and_bind();
  bound_ = true;
  return report;
}

RunReport ComponentCollection::run(const RunOptions& options) {
  if (!bound_) throw Error(ErrorCode::RegistryNotSealed, "run before bind");
  if (ran_) throw Error(ErrorCode::InvalidState, "a collection runs only once");
  ran_ = true;
  Runtime rt(*this, options);
  for (std::size_t i = 0; i < components_.size(); ++i) rt.slots.push_back(std::make_unique<Runtime::Slot>());
  return rt.supervise();
}

void ComponentCollection::signal_stop() noexcept { stop_->store(true); }

bool ComponentCollection::stop_requested() const noexcept { return stop_->load(); }

}  // namespace gateflow
