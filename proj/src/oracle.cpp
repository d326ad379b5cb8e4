#include "gateflow/oracle.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "gateflow/error.hpp"

namespace gateflow {

namespace {

struct Channel {
  std::string producer;
  std::uint64_t generation = 0;
  Value value;
  std::map<std::string, std::uint64_t> consumed;  // observer -> generation
};

void names_in(const dsl::Expr& e, std::vector<std::string>& out) {
  if (const auto* r = std::get_if<dsl::NameRef>(&e.node)) {
    out.push_back(r->id.name);
  } else if (const auto* n = std::get_if<dsl::Negate>(&e.node)) {
    names_in(*n->operand, out);
  } else if (const auto* b = std::get_if<dsl::Binary>(&e.node)) {
    names_in(*b->lhs, out);
    names_in(*b->rhs, out);
  }
}

std::vector<std::string> names_in(const dsl::Statement& st) {
  std::vector<std::string> out;
  if (const auto* a = std::get_if<dsl::Assign>(&st)) {
    names_in(*a->value, out);
  } else {
    for (const auto& arg : std::get<dsl::Call>(st).args) names_in(*arg, out);
  }
  return out;
}

struct Cursor {
  const Component* c = nullptr;
  std::optional<std::uint64_t> limit;
  std::uint64_t steps = 0;

  // state of the step in progress
  std::size_t next = 0;  // statement index, or native read/publish index
  bool called = false;   // native fn already ran
  std::map<std::string, Value> observed;  // by external namespace
  std::map<std::string, Value> locals;
  std::map<std::string, Value> inputs;  // by internal name, as the evaluator caches them
  std::optional<std::pair<std::string, Value>> outgoing;  // (internal, value)
  std::map<std::string, Value> native_out;

  std::string blocked_ns;
  std::string blocked_op;

  bool done() const { return limit && steps >= *limit; }
};

class Oracle {
 public:
  Oracle(const std::vector<Component>& components, const OracleOptions& options) : options_(options) {
    for (const auto& c : components) {
      Cursor cur;
      cur.c = &c;
      cur.limit = c.max_steps() ? c.max_steps() : options.max_steps;
      if (!cur.limit) {
        throw Error(ErrorCode::InvalidArgument, "the oracle needs a step limit for '" + c.name() + "'");
      }
      cursors_.push_back(std::move(cur));
    }
    std::sort(cursors_.begin(), cursors_.end(), [](const Cursor& a, const Cursor& b) { return a.c->name() < b.c->name(); });
    for (const auto& cur : cursors_) {
      std::set<std::string> writes = cur.c->writes();
      writes.insert(cur.c->init_writes().begin(), cur.c->init_writes().end());
      for (const auto& w : writes) {
        auto& ch = channels_[cur.c->external(w)];
        if (!ch.producer.empty()) {
          throw Error(ErrorCode::DuplicateSubject, "namespace '" + cur.c->external(w) + "' has two producers",
                      {cur.c->external(w)});
        }
        ch.producer = cur.c->name();
      }
    }
    std::vector<std::string> missing;
    for (const auto& cur : cursors_) {
      for (const auto& r : cur.c->reads()) {
        auto it = channels_.find(cur.c->external(r));
        if (it == channels_.end() || it->second.producer.empty()) {
          missing.push_back(cur.c->external(r));
          continue;
        }
        it->second.consumed[cur.c->name()] = 0;
      }
    }
    if (!missing.empty()) {
      std::sort(missing.begin(), missing.end());
      missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
      throw Error(ErrorCode::IncompleteGraph, "namespaces without a producer", missing);
    }
  }

  Trace run() {
    for (auto& cur : cursors_) run_init(cur);
    std::mt19937_64 rng(options_.shuffle_seed.value_or(0));
    std::vector<std::size_t> order(cursors_.size());
    std::iota(order.begin(), order.end(), 0);
    while (true) {
      if (options_.shuffle_seed) std::shuffle(order.begin(), order.end(), rng);
      bool progress = false;
      for (std::size_t i : order) progress |= advance(cursors_[i]);
      if (progress) continue;
      std::vector<std::string> blocked;
      for (const auto& cur : cursors_) {
        if (!cur.done()) blocked.push_back(cur.c->name() + ":" + cur.blocked_ns + ":" + cur.blocked_op);
      }
      if (blocked.empty()) break;
      std::string joined;
      for (const auto& b : blocked) joined += (joined.empty() ? "" : ", ") + b;
      throw Error(ErrorCode::OracleStuck, "no component can fire: " + joined, blocked);
    }
    return trace_;
  }

 private:
  void emit(const std::string& ns, const Value& v) {
    auto& ch = channels_.at(ns);
    ch.value = v;
    ++ch.generation;
    trace_[ns].push_back(v);
  }

  static bool all_consumed(const Channel& ch) {
    for (const auto& [owner, g] : ch.consumed)
      if (g < ch.generation) return false;
    return true;
  }

  bool can_publish(const std::string& ns) const {
    const auto& ch = channels_.at(ns);
    return ch.generation == 0 || all_consumed(ch);
  }

  bool can_observe(const std::string& ns, const std::string& owner) const {
    const auto& ch = channels_.at(ns);
    return ch.generation > ch.consumed.at(owner);
  }

  Value consume(const std::string& ns, const std::string& owner) {
    auto& ch = channels_.at(ns);
    ch.consumed[owner] = ch.generation;
    return ch.value;
  }

  void run_init(Cursor& cur) {
    const Component& c = *cur.c;
    StepContext ctx;
    ctx.component = c.name();
    ctx.stop = [] {};
    if (const auto* s = std::get_if<Script>(&c.init_body())) {
      dsl::EvalEnv env;
      for (const auto& [internal, external] : c.io_map()) env.io_names.insert(internal);
      env.callees = c.callees();
      env.write_sink = [&](const std::string& internal, const Value& v) { emit(c.external(internal), v); };
      dsl::evaluate(s->program, env);
    } else if (const auto* n = std::get_if<NativeBody>(&c.init_body())) {
      auto out = n->fn({}, ctx);
      for (const auto& w : n->writes) emit(c.external(w), out.at(w));
    }
  }

  void finish_step(Cursor& cur) {
    ++cur.steps;
    cur.next = 0;
    cur.called = false;
    cur.observed.clear();
    cur.locals.clear();
    cur.inputs.clear();
    cur.native_out.clear();
    cur.outgoing.reset();
  }

  // Fires as many events of `cur` as are enabled; true if any fired.
  bool advance(Cursor& cur) {
    bool progress = false;
    while (!cur.done()) {
      bool moved = std::holds_alternative<NativeBody>(cur.c->step_body()) ? native_event(cur) : script_event(cur);
      if (!moved) break;
      progress = true;
    }
    return progress;
  }

  bool try_observe(Cursor& cur, const std::string& internal) {
    const std::string& ns = cur.c->external(internal);
    if (cur.observed.contains(ns)) return true;
    if (!can_observe(ns, cur.c->name())) {
      cur.blocked_ns = ns;
      cur.blocked_op = "observe";
      return false;
    }
    cur.observed.emplace(ns, consume(ns, cur.c->name()));
    return true;
  }

  bool try_publish(Cursor& cur, const std::string& internal, const Value& v) {
    const std::string& ns = cur.c->external(internal);
    if (!can_publish(ns)) {
      cur.blocked_ns = ns;
      cur.blocked_op = "publish";
      return false;
    }
    emit(ns, v);
    return true;
  }

  bool script_event(Cursor& cur) {
    const Component& c = *cur.c;
    const auto* s = std::get_if<Script>(&c.step_body());
    if (!s) {  // no step body: a step is a no-op
      finish_step(cur);
      return true;
    }
    const auto& statements = s->program.statements;
    if (cur.next == statements.size()) {
      finish_step(cur);
      return true;
    }
    if (cur.outgoing) {
      if (!try_publish(cur, cur.outgoing->first, cur.outgoing->second)) return false;
      cur.outgoing.reset();
      ++cur.next;
      return true;
    }
    const dsl::Statement& st = statements[cur.next];
    for (const auto& name : names_in(st)) {
      if (!c.io_map().contains(name)) continue;
      if (cur.observed.contains(c.external(name))) continue;
      return try_observe(cur, name);
    }
    dsl::EvalEnv env;
    for (const auto& [internal, external] : c.io_map()) env.io_names.insert(internal);
    env.callees = c.callees();
    env.locals = std::move(cur.locals);
    env.inputs = std::move(cur.inputs);
    env.input_source = [&](const std::string& internal) { return cur.observed.at(c.external(internal)); };
    std::optional<std::pair<std::string, Value>> written;
    env.write_sink = [&](const std::string& internal, const Value& v) { written.emplace(internal, v); };
    dsl::execute(st, env);
    cur.locals = std::move(env.locals);
    cur.inputs = std::move(env.inputs);
    if (written) {
      cur.outgoing = std::move(written);
    } else {
      ++cur.next;
    }
    return true;
  }

  bool native_event(Cursor& cur) {
    const Component& c = *cur.c;
    const auto& n = std::get<NativeBody>(c.step_body());
    if (!cur.called) {
      if (cur.next < n.reads.size()) {
        if (!try_observe(cur, n.reads[cur.next])) return false;
        ++cur.next;
        return true;
      }
      std::map<std::string, Value> inputs;
      for (const auto& r : n.reads) inputs.emplace(r, cur.observed.at(c.external(r)));
      StepContext ctx;
      ctx.component = c.name();
      ctx.step = cur.steps;
      ctx.stop = [] {};
      cur.native_out = n.fn(inputs, ctx);
      for (const auto& w : n.writes) {
        if (!cur.native_out.contains(w)) {
          throw Error(ErrorCode::InvalidState, "native body of '" + c.name() + "' did not produce '" + w + "'", {w});
        }
      }
      cur.called = true;
      cur.next = 0;
      return true;
    }
    if (cur.next < n.writes.size()) {
      const auto& w = n.writes[cur.next];
      if (!try_publish(cur, w, cur.native_out.at(w))) return false;
      ++cur.next;
      return true;
    }
    finish_step(cur);
    return true;
  }

  OracleOptions options_;
  std::vector<Cursor> cursors_;
  std::map<std::string, Channel> channels_;
  Trace trace_;
};

}  // namespace

Trace oracle_run(const std::vector<Component>& components, const OracleOptions& options) {
  return Oracle(components, options).run();
}

}  // namespace gateflow
