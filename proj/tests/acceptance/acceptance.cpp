// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures (capped at 1).

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "gateflow/component.hpp"
#include "gateflow/dsl.hpp"
#include "gateflow/oracle.hpp"
#include "gateflow/registry.hpp"
#include "gateflow/store.hpp"
#include "gateflow/study.hpp"
#include "gateflow/viz.hpp"
#include "random_graphs.hpp"
#include "random_programs.hpp"
#include "test_util.hpp"
#include "toy_graph.hpp"

using namespace gateflow;
using namespace gateflow::testing;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::string note;

  bool operator()(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
    return ok;
  }
};

template <typename F>
std::optional<ErrorCode> thrown(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::unique_ptr<ComponentCollection> collect(std::vector<Component> cs) {
  auto coll = std::make_unique<ComponentCollection>();
  for (auto& c : cs) coll->add(std::move(c));
  return coll;
}

RunReport bind_and_run(std::vector<Component> cs, RunOptions opts) {
  auto coll = collect(std::move(cs));
  coll->bind();
  return coll->run(opts);
}

TypeRegistry builtin() {
  TypeRegistry r;
  register_builtin(r);
  return r;
}

bool bits_equal(const Value& a, const Value& b) {
  if (a.is_real() && b.is_real()) return std::bit_cast<std::uint64_t>(a.as_real()) == std::bit_cast<std::uint64_t>(b.as_real());
  return a == b;
}

bool prefix(const std::vector<Value>& seq, const std::vector<double>& want) {
  if (seq.size() < want.size()) return false;
  for (std::size_t i = 0; i < want.size(); ++i)
    if (seq[i].as_real() != want[i]) return false;
  return true;
}

// Hand-computed toy values: C starts x = y = 1; A: z = x*y; B: alpha = x + z;
// C: x = 2*alpha, y = alpha/2.
void toy_trace(Check& check, const Trace& t) {
  check(prefix(t.at("alpha"), {2, 8, 80}), "alpha begins [2, 8, 80]");
  check(prefix(t.at("x"), {1, 4, 16, 160}), "x begins [1, 4, 16, 160]");
  check(prefix(t.at("y"), {1, 1, 4, 40}), "y begins [1, 1, 4, 40]");
  check(prefix(t.at("z"), {1, 4, 64}), "z begins [1, 4, 64]");
}

void toy_equivalence(Check& check) {
  RunReport r = bind_and_run(toy_abc(), {.max_steps = 10, .step_timeout = 5s});
  check(r.outcome == Outcome::Completed, "run completes");
  check(r.steps == std::map<std::string, std::uint64_t>{{"A", 10}, {"B", 10}, {"C", 10}}, "10 steps each");
  check(r.trace == oracle_run(toy_abc(), {.max_steps = 10}), "trace equals the oracle");
  toy_trace(check, r.trace);
  // Also through the registry.
  TypeRegistry reg = builtin();
  auto built = build_experiment(reg, "ToyExperimentABC");
  check(built.collection->run({.max_steps = 10}).trace == r.trace, "registry-built graph gives the same trace");
}

void remap_transparency(Check& check) {
  TypeRegistry reg = builtin();
  auto four = build_experiment(reg, "ToyExperiment");
  auto three = build_experiment(reg, "ToyExperimentABC");
  const Component* c4 = four.collection->find("C");
  const Component* c3 = three.collection->find("C");
  if (!check(c4 && c3, "both experiments contain C")) return;
  check(c4->step_script() == c3->step_script() && !c3->step_script().empty(), "C step script byte-identical");
  check(c4->init_script() == c3->init_script(), "C init script byte-identical");
  check(c4->external("alpha") == "beta" && c3->external("alpha") == "alpha", "only C's io_map differs");
  std::vector<Component> comps = four.collection->components();
  RunReport r = four.collection->run({.max_steps = 10, .step_timeout = 5s});
  check(r.outcome == Outcome::Completed, "run completes");
  check(r.trace == oracle_run(comps, {.max_steps = 10}), "trace equals the oracle");
  check(prefix(r.trace.at("alpha"), {2, 24}), "alpha begins [2, 24]");
  check(prefix(r.trace.at("beta"), {4, 48}), "beta begins [4, 48]");
}

bool has_cycle(const GraphSpec& g) {
  std::map<std::string, std::size_t> producer;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (const auto& ns : g.nodes[i].outputs) producer[ns] = i;
  std::vector<int> state(g.nodes.size(), 0);
  std::function<bool(std::size_t)> visit = [&](std::size_t i) {
    if (state[i] == 1) return true;
    if (state[i] == 2) return false;
    state[i] = 1;
    for (const auto& ns : g.nodes[i].inputs)
      if (visit(producer.at(ns))) return true;
    state[i] = 2;
    return false;
  };
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (visit(i)) return true;
  return false;
}

void random_graphs(Check& check) {
  std::mt19937_64 rng(20240917);
  int cyclic = 0, acyclic = 0, equal = 0;
  const int n = 30;
  for (int i = 0; i < n; ++i) {
    GraphSpec g = random_graph(rng, 50);
    (has_cycle(g) ? cyclic : acyclic)++;
    check(g.nodes.size() >= 2 && g.nodes.size() <= 5, "graph size in 2..5");
    Trace expected = oracle_run(g.build(), {.max_steps = 50});
    RunReport r = bind_and_run(g.build(), {.max_steps = 50, .step_timeout = 5s});
    if (check(r.outcome == Outcome::Completed && r.trace == expected, "graph " + std::to_string(i) + " equals oracle"))
      ++equal;
  }
  check(cyclic > 0 && acyclic > 0, "mix of cyclic and acyclic graphs");
  check.note = std::to_string(equal) + "/" + std::to_string(n) + " graphs equal (" + std::to_string(cyclic) +
               " cyclic)";
}

void failure_modes(Check& check) {
  auto t = Clock::now();
  auto dup = collect({toy_a(), toy_b(), toy_c(), make_component({"E", {{"x", "x"}}, {}, script("x = 3")})});
  check(thrown([&] { dup->bind(); }) == ErrorCode::DuplicateSubject, "duplicate subject at bind");
  check(seconds_since(t) < 10, "duplicate check under 10 s");

  t = Clock::now();
  auto missing = collect({toy_a(), toy_b()});
  check(thrown([&] { missing->bind(); }) == ErrorCode::IncompleteGraph, "missing producer at bind");
  check(seconds_since(t) < 10, "missing producer check under 10 s");

  const auto timeout = 500ms;
  t = Clock::now();
  RunReport r = bind_and_run(toy_abc(""), {.max_steps = 10, .step_timeout = timeout});
  double elapsed = seconds_since(t);
  check(r.outcome == Outcome::Timeout, "missing init times out");
  std::set<std::string> named;
  for (const auto& b : r.blocked_on) named.insert(b.component);
  check(named == std::set<std::string>{"A", "B", "C"}, "blocked-on report names A, B and C");
  check(elapsed < 0.5 + 1.0, "timeout reported within step_timeout + 1 s");
  std::ostringstream note;
  note << "timeout reported after " << elapsed << " s";
  check.note = note.str();
}

void hyperparameters(Check& check) {
  TypeRegistry r = builtin();
  auto hp = collect_hyperparameters(r, "ToyExperimentF");
  if (!check(hp.size() == 2, "exactly two descriptors")) return;
  check(hp[0].first == "ComponentF.SubcomponentA.scaler" && hp[1].first == "ComponentF.SubcomponentB.scaler",
        "namespaced scaler names");
  check(hp[0].second.bounds == std::make_pair(0.1, 1.0), "SubcomponentA bounds (0.1, 1.0)");
  check(hp[1].second.bounds == std::make_pair(0.2, 0.5), "SubcomponentB bounds (0.2, 0.5)");
  r.set_bounds("SubcomponentB", "scaler", std::nullopt);
  hp = collect_hyperparameters(r, "ToyExperimentF");
  check(hp.size() == 2 && hp[1].second.fixed() && hp[1].second.default_value == Value(0.1),
        "unbounded descriptor is fixed at default 0.1");
  auto space = study::build_search_space(hp);
  check(space.dimensions.size() == 1 && space.fixed.at("ComponentF.SubcomponentB.scaler") == Value(0.1),
        "fixed descriptor leaves the search space");
}

study::StudyConfig product_config(std::int64_t n, std::size_t parallelism, std::int64_t seed) {
  study::StudyConfig c;
  c.experiment = "ToyProductStudy";
  c.objective_tag = "loss";
  c.seed = seed;
  c.n_trials = n;
  c.parallelism = parallelism;
  return c;
}

void study_correctness(Check& check, const fs::path& dir) {
  store::ExperimentStore st(dir / "p", dir / "s");
  TypeRegistry r = builtin();
  study::Study a = study::run_study(r, product_config(200, 1, 7), st);
  study::Study b = study::run_study(r, product_config(200, 1, 7), st);
  if (!check(a.trials.size() == 200 && b.trials.size() == 200, "200 trials each")) return;
  double best = INFINITY;
  bool objectives_ok = true, identical = true;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& t = a.trials[i];
    if (t.state != study::TrialState::Complete) {
      objectives_ok = false;
      continue;
    }
    double x = t.assignment.at("ComponentF.SubcomponentA.scaler").as_real();
    double y = t.assignment.at("ComponentF.SubcomponentB.scaler").as_real();
    if (std::abs(*t.objective - std::abs(x * y - 0.12)) > 1e-12) objectives_ok = false;
    best = std::min(best, *t.objective);
    const auto& u = b.trials[i];
    if (t.assignment.size() != u.assignment.size()) identical = false;
    for (const auto& [k, v] : t.assignment)
      if (!u.assignment.contains(k) || !bits_equal(v, u.assignment.at(k))) identical = false;
    if (t.objective != u.objective) identical = false;
  }
  check(objectives_ok, "every trial completes with objective |a*b - 0.12|");
  check(best <= 0.01, "best objective <= 0.01");
  check(*study::best_trial(a).objective == best, "best_trial agrees");
  check(identical, "seed-identical re-run is bit-exact at parallelism 1");
  std::ostringstream note;
  note << "best objective " << best;
  check.note = note.str();
}

void sampler_bounds(Check& check) {
  study::SearchSpace s;
  auto add = [&](std::string name, ParamKind kind, double lo, double hi, bool log) {
    study::Dimension d;
    d.name = std::move(name);
    d.kind = kind;
    d.bounds = std::make_pair(lo, hi);
    d.log_scale = log;
    s.dimensions.push_back(d);
  };
  add("a", ParamKind::Real, 0.1, 1.0, false);
  add("b", ParamKind::Real, 0.2, 0.5, false);
  add("lr", ParamKind::Real, 1e-5, 1e-1, true);
  add("tiny", ParamKind::Real, 1e-300, 1e-290, true);
  add("k", ParamKind::Integer, -3, 7, false);
  add("width", ParamKind::Integer, 1, 4096, true);
  study::Dimension cat;
  cat.name = "mode";
  cat.kind = ParamKind::Categorical;
  cat.choices = {Value("x"), Value("y"), Value(3)};
  s.dimensions.push_back(cat);

  std::size_t outside = 0, drawn = 0;
  auto inside = [&](const study::Dimension& d, const Value& v) {
    if (d.kind == ParamKind::Categorical) return std::find(d.choices.begin(), d.choices.end(), v) != d.choices.end();
    if (d.kind == ParamKind::Integer && !v.is_integer()) return false;
    if (d.kind == ParamKind::Real && !v.is_real()) return false;
    double x = v.as_real();
    return x >= d.bounds.first && x <= d.bounds.second;
  };
  for (auto sampler : {study::Sampler::Uniform, study::Sampler::LocalGaussian}) {
    std::vector<study::Trial> history;
    for (std::int64_t i = 0; i < 1000; ++i) {
      ArgMap a = study::sample(s, sampler, study::Direction::Minimize, 99, i, history);
      for (const auto& d : s.dimensions) {
        ++drawn;
        if (!inside(d, a.at(d.name)) || !d.contains(a.at(d.name))) ++outside;
      }
      study::Trial t;
      t.trial_id = i;
      t.assignment = a;
      t.state = study::TrialState::Complete;
      t.objective = a.at("a").as_real();
      history.push_back(t);
    }
  }
  check(outside == 0, "every sample within bounds");
  check.note = std::to_string(drawn) + " draws, " + std::to_string(outside) + " outside";
}

using Key = std::tuple<std::string, std::string, std::uint64_t>;

void break_primary(const fs::path& root) {
  fs::rename(root / "runs", root / "runs.saved");
  std::ofstream(root / "runs") << "not a directory";
}

void restore_primary(const fs::path& root) {
  fs::remove(root / "runs");
  fs::rename(root / "runs.saved", root / "runs");
}

// Records 10000 values from four concurrent components; `midway` runs once
// 4000 have been enqueued.
store::RunMeta record_10k(store::ExperimentStore& st, const std::function<void()>& midway) {
  store::WriterOptions o;
  o.chunk = 256;
  o.interval = 50ms;
  auto run = st.open_run({.experiment = "toy"}, o);
  std::atomic<int> enqueued{0};
  std::vector<std::thread> ts;
  for (int c = 0; c < 4; ++c) {
    ts.emplace_back([&, c] {
      auto log = run->logger("K" + std::to_string(c));
      for (int i = 0; i < 2500; ++i) {
        log.record("v", Value(static_cast<std::int64_t>(c * 100000 + i)));
        if (++enqueued == 4000 && midway) midway();
      }
    });
  }
  for (auto& t : ts) t.join();
  return run->close("completed");
}

bool exactly_10k(const std::vector<store::MetricRecord>& rs) {
  std::set<Key> keys;
  for (const auto& r : rs) {
    if (r.value.as_integer() != static_cast<std::int64_t>((r.component[1] - '0') * 100000 + r.step)) return false;
    keys.emplace(r.component, r.tag, r.step);
  }
  return rs.size() == 10000 && keys.size() == 10000;
}

// Wall time of one toy run. When `logged`, the run records into a handle
// whose writer sleeps 1 s before every flush; closing it (outside the timed
// part) waits out the stall.
double toy_run_seconds(store::ExperimentStore& st, std::uint64_t steps, bool logged) {
  TypeRegistry reg = builtin();
  auto built = build_experiment(reg, "ToyExperimentABC");
  RunOptions opts;
  opts.max_steps = steps;
  std::unique_ptr<store::RunHandle> handle;
  if (logged) {
    store::WriterOptions o;
    o.chunk = 65536;
    o.flush_delay = 1s;
    handle = st.open_run({.experiment = "ToyExperimentABC"}, o);
    opts.run = handle.get();
  }
  auto t = Clock::now();
  built.collection->run(opts);
  double elapsed = seconds_since(t);
  if (handle) handle->close("completed");
  return elapsed;
}

void store_no_loss(Check& check, const fs::path& dir) {
  {
    store::ExperimentStore st(dir / "a", dir / "as");
    auto meta = record_10k(st, nullptr);
    check(meta.records == 10000 && meta.spooled == 0 && meta.dropped == 0, "10000 records committed to primary");
    check(exactly_10k(store::query(dir / "a")), "each record lands exactly once");
  }
  {
    store::ExperimentStore st(dir / "b", dir / "bs");
    auto meta = record_10k(st, [&] { break_primary(dir / "b"); });
    check(meta.spooled > 0, "records spooled after the primary failed");
    check(meta.records + meta.spooled == 10000, "primary + spool counts sum to 10000");
    restore_primary(dir / "b");
    auto report = store::merge_spool(dir / "b", dir / "bs");
    check(report.skipped == 0, "no duplicates while merging");
    check(exactly_10k(store::query(dir / "b")), "union after merge is exactly 10000");
    check(store::query(dir / "bs").empty(), "spool empty after merge");
  }
  // Non-interference: about 24000 records over 6000 steps; each flush
  // stalls 1 s.
  const std::uint64_t steps = 6000;
  // Interleaved repetitions in alternating order, best of each, to keep
  // scheduler noise out of the ratio.
  store::ExperimentStore st(dir / "p", dir / "s");
  const int reps = 15;
  toy_run_seconds(st, steps, false);
  double base = INFINITY, stalled = INFINITY;
  for (int i = 0; i < reps; ++i) {
    for (bool logged : {i % 2 == 0, i % 2 != 0}) {
      double t = toy_run_seconds(st, steps, logged);
      (logged ? stalled : base) = std::min(logged ? stalled : base, t);
    }
  }
  std::uint64_t logged = 0;
  for (const auto& m : store::list_runs(dir / "p")) logged += m.records;
  check(logged == reps * (4 * steps + 2), "stalled runs lose no records");
  double ratio = stalled / base;
  check(ratio < 1.10, "stalled writer slows the toy run by < 10%");
  std::ostringstream note;
  note << "toy run " << base * 1000 << " ms unlogged, " << stalled * 1000 << " ms with stalled writer (x" << ratio
       << ")";
  check.note = note.str();
}

void dsl_conformance(Check& check) {
  std::mt19937_64 rng(2024);
  int round_trips = 0;
  for (int i = 0; i < 500; ++i) {
    dsl::Program p = random_program(rng);
    std::string text = dsl::to_source(p);
    dsl::Program back = dsl::parse(text);
    if (dsl::structurally_equal(p, back) && dsl::to_source(back) == text) ++round_trips;
  }
  check(round_trips == 500, "500 generated programs round-trip");

  using S = std::set<std::string>;
  auto io = [](const char* body, S names) { return dsl::extract_io(dsl::parse(body), names); };
  auto a = io(kScriptA, {"x", "y", "z"});
  check(a.reads == S{"x", "y"} && a.writes == S{"z"}, "A reads {x, y} writes {z}");
  auto b = io(kScriptB, {"x", "z", "alpha"});
  check(b.reads == S{"x", "z"} && b.writes == S{"alpha"}, "B reads {x, z} writes {alpha}");
  auto c = io(kScriptC, {"x", "y", "alpha"});
  check(c.reads == S{"alpha"} && c.writes == S{"x", "y"}, "C reads {alpha} writes {x, y}");
  auto d = io(kScriptD, {"alpha", "beta"});
  check(d.reads == S{"alpha"} && d.writes == S{"beta"}, "D reads {alpha} writes {beta}");

  std::mt19937_64 erng(7);
  const std::vector<std::string> names{"a", "b", "c"};
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    std::map<std::string, RefNum> ref_env;
    std::map<std::string, Value> inputs;
    for (const auto& n : names) {
      Value v = random_literal(erng);
      if (std::uniform_int_distribution<int>(0, 3)(erng) == 0 && v.is_integer()) v = Value(-v.as_integer());
      inputs[n] = v;
      ref_env[n] = v.is_integer() ? RefNum{true, v.as_integer(), 0} : RefNum{false, 0, v.as_real()};
    }
    auto expr = random_expr(erng, 6, names);
    RefResult want = ref_eval(*expr, ref_env);
    dsl::EvalEnv env;
    env.io_names = {"a", "b", "c", "out"};
    env.inputs = inputs;
    dsl::Program p{{dsl::Assign{{"out", {}}, expr}}};
    std::optional<Value> got;
    auto err = thrown([&] { got = dsl::evaluate(p, std::move(env)).emitted.at(0).second; });
    bool ok = false;
    if (want.error) {
      ok = err == want.error;
    } else if (!err && got) {
      ok = want.value->is_int ? (got->is_integer() && got->as_integer() == want.value->i)
                              : (got->is_real() && std::bit_cast<std::uint64_t>(got->as_real()) ==
                                                       std::bit_cast<std::uint64_t>(want.value->d));
    }
    agree += ok;
  }
  check(agree == 1000, "evaluator agrees with the reference evaluator on 1000 trees");
  check.note = std::to_string(round_trips) + " round trips, " + std::to_string(agree) + " evaluations agree";
}

double ulps(double got, double want) {
  if (got == want) return 0;
  return std::abs(got - want) / std::abs(std::nextafter(want, INFINITY) - want);
}

void export_determinism(Check& check, const fs::path& dir) {
  store::ExperimentStore st(dir / "p", dir / "s");
  TypeRegistry reg = builtin();
  std::set<std::string> ids;
  for (std::int64_t seed : {1, 2, 3}) {
    auto built = build_experiment(reg, "SeededToyExperiment", {}, seed);
    auto handle = st.open_run({.experiment = "SeededToyExperiment", .seed = seed});
    ids.insert(handle->run_id());
    RunOptions opts;
    opts.max_steps = 6;
    opts.run = handle.get();
    check(built.collection->run(opts).outcome == Outcome::Completed, "seeded run completes");
    handle->close("completed");
  }
  store::QueryFilter f;
  f.run_ids = ids;
  auto series = viz::aggregate_runs(dir / "p", f);

  // Brute force straight from the raw records, in long double.
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<long double>> raw;
  for (const auto& r : store::query(dir / "p", f)) raw[{r.component, r.tag, r.step}].push_back(r.value.as_real());
  double worst_mean = 0, worst_std = 0;
  std::size_t points = 0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      const auto& xs = raw.at({s.key.component, s.key.tag, s.steps[i]});
      long double sum = 0;
      for (auto x : xs) sum += x;
      long double mean = sum / xs.size();
      long double ss = 0;
      for (auto x : xs) ss += (x - mean) * (x - mean);
      double m = static_cast<double>(mean), sd = static_cast<double>(std::sqrt(ss / xs.size()));
      worst_mean = std::max(worst_mean, ulps(s.mean[i], m));
      worst_std = std::max(worst_std, ulps(s.stddev[i], sd));
      check(s.n[i] == xs.size(), "n counts runs");
      ++points;
    }
  }
  check(points > 0 && series.size() == 4, "four series aggregated");
  check(worst_mean <= 1, "means within 1 ulp of brute force");
  check(worst_std <= 1, "sigmas within 1 ulp of brute force");

  bool round_trip = true;
  for (const auto& s : series) {
    auto back = viz::parse_csv(viz::to_csv(s));
    back.key = s.key;
    round_trip = round_trip && back == s;
  }
  for (const auto& s : series) {
    viz::export_csv(s, dir / "out.csv");
    std::ifstream in(dir / "out.csv", std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    auto back = viz::parse_csv(text);
    back.key = s.key;
    round_trip = round_trip && back == s;
  }
  check(round_trip, "CSV round-trips bit-exact");
  check(viz::render_svg(series) == viz::render_svg(series), "SVG byte-identical across invocations");
  std::ostringstream note;
  note << points << " points, worst mean " << worst_mean << " ulp, worst sigma " << worst_std << " ulp";
  check.note = note.str();
}

}  // namespace

int main() {
  TempDir dir;
  struct Criterion {
    std::string name;
    double limit;
    std::function<void(Check&)> fn;
  };
  std::vector<Criterion> criteria{
      {"toy-trace-equivalence", 1, toy_equivalence},
      {"remap-transparency", 1, remap_transparency},
      {"randomised-graph-equivalence", 30, random_graphs},
      {"failure-modes", 30, failure_modes},
      {"hyperparameter-collection", 1, hyperparameters},
      {"study-correctness", 20, [&](Check& c) { study_correctness(c, dir / "study"); }},
      {"sampler-bounds", 1, sampler_bounds},
      {"store-no-loss-and-failover", 30, [&](Check& c) { store_no_loss(c, dir / "store"); }},
      {"dsl-conformance", 10, dsl_conformance},
      {"export-determinism", 5, [&](Check& c) { export_determinism(c, dir / "export"); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Check check;
    auto t = Clock::now();
    try {
      c.fn(check);
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("threw: ") + e.what());
    }
    double elapsed = seconds_since(t);
    if (elapsed >= c.limit) {
      std::ostringstream m;
      m << "took " << elapsed << " s, limit " << c.limit << " s";
      check.failures.push_back(m.str());
    }
    bool pass = check.failures.empty();
    failed += !pass;
    std::printf("%s %s (%.3f s / %.0f s)%s%s\n", pass ? "PASS" : "FAIL", c.name.c_str(), elapsed, c.limit,
                check.note.empty() ? "" : ": ", check.note.c_str());
    for (const auto& f : check.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
