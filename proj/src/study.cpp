#include "gateflow/study.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "gateflow/error.hpp"
#include "gateflow/json_value.hpp"

namespace gateflow::study {

namespace fs = std::filesystem;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& all, const char* what) {
  for (E e : all)
    if (to_string(e) == s) return e;
  throw Error(ErrorCode::InvalidArgument, "unknown " + std::string(what) + " '" + std::string(s) + "'", {std::string(s)});
}

std::mt19937_64 trial_rng(std::int64_t seed, std::int64_t trial_id) {
  auto s = static_cast<std::uint64_t>(seed);
  auto t = static_cast<std::uint64_t>(trial_id);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32), static_cast<std::uint32_t>(t),
                    static_cast<std::uint32_t>(t >> 32)};
  return std::mt19937_64(seq);
}

Value uniform_value(const Dimension& d, std::mt19937_64& rng) {
  switch (d.kind) {
    case ParamKind::Real: {
      auto [lo, hi] = d.bounds;
      if (d.log_scale) {
        double e = std::uniform_real_distribution<double>(std::log10(lo), std::log10(hi))(rng);
        return Value(std::clamp(std::pow(10.0, e), lo, hi));
      }
      return Value(std::uniform_real_distribution<double>(lo, hi)(rng));
    }
    case ParamKind::Integer:
      return Value(std::uniform_int_distribution<std::int64_t>(static_cast<std::int64_t>(d.bounds.first),
                                                               static_cast<std::int64_t>(d.bounds.second))(rng));
    case ParamKind::Categorical:
      return d.choices[std::uniform_int_distribution<std::size_t>(0, d.choices.size() - 1)(rng)];
  }
  return Value();
}

bool better(Direction dir, double a, double b) { return dir == Direction::Minimize ? a < b : a > b; }

const Trial* incumbent(const std::vector<Trial>& trials, Direction dir) {
  const Trial* best = nullptr;
  for (const auto& t : trials) {
    if (t.state != TrialState::Complete) continue;
    if (!best || better(dir, *t.objective, *best->objective) ||
        (*t.objective == *best->objective && t.trial_id < best->trial_id)) {
      best = &t;
    }
  }
  return best;
}

ordered_json trial_json(const Trial& t) {
  ordered_json j;
  j["trial_id"] = t.trial_id;
  j["state"] = to_string(t.state);
  j["seed"] = t.seed;
  j["run_id"] = t.run_id;
  j["assignment"] = to_json(t.assignment);
  j["objective"] = t.objective ? to_json(Value(*t.objective)) : ordered_json(nullptr);
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

Trial trial_from_json(const ordered_json& j) {
  Trial t;
  t.trial_id = j.at("trial_id").get<std::int64_t>();
  std::string state = j.at("state").get<std::string>();
  for (TrialState s : {TrialState::Pending, TrialState::Running, TrialState::Complete, TrialState::Failed})
    if (to_string(s) == state) t.state = s;
  t.seed = j.at("seed").get<std::int64_t>();
  t.run_id = j.at("run_id").get<std::string>();
  t.assignment = args_from_json(j.at("assignment"));
  if (!j.at("objective").is_null()) t.objective = j.at("objective").get<double>();
  if (j.contains("error")) t.error = j.at("error").get<std::string>();
  return t;
}

ordered_json study_json(const Study& s, std::string_view state) {
  const StudyConfig& c = s.config;
  ordered_json j;
  j["study_id"] = s.study_id;
  j["experiment"] = c.experiment;
  j["direction"] = to_string(c.direction);
  j["objective"] = {{"tag", c.objective_tag}, {"reduce", to_string(c.reduce)}};
  j["sampler"] = to_string(c.sampler);
  j["seed"] = c.seed;
  j["n_trials"] = c.n_trials;
  j["parallelism"] = c.parallelism;
  if (c.max_steps) j["max_steps"] = *c.max_steps;
  j["base_args"] = to_json(c.base_args);
  ordered_json dims = ordered_json::array();
  for (const auto& d : s.space.dimensions) {
    ordered_json dj;
    dj["name"] = d.name;
    dj["kind"] = to_string(d.kind);
    if (d.kind == ParamKind::Categorical) {
      dj["choices"] = ordered_json::array();
      for (const auto& v : d.choices) dj["choices"].push_back(to_json(v));
    } else {
      dj["bounds"] = {to_json(Value(d.bounds.first)), to_json(Value(d.bounds.second))};
      dj["log_scale"] = d.log_scale;
    }
    dims.push_back(dj);
  }
  j["dimensions"] = dims;
  j["fixed"] = to_json(s.space.fixed);
  j["state"] = state;
  return j;
}

Study study_from_json(const ordered_json& j) {
  Study s;
  s.study_id = j.at("study_id").get<std::string>();
  StudyConfig& c = s.config;
  c.experiment = j.at("experiment").get<std::string>();
  c.direction = parse_direction(j.at("direction").get<std::string>());
  c.objective_tag = j.at("objective").at("tag").get<std::string>();
  c.reduce = parse_reduce(j.at("objective").at("reduce").get<std::string>());
  c.sampler = parse_sampler(j.at("sampler").get<std::string>());
  c.seed = j.at("seed").get<std::int64_t>();
  c.n_trials = j.at("n_trials").get<std::int64_t>();
  c.parallelism = j.at("parallelism").get<std::size_t>();
  if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<std::uint64_t>();
  c.base_args = args_from_json(j.at("base_args"));
  for (const auto& dj : j.at("dimensions")) {
    Dimension d;
    d.name = dj.at("name").get<std::string>();
    std::string kind = dj.at("kind").get<std::string>();
    for (ParamKind k : {ParamKind::Real, ParamKind::Integer, ParamKind::Categorical})
      if (to_string(k) == kind) d.kind = k;
    if (d.kind == ParamKind::Categorical) {
      for (const auto& v : dj.at("choices")) d.choices.push_back(value_from_json(v));
    } else {
      d.bounds = {dj.at("bounds")[0].get<double>(), dj.at("bounds")[1].get<double>()};
      d.log_scale = dj.at("log_scale").get<bool>();
    }
    s.space.dimensions.push_back(std::move(d));
  }
  s.space.fixed = args_from_json(j.at("fixed"));
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::Minimize ? "minimize" : "maximize"; }

std::string_view to_string(Reduce r) {
  switch (r) {
    case Reduce::Last: return "last";
    case Reduce::Mean: return "mean";
    case Reduce::Max: return "max";
    case Reduce::Min: return "min";
  }
  return "?";
}

std::string_view to_string(Sampler s) { return s == Sampler::Uniform ? "uniform" : "local-gaussian"; }

std::string_view to_string(TrialState s) {
  switch (s) {
    case TrialState::Pending: return "pending";
    case TrialState::Running: return "running";
    case TrialState::Complete: return "complete";
    case TrialState::Failed: return "failed";
  }
  return "?";
}

Direction parse_direction(std::string_view s) {
  return parse_enum(s, std::array{Direction::Minimize, Direction::Maximize}, "direction");
}
Reduce parse_reduce(std::string_view s) {
  return parse_enum(s, std::array{Reduce::Last, Reduce::Mean, Reduce::Max, Reduce::Min}, "reduce");
}
Sampler parse_sampler(std::string_view s) {
  return parse_enum(s, std::array{Sampler::Uniform, Sampler::LocalGaussian}, "sampler");
}

bool Dimension::contains(const Value& v) const {
  switch (kind) {
    case ParamKind::Real: return v.is_real() && v.as_real() >= bounds.first && v.as_real() <= bounds.second;
    case ParamKind::Integer: return v.is_integer() && v.as_real() >= bounds.first && v.as_real() <= bounds.second;
    case ParamKind::Categorical: return std::find(choices.begin(), choices.end(), v) != choices.end();
  }
  return false;
}

SearchSpace build_search_space(const std::vector<NamedDescriptor>& descriptors) {
  SearchSpace space;
  for (const auto& [name, d] : descriptors) {
    if (d.fixed()) {
      space.fixed[name] = d.default_value;
      continue;
    }
    Dimension dim{name, d.kind, d.bounds.value_or(std::pair{0.0, 0.0}), d.choices, d.log_scale};
    space.dimensions.push_back(std::move(dim));
  }
  std::sort(space.dimensions.begin(), space.dimensions.end(),
            [](const Dimension& a, const Dimension& b) { return a.name < b.name; });
  return space;
}

ArgMap sample(const SearchSpace& space, Sampler sampler, Direction direction, std::int64_t seed,
              std::int64_t trial_id, const std::vector<Trial>& history) {
  std::mt19937_64 rng = trial_rng(seed, trial_id);
  ArgMap out;
  const Trial* best = nullptr;
  if (sampler == Sampler::LocalGaussian) {
    if (space.dimensions.empty()) {
      throw Error(ErrorCode::InvalidArgument, "local-gaussian sampling needs at least one dimension");
    }
    bool explore = std::uniform_real_distribution<double>(0, 1)(rng) < 0.2;
    if (!explore) best = incumbent(history, direction);
  }
  std::uniform_real_distribution<double> unit(0, 1);
  for (const auto& d : space.dimensions) {
    auto it = best ? best->assignment.find(d.name) : ArgMap::const_iterator{};
    if (!best || it == best->assignment.end()) {
      out[d.name] = uniform_value(d, rng);
      continue;
    }
    const Value& cur = it->second;
    auto [lo, hi] = d.bounds;
    std::normal_distribution<double> noise(0.0, 0.1 * (hi - lo));
    switch (d.kind) {
      case ParamKind::Real:
        out[d.name] = Value(std::clamp(cur.as_real() + noise(rng), lo, hi));
        break;
      case ParamKind::Integer:
        out[d.name] = Value(static_cast<std::int64_t>(std::clamp(std::round(cur.as_real() + noise(rng)), lo, hi)));
        break;
      case ParamKind::Categorical:
        out[d.name] = unit(rng) < 0.2 ? uniform_value(d, rng) : cur;
        break;
    }
  }
  return out;
}

double reduce(Reduce r, const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "no values to reduce");
  switch (r) {
    case Reduce::Last: return values.back();
    case Reduce::Max: return *std::max_element(values.begin(), values.end());
    case Reduce::Min: return *std::min_element(values.begin(), values.end());
    case Reduce::Mean: {
      double sum = 0, c = 0;  // Kahan
      for (double v : values) {
        double y = v - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
      }
      return sum / static_cast<double>(values.size());
    }
  }
  return 0;
}

namespace {

void run_trial(const TypeRegistry& registry, const StudyConfig& config, std::uint64_t max_steps,
               store::ExperimentStore& st, Trial& t) {
  ArgMap args = config.base_args;
  for (const auto& [k, v] : t.assignment) args[k] = v;
  try {
    BuiltExperiment built = build_experiment(registry, config.experiment, args, t.seed);
    store::RunMeta meta;
    meta.experiment = config.experiment;
    meta.seed = t.seed;
    meta.args = built.resolved;
    auto handle = st.open_run(std::move(meta));
    t.run_id = handle->run_id();
    RunOptions opts;
    opts.max_steps = max_steps;
    opts.step_timeout = config.step_timeout;
    opts.run = handle.get();
    RunReport rep = built.collection->run(opts);
    handle->close(std::string(to_string(rep.outcome)));
    if (rep.outcome == Outcome::Error) {
      throw Error(rep.error_code.value_or(ErrorCode::InvalidState), rep.error_message);
    }
    if (rep.outcome != Outcome::Completed) {
      throw Error(ErrorCode::InvalidState, "run ended with outcome " + std::string(to_string(rep.outcome)));
    }
    std::vector<double> values;
    store::QueryFilter filter;
    filter.run_ids = {t.run_id};
    filter.tag = config.objective_tag;
    for (const auto& r : store::query(st.primary_root(), filter)) {
      if (!r.value.is_numeric()) {
        throw Error(ErrorCode::NonNumericValue, "tag '" + config.objective_tag + "' holds " + r.value.to_string());
      }
      values.push_back(r.value.as_real());
    }
    if (values.empty()) {
      throw Error(ErrorCode::InvalidArgument, "run logged no '" + config.objective_tag + "' records");
    }
    double obj = reduce(config.reduce, values);
    if (!std::isfinite(obj)) throw Error(ErrorCode::InvalidArgument, "objective is not finite");
    t.objective = obj;
    t.state = TrialState::Complete;
  } catch (const Error& e) {
    t.state = TrialState::Failed;
    t.error = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    t.state = TrialState::Failed;
    t.error = e.what();
  }
}

}  // namespace

Study run_study(const TypeRegistry& registry, const StudyConfig& config, store::ExperimentStore& st) {
  if (config.n_trials < 0) throw Error(ErrorCode::InvalidArgument, "n_trials must be non-negative");
  if (config.objective_tag.empty()) throw Error(ErrorCode::InvalidArgument, "objective tag is required");
  const ExperimentSpec& exp = registry.experiment(config.experiment);
  std::optional<std::uint64_t> max_steps = config.max_steps ? config.max_steps : exp.max_steps;
  if (!max_steps) {
    throw Error(ErrorCode::InvalidArgument, "experiment '" + config.experiment + "' needs a max_steps for studies");
  }

  Study study;
  study.study_id = store::new_run_id();
  study.config = config;
  study.config.parallelism = std::max<std::size_t>(1, config.parallelism);
  study.space = build_search_space(collect_hyperparameters(registry, config.experiment));
  if (config.sampler == Sampler::LocalGaussian && study.space.dimensions.empty()) {
    throw Error(ErrorCode::InvalidArgument, "local-gaussian sampling needs at least one dimension");
  }
  fs::path dir = st.primary_root() / "studies" / study.study_id;
  store::write_file_atomic(dir / "study.json", dump_json(study_json(study, "running")) + "\n");

  auto n = static_cast<std::size_t>(config.n_trials);
  study.trials.resize(n);
  std::size_t guard = std::min<std::size_t>(10, n);
  std::mutex mu;
  std::size_t next = 0;
  std::size_t guard_done = 0, guard_failed = 0;
  bool aborted = false;
  std::exception_ptr persist_error;
  std::vector<Trial> history;  // finished trials, in completion order

  auto worker = [&] {
    for (;;) {
      Trial t;
      {
        std::lock_guard lk(mu);
        if (aborted || next >= n) return;
        t.trial_id = static_cast<std::int64_t>(next++);
        t.seed = config.seed + t.trial_id;
        t.assignment = sample(study.space, config.sampler, config.direction, config.seed, t.trial_id, history);
        t.state = TrialState::Running;
      }
      run_trial(registry, config, *max_steps, st, t);
      std::lock_guard lk(mu);
      try {
        store::append_file_atomic(dir / "trials.ndjson", dump_json(trial_json(t)) + "\n");
      } catch (...) {
        if (!persist_error) persist_error = std::current_exception();
        aborted = true;
      }
      if (static_cast<std::size_t>(t.trial_id) < guard) {
        ++guard_done;
        if (t.state == TrialState::Failed) ++guard_failed;
        if (guard_done == guard && guard_failed == guard) aborted = true;
      }
      history.push_back(t);
      study.trials[static_cast<std::size_t>(t.trial_id)] = std::move(t);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < std::min(study.config.parallelism, std::max<std::size_t>(n, 1)); ++i)
    pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (persist_error) std::rethrow_exception(persist_error);

  // drop never-started slots of an aborted study
  study.trials.erase(std::remove_if(study.trials.begin(), study.trials.end(),
                                    [](const Trial& t) { return t.state == TrialState::Pending; }),
                     study.trials.end());
  store::write_file_atomic(dir / "study.json", dump_json(study_json(study, aborted ? "aborted" : "complete")) + "\n");
  if (aborted) {
    std::string first = study.trials.empty() ? "" : study.trials.front().error;
    throw Error(ErrorCode::StudyAborted,
                "the first " + std::to_string(guard) + " trials all failed; first error: " + first, {study.study_id});
  }
  return study;
}

const Trial& best_trial(const Study& study) {
  const Trial* best = incumbent(study.trials, study.config.direction);
  if (!best) throw Error(ErrorCode::NoCompleteTrials, "study '" + study.study_id + "' has no complete trials");
  return *best;
}

std::optional<Study> load_study(const fs::path& root, const std::string& study_id) {
  fs::path dir = root / "studies" / study_id;
  std::error_code ec;
  if (!fs::is_regular_file(dir / "study.json", ec)) return std::nullopt;
  Study s;
  try {
    s = study_from_json(ordered_json::parse(read_file(dir / "study.json")));
    std::istringstream lines(read_file(dir / "trials.ndjson"));
    std::string line;
    while (std::getline(lines, line))
      if (!line.empty()) s.trials.push_back(trial_from_json(ordered_json::parse(line)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::StoreIO, "corrupt study " + study_id + ": " + e.what());
  }
  std::sort(s.trials.begin(), s.trials.end(), [](const Trial& a, const Trial& b) { return a.trial_id < b.trial_id; });
  return s;
}

std::vector<Study> list_studies(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::PrimaryUnavailable, root.string() + " is not a directory");
  std::vector<Study> out;
  if (!fs::is_directory(root / "studies", ec)) return out;
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root / "studies")) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids)
    if (auto s = load_study(root, id)) out.push_back(std::move(*s));
  return out;
}

}  // namespace gateflow::study
