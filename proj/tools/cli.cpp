#include "cli.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gateflow/error.hpp"
#include "gateflow/json_value.hpp"
#include "gateflow/oracle.hpp"
#include "gateflow/store.hpp"
#include "gateflow/viz.hpp"

namespace gateflow::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::StoreIO:
    case ErrorCode::PrimaryUnavailable:
      return kStoreIO;
    case ErrorCode::ChannelTimeout:
      return kTimeout;
    case ErrorCode::DivisionByZero:
    case ErrorCode::TypeMismatch:
    case ErrorCode::IntegerOverflow:
    case ErrorCode::MissingInput:
    case ErrorCode::ChannelPoisoned:
    case ErrorCode::StudyAborted:
    case ErrorCode::NoCompleteTrials:
    case ErrorCode::OracleStuck:
    case ErrorCode::NonNumericValue:
    case ErrorCode::EmptyInput:
    case ErrorCode::InvalidState:
    case ErrorCode::RunClosed:
      return kRuntime;
    default:
      return kUsage;
  }
}

namespace {

Error usage(const std::string& msg, std::vector<std::string> details = {}) {
  return Error(ErrorCode::InvalidArgument, msg, std::move(details));
}

Value parse_typed(const HyperparameterDescriptor& d, const std::string& flag, const std::string& text) {
  auto fail = [&] {
    return usage("--" + flag + " expects " + std::string(to_string(d.kind)) + ", got '" + text + "'", {flag});
  };
  switch (d.kind) {
    case ParamKind::Real: {
      double v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) throw fail();
      return Value(v);
    }
    case ParamKind::Integer: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) throw fail();
      return Value(v);
    }
    case ParamKind::Categorical:
      for (const auto& c : d.choices)
        if (c.to_string() == text || (c.is_string() && c.as_string() == text)) return c;
      if (!d.choices.empty()) throw fail();
      return infer_scalar(text);
  }
  throw fail();
}

Value yaml_scalar(const YAML::Node& n) {
  if (!n.IsScalar()) throw usage("expected a scalar value");
  if (n.Tag() == "!") return Value(n.Scalar());
  return infer_scalar(n.Scalar());
}

ArgMap yaml_args(const YAML::Node& n) {
  ArgMap out;
  if (!n) return out;
  if (!n.IsMap()) throw usage("'args' must be a mapping");
  for (const auto& kv : n) out[kv.first.as<std::string>()] = yaml_scalar(kv.second);
  return out;
}

YAML::Node load_yaml(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw usage("no such definition file: " + path.string(), {path.string()});
  try {
    YAML::Node root = YAML::LoadFile(path.string());
    if (!root.IsMap()) throw usage(path.string() + ": expected a mapping at the top level");
    return root;
  } catch (const YAML::Exception& e) {
    throw usage(path.string() + ": " + e.what());
  }
}

void check_keys(const YAML::Node& n, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& kv : n) {
    std::string k = kv.first.as<std::string>();
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end()) {
      throw usage(where + ": unknown key '" + k + "'", {k});
    }
  }
}

template <typename T>
T yaml_as(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw usage("bad value for '" + key + "'", {key});
  }
}

std::map<std::string, std::string> yaml_string_map(const YAML::Node& n, const std::string& key) {
  std::map<std::string, std::string> out;
  if (!n.IsMap()) throw usage("'" + key + "' must be a mapping", {key});
  for (const auto& kv : n) out[kv.first.as<std::string>()] = yaml_as<std::string>(kv.second, key);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep))
    if (!part.empty()) out.push_back(part);
  return out;
}

void emit(std::ostream& out, const ordered_json& j) { out << dump_json(j) << "\n"; }

ordered_json trial_summary(const study::Trial& t) {
  ordered_json j;
  j["trial_id"] = t.trial_id;
  j["objective"] = to_json(Value(*t.objective));
  j["assignment"] = to_json(t.assignment);
  j["seed"] = t.seed;
  j["run_id"] = t.run_id;
  return j;
}

struct Globals {
  std::string store_root = "gateflow-store";
  std::string spool_root = "gateflow-spool";
  std::optional<std::int64_t> seed;
  std::optional<std::uint64_t> max_steps;
  std::optional<double> step_timeout;
  std::optional<std::size_t> parallelism;
  std::string out;
};

void add_store_flags(CLI::App* cmd, Globals& g) {
  cmd->add_option("--store-root", g.store_root, "Primary store directory")->capture_default_str();
  cmd->add_option("--spool-root", g.spool_root, "Local spool directory")->capture_default_str();
}

void add_run_flags(CLI::App* cmd, Globals& g) {
  add_store_flags(cmd, g);
  cmd->add_option("--seed", g.seed, "Run or study seed");
  cmd->add_option("--max-steps", g.max_steps, "Step limit per component")->check(CLI::PositiveNumber);
  cmd->add_option("--step-timeout", g.step_timeout, "Seconds a blocked context may wait")->check(CLI::PositiveNumber);
  cmd->add_option("--out", g.out, "Output file");
}

std::chrono::milliseconds seconds_to_ms(double s) {
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::ceil(s * 1000.0)));
}

// A target is a definition file when such a file exists, else an experiment name.
RunDefinition resolve_target(const std::string& target, const TypeRegistry& registry) {
  std::error_code ec;
  if (fs::is_regular_file(target, ec)) return load_run_definition(target, registry);
  RunDefinition def;
  def.experiment = registry.experiment(target);
  return def;
}

store::QueryFilter filter_from(const std::string& runs, const std::string& experiment, const std::string& component,
                               const std::string& tag) {
  store::QueryFilter f;
  for (const auto& r : split(runs, ',')) f.run_ids.insert(r);
  if (!experiment.empty()) f.experiment = experiment;
  if (!component.empty()) f.component = component;
  if (!tag.empty()) f.tag = tag;
  return f;
}

viz::GroupBy parse_group_by(const std::string& text) {
  viz::GroupBy g{false, false, false};
  for (const auto& part : split(text, ',')) {
    if (part == "experiment") g.experiment = true;
    else if (part == "component") g.component = true;
    else if (part == "tag") g.tag = true;
    else throw usage("--group-by takes experiment, component and tag, not '" + part + "'", {part});
  }
  return g;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out;
}

void write_output(const std::string& path, const std::string& text) {
  store::write_file_atomic(path, text);
}

int cmd_run(const TypeRegistry& reg, const std::string& target, const std::vector<std::string>& extras,
            const Globals& g, std::optional<double> stop_after, std::ostream& out, std::ostream& err) {
  RunDefinition def = resolve_target(target, reg);
  ArgMap args = def.args;
  for (auto& [k, v] : parse_param_flags(generate_flags(reg, def.experiment), extras)) args[k] = v;
  std::optional<std::uint64_t> max_steps = g.max_steps ? g.max_steps : def.max_steps ? def.max_steps : def.experiment.max_steps;
  if (!stop_after) stop_after = def.stop_after;
  if (!max_steps && !stop_after) throw usage("run needs --max-steps or --stop-after (or max_steps in the definition)");
  std::int64_t seed = g.seed.value_or(0);

  BuiltExperiment built = build_experiment(reg, def.experiment, args, seed);
  store::ExperimentStore st(g.store_root, g.spool_root);
  store::RunMeta meta;
  meta.experiment = def.experiment.name;
  meta.seed = seed;
  meta.args = built.resolved;
  auto handle = st.open_run(std::move(meta));

  RunOptions opts;
  opts.max_steps = max_steps;
  if (g.step_timeout) opts.step_timeout = seconds_to_ms(*g.step_timeout);
  opts.run = handle.get();

  std::mutex mu;
  std::condition_variable cv;
  bool finished = false;
  std::thread stopper;
  if (stop_after) {
    stopper = std::thread([&, limit = seconds_to_ms(*stop_after)] {
      std::unique_lock lk(mu);
      if (!cv.wait_for(lk, limit, [&] { return finished; })) built.collection->signal_stop();
    });
  }
  RunReport rep = built.collection->run(opts);
  {
    std::lock_guard lk(mu);
    finished = true;
  }
  cv.notify_all();
  if (stopper.joinable()) stopper.join();
  store::RunMeta final_meta = handle->close(std::string(to_string(rep.outcome)));

  ordered_json j;
  j["run_id"] = final_meta.run_id;
  j["experiment"] = final_meta.experiment;
  j["outcome"] = to_string(rep.outcome);
  j["steps"] = ordered_json::object();
  for (const auto& [name, n] : rep.steps) j["steps"][name] = n;
  j["records"] = final_meta.records;
  j["spooled"] = final_meta.spooled;
  emit(out, j);
  if (!g.out.empty()) {
    ordered_json trace = ordered_json::object();
    for (const auto& [ns, values] : rep.trace) {
      trace[ns] = ordered_json::array();
      for (const auto& v : values) trace[ns].push_back(to_json(v));
    }
    write_output(g.out, dump_json(trace) + "\n");
  }
  if (final_meta.spooled > 0) err << "primary store unavailable; " << final_meta.spooled << " records spooled\n";
  switch (rep.outcome) {
    case Outcome::Timeout:
      err << "timeout: blocked on\n";
      for (const auto& b : rep.blocked_on) err << "  " << b.component << " " << b.ns << " " << to_string(b.op) << "\n";
      return kTimeout;
    case Outcome::Error:
      err << "error: " << rep.error_message << "\n";
      return kRuntime;
    default:
      return kOk;
  }
}

int cmd_study(const TypeRegistry& reg, const std::string& file, const std::vector<std::string>& extras,
              const Globals& g, std::optional<std::int64_t> n_trials, std::ostream& out, std::ostream& err) {
  study::StudyConfig c = load_study_definition(file).config;
  if (g.seed) c.seed = *g.seed;
  if (n_trials) c.n_trials = *n_trials;
  if (g.parallelism) c.parallelism = *g.parallelism;
  if (g.max_steps) c.max_steps = g.max_steps;
  if (g.step_timeout) c.step_timeout = seconds_to_ms(*g.step_timeout);
  for (auto& [k, v] : parse_param_flags(generate_flags(reg, reg.experiment(c.experiment)), extras)) c.base_args[k] = v;
  store::ExperimentStore st(g.store_root, g.spool_root);
  study::Study s = study::run_study(reg, c, st);
  std::size_t complete = 0;
  for (const auto& t : s.trials) complete += t.state == study::TrialState::Complete;
  ordered_json j;
  j["study_id"] = s.study_id;
  j["experiment"] = c.experiment;
  j["n_trials"] = s.trials.size();
  j["complete"] = complete;
  j["failed"] = s.trials.size() - complete;
  j["best"] = complete ? trial_summary(study::best_trial(s)) : ordered_json(nullptr);
  emit(out, j);
  if (complete < s.trials.size()) err << (s.trials.size() - complete) << " trials failed\n";
  return kOk;
}

}  // namespace

Value infer_scalar(const std::string& text) {
  std::int64_t i = 0;
  auto [pi, ei] = std::from_chars(text.data(), text.data() + text.size(), i);
  if (ei == std::errc() && pi == text.data() + text.size() && !text.empty()) return Value(i);
  double d = 0;
  auto [pd, ed] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ed == std::errc() && pd == text.data() + text.size() && !text.empty()) return Value(d);
  if (text == "true") return Value(true);
  if (text == "false") return Value(false);
  return Value(text);
}

FlagSchema generate_flags(const TypeRegistry& registry, const ExperimentSpec& experiment) {
  FlagSchema schema;
  for (auto& [name, d] : collect_hyperparameters(registry, experiment)) schema.flags.push_back({name, d});
  return schema;
}

ArgMap parse_param_flags(const FlagSchema& schema, const std::vector<std::string>& tokens) {
  ArgMap out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    if (tok.rfind("--", 0) != 0 || tok.size() == 2) throw usage("unexpected argument '" + tok + "'", {tok});
    std::string name = tok.substr(2), text;
    if (auto eq = name.find('='); eq != std::string::npos) {
      text = name.substr(eq + 1);
      name = name.substr(0, eq);
    } else {
      if (i + 1 >= tokens.size()) throw usage("--" + name + " needs a value", {name});
      text = tokens[++i];
    }
    const Flag* flag = nullptr;
    std::vector<std::string> candidates;
    for (const auto& f : schema.flags) {
      if (f.name == name) {
        flag = &f;
        break;
      }
      if (f.name.size() > name.size() && f.name.ends_with(name) && f.name[f.name.size() - name.size() - 1] == '.')
        candidates.push_back(f.name);
    }
    if (!flag) {
      if (candidates.size() > 1) {
        throw Error(ErrorCode::AmbiguousArgument, "--" + name + " matches several parameters; use one of --" +
                                                      candidates[0] + ", --" + candidates[1], candidates);
      }
      if (candidates.empty()) throw usage("unknown option --" + name, {name});
      for (const auto& f : schema.flags)
        if (f.name == candidates[0]) flag = &f;
    }
    Value v = parse_typed(flag->descriptor, flag->name, text);
    if (const auto& b = flag->descriptor.bounds; b && (v.as_real() < b->first || v.as_real() > b->second)) {
      std::ostringstream msg;
      msg << "--" << flag->name << " = " << text << " is outside [" << b->first << ", " << b->second << "]";
      throw usage(msg.str(), {flag->name});
    }
    out[flag->name] = v;
  }
  return out;
}

RunDefinition load_run_definition(const fs::path& path, const TypeRegistry& registry) {
  YAML::Node root = load_yaml(path);
  check_keys(root, {"experiment", "name", "components", "args", "max_steps", "stop_after"}, path.string());
  RunDefinition def;
  if (root["experiment"] && root["components"]) throw usage(path.string() + ": give either 'experiment' or 'components'");
  if (root["experiment"]) {
    def.experiment = registry.experiment(yaml_as<std::string>(root["experiment"], "experiment"));
  } else if (root["components"]) {
    const YAML::Node& list = root["components"];
    if (!list.IsSequence()) throw usage("'components' must be a list");
    def.experiment.name = root["name"] ? yaml_as<std::string>(root["name"], "name") : path.stem().string();
    for (const auto& c : list) {
      if (!c.IsMap()) throw usage("each component must be a mapping");
      check_keys(c, {"type", "name", "io_map", "init", "step", "max_steps", "slots", "args"}, "component");
      if (!c["type"]) throw usage("component without 'type'");
      FactoryRecipe r;
      r.type = yaml_as<std::string>(c["type"], "type");
      registry.component(r.type);
      if (c["name"]) r.instance = yaml_as<std::string>(c["name"], "name");
      if (c["io_map"]) {
        auto m = yaml_string_map(c["io_map"], "io_map");
        r.io_map = IOMap(m.begin(), m.end());
      }
      if (c["init"]) r.init_source = c["init"].IsNull() ? std::string() : yaml_as<std::string>(c["init"], "init");
      if (c["step"]) r.step_source = yaml_as<std::string>(c["step"], "step");
      if (c["max_steps"]) r.max_steps = yaml_as<std::uint64_t>(c["max_steps"], "max_steps");
      if (c["slots"]) r.slots = yaml_string_map(c["slots"], "slots");
      if (c["args"]) r.extra_args = yaml_args(c["args"]);
      def.experiment.recipes.push_back(std::move(r));
    }
  } else {
    throw usage(path.string() + ": needs 'experiment' or 'components'");
  }
  def.args = yaml_args(root["args"]);
  if (root["max_steps"]) def.max_steps = yaml_as<std::uint64_t>(root["max_steps"], "max_steps");
  if (root["stop_after"]) def.stop_after = yaml_as<double>(root["stop_after"], "stop_after");
  return def;
}

StudyDefinition load_study_definition(const fs::path& path) {
  YAML::Node root = load_yaml(path);
  check_keys(root, {"experiment", "direction", "objective", "sampler", "seed", "n_trials", "parallelism", "max_steps",
                    "step_timeout", "args"},
             path.string());
  StudyDefinition def;
  study::StudyConfig& c = def.config;
  if (!root["experiment"]) throw usage(path.string() + ": missing 'experiment'");
  c.experiment = yaml_as<std::string>(root["experiment"], "experiment");
  if (root["direction"]) c.direction = study::parse_direction(yaml_as<std::string>(root["direction"], "direction"));
  const YAML::Node& obj = root["objective"];
  if (!obj) throw usage(path.string() + ": missing 'objective'");
  if (obj.IsScalar()) {
    c.objective_tag = obj.Scalar();
  } else {
    check_keys(obj, {"tag", "reduce"}, "objective");
    if (!obj["tag"]) throw usage("objective without 'tag'");
    c.objective_tag = yaml_as<std::string>(obj["tag"], "tag");
    if (obj["reduce"]) c.reduce = study::parse_reduce(yaml_as<std::string>(obj["reduce"], "reduce"));
  }
  if (root["sampler"]) c.sampler = study::parse_sampler(yaml_as<std::string>(root["sampler"], "sampler"));
  if (root["seed"]) c.seed = yaml_as<std::int64_t>(root["seed"], "seed");
  if (root["n_trials"]) c.n_trials = yaml_as<std::int64_t>(root["n_trials"], "n_trials");
  if (root["parallelism"]) c.parallelism = yaml_as<std::size_t>(root["parallelism"], "parallelism");
  if (root["max_steps"]) c.max_steps = yaml_as<std::uint64_t>(root["max_steps"], "max_steps");
  if (root["step_timeout"]) c.step_timeout = seconds_to_ms(yaml_as<double>(root["step_timeout"], "step_timeout"));
  c.base_args = yaml_args(root["args"]);
  return def;
}

std::string batch_script(const study::StudyConfig& config, const fs::path& definition, const BatchOptions& options) {
  if (config.n_trials <= 0) throw usage("study has no trials to partition");
  auto n = static_cast<std::size_t>(config.n_trials);
  if (options.partitions == 0 || options.partitions > n) {
    throw usage("partitions must be between 1 and n_trials (" + std::to_string(n) + ")");
  }
  std::ostringstream o;
  o << "#!/bin/bash\n";
  for (const auto& h : options.headers) o << h << "\n";
  std::string tail;
  for (const auto& a : options.study_args) tail += " " + a;
  std::string def = definition.string();
  if (options.partitions == 1) {
    o << "set -euo pipefail\n";
    o << options.binary << " study '" << def << "' --seed " << config.seed << " --n-trials " << n << tail << "\n";
    return o.str();
  }
  std::string directive = options.array_directive;
  if (auto p = directive.find("{last}"); p != std::string::npos) {
    directive.replace(p, 6, std::to_string(options.partitions - 1));
  }
  o << directive << "\n";
  o << "set -euo pipefail\n";
  std::size_t base = n / options.partitions, extra = n % options.partitions, offset = 0;
  std::string counts, offsets;
  for (std::size_t k = 0; k < options.partitions; ++k) {
    std::size_t count = base + (k < extra ? 1 : 0);
    counts += (k ? " " : "") + std::to_string(count);
    offsets += (k ? " " : "") + std::to_string(offset);
    offset += count;
  }
  o << "COUNTS=(" << counts << ")\n";
  o << "OFFSETS=(" << offsets << ")\n";
  o << "IDX=${" << options.index_variable << "}\n";
  o << "# trial seeds of partition IDX continue from " << config.seed << " + OFFSETS[IDX]\n";
  o << options.binary << " study '" << def << "' --seed $((" << config.seed << " + OFFSETS[IDX])) --n-trials ${COUNTS[IDX]}"
    << tail << "\n";
  return o.str();
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const TypeRegistry* registry) {
  TypeRegistry builtin;
  if (!registry) {
    register_builtin(builtin);
    registry = &builtin;
  }
  const TypeRegistry& reg = *registry;

  CLI::App app{"Run component graphs, studies and exports against a file store."};
  app.name("gateflow");
  app.require_subcommand(1);
  Globals g;

  std::string target;
  std::optional<double> stop_after;
  auto* run = app.add_subcommand("run", "Build and run an experiment (name or definition file)")->allow_extras();
  run->add_option("target", target, "Registered experiment or definition file")->required();
  add_run_flags(run, g);
  run->add_option("--stop-after", stop_after, "Signal stop after this many seconds")->check(CLI::PositiveNumber);
  run->footer("Parameter flags: --<Component>.<param> or --<Component>.<Subcomponent>.<param>; see 'list --flags'.");

  std::string study_file;
  std::optional<std::int64_t> n_trials;
  auto* study_cmd = app.add_subcommand("study", "Run a hyperparameter study from a definition file")->allow_extras();
  study_cmd->add_option("definition", study_file, "Study definition file")->required();
  add_run_flags(study_cmd, g);
  study_cmd->add_option("--parallelism", g.parallelism, "Concurrent trials")->check(CLI::PositiveNumber);
  study_cmd->add_option("--n-trials", n_trials, "Override n_trials")->check(CLI::NonNegativeNumber);

  bool list_runs = false, list_studies = false;
  std::string flags_of;
  auto* list = app.add_subcommand("list", "List registered types, runs or studies");
  add_store_flags(list, g);
  list->add_flag("--runs", list_runs, "List runs in the store");
  list->add_flag("--studies", list_studies, "List studies in the store");
  list->add_option("--flags", flags_of, "Print the parameter flags of an experiment");

  std::string runs, experiment, component, tag, group_by = "experiment,component,tag", title;
  bool raw = false, strip_walltime = false;
  auto* exp = app.add_subcommand("export", "Aggregate a tag across runs and write CSV");
  add_store_flags(exp, g);
  exp->add_option("--tag", tag, "Record tag")->required();
  exp->add_option("--runs", runs, "Comma-separated run ids");
  exp->add_option("--experiment", experiment, "Only runs of this experiment");
  exp->add_option("--component", component, "Only this component");
  exp->add_option("--group-by", group_by, "Key fields")->capture_default_str();
  exp->add_flag("--raw", raw, "Write matching records as NDJSON instead of aggregates");
  exp->add_flag("--strip-walltime", strip_walltime, "Drop wall_time from --raw output");
  exp->add_option("--out", g.out, "Output CSV (stdout when absent)");

  auto* plot = app.add_subcommand("plot", "Render aggregated series as SVG");
  add_store_flags(plot, g);
  plot->add_option("--tag", tag, "Record tag")->required();
  plot->add_option("--runs", runs, "Comma-separated run ids");
  plot->add_option("--experiment", experiment, "Only runs of this experiment");
  plot->add_option("--component", component, "Only this component");
  plot->add_option("--group-by", group_by, "Key fields")->capture_default_str();
  plot->add_option("--title", title, "Chart title");
  plot->add_option("--out", g.out, "Output SVG")->required();

  auto* merge = app.add_subcommand("merge-spool", "Merge spooled records into the primary store");
  add_store_flags(merge, g);

  std::size_t partitions = 1;
  BatchOptions batch;
  auto* emitb = app.add_subcommand("emit-batch-script", "Write an array-job script running a study in partitions");
  emitb->add_option("definition", study_file, "Study definition file")->required();
  emitb->add_option("--partitions", partitions, "Array size")->capture_default_str();
  emitb->add_option("--header", batch.headers, "Scheduler header line (repeatable)");
  emitb->add_option("--array-directive", batch.array_directive, "Array header; {last} is the last index")
      ->capture_default_str();
  emitb->add_option("--index-var", batch.index_variable, "Environment variable holding the array index")
      ->capture_default_str();
  emitb->add_option("--binary", batch.binary, "gateflow executable path")->capture_default_str();
  emitb->add_option("--store-root", g.store_root, "Store root passed to each partition");
  emitb->add_option("--out", g.out, "Script path (stdout when absent)");

  auto* oracle = app.add_subcommand("oracle-run", "Run the single-context reference interpreter");
  oracle->group("");
  oracle->add_option("target", target, "Registered experiment or definition file")->required();
  oracle->add_option("--max-steps", g.max_steps, "Step limit");
  oracle->add_option("--seed", g.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(reg, target, run->remaining(), g, stop_after, out, err);
    if (*study_cmd) return cmd_study(reg, study_file, study_cmd->remaining(), g, n_trials, out, err);
    if (*list) {
      if (!flags_of.empty()) {
        for (const auto& f : generate_flags(reg, reg.experiment(flags_of)).flags) {
          ordered_json j;
          j["flag"] = "--" + f.name;
          j["kind"] = to_string(f.descriptor.kind);
          j["default"] = to_json(f.descriptor.default_value);
          if (f.descriptor.bounds) {
            j["bounds"] = {to_json(Value(f.descriptor.bounds->first)), to_json(Value(f.descriptor.bounds->second))};
          } else {
            j["bounds"] = nullptr;
          }
          emit(out, j);
        }
        return kOk;
      }
      if (list_runs) {
        for (const auto& m : store::list_runs(g.store_root)) {
          emit(out, {{"run_id", m.run_id}, {"experiment", m.experiment}, {"seed", m.seed}, {"outcome", m.outcome},
                     {"records", m.records}});
        }
        return kOk;
      }
      if (list_studies) {
        for (const auto& s : study::list_studies(g.store_root)) {
          ordered_json j{{"study_id", s.study_id}, {"experiment", s.config.experiment}, {"trials", s.trials.size()}};
          try {
            j["best_objective"] = to_json(Value(*study::best_trial(s).objective));
          } catch (const Error&) {
            j["best_objective"] = nullptr;
          }
          emit(out, j);
        }
        return kOk;
      }
      for (const auto& n : reg.component_names()) emit(out, {{"tier", "component"}, {"name", n}});
      for (const auto& n : reg.subcomponent_names()) emit(out, {{"tier", "subcomponent"}, {"name", n}});
      for (const auto& n : reg.experiment_names()) emit(out, {{"tier", "experiment"}, {"name", n}});
      return kOk;
    }
    if (*exp || *plot) {
      store::QueryFilter f = filter_from(runs, experiment, component, tag);
      if (*exp && raw) {
        std::string text;
        for (const auto& r : store::query(g.store_root, f)) {
          ordered_json j;
          j["r"] = r.run_id;
          j["c"] = r.component;
          j["t"] = r.tag;
          j["s"] = r.step;
          if (!strip_walltime) j["w"] = r.wall_time;
          j["v"] = to_json(r.value);
          text += dump_json(j) + "\n";
        }
        if (g.out.empty()) out << text;
        else write_output(g.out, text);
        return kOk;
      }
      auto series = viz::aggregate_runs(g.store_root, f, parse_group_by(group_by));
      if (*plot) {
        viz::SvgStyle style;
        style.title = title;
        style.y_label = tag;
        write_output(g.out, viz::render_svg(series, style));
        emit(out, {{"out", g.out}, {"series", series.size()}});
        return kOk;
      }
      if (series.empty()) {
        err << "no records match\n";
        if (g.out.empty()) out << viz::to_csv({});
        else write_output(g.out, viz::to_csv({}));
        return kOk;
      }
      if (g.out.empty()) {
        for (const auto& s : series) {
          if (series.size() > 1) out << "# " << s.key.label() << "\n";
          out << viz::to_csv(s);
        }
        return kOk;
      }
      for (const auto& s : series) {
        fs::path p = g.out;
        if (series.size() > 1) {
          p = p.parent_path() / (p.stem().string() + "." + sanitize(s.key.label()) + p.extension().string());
        }
        viz::export_csv(s, p);
        emit(out, {{"out", p.string()}, {"key", s.key.label()}, {"rows", s.steps.size()}});
      }
      return kOk;
    }
    if (*merge) {
      auto r = store::merge_spool(g.store_root, g.spool_root);
      emit(out, {{"merged", r.merged}, {"skipped", r.skipped}});
      return kOk;
    }
    if (*emitb) {
      batch.partitions = partitions;
      study::StudyConfig c = load_study_definition(study_file).config;
      if (!g.store_root.empty()) batch.study_args = {"--store-root", "'" + g.store_root + "'"};
      std::string text = batch_script(c, fs::absolute(study_file), batch);
      if (g.out.empty()) out << text;
      else {
        write_output(g.out, text);
        fs::permissions(g.out, fs::perms::owner_exec | fs::perms::group_exec, fs::perm_options::add);
        emit(out, {{"out", g.out}, {"partitions", partitions}});
      }
      return kOk;
    }
    if (*oracle) {
      RunDefinition def = resolve_target(target, reg);
      std::optional<std::uint64_t> steps = g.max_steps ? g.max_steps : def.max_steps ? def.max_steps : def.experiment.max_steps;
      if (!steps) throw usage("oracle-run needs --max-steps");
      BuiltExperiment built = build_experiment(reg, def.experiment, def.args, g.seed.value_or(0));
      std::vector<Component> comps;
      for (const auto& c : built.collection->components()) comps.push_back(c);
      OracleOptions oopts;
      oopts.max_steps = steps;
      Trace t = oracle_run(comps, oopts);
      ordered_json j = ordered_json::object();
      for (const auto& [ns, values] : t) {
        j[ns] = ordered_json::array();
        for (const auto& v : values) j[ns].push_back(to_json(v));
      }
      emit(out, j);
      return kOk;
    }
  } catch (const Error& e) {
    err << "gateflow: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "gateflow: " << e.what() << "\n";
    return kStoreIO;
  }
  return kUsage;
}

}  // namespace gateflow::cli
