#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gateflow/component.hpp"
#include "gateflow/dsl.hpp"
#include "gateflow/error.hpp"
#include "gateflow/oracle.hpp"
#include "gateflow/registry.hpp"
#include "gateflow/store.hpp"
#include "gateflow/study.hpp"
#include "gateflow/viz.hpp"

namespace py = pybind11;
using namespace gateflow;
namespace fs = std::filesystem;

namespace {

Value to_value(const py::handle& h) {
  if (py::isinstance<py::bool_>(h)) return Value(h.cast<bool>());
  if (py::isinstance<py::int_>(h)) return Value(h.cast<std::int64_t>());
  if (py::isinstance<py::float_>(h)) return Value(h.cast<double>());
  if (py::isinstance<py::str>(h)) return Value(h.cast<std::string>());
  throw Error(ErrorCode::TypeMismatch, "unsupported value type: " + std::string(py::str(py::type::handle_of(h))));
}

py::object from_value(const Value& v) {
  switch (v.kind()) {
    case ValueKind::Real: return py::float_(v.as_real());
    case ValueKind::Integer: return py::int_(v.as_integer());
    case ValueKind::Boolean: return py::bool_(v.as_bool());
    case ValueKind::String: return py::str(v.as_string());
  }
  return py::none();
}

ArgMap to_args(const py::dict& d) {
  ArgMap out;
  for (auto [k, v] : d) out[k.cast<std::string>()] = to_value(v);
  return out;
}

py::dict from_args(const ArgMap& a) {
  py::dict out;
  for (const auto& [k, v] : a) out[py::str(k)] = from_value(v);
  return out;
}

py::dict from_trace(const Trace& t) {
  py::dict out;
  for (const auto& [ns, values] : t) {
    py::list l;
    for (const auto& v : values) l.append(from_value(v));
    out[py::str(ns)] = l;
  }
  return out;
}

py::dict from_descriptor(const std::string& name, const HyperparameterDescriptor& d) {
  py::dict out;
  out["name"] = name;
  out["kind"] = std::string(to_string(d.kind));
  out["default"] = from_value(d.default_value);
  out["bounds"] = d.bounds ? py::object(py::make_tuple(d.bounds->first, d.bounds->second)) : py::none();
  py::list choices;
  for (const auto& c : d.choices) choices.append(from_value(c));
  out["choices"] = choices;
  out["log_scale"] = d.log_scale;
  out["fixed"] = d.fixed();
  return out;
}

py::dict from_trial(const study::Trial& t) {
  py::dict out;
  out["trial_id"] = t.trial_id;
  out["assignment"] = from_args(t.assignment);
  out["state"] = std::string(study::to_string(t.state));
  out["objective"] = t.objective ? py::object(py::float_(*t.objective)) : py::none();
  out["seed"] = t.seed;
  out["run_id"] = t.run_id;
  out["error"] = t.error;
  return out;
}

py::dict from_study(const study::Study& s) {
  py::dict out;
  out["study_id"] = s.study_id;
  out["experiment"] = s.config.experiment;
  py::list trials;
  for (const auto& t : s.trials) trials.append(from_trial(t));
  out["trials"] = trials;
  return out;
}

py::dict from_record(const store::MetricRecord& r) {
  py::dict out;
  out["run_id"] = r.run_id;
  out["component"] = r.component;
  out["tag"] = r.tag;
  out["step"] = r.step;
  out["wall_time"] = r.wall_time;
  out["value"] = from_value(r.value);
  return out;
}

py::dict from_meta(const store::RunMeta& m) {
  py::dict out;
  out["run_id"] = m.run_id;
  out["experiment"] = m.experiment;
  out["start_time"] = m.start_time;
  out["seed"] = m.seed;
  out["args"] = from_args(m.args);
  out["outcome"] = m.outcome;
  out["records"] = m.records;
  out["spooled"] = m.spooled;
  return out;
}

py::dict from_series(const viz::AggregatedSeries& s) {
  py::dict out;
  out["experiment"] = s.key.experiment;
  out["component"] = s.key.component;
  out["tag"] = s.key.tag;
  out["steps"] = s.steps;
  out["mean"] = s.mean;
  out["std"] = s.stddev;
  out["n"] = s.n;
  return out;
}

viz::AggregatedSeries to_series(const py::dict& d) {
  viz::AggregatedSeries s;
  if (d.contains("experiment")) s.key.experiment = d["experiment"].cast<std::string>();
  if (d.contains("component")) s.key.component = d["component"].cast<std::string>();
  if (d.contains("tag")) s.key.tag = d["tag"].cast<std::string>();
  s.steps = d["steps"].cast<std::vector<std::uint64_t>>();
  s.mean = d["mean"].cast<std::vector<double>>();
  s.stddev = d["std"].cast<std::vector<double>>();
  s.n = d["n"].cast<std::vector<std::uint64_t>>();
  return s;
}

store::QueryFilter make_filter(const std::optional<std::vector<std::string>>& run_ids,
                               const std::optional<std::string>& experiment,
                               const std::optional<std::string>& component, const std::optional<std::string>& tag) {
  store::QueryFilter f;
  if (run_ids) f.run_ids.insert(run_ids->begin(), run_ids->end());
  f.experiment = experiment;
  f.component = component;
  f.tag = tag;
  return f;
}

py::dict run_experiment(const TypeRegistry& reg, const std::string& name, const py::dict& args, std::int64_t seed,
                        std::optional<std::uint64_t> max_steps, double step_timeout,
                        const std::optional<fs::path>& store_root, const std::optional<fs::path>& spool_root) {
  BuiltExperiment built = build_experiment(reg, name, to_args(args), seed);
  RunOptions opts;
  opts.max_steps = max_steps ? max_steps : built.max_steps;
  if (!opts.max_steps) throw Error(ErrorCode::InvalidArgument, "run needs max_steps");
  opts.step_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(step_timeout * 1000));
  std::unique_ptr<store::RunHandle> handle;
  std::optional<store::ExperimentStore> st;
  if (store_root) {
    st.emplace(*store_root, spool_root.value_or(*store_root / "spool"));
    store::RunMeta meta;
    meta.experiment = name;
    meta.seed = seed;
    meta.args = built.resolved;
    handle = st->open_run(meta);
    opts.run = handle.get();
  }
  RunReport rep;
  {
    py::gil_scoped_release release;
    rep = built.collection->run(opts);
  }
  py::dict out;
  out["outcome"] = std::string(to_string(rep.outcome));
  out["steps"] = rep.steps;
  out["trace"] = from_trace(rep.trace);
  py::list blocked;
  for (const auto& b : rep.blocked_on) blocked.append(py::make_tuple(b.component, b.ns, std::string(to_string(b.op))));
  out["blocked_on"] = blocked;
  out["error_code"] = rep.error_code ? py::object(py::str(std::string(to_string(*rep.error_code)))) : py::none();
  out["error_message"] = rep.error_message;
  out["resolved_args"] = from_args(built.resolved);
  if (handle) {
    store::RunMeta meta = handle->close(std::string(to_string(rep.outcome)));
    out["run_id"] = meta.run_id;
  } else {
    out["run_id"] = py::none();
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_gateflow, m) {
  m.doc() = "Bindings for the gateflow runtime, registry, studies, store and export.";

  static py::exception<Error> error_type(m, "GateflowError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(e.what(), std::string(to_string(e.code())), e.details());
      PyErr_SetObject(error_type.ptr(), args.ptr());
    }
  });

  m.def(
      "format_program", [](const std::string& src) { return dsl::to_source(dsl::parse(src)); },
      py::arg("source"), "Parse a step body and print it back in canonical form.");
  m.def(
      "extract_io",
      [](const std::string& src, const std::set<std::string>& io_names) {
        auto io = dsl::extract_io(dsl::parse(src), io_names);
        py::dict out;
        out["reads"] = io.reads;
        out["writes"] = io.writes;
        out["locals"] = io.locals;
        return out;
      },
      py::arg("source"), py::arg("io_names"));

  py::class_<TypeRegistry>(m, "Registry")
      .def(py::init<>())
      .def_static(
          "builtin",
          [] {
            TypeRegistry r;
            register_builtin(r);
            return r;
          },
          "A registry holding the builtin toy components and experiments.")
      .def("component_names", &TypeRegistry::component_names)
      .def("subcomponent_names", &TypeRegistry::subcomponent_names)
      .def("experiment_names", &TypeRegistry::experiment_names)
      .def(
          "hyperparameters",
          [](const TypeRegistry& r, const std::string& experiment) {
            py::list out;
            for (const auto& [name, d] : collect_hyperparameters(r, experiment)) out.append(from_descriptor(name, d));
            return out;
          },
          py::arg("experiment"))
      .def(
          "set_bounds",
          [](TypeRegistry& r, const std::string& type, const std::string& param,
             std::optional<std::pair<double, double>> bounds) { r.set_bounds(type, param, bounds); },
          py::arg("type"), py::arg("param"), py::arg("bounds"))
      .def("run", &run_experiment, py::arg("experiment"), py::arg("args") = py::dict(), py::arg("seed") = 0,
           py::arg("max_steps") = py::none(), py::arg("step_timeout") = 5.0, py::arg("store_root") = py::none(),
           py::arg("spool_root") = py::none(),
           "Build and run an experiment. Returns outcome, steps, trace and blocked_on.")
      .def(
          "oracle_run",
          [](const TypeRegistry& r, const std::string& name, const py::dict& args, std::int64_t seed,
             std::uint64_t max_steps) {
            BuiltExperiment built = build_experiment(r, name, to_args(args), seed);
            OracleOptions o;
            o.max_steps = max_steps;
            return from_trace(oracle_run(built.collection->components(), o));
          },
          py::arg("experiment"), py::arg("args") = py::dict(), py::arg("seed") = 0, py::arg("max_steps"))
      .def(
          "run_study",
          [](const TypeRegistry& r, const std::string& experiment, const std::string& objective, std::int64_t n_trials,
             std::int64_t seed, const std::string& direction, const std::string& sampler, const std::string& reduce,
             std::size_t parallelism, std::optional<std::uint64_t> max_steps, const py::dict& base_args,
             const fs::path& store_root, const std::optional<fs::path>& spool_root) {
            study::StudyConfig c;
            c.experiment = experiment;
            c.objective_tag = objective;
            c.n_trials = n_trials;
            c.seed = seed;
            c.direction = study::parse_direction(direction);
            c.sampler = study::parse_sampler(sampler);
            c.reduce = study::parse_reduce(reduce);
            c.parallelism = parallelism;
            c.max_steps = max_steps;
            c.base_args = to_args(base_args);
            store::ExperimentStore st(store_root, spool_root.value_or(store_root / "spool"));
            study::Study s;
            {
              py::gil_scoped_release release;
              s = study::run_study(r, c, st);
            }
            return from_study(s);
          },
          py::arg("experiment"), py::arg("objective"), py::arg("n_trials"), py::arg("seed") = 0,
          py::arg("direction") = "minimize", py::arg("sampler") = "uniform", py::arg("reduce") = "last",
          py::arg("parallelism") = 1, py::arg("max_steps") = py::none(), py::arg("base_args") = py::dict(),
          py::arg("store_root"), py::arg("spool_root") = py::none());

  m.def(
      "best_trial",
      [](const fs::path& root, const std::string& study_id) {
        auto s = study::load_study(root, study_id);
        if (!s) throw Error(ErrorCode::InvalidArgument, "no study " + study_id);
        return from_trial(study::best_trial(*s));
      },
      py::arg("store_root"), py::arg("study_id"));
  m.def(
      "list_studies",
      [](const fs::path& root) {
        py::list out;
        for (const auto& s : study::list_studies(root)) out.append(from_study(s));
        return out;
      },
      py::arg("store_root"));

  m.def(
      "query",
      [](const fs::path& root, std::optional<std::vector<std::string>> run_ids, std::optional<std::string> experiment,
         std::optional<std::string> component, std::optional<std::string> tag) {
        py::list out;
        for (const auto& r : store::query(root, make_filter(run_ids, experiment, component, tag)))
          out.append(from_record(r));
        return out;
      },
      py::arg("store_root"), py::arg("run_ids") = py::none(), py::arg("experiment") = py::none(),
      py::arg("component") = py::none(), py::arg("tag") = py::none());
  m.def(
      "list_runs",
      [](const fs::path& root) {
        py::list out;
        for (const auto& meta : store::list_runs(root)) out.append(from_meta(meta));
        return out;
      },
      py::arg("store_root"));
  m.def(
      "merge_spool",
      [](const fs::path& primary, const fs::path& spool) {
        auto r = store::merge_spool(primary, spool);
        py::dict out;
        out["merged"] = r.merged;
        out["skipped"] = r.skipped;
        return out;
      },
      py::arg("store_root"), py::arg("spool_root"));

  m.def(
      "aggregate",
      [](const fs::path& root, std::optional<std::vector<std::string>> run_ids, std::optional<std::string> experiment,
         std::optional<std::string> component, std::optional<std::string> tag, bool by_experiment, bool by_component,
         bool by_tag) {
        py::list out;
        for (const auto& s : viz::aggregate_runs(root, make_filter(run_ids, experiment, component, tag),
                                                 {by_experiment, by_component, by_tag}))
          out.append(from_series(s));
        return out;
      },
      py::arg("store_root"), py::arg("run_ids") = py::none(), py::arg("experiment") = py::none(),
      py::arg("component") = py::none(), py::arg("tag") = py::none(), py::arg("by_experiment") = true,
      py::arg("by_component") = true, py::arg("by_tag") = true);
  m.def(
      "to_csv", [](const py::dict& series) { return viz::to_csv(to_series(series)); }, py::arg("series"));
  m.def(
      "parse_csv", [](const std::string& text) { return from_series(viz::parse_csv(text)); }, py::arg("text"));
  m.def(
      "render_svg",
      [](const std::vector<py::dict>& series, const std::string& title, int width, int height) {
        std::vector<viz::AggregatedSeries> s;
        for (const auto& d : series) s.push_back(to_series(d));
        viz::SvgStyle style;
        style.title = title;
        style.width = width;
        style.height = height;
        return viz::render_svg(std::move(s), style);
      },
      py::arg("series"), py::arg("title") = "", py::arg("width") = 800, py::arg("height") = 500);
}
