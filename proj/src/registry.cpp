#include "gateflow/registry.hpp"

#include <algorithm>
#include <cmath>

#include "gateflow/error.hpp"

namespace gateflow {

namespace {

void invalid(const HyperparameterDescriptor& d, const std::string& why) {
  throw Error(ErrorCode::InvalidDescriptor, "parameter '" + d.name + "': " + why, {d.name});
}

bool kind_matches(ParamKind k, const Value& v) {
  switch (k) {
    case ParamKind::Real: return v.is_numeric();
    case ParamKind::Integer: return v.is_integer();
    case ParamKind::Categorical: return true;
  }
  return false;
}

template <typename Map>
std::vector<std::string> keys_of(const Map& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

HyperparameterDescriptor* find_param(std::vector<HyperparameterDescriptor>& params, const std::string& name) {
  for (auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void validate_params(const std::vector<HyperparameterDescriptor>& params, const std::string& owner) {
  std::set<std::string> seen;
  for (const auto& p : params) {
    validate_descriptor(p);
    if (!seen.insert(p.name).second) {
      throw Error(ErrorCode::InvalidDescriptor, "'" + owner + "' declares '" + p.name + "' twice", {p.name});
    }
  }
}

}  // namespace

std::string_view to_string(ParamKind k) {
  switch (k) {
    case ParamKind::Real: return "real";
    case ParamKind::Integer: return "integer";
    case ParamKind::Categorical: return "categorical";
  }
  return "?";
}

void validate_descriptor(const HyperparameterDescriptor& d) {
  if (d.name.empty()) invalid(d, "empty name");
  if (!kind_matches(d.kind, d.default_value)) invalid(d, "default " + d.default_value.to_string() + " is not " + std::string(to_string(d.kind)));
  if (d.kind == ParamKind::Categorical) {
    if (d.bounds) invalid(d, "categorical parameters take choices, not bounds");
    if (d.log_scale) invalid(d, "log scale needs real bounds");
    if (!d.choices.empty() && d.choices.size() < 2) invalid(d, "needs at least two choices");
    return;
  }
  if (!d.choices.empty()) invalid(d, "numeric parameters take bounds, not choices");
  if (d.bounds) {
    auto [lo, hi] = *d.bounds;
    if (!std::isfinite(lo) || !std::isfinite(hi)) invalid(d, "bounds must be finite");
    if (!(lo < hi)) invalid(d, "bounds need low < high");
    if (d.kind == ParamKind::Integer && (lo != std::floor(lo) || hi != std::floor(hi))) {
      invalid(d, "integer bounds must be whole numbers");
    }
  }
  if (d.log_scale && (d.kind != ParamKind::Real || !d.bounds || d.bounds->first <= 0)) {
    invalid(d, "log scale needs strictly positive real bounds");
  }
}

Value coerce_to(const HyperparameterDescriptor& d, const Value& v) {
  switch (d.kind) {
    case ParamKind::Real:
      if (v.is_numeric()) return Value(v.as_real());
      break;
    case ParamKind::Integer:
      if (v.is_integer()) return v;
      if (v.is_real() && std::isfinite(v.as_real()) && v.as_real() == std::floor(v.as_real()) &&
          std::abs(v.as_real()) < 9.0e15) {
        return Value(static_cast<std::int64_t>(v.as_real()));
      }
      break;
    case ParamKind::Categorical:
      if (d.choices.empty() || std::any_of(d.choices.begin(), d.choices.end(), [&](const Value& c) { return c == v; })) {
        return v;
      }
      throw Error(ErrorCode::InvalidArgument, "'" + v.to_string() + "' is not a choice of '" + d.name + "'", {d.name});
  }
  throw Error(ErrorCode::InvalidArgument,
              "'" + d.name + "' expects " + std::string(to_string(d.kind)) + ", got " + v.to_string(), {d.name});
}

std::function<Body(const ArgMap&)> fixed_script(std::string source) {
  auto body = std::make_shared<Script>(script(std::move(source)));
  return [body](const ArgMap&) -> Body { return *body; };
}

void TypeRegistry::register_component(ComponentSpec spec) {
  if (components_.contains(spec.name)) {
    throw Error(ErrorCode::DuplicateRegistration, "component type '" + spec.name + "' already registered", {spec.name});
  }
  validate_params(spec.params, spec.name);
  if (spec.default_instance.empty()) spec.default_instance = spec.name;
  components_.emplace(spec.name, std::move(spec));
}

void TypeRegistry::register_subcomponent(SubcomponentSpec spec) {
  if (subcomponents_.contains(spec.name)) {
    throw Error(ErrorCode::DuplicateRegistration, "subcomponent type '" + spec.name + "' already registered",
                {spec.name});
  }
  validate_params(spec.params, spec.name);
  subcomponents_.emplace(spec.name, std::move(spec));
}

void TypeRegistry::register_experiment(ExperimentSpec spec) {
  if (experiments_.contains(spec.name)) {
    throw Error(ErrorCode::DuplicateRegistration, "experiment '" + spec.name + "' already registered", {spec.name});
  }
  experiments_.emplace(spec.name, std::move(spec));
}

const ComponentSpec& TypeRegistry::component(const std::string& name) const {
  auto it = components_.find(name);
  if (it == components_.end()) throw Error(ErrorCode::UnknownType, "no component type '" + name + "'", {name});
  return it->second;
}

const SubcomponentSpec& TypeRegistry::subcomponent(const std::string& name) const {
  auto it = subcomponents_.find(name);
  if (it == subcomponents_.end()) throw Error(ErrorCode::UnknownType, "no subcomponent type '" + name + "'", {name});
  return it->second;
}

const ExperimentSpec& TypeRegistry::experiment(const std::string& name) const {
  auto it = experiments_.find(name);
  if (it == experiments_.end()) throw Error(ErrorCode::UnknownExperiment, "no experiment '" + name + "'", {name});
  return it->second;
}

std::vector<std::string> TypeRegistry::component_names() const { return keys_of(components_); }
std::vector<std::string> TypeRegistry::subcomponent_names() const { return keys_of(subcomponents_); }
std::vector<std::string> TypeRegistry::experiment_names() const { return keys_of(experiments_); }

void TypeRegistry::set_bounds(const std::string& type, const std::string& param,
                              std::optional<std::pair<double, double>> bounds) {
  HyperparameterDescriptor* d = nullptr;
  if (auto it = components_.find(type); it != components_.end()) d = find_param(it->second.params, param);
  if (auto it = subcomponents_.find(type); !d && it != subcomponents_.end()) d = find_param(it->second.params, param);
  if (!d) throw Error(ErrorCode::UnknownType, "no parameter '" + param + "' on type '" + type + "'", {type, param});
  HyperparameterDescriptor updated = *d;
  updated.bounds = bounds;
  if (!bounds) updated.log_scale = false;
  validate_descriptor(updated);
  *d = std::move(updated);
}

ArgMap get_class_args(const std::vector<HyperparameterDescriptor>& params, const std::vector<std::string>& scopes,
                      const ArgMap& exp_args, const std::set<std::string>& shared_bare,
                      std::set<std::string>* consumed) {
  ArgMap out;
  for (const auto& p : params) {
    std::optional<std::string> key;
    for (const auto& scope : scopes) {
      std::string k = scope + "." + p.name;
      if (exp_args.contains(k)) {
        key = k;
        break;
      }
    }
    if (!key && exp_args.contains(p.name)) {
      if (shared_bare.contains(p.name)) {
        throw Error(ErrorCode::AmbiguousArgument,
                    "'" + p.name + "' names a parameter of several types; use a namespaced key such as '" +
                        (scopes.empty() ? p.name : scopes.front() + "." + p.name) + "'",
                    {p.name});
      }
      key = p.name;
    }
    if (key) {
      out[p.name] = coerce_to(p, exp_args.at(*key));
      if (consumed) consumed->insert(*key);
    } else {
      out[p.name] = p.default_value;
    }
  }
  return out;
}

namespace {

struct ResolvedRecipe {
  const FactoryRecipe* recipe;
  const ComponentSpec* spec;
  std::map<std::string, const SubcomponentSpec*> slots;
};

std::vector<ResolvedRecipe> resolve(const TypeRegistry& registry, const ExperimentSpec& exp) {
  std::vector<ResolvedRecipe> out;
  for (const auto& r : exp.recipes) {
    ResolvedRecipe rr{&r, &registry.component(r.type), {}};
    for (const auto& [slot, sub] : r.slots) {
      if (!rr.spec->slots.contains(slot)) {
        throw Error(ErrorCode::UnknownType, "'" + r.type + "' has no slot '" + slot + "'", {slot});
      }
      (void)sub;
    }
    for (const auto& [slot, default_type] : rr.spec->slots) {
      auto it = r.slots.find(slot);
      rr.slots[slot] = &registry.subcomponent(it != r.slots.end() ? it->second : default_type);
    }
    out.push_back(std::move(rr));
  }
  return out;
}

std::set<std::string> shared_bare_names(const std::vector<ResolvedRecipe>& recipes) {
  std::map<std::string, std::set<std::string>> owners;  // param -> types
  for (const auto& rr : recipes) {
    for (const auto& p : rr.spec->params) owners[p.name].insert(rr.spec->name);
    for (const auto& [slot, sub] : rr.slots)
      for (const auto& p : sub->params) owners[p.name].insert(sub->name);
  }
  std::set<std::string> out;
  for (const auto& [name, types] : owners)
    if (types.size() > 1) out.insert(name);
  return out;
}

}  // namespace

std::vector<NamedDescriptor> collect_hyperparameters(const TypeRegistry& registry, const std::string& experiment) {
  return collect_hyperparameters(registry, registry.experiment(experiment));
}

std::vector<NamedDescriptor> collect_hyperparameters(const TypeRegistry& registry, const ExperimentSpec& experiment) {
  std::map<std::string, HyperparameterDescriptor> found;
  for (const auto& rr : resolve(registry, experiment)) {
    for (const auto& p : rr.spec->params) {
      if (rr.recipe->extra_args.contains(p.name) || rr.recipe->seed_param == p.name) continue;
      found.emplace(rr.spec->name + "." + p.name, p);
    }
    for (const auto& [slot, sub] : rr.slots)
      for (const auto& p : sub->params) found.emplace(rr.spec->name + "." + sub->name + "." + p.name, p);
  }
  std::vector<NamedDescriptor> out(found.begin(), found.end());
  for (const auto& [name, d] : out) validate_descriptor(d);
  return out;
}

BuiltExperiment build_experiment(const TypeRegistry& registry, const std::string& name, const ArgMap& exp_args,
                                 std::int64_t seed) {
  return build_experiment(registry, registry.experiment(name), exp_args, seed);
}

BuiltExperiment build_experiment(const TypeRegistry& registry, const ExperimentSpec& exp, const ArgMap& exp_args,
                                 std::int64_t seed) {
  const std::string& name = exp.name;
  auto recipes = resolve(registry, exp);
  std::set<std::string> shared = shared_bare_names(recipes);
  std::set<std::string> consumed;

  BuiltExperiment built;
  built.collection = std::make_unique<ComponentCollection>();
  built.max_steps = exp.max_steps;
  for (const auto& rr : recipes) {
    const ComponentSpec& spec = *rr.spec;
    auto callees = std::make_shared<dsl::CalleeTable>();
    for (const auto& [slot, sub] : rr.slots) {
      ArgMap sub_args = get_class_args(sub->params, {spec.name + "." + sub->name, sub->name}, exp_args, shared, &consumed);
      for (const auto& [k, v] : sub_args) built.resolved[spec.name + "." + sub->name + "." + k] = v;
      dsl::Callable callable = sub->make(sub_args);
      callable.arity = sub->arity;
      (*callees)[slot] = std::move(callable);
    }
    ArgMap args = get_class_args(spec.params, {spec.name}, exp_args, shared, &consumed);
    for (const auto& [k, v] : rr.recipe->extra_args) {
      const HyperparameterDescriptor* d = nullptr;
      for (const auto& p : spec.params)
        if (p.name == k) d = &p;
      if (!d) throw Error(ErrorCode::InvalidArgument, "'" + spec.name + "' has no parameter '" + k + "'", {k});
      args[k] = coerce_to(*d, v);
    }
    if (rr.recipe->seed_param) {
      const HyperparameterDescriptor* d = nullptr;
      for (const auto& p : spec.params)
        if (p.name == *rr.recipe->seed_param) d = &p;
      if (!d) {
        throw Error(ErrorCode::InvalidArgument, "'" + spec.name + "' has no parameter '" + *rr.recipe->seed_param + "'");
      }
      args[d->name] = coerce_to(*d, Value(seed));
    }
    for (const auto& [k, v] : args) built.resolved[spec.name + "." + k] = v;

    ComponentDef def;
    def.name = rr.recipe->instance ? *rr.recipe->instance : spec.default_instance;
    def.io_map = spec.io_map;
    if (rr.recipe->init_source) {
      if (!rr.recipe->init_source->empty()) def.init = script(*rr.recipe->init_source);
    } else if (spec.make_init) {
      def.init = spec.make_init(args);
    }
    if (rr.recipe->step_source) {
      def.step = script(*rr.recipe->step_source);
    } else if (spec.make_step) {
      def.step = spec.make_step(args);
    }
    def.callees = callees;
    def.max_steps = rr.recipe->max_steps ? rr.recipe->max_steps : spec.max_steps;
    built.collection->add(make_component(std::move(def), rr.recipe->io_map));
  }
  std::vector<std::string> unused;
  for (const auto& [k, v] : exp_args)
    if (!consumed.contains(k)) unused.push_back(k);
  if (!unused.empty()) {
    std::string joined;
    for (const auto& k : unused) joined += (joined.empty() ? "" : ", ") + k;
    throw Error(ErrorCode::UnusedArgument, "arguments not used by '" + name + "': " + joined, unused);
  }
  built.collection->bind();
  return built;
}

namespace {

HyperparameterDescriptor real_param(std::string name, double def, std::optional<std::pair<double, double>> bounds) {
  HyperparameterDescriptor d;
  d.name = std::move(name);
  d.kind = ParamKind::Real;
  d.default_value = Value(def);
  d.bounds = bounds;
  return d;
}

SubcomponentSpec scaler_subcomponent(std::string name, std::pair<double, double> bounds) {
  SubcomponentSpec s;
  s.name = std::move(name);
  s.arity = 1;
  s.params = {real_param("scaler", 0.1, bounds)};
  s.make = [](const ArgMap& args) {
    Value scaler = args.at("scaler");
    return dsl::Callable{1, [scaler](std::span<const Value> in) { return dsl::apply(dsl::BinaryOp::Mul, in[0], scaler); }};
  };
  return s;
}

FactoryRecipe recipe(std::string type) {
  FactoryRecipe r;
  r.type = std::move(type);
  return r;
}

}  // namespace

void register_builtin(TypeRegistry& registry) {
  const char* step_c = "temp = alpha * 2\nx = temp\ntemp = alpha / 2\ny = temp\n";

  registry.register_component({"ComponentA", "A", {{"x", "x"}, {"y", "y"}, {"z", "z"}}, {}, {}, nullptr,
                               fixed_script("temp = x * y\nz = temp\n"), std::nullopt});
  registry.register_component({"ComponentB", "B", {{"x", "x"}, {"z", "z"}, {"alpha", "alpha"}}, {}, {}, nullptr,
                               fixed_script("alpha = x + z\n"), std::nullopt});
  registry.register_component({"ComponentC", "C", {{"x", "x"}, {"y", "y"}, {"alpha", "alpha"}}, {}, {},
                               fixed_script("x = 1\ny = 1\n"), fixed_script(step_c), std::nullopt});
  registry.register_component({"ComponentD", "D", {{"alpha", "alpha"}, {"beta", "beta"}}, {}, {}, nullptr,
                               fixed_script("beta = alpha * 2\n"), std::nullopt});
  registry.register_component({"ComponentF", "F", {{"alpha", "alpha"}, {"beta", "beta"}}, {},
                               {{"sub_classA", "SubcomponentA"}, {"sub_classB", "SubcomponentB"}}, nullptr,
                               fixed_script("intermediate = sub_classA(alpha)\nbeta = sub_classB(intermediate)\n"),
                               std::nullopt});

  // ComponentC with its initial x taken from a parameter (bound to the run seed).
  HyperparameterDescriptor x0;
  x0.name = "x0";
  x0.kind = ParamKind::Integer;
  x0.default_value = Value(1);
  registry.register_component({"SeededComponentC", "C", {{"x", "x"}, {"y", "y"}, {"alpha", "alpha"}}, {x0}, {},
                               [](const ArgMap& args) -> Body {
                                 return script("x = " + args.at("x0").to_string() + "\ny = 1\n");
                               },
                               fixed_script(step_c), std::nullopt});

  registry.register_component({"UnitSource", "S", {{"alpha", "alpha"}}, {}, {}, nullptr, fixed_script("alpha = 1\n"),
                               std::nullopt});
  registry.register_component({"ProductLoss", "L", {{"beta", "beta"}, {"loss", "loss"}}, {real_param("target", 0.12, {})},
                               {}, nullptr,
                               [](const ArgMap& args) -> Body {
                                 double target = args.at("target").as_real();
                                 return NativeBody{{"beta"}, {"loss"}, [target](const std::map<std::string, Value>& in, StepContext&) {
                                                     double beta = in.at("beta").as_real();
                                                     return std::map<std::string, Value>{{"loss", Value(std::abs(beta - target))}};
                                                   }};
                               },
                               std::nullopt});

  registry.register_subcomponent(scaler_subcomponent("SubcomponentA", {0.1, 1.0}));
  registry.register_subcomponent(scaler_subcomponent("SubcomponentB", {0.2, 0.5}));

  FactoryRecipe a = recipe("ComponentA");
  FactoryRecipe b = recipe("ComponentB");
  FactoryRecipe c = recipe("ComponentC");
  FactoryRecipe c_remap = recipe("ComponentC");
  c_remap.io_map = IOMap{{"x", "x"}, {"y", "y"}, {"alpha", "beta"}};
  FactoryRecipe seeded_c = recipe("SeededComponentC");
  seeded_c.seed_param = "x0";

  registry.register_experiment({"ToyExperimentABC", {a, b, c}, std::nullopt});
  registry.register_experiment({"ToyExperiment", {a, b, c_remap, recipe("ComponentD")}, std::nullopt});
  registry.register_experiment({"ToyExperimentF", {a, b, c_remap, recipe("ComponentF")}, std::nullopt});
  registry.register_experiment({"SeededToyExperiment", {a, b, seeded_c}, std::nullopt});
  registry.register_experiment(
      {"ToyProductStudy", {recipe("UnitSource"), recipe("ComponentF"), recipe("ProductLoss")}, 3});
}

}  // namespace gateflow
