#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gateflow/component.hpp"
#include "gateflow/dsl.hpp"
#include "gateflow/value.hpp"

namespace gateflow {

enum class ParamKind { Real, Integer, Categorical };

std::string_view to_string(ParamKind k);

struct HyperparameterDescriptor {
  std::string name;
  ParamKind kind = ParamKind::Real;
  Value default_value;
  std::optional<std::pair<double, double>> bounds;  // real and integer
  std::vector<Value> choices;                       // categorical
  bool log_scale = false;

  bool fixed() const noexcept { return !bounds && choices.empty(); }
};

// Throws InvalidDescriptor: low >= high, non-finite bounds, fewer than two
// choices, log scale without strictly positive real bounds, or a default of
// the wrong kind. A default outside the bounds is allowed.
void validate_descriptor(const HyperparameterDescriptor& d);

// Converts `v` to the descriptor's kind (integers widen to reals). Throws
// InvalidArgument when it cannot.
Value coerce_to(const HyperparameterDescriptor& d, const Value& v);

struct SubcomponentSpec {
  std::string name;
  std::size_t arity = 1;
  std::vector<HyperparameterDescriptor> params;
  std::function<dsl::Callable(const ArgMap& args)> make;
};

struct ComponentSpec {
  std::string name;              // type name, e.g. "ComponentA"
  std::string default_instance;  // instance name, e.g. "A"
  IOMap io_map;
  std::vector<HyperparameterDescriptor> params;
  std::map<std::string, std::string> slots;  // slot -> default subcomponent type
  // Bodies built from the resolved component arguments.
  std::function<Body(const ArgMap& args)> make_init;
  std::function<Body(const ArgMap& args)> make_step;
  std::optional<std::uint64_t> max_steps;
};

// Body factories for fixed script text.
std::function<Body(const ArgMap&)> fixed_script(std::string source);

struct FactoryRecipe {
  std::string type;
  std::optional<std::string> instance;        // defaults to the spec's default_instance
  std::map<std::string, std::string> slots;   // overrides the spec's default slot types
  std::optional<IOMap> io_map;                // io_map override
  ArgMap extra_args;                          // by bare parameter name; beats exp_args
  std::optional<std::string> seed_param;      // receives the run seed
  // Script text replacing the type's bodies; an empty init removes it.
  std::optional<std::string> init_source;
  std::optional<std::string> step_source;
  std::optional<std::uint64_t> max_steps;
};

struct ExperimentSpec {
  std::string name;
  std::vector<FactoryRecipe> recipes;
  std::optional<std::uint64_t> max_steps;
};

class TypeRegistry {
 public:
  void register_component(ComponentSpec spec);
  void register_subcomponent(SubcomponentSpec spec);
  void register_experiment(ExperimentSpec spec);

  const ComponentSpec& component(const std::string& name) const;
  const SubcomponentSpec& subcomponent(const std::string& name) const;
  const ExperimentSpec& experiment(const std::string& name) const;

  bool has_component(const std::string& name) const { return components_.contains(name); }
  bool has_subcomponent(const std::string& name) const { return subcomponents_.contains(name); }
  bool has_experiment(const std::string& name) const { return experiments_.contains(name); }

  std::vector<std::string> component_names() const;
  std::vector<std::string> subcomponent_names() const;
  std::vector<std::string> experiment_names() const;

  // Replaces the bounds of a registered parameter; nullopt makes it fixed.
  void set_bounds(const std::string& type, const std::string& param, std::optional<std::pair<double, double>> bounds);

 private:
  std::map<std::string, ComponentSpec> components_;
  std::map<std::string, SubcomponentSpec> subcomponents_;
  std::map<std::string, ExperimentSpec> experiments_;
};

// Registers the worked-example suite: ComponentA-D, ComponentF,
// SubcomponentA/B, and the experiments built from them.
void register_builtin(TypeRegistry& registry);

// Resolves one type's parameters. For each parameter the first present key
// wins: "<scope>.<param>" for each scope in order (most specific first), then
// the bare "<param>", then the default. A bare key listed in `shared_bare`
// (owned by several types of the experiment) is AmbiguousArgument unless a
// scoped key resolved it. Keys read are added to `consumed`.
ArgMap get_class_args(const std::vector<HyperparameterDescriptor>& params, const std::vector<std::string>& scopes,
                      const ArgMap& exp_args, const std::set<std::string>& shared_bare = {},
                      std::set<std::string>* consumed = nullptr);

using NamedDescriptor = std::pair<std::string, HyperparameterDescriptor>;

// Descriptors of every type used by the experiment, namespaced
// "Component.param" or "Component.Subcomponent.param", sorted by name.
std::vector<NamedDescriptor> collect_hyperparameters(const TypeRegistry& registry, const std::string& experiment);
std::vector<NamedDescriptor> collect_hyperparameters(const TypeRegistry& registry, const ExperimentSpec& experiment);

struct BuiltExperiment {
  std::unique_ptr<ComponentCollection> collection;
  ArgMap resolved;  // namespaced parameter name -> value used
  std::optional<std::uint64_t> max_steps;
};

// Builds and binds the experiment's collection. Keys of exp_args no type
// consumed raise UnusedArgument.
BuiltExperiment build_experiment(const TypeRegistry& registry, const std::string& name, const ArgMap& exp_args = {},
                                 std::int64_t seed = 0);
// Same for an unregistered (inline) experiment.
BuiltExperiment build_experiment(const TypeRegistry& registry, const ExperimentSpec& experiment,
                                 const ArgMap& exp_args = {}, std::int64_t seed = 0);

}  // namespace gateflow
