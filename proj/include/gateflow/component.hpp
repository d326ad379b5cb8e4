#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "gateflow/channel.hpp"
#include "gateflow/dsl.hpp"
#include "gateflow/error.hpp"
#include "gateflow/store.hpp"
#include "gateflow/value.hpp"

namespace gateflow {

// internal name -> external namespace
using IOMap = std::map<std::string, std::string>;

struct Script {
  std::string source;
  dsl::Program program;
};

Script script(std::string source);

struct StepContext {
  std::string component;
  std::uint64_t step = 0;  // 0-based; init runs with step 0
  store::ProxyLogger logger;
  std::function<void()> stop;  // signals stop for the whole collection
};

using NativeFn = std::function<std::map<std::string, Value>(const std::map<std::string, Value>&, StepContext&)>;

// Host-language body. Reads are observed in declaration order before `fn`
// runs; the returned map must hold exactly the declared writes, which are
// published in declaration order.
struct NativeBody {
  std::vector<std::string> reads;
  std::vector<std::string> writes;
  NativeFn fn;
};

using Body = std::variant<std::monostate, Script, NativeBody>;

struct ComponentDef {
  std::string name;
  IOMap io_map;
  Body init;
  Body step;
  std::shared_ptr<const dsl::CalleeTable> callees;
  std::optional<std::uint64_t> max_steps;
};

class Component {
 public:
  const std::string& name() const noexcept { return def_.name; }
  const IOMap& io_map() const noexcept { return def_.io_map; }
  const IOMap& default_io_map() const noexcept { return default_map_; }
  const Body& init_body() const noexcept { return def_.init; }
  const Body& step_body() const noexcept { return def_.step; }
  const std::shared_ptr<const dsl::CalleeTable>& callees() const noexcept { return def_.callees; }
  std::optional<std::uint64_t> max_steps() const noexcept { return def_.max_steps; }

  // Source text of the bodies, empty for native or absent bodies.
  std::string init_script() const;
  std::string step_script() const;

  // Internal names; reads come from the step body only.
  const std::set<std::string>& reads() const noexcept { return reads_; }
  const std::set<std::string>& writes() const noexcept { return writes_; }
  const std::set<std::string>& init_writes() const noexcept { return init_writes_; }

  const std::string& external(const std::string& internal) const { return def_.io_map.at(internal); }

 private:
  friend Component make_component(ComponentDef def, const std::optional<IOMap>& io_map_override);
  ComponentDef def_;
  IOMap default_map_;
  std::set<std::string> reads_;
  std::set<std::string> writes_;
  std::set<std::string> init_writes_;
};

// Applies the override, then validates both bodies against the effective map.
Component make_component(ComponentDef def, const std::optional<IOMap>& io_map_override = std::nullopt);

enum class Outcome { Completed, Stopped, Timeout, Error };
enum class PendingOp { Publish, Observe };

std::string_view to_string(Outcome o);
std::string_view to_string(PendingOp op);

struct BlockedOn {
  std::string component;
  std::string ns;
  PendingOp op;
  bool operator==(const BlockedOn&) const = default;
};

using Trace = std::map<std::string, std::vector<Value>>;

struct RunReport {
  Outcome outcome = Outcome::Completed;
  std::map<std::string, std::uint64_t> steps;
  std::vector<BlockedOn> blocked_on;  // sorted by component
  std::optional<ErrorCode> error_code;
  std::string error_message;
  Trace trace;  // every published value per namespace, init values included
};

struct RunOptions {
  std::optional<std::uint64_t> max_steps;  // per-component max_steps wins
  Duration step_timeout = kDefaultTimeout;
  // When set, every io write is recorded under its internal name.
  store::RunHandle* run = nullptr;
  // Called from the component's thread after each completed step.
  std::function<void(const std::string& component, std::uint64_t steps_done)> on_step;
};

class ComponentCollection {
 public:
  ComponentCollection();
  ~ComponentCollection();
  ComponentCollection(const ComponentCollection&) = delete;
  ComponentCollection& operator=(const ComponentCollection&) = delete;

  void add(Component c);
  const std::vector<Component>& components() const noexcept { return components_; }
  const Component* find(const std::string& name) const;

  BindReport bind();
  bool bound() const noexcept { return bound_; }

  RunReport run(const RunOptions& options = {});

  // Idempotent; safe from any thread, including component bodies.
  void signal_stop() noexcept;
  bool stop_requested() const noexcept;

  ChannelRegistry& registry() noexcept { return *registry_; }

 private:
  struct Runtime;

  std::vector<Component> components_;
  std::unique_ptr<ChannelRegistry> registry_;
  std::shared_ptr<std::atomic<bool>> stop_;
  bool bound_ = false;
  bool ran_ = false;
  std::map<std::string, std::map<std::string, std::shared_ptr<Observer>>> observers_;
  std::map<std::string, std::map<std::string, std::shared_ptr<Subject>>> subjects_;
};

}  // namespace gateflow
