#pragma once

// Single-threaded reference interpreter for component graphs. It shares no
// scheduling code with ComponentCollection and is used to check its traces.

#include <cstdint>
#include <optional>
#include <vector>

#include "gateflow/component.hpp"

namespace gateflow {

struct OracleOptions {
  std::optional<std::uint64_t> max_steps;  // per-component max_steps wins
  // When set, each scan visits components in a fresh random order instead of
  // name order.
  std::optional<std::uint64_t> shuffle_seed;
};

// Runs init bodies, then fires enabled components until every component has
// reached its step limit. Returns every published value per namespace, init
// values first. Throws OracleStuck when no component can make progress; the
// details list "component:namespace:op" for each blocked component.
Trace oracle_run(const std::vector<Component>& components, const OracleOptions& options = {});

}  // namespace gateflow
