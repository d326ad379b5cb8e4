#pragma once

// Random small component graphs with step-script bodies. Only graphs the
// reference oracle can run to completion are returned.

#include <random>
#include <string>
#include <vector>

#include "gateflow/component.hpp"
#include "gateflow/dsl.hpp"
#include "gateflow/error.hpp"
#include "gateflow/oracle.hpp"
#include "random_programs.hpp"

namespace gateflow::testing {

struct GraphSpec {
  struct Node {
    std::string name;
    std::vector<std::string> outputs;  // namespaces this component produces
    std::vector<std::string> inputs;   // namespaces it reads
    std::string init;
    std::string step;
  };
  std::vector<Node> nodes;

  std::vector<Component> build() const {
    std::vector<Component> out;
    for (const auto& n : nodes) {
      IOMap io;
      for (const auto& ns : n.inputs) io[ns] = ns;
      for (const auto& ns : n.outputs) io[ns] = ns;
      Body init;
      if (!n.init.empty()) init = script(n.init);
      out.push_back(make_component({n.name, io, init, script(n.step)}));
    }
    return out;
  }
};

inline GraphSpec random_graph_candidate(std::mt19937_64& rng) {
  GraphSpec g;
  int n = std::uniform_int_distribution<int>(2, 5)(rng);
  std::vector<std::string> all_ns;
  for (int i = 0; i < n; ++i) {
    GraphSpec::Node node;
    node.name = "K" + std::to_string(i);
    int outs = std::uniform_int_distribution<int>(1, 2)(rng);
    for (int k = 0; k < outs; ++k) {
      node.outputs.push_back("n" + std::to_string(i) + "_" + std::to_string(k));
      all_ns.push_back(node.outputs.back());
    }
    g.nodes.push_back(std::move(node));
  }
  // Acyclic graphs only read from lower-numbered components.
  bool acyclic = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
  for (int i = 0; i < n; ++i) {
    auto& node = g.nodes[i];
    std::vector<std::string> candidates;
    for (int j = 0; j < n; ++j) {
      if (j == i || (acyclic && j > i)) continue;
      for (const auto& ns : g.nodes[j].outputs) candidates.push_back(ns);
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    int reads = std::uniform_int_distribution<int>(0, std::min<int>(3, candidates.size()))(rng);
    if (i > 0 && reads == 0 && !candidates.empty()) reads = 1;
    node.inputs.assign(candidates.begin(), candidates.begin() + reads);
    for (const auto& out : node.outputs) {
      if (!acyclic && std::uniform_int_distribution<int>(0, 1)(rng)) {
        node.init += out + " = " + std::to_string(std::uniform_int_distribution<int>(1, 5)(rng)) + "\n";
      }
    }
    std::string body;
    std::vector<std::string> names = node.inputs;
    if (!names.empty() && std::uniform_int_distribution<int>(0, 2)(rng) == 0) {
      body += "t = " + dsl::to_source(*random_expr(rng, 2, names)) + "\n";
      names.push_back("t");
    }
    for (const auto& out : node.outputs) {
      // keep magnitudes tame: a random mix, scaled down
      body += out + " = (" + dsl::to_source(*random_expr(rng, 2, names)) + ") / 3 + 1\n";
    }
    node.step = body;
  }
  return g;
}

inline GraphSpec random_graph(std::mt19937_64& rng, std::uint64_t steps) {
  while (true) {
    GraphSpec g = random_graph_candidate(rng);
    try {
      oracle_run(g.build(), {.max_steps = steps});
      return g;
    } catch (const Error&) {
    }
  }
}

}  // namespace gateflow::testing
