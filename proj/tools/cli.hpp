#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gateflow/registry.hpp"
#include "gateflow/study.hpp"

namespace gateflow::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kTimeout = 3, kRuntime = 4, kStoreIO = 5 };

int exit_code_for(ErrorCode code);

struct Flag {
  std::string name;  // namespaced, without the leading dashes
  HyperparameterDescriptor descriptor;
};

struct FlagSchema {
  std::vector<Flag> flags;  // sorted by name
};

FlagSchema generate_flags(const TypeRegistry& registry, const ExperimentSpec& experiment);

// Parses "--Name value" and "--Name=value" tokens against the schema. A bare
// parameter name is accepted when exactly one flag ends with it. Bounded
// flags are range-checked. Throws InvalidArgument or AmbiguousArgument.
ArgMap parse_param_flags(const FlagSchema& schema, const std::vector<std::string>& tokens);

// Text to a typed value: integer, then real, then true/false, else string.
Value infer_scalar(const std::string& text);

struct RunDefinition {
  ExperimentSpec experiment;
  ArgMap args;
  std::optional<std::uint64_t> max_steps;
  std::optional<double> stop_after;  // seconds
};

// YAML (or JSON) with `experiment:` or an inline `components:` list, plus
// optional `args:`, `max_steps:` and `stop_after:`.
RunDefinition load_run_definition(const std::filesystem::path& path, const TypeRegistry& registry);

struct StudyDefinition {
  study::StudyConfig config;
};

// {experiment, direction, objective: {tag, reduce}, sampler, seed, n_trials,
// parallelism} plus optional max_steps, step_timeout and args.
StudyDefinition load_study_definition(const std::filesystem::path& path);

struct BatchOptions {
  std::size_t partitions = 1;
  std::vector<std::string> headers;  // emitted verbatim after the shebang
  std::string array_directive = "#SBATCH --array=0-{last}";
  std::string index_variable = "SLURM_ARRAY_TASK_ID";
  std::string binary = "gateflow";
  std::vector<std::string> study_args;  // appended to every study command
};

// Submission script running `study` over trial-range partitions. Throws
// InvalidArgument for zero trials or an impossible partition count.
std::string batch_script(const study::StudyConfig& config, const std::filesystem::path& definition,
                         const BatchOptions& options);

// Entry point. Uses the builtin registry when `registry` is null.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
         const TypeRegistry* registry = nullptr);

}  // namespace gateflow::cli
