#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gateflow/registry.hpp"
#include "gateflow/store.hpp"

namespace gateflow::study {

enum class Direction { Minimize, Maximize };
enum class Reduce { Last, Mean, Max, Min };
enum class Sampler { Uniform, LocalGaussian };
enum class TrialState { Pending, Running, Complete, Failed };

std::string_view to_string(Direction d);
std::string_view to_string(Reduce r);
std::string_view to_string(Sampler s);
std::string_view to_string(TrialState s);
// Parsers accept the to_string spellings ("minimize", "local-gaussian", ...)
// and throw InvalidArgument otherwise.
Direction parse_direction(std::string_view s);
Reduce parse_reduce(std::string_view s);
Sampler parse_sampler(std::string_view s);

struct Dimension {
  std::string name;  // namespaced
  ParamKind kind = ParamKind::Real;
  std::pair<double, double> bounds{0, 0};  // real and integer
  std::vector<Value> choices;              // categorical
  bool log_scale = false;

  bool contains(const Value& v) const;
};

struct SearchSpace {
  std::vector<Dimension> dimensions;  // sorted by name
  ArgMap fixed;
};

SearchSpace build_search_space(const std::vector<NamedDescriptor>& descriptors);

struct Trial {
  std::int64_t trial_id = 0;
  ArgMap assignment;
  TrialState state = TrialState::Pending;
  std::optional<double> objective;
  std::int64_t seed = 0;
  std::string run_id;
  std::string error;  // set for failed trials
};

struct StudyConfig {
  std::string experiment;
  Direction direction = Direction::Minimize;
  std::string objective_tag;
  Reduce reduce = Reduce::Last;
  Sampler sampler = Sampler::Uniform;
  std::int64_t seed = 0;
  std::int64_t n_trials = 0;
  std::size_t parallelism = 1;
  std::optional<std::uint64_t> max_steps;  // falls back to the experiment's
  std::chrono::milliseconds step_timeout{5000};
  ArgMap base_args;  // extra arguments applied to every trial, below the assignment
};

struct Study {
  std::string study_id;
  StudyConfig config;
  SearchSpace space;
  std::vector<Trial> trials;  // by trial_id
};

// Draws one assignment. Randomness comes only from (seed, trial_id), so a
// uniform study samples the same assignments at any parallelism. The
// local-gaussian sampler also reads the complete trials in `history`.
ArgMap sample(const SearchSpace& space, Sampler sampler, Direction direction, std::int64_t seed,
              std::int64_t trial_id, const std::vector<Trial>& history);

// Throws InvalidArgument on an empty series.
double reduce(Reduce r, const std::vector<double>& values);

// Runs the study, logging each trial as a run in `store` and persisting the
// study under <primary>/studies/<study_id>/. Failed trials do not stop the
// study; StudyAborted is thrown if all of the first min(10, n_trials) fail.
Study run_study(const TypeRegistry& registry, const StudyConfig& config, store::ExperimentStore& store);

// Extremum by direction, ties to the lowest trial_id. NoCompleteTrials if none.
const Trial& best_trial(const Study& study);

std::vector<Study> list_studies(const std::filesystem::path& root);
std::optional<Study> load_study(const std::filesystem::path& root, const std::string& study_id);

}  // namespace gateflow::study
