#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gateflow/store.hpp"

namespace gateflow::viz {

struct SeriesKey {
  std::string experiment;
  std::string component;
  std::string tag;

  auto operator<=>(const SeriesKey&) const = default;
  // Non-empty fields joined with '/'.
  std::string label() const;
};

struct AggregatedSeries {
  SeriesKey key;
  std::vector<std::uint64_t> steps;
  std::vector<double> mean;
  std::vector<double> stddev;  // population
  std::vector<std::uint64_t> n;

  bool operator==(const AggregatedSeries&) const = default;
};

// Fields left out of the key are blank and their records are pooled.
struct GroupBy {
  bool experiment = true;
  bool component = true;
  bool tag = true;
};

// Groups records by key and step. Integer-only steps are computed exactly
// (mean and variance as correctly rounded quotients); others use compensated
// two-pass sums. `run_experiments` maps run_id to experiment name.
std::vector<AggregatedSeries> aggregate(const std::vector<store::MetricRecord>& records,
                                        const std::map<std::string, std::string>& run_experiments = {},
                                        GroupBy group_by = {});

// Queries `root` and aggregates, looking up experiments from run metadata.
std::vector<AggregatedSeries> aggregate_runs(const std::filesystem::path& root, const store::QueryFilter& filter,
                                             GroupBy group_by = {});

std::string to_csv(const AggregatedSeries& series);
// Throws StoreIO when the file cannot be written.
void export_csv(const AggregatedSeries& series, const std::filesystem::path& path);
// Inverse of to_csv (the key is left blank). Throws InvalidArgument.
AggregatedSeries parse_csv(const std::string& text);

struct SvgStyle {
  std::string title;
  std::string x_label = "step";
  std::string y_label = "value";
  int width = 800;
  int height = 500;
  std::vector<std::string> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
};

// One mean path and one band path per series, legend sorted by key.
// Throws EmptyInput for an empty list.
std::string render_svg(std::vector<AggregatedSeries> series, const SvgStyle& style = {});

}  // namespace gateflow::viz
