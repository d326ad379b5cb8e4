#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <regex>

#include "doctest.h"
#include "gateflow/oracle.hpp"
#include "gateflow/registry.hpp"
#include "gateflow/viz.hpp"
#include "test_util.hpp"
#include "toy_graph.hpp"

using namespace gateflow;
using namespace gateflow::viz;
using namespace gateflow::testing;

namespace {

store::MetricRecord rec(std::string run, std::string c, std::string t, std::uint64_t step, Value v) {
  return {std::move(run), std::move(c), std::move(t), step, 0.0, std::move(v)};
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

double ulps(double a, double b) {
  if (a == b) return 0;
  return std::abs(a - b) / std::abs(std::nextafter(b, INFINITY) - b);
}

AggregatedSeries series(std::vector<std::uint64_t> steps, std::vector<double> mean, std::vector<double> sd,
                        std::vector<std::uint64_t> n, std::string tag = "z") {
  AggregatedSeries s;
  s.key.tag = std::move(tag);
  s.steps = std::move(steps);
  s.mean = std::move(mean);
  s.stddev = std::move(sd);
  s.n = std::move(n);
  return s;
}

}  // namespace

TEST_CASE("two-point aggregate") {
  auto out = aggregate({rec("R1", "A", "z", 0, 1), rec("R2", "A", "z", 0, 3)});
  REQUIRE(out.size() == 1);
  CHECK(out[0].key == SeriesKey{"", "A", "z"});
  CHECK(out[0].steps == std::vector<std::uint64_t>{0});
  CHECK(out[0].mean == std::vector<double>{2});
  CHECK(out[0].stddev == std::vector<double>{1});
  CHECK(out[0].n == std::vector<std::uint64_t>{2});
}

TEST_CASE("single run has zero deviation; ragged runs keep partial steps") {
  auto out = aggregate({rec("R1", "A", "z", 0, 1.5), rec("R1", "A", "z", 1, 2.5), rec("R1", "A", "z", 2, -4)});
  CHECK(out[0].stddev == std::vector<double>{0, 0, 0});
  out = aggregate({rec("R1", "A", "z", 0, 1), rec("R1", "A", "z", 1, 2), rec("R2", "A", "z", 0, 3)},
                  {{"R1", "exp"}, {"R2", "exp"}});
  CHECK(out[0].key.experiment == "exp");
  CHECK(out[0].n == std::vector<std::uint64_t>{2, 1});
  CHECK(out[0].mean == std::vector<double>{2, 2});
}

TEST_CASE("group_by pools left-out fields") {
  std::vector<store::MetricRecord> rs{rec("R1", "A", "z", 0, 1), rec("R1", "B", "z", 0, 5), rec("R1", "A", "w", 0, 9)};
  CHECK(aggregate(rs).size() == 3);
  auto pooled = aggregate(rs, {}, {.experiment = true, .component = false, .tag = true});
  REQUIRE(pooled.size() == 2);
  CHECK(pooled[1].key == SeriesKey{"", "", "z"});
  CHECK(pooled[1].mean == std::vector<double>{3});
}

TEST_CASE("non-numeric values are rejected") {
  try {
    aggregate({rec("R1", "A", "z", 0, 1), rec("R1", "A", "name", 4, Value("hello"))});
    FAIL("expected NonNumericValue");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonNumericValue);
    CHECK(e.details() == std::vector<std::string>{"R1", "A", "name", "4"});
  }
  CHECK_GATEFLOW_ERROR(aggregate({rec("R1", "A", "b", 0, Value(true))}), ErrorCode::NonNumericValue);
}

TEST_CASE("aggregation matches brute-force recomputation") {
  std::mt19937_64 rng(42);
  for (int round = 0; round < 20; ++round) {
    bool ints = round % 2 == 0;
    int runs = 1 + static_cast<int>(rng() % 50);
    int steps = 1 + static_cast<int>(rng() % 200);
    std::vector<store::MetricRecord> rs;
    std::map<std::uint64_t, std::vector<Value>> by_step;
    std::uniform_int_distribution<std::int64_t> iv(-100000, 100000);
    std::normal_distribution<double> rv(1e3, 250.0);
    for (int r = 0; r < runs; ++r) {
      int len = steps - static_cast<int>(rng() % 3);
      for (int s = 0; s < len && rs.size() < 10000; ++s) {
        Value v = ints ? Value(iv(rng)) : Value(rv(rng));
        rs.push_back(rec("R" + std::to_string(r), "A", "z", static_cast<std::uint64_t>(s), v));
        by_step[static_cast<std::uint64_t>(s)].push_back(v);
      }
    }
    auto out = aggregate(rs);
    REQUIRE(out.size() == 1);
    const auto& a = out[0];
    REQUIRE(a.steps.size() == by_step.size());
    std::size_t i = 0;
    for (const auto& [step, vs] : by_step) {
      CHECK(a.steps[i] == step);
      CHECK(a.n[i] == vs.size());
      auto n = static_cast<std::int64_t>(vs.size());
      if (ints) {
        std::int64_t sum = 0, sq = 0;
        for (const auto& v : vs) {
          sum += v.as_integer();
          sq += v.as_integer() * v.as_integer();
        }
        // n*sq - sum^2 stays far below 2^63 for these magnitudes
        double var = static_cast<double>(n * sq - sum * sum) / static_cast<double>(n * n);
        CHECK(a.mean[i] == static_cast<double>(sum) / static_cast<double>(n));
        CHECK(a.stddev[i] == std::sqrt(var));
      } else {
        long double sum = 0;
        for (const auto& v : vs) sum += v.as_real();
        long double mean = sum / n;
        long double dev = 0;
        for (const auto& v : vs) dev += (v.as_real() - mean) * (v.as_real() - mean);
        CHECK(ulps(a.mean[i], static_cast<double>(mean)) <= 1);
        CHECK(ulps(a.stddev[i], static_cast<double>(std::sqrt(dev / n))) <= 2);
      }
      ++i;
    }
  }
}

TEST_CASE("seeded toy runs aggregate to the mean of three oracle traces") {
  TempDir dir;
  store::ExperimentStore st(dir / "p", dir / "s");
  TypeRegistry reg;
  register_builtin(reg);
  std::set<std::string> ids;
  for (std::int64_t seed : {1, 2, 3}) {
    auto built = build_experiment(reg, "SeededToyExperiment", {}, seed);
    store::RunMeta meta;
    meta.experiment = "SeededToyExperiment";
    meta.seed = seed;
    auto handle = st.open_run(meta);
    ids.insert(handle->run_id());
    RunOptions opts;
    opts.max_steps = 4;
    opts.run = handle.get();
    REQUIRE(built.collection->run(opts).outcome == Outcome::Completed);
    handle->close("completed");
  }
  std::vector<Trace> traces;
  for (int seed : {1, 2, 3}) {
    traces.push_back(oracle_run(toy_abc("x = " + std::to_string(seed) + "\ny = 1\n"), {.max_steps = 4}));
  }
  store::QueryFilter f;
  f.run_ids = ids;
  auto out = aggregate_runs(dir / "p", f);
  std::map<std::string, const AggregatedSeries*> by_key;
  for (const auto& s : out) by_key[s.key.component + ":" + s.key.tag] = &s;
  for (auto [key, ns] : std::vector<std::pair<std::string, std::string>>{
           {"A:z", "z"}, {"B:alpha", "alpha"}, {"C:x", "x"}, {"C:y", "y"}}) {
    REQUIRE(by_key.contains(key));
    const AggregatedSeries& s = *by_key[key];
    CHECK(s.key.experiment == "SeededToyExperiment");
    REQUIRE(s.mean.size() == traces[0][ns].size());
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      double m = (traces[0][ns][i].as_real() + traces[1][ns][i].as_real() + traces[2][ns][i].as_real()) / 3;
      CHECK(s.mean[i] == doctest::Approx(m).epsilon(1e-14));
      CHECK(s.n[i] == 3);
    }
  }
}

TEST_CASE("csv format") {
  CHECK(to_csv(series({0}, {2}, {1}, {2})) == "step,mean,std,n\n0,2,1,2\n");
  CHECK(to_csv(AggregatedSeries{}) == "step,mean,std,n\n");
  CHECK(to_csv(series({3}, {0.1}, {1e-300}, {1})) == "step,mean,std,n\n3,0.1,1e-300,1\n");
  TempDir dir;
  export_csv(series({0}, {2}, {1}, {2}), dir / "z.csv");
  std::ifstream in(dir / "z.csv", std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "step,mean,std,n\n0,2,1,2\n");
  CHECK_GATEFLOW_ERROR(export_csv(series({0}, {2}, {1}, {2}), dir / "z.csv" / "nested.csv"), ErrorCode::StoreIO);
  CHECK_GATEFLOW_ERROR(parse_csv("a,b\n"), ErrorCode::InvalidArgument);
  CHECK_GATEFLOW_ERROR(parse_csv("step,mean,std,n\n0,x,1,2\n"), ErrorCode::InvalidArgument);
}

TEST_CASE("csv round trip is bit exact") {
  std::mt19937_64 rng(9);
  for (int round = 0; round < 50; ++round) {
    AggregatedSeries s;
    std::uint64_t step = 0;
    for (int i = 0; i < 100; ++i) {
      step += 1 + rng() % 5;
      s.steps.push_back(step);
      double m, d;
      do {
        std::uint64_t bits = rng(), bits2 = rng() & 0x7fffffffffffffffULL;
        std::memcpy(&m, &bits, 8);
        std::memcpy(&d, &bits2, 8);
      } while (!std::isfinite(m) || !std::isfinite(d));
      s.mean.push_back(m);
      s.stddev.push_back(d);
      s.n.push_back(1 + rng() % 1000);
    }
    CHECK(parse_csv(to_csv(s)) == s);
  }
}

TEST_CASE("svg structure and determinism") {
  auto one = series({0, 1, 2}, {1, 2, 3}, {0.5, 0.5, 0.5}, {2, 2, 2});
  std::string svg = render_svg({one});
  CHECK(count(svg, "<path") == 2);
  CHECK(count(svg, "class=\"mean\"") == 1);
  CHECK(count(svg, "class=\"band\"") == 1);
  CHECK(svg.find("viewBox=\"0 0 800 500\"") != std::string::npos);
  CHECK(render_svg({one}) == svg);

  auto b = series({0, 1}, {5, 6}, {0, 0}, {1, 1}, "b");
  auto a = series({0, 1}, {5, 6}, {0, 0}, {1, 1}, "a");
  std::string two = render_svg({b, a}, {.title = "t <1>"});
  CHECK(count(two, "class=\"legend-entry\"") == 2);
  CHECK(two.find(">a</text>") < two.find(">b</text>"));
  CHECK(two == render_svg({a, b}, {.title = "t <1>"}));
  CHECK(two.find("t &lt;1&gt;") != std::string::npos);
  CHECK_GATEFLOW_ERROR(render_svg({}), ErrorCode::EmptyInput);
}

TEST_CASE("svg axes cover the data with 5% margins") {
  // x in [0, 10], y band in [0, 100] -> plotted extents [-0.5, 10.5], [-5, 105]
  auto s = series({0, 10}, {10, 90}, {10, 10}, {2, 2});
  std::string svg = render_svg({s});
  std::smatch m;
  std::regex mean_re("class=\"mean\" d=\"M([0-9.]+),([0-9.]+) L([0-9.]+),([0-9.]+)\"");
  REQUIRE(std::regex_search(svg, m, mean_re));
  double left = 70, right = 630, top = 40, bottom = 450;
  CHECK(std::stod(m[1]) == doctest::Approx(left + 0.5 / 11 * (right - left)).epsilon(1e-3));
  CHECK(std::stod(m[3]) == doctest::Approx(left + 10.5 / 11 * (right - left)).epsilon(1e-3));
  CHECK(std::stod(m[2]) == doctest::Approx(bottom - 15.0 / 110 * (bottom - top)).epsilon(1e-3));
  CHECK(std::stod(m[4]) == doctest::Approx(bottom - 95.0 / 110 * (bottom - top)).epsilon(1e-3));
}
