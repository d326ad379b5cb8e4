#include <cstdio>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "gateflow/json_value.hpp"
#include "gateflow/store.hpp"
#include "gateflow/viz.hpp"
#include "test_util.hpp"

using namespace gateflow;
using namespace gateflow::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gateflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::vector<nlohmann::json> lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

TypeRegistry builtin() {
  TypeRegistry r;
  register_builtin(r);
  return r;
}

const char* kDeadlock = R"(name: Deadlock
components:
  - {type: ComponentD, name: P, io_map: {alpha: pa, beta: pb}}
  - {type: ComponentD, name: Q, io_map: {alpha: pb, beta: pa}}
max_steps: 2
)";

const char* kStudy = R"(experiment: ToyProductStudy
direction: minimize
objective: {tag: loss, reduce: last}
sampler: uniform
seed: 11
n_trials: 12
parallelism: 3
)";

}  // namespace

TEST_CASE("flags are generated from collected hyperparameters") {
  auto reg = builtin();
  auto schema = cli::generate_flags(reg, reg.experiment("ToyProductStudy"));
  std::vector<std::string> names;
  for (const auto& f : schema.flags) names.push_back(f.name);
  CHECK(names == std::vector<std::string>{"ComponentF.SubcomponentA.scaler", "ComponentF.SubcomponentB.scaler",
                                          "ProductLoss.target"});
  CHECK(cli::generate_flags(reg, reg.experiment("ToyExperimentABC")).flags.empty());
}

TEST_CASE("parameter flags parse, resolve and range-check") {
  auto reg = builtin();
  auto schema = cli::generate_flags(reg, reg.experiment("ToyProductStudy"));
  auto args = cli::parse_param_flags(schema, {"--ComponentF.SubcomponentA.scaler", "0.4",
                                              "--ComponentF.SubcomponentB.scaler=0.3", "--target", "-1.5"});
  CHECK(args.at("ComponentF.SubcomponentA.scaler").as_real() == 0.4);
  CHECK(args.at("ComponentF.SubcomponentB.scaler").as_real() == 0.3);
  CHECK(args.at("ProductLoss.target").as_real() == -1.5);

  CHECK_GATEFLOW_ERROR(cli::parse_param_flags(schema, {"--scaler", "0.3"}), ErrorCode::AmbiguousArgument);
  auto suffixed = cli::parse_param_flags(schema, {"--SubcomponentB.scaler", "0.25"});
  CHECK(suffixed.at("ComponentF.SubcomponentB.scaler").as_real() == 0.25);
  CHECK_GATEFLOW_ERROR(cli::parse_param_flags(schema, {"--caler", "0.3"}), ErrorCode::InvalidArgument);
  CHECK_GATEFLOW_ERROR(cli::parse_param_flags(schema, {"--ComponentF.SubcomponentB.scaler", "0.6"}),
                       ErrorCode::InvalidArgument);
  CHECK_GATEFLOW_ERROR(cli::parse_param_flags(schema, {"--ComponentF.SubcomponentA.scaler", "big"}),
                       ErrorCode::InvalidArgument);
  CHECK_GATEFLOW_ERROR(cli::parse_param_flags(schema, {"--nope", "1"}), ErrorCode::InvalidArgument);
  CHECK_GATEFLOW_ERROR(cli::parse_param_flags(schema, {"--target"}), ErrorCode::InvalidArgument);
  CHECK_GATEFLOW_ERROR(cli::parse_param_flags(schema, {"0.5"}), ErrorCode::InvalidArgument);
}

TEST_CASE("scalar inference") {
  CHECK(cli::infer_scalar("3").is_integer());
  CHECK(cli::infer_scalar("-3").as_integer() == -3);
  CHECK(cli::infer_scalar("3.0").is_real());
  CHECK(cli::infer_scalar("1e-3").as_real() == 1e-3);
  CHECK(cli::infer_scalar("true").is_bool());
  CHECK(cli::infer_scalar("3x").is_string());
  CHECK(cli::infer_scalar("").is_string());
}

TEST_CASE("run definitions") {
  auto reg = builtin();
  TempDir dir;
  write(dir / "a.yaml", "experiment: ToyExperimentF\nargs:\n  ComponentF.SubcomponentA.scaler: 0.5\nmax_steps: 4\n");
  auto def = cli::load_run_definition(dir / "a.yaml", reg);
  CHECK(def.experiment.name == "ToyExperimentF");
  CHECK(def.args.at("ComponentF.SubcomponentA.scaler").as_real() == 0.5);
  CHECK(def.max_steps == 4u);

  write(dir / "s.yaml", "experiment: ToyExperimentF\nargs:\n  label: !\"7\"\n  n: 7\n");
  def = cli::load_run_definition(dir / "s.yaml", reg);
  CHECK(def.args.at("label").is_string());
  CHECK(def.args.at("n").is_integer());

  write(dir / "d.yaml", kDeadlock);
  def = cli::load_run_definition(dir / "d.yaml", reg);
  REQUIRE(def.experiment.recipes.size() == 2);
  CHECK(def.experiment.recipes[1].instance == "Q");
  CHECK(def.experiment.recipes[1].io_map->at("alpha") == "pb");

  write(dir / "bad.yaml", "experiment: ToyExperimentF\nbogus: 1\n");
  CHECK_GATEFLOW_ERROR(cli::load_run_definition(dir / "bad.yaml", reg), ErrorCode::InvalidArgument);
  write(dir / "both.yaml", "experiment: ToyExperimentF\ncomponents: []\n");
  CHECK_GATEFLOW_ERROR(cli::load_run_definition(dir / "both.yaml", reg), ErrorCode::InvalidArgument);
  write(dir / "type.yaml", "components:\n  - {type: NoSuchType}\n");
  CHECK_GATEFLOW_ERROR(cli::load_run_definition(dir / "type.yaml", reg), ErrorCode::UnknownType);
  write(dir / "syntax.yaml", "experiment: [\n");
  CHECK_GATEFLOW_ERROR(cli::load_run_definition(dir / "syntax.yaml", reg), ErrorCode::InvalidArgument);
  CHECK_GATEFLOW_ERROR(cli::load_run_definition(dir / "missing.yaml", reg), ErrorCode::InvalidArgument);
}

TEST_CASE("study definitions") {
  TempDir dir;
  write(dir / "s.yaml", kStudy);
  auto c = cli::load_study_definition(dir / "s.yaml").config;
  CHECK(c.experiment == "ToyProductStudy");
  CHECK(c.objective_tag == "loss");
  CHECK(c.n_trials == 12);
  CHECK(c.parallelism == 3);
  CHECK(c.seed == 11);
  write(dir / "g.yaml", "experiment: X\nobjective: loss\nsampler: local-gaussian\ndirection: maximize\n");
  c = cli::load_study_definition(dir / "g.yaml").config;
  CHECK(c.sampler == study::Sampler::LocalGaussian);
  CHECK(c.direction == study::Direction::Maximize);
  CHECK(c.reduce == study::Reduce::Last);
  write(dir / "b.yaml", "experiment: X\nobjective: loss\nsampler: grid\n");
  CHECK_GATEFLOW_ERROR(cli::load_study_definition(dir / "b.yaml"), ErrorCode::InvalidArgument);
  write(dir / "n.yaml", "experiment: X\n");
  CHECK_GATEFLOW_ERROR(cli::load_study_definition(dir / "n.yaml"), ErrorCode::InvalidArgument);
}

TEST_CASE("run command writes a run and reports it") {
  TempDir dir;
  std::string root = (dir / "store").string(), spool = (dir / "spool").string();
  auto r = invoke({"run", "ToyExperimentF", "--store-root", root, "--spool-root", spool, "--max-steps", "3",
                   "--ComponentF.SubcomponentA.scaler", "0.5", "--out", (dir / "trace.json").string()});
  REQUIRE(r.code == 0);
  auto j = lines(r.out).at(0);
  CHECK(j["outcome"] == "completed");
  CHECK(j["steps"]["F"] == 3);
  auto meta = store::load_meta(root, j["run_id"].get<std::string>());
  REQUIRE(meta);
  CHECK(meta->args.at("ComponentF.SubcomponentA.scaler").as_real() == 0.5);
  CHECK(meta->outcome == "completed");
  CHECK(meta->records == j["records"].get<std::uint64_t>());
  CHECK(fs::exists(dir / "trace.json"));
}

TEST_CASE("exit codes") {
  TempDir dir;
  std::string root = (dir / "store").string(), spool = (dir / "spool").string();
  CHECK(invoke({}).code == cli::kUsage);
  CHECK(invoke({"--help"}).code == cli::kOk);
  CHECK(invoke({"frobnicate"}).code == cli::kUsage);
  CHECK(invoke({"run", "NoSuch", "--max-steps", "1", "--store-root", root}).code == cli::kUsage);
  CHECK(invoke({"run", "ToyExperimentF", "--store-root", root}).code == cli::kUsage);
  CHECK(invoke({"run", "ToyExperimentF", "--max-steps", "2", "--scaler", "0.3", "--store-root", root}).code ==
        cli::kUsage);
  CHECK(invoke({"run", "ToyExperimentF", "--max-steps", "2", "--ComponentF.SubcomponentA.scaler", "5",
                "--store-root", root})
            .code == cli::kUsage);

  write(dir / "d.yaml", kDeadlock);
  auto r = invoke({"run", (dir / "d.yaml").string(), "--step-timeout", "0.2", "--store-root", root, "--spool-root",
                   spool});
  CHECK(r.code == cli::kTimeout);
  CHECK(lines(r.out).at(0)["outcome"] == "timeout");
  CHECK(r.err.find("P pa observe") != std::string::npos);
  CHECK(r.err.find("Q pb observe") != std::string::npos);

  r = invoke({"oracle-run", (dir / "d.yaml").string()});
  CHECK(r.code == cli::kRuntime);
  CHECK(r.err.find("OracleStuck") != std::string::npos);

  write(dir / "div.yaml", "components:\n  - {type: ComponentD, step: \"beta = alpha / 0\"}\n"
                          "  - {type: UnitSource}\nmax_steps: 2\n");
  r = invoke({"run", (dir / "div.yaml").string(), "--store-root", root, "--spool-root", spool});
  CHECK(r.code == cli::kRuntime);
  CHECK(lines(r.out).at(0)["outcome"] == "error");

  // A regular file where the store directory should be.
  write(dir / "blocked", "x");
  CHECK(invoke({"export", "--tag", "loss", "--store-root", (dir / "blocked").string()}).code == cli::kStoreIO);
  CHECK(invoke({"export", "--tag", "z", "--store-root", root, "--out", (dir / "blocked" / "x.csv").string()}).code ==
        cli::kStoreIO);
}

TEST_CASE("stop-after ends an unbounded run") {
  TempDir dir;
  auto r = invoke({"run", "ToyExperimentABC", "--stop-after", "0.1", "--store-root", (dir / "s").string(),
                   "--spool-root", (dir / "p").string()});
  CHECK(r.code == 0);
  CHECK(lines(r.out).at(0)["outcome"] == "stopped");
}

TEST_CASE("same seed gives the same records") {
  TempDir dir;
  std::string root = (dir / "store").string();
  std::vector<std::string> ids;
  for (int i = 0; i < 2; ++i) {
    auto r = invoke({"run", "SeededToyExperiment", "--seed", "5", "--max-steps", "4", "--store-root", root,
                     "--spool-root", (dir / "spool").string()});
    REQUIRE(r.code == 0);
    ids.push_back(lines(r.out).at(0)["run_id"]);
  }
  std::vector<std::vector<nlohmann::json>> dumps;
  for (const auto& id : ids) {
    auto r = invoke({"export", "--raw", "--strip-walltime", "--tag", "x", "--runs", id, "--store-root", root});
    REQUIRE(r.code == 0);
    auto recs = lines(r.out);
    for (auto& rec : recs) {
      CHECK(!rec.contains("w"));
      rec.erase("r");
    }
    dumps.push_back(recs);
  }
  CHECK(dumps[0].size() == 5);
  CHECK(dumps[0] == dumps[1]);
}

TEST_CASE("study, list, export and plot") {
  TempDir dir;
  std::string root = (dir / "store").string(), spool = (dir / "spool").string();
  write(dir / "s.yaml", kStudy);
  auto r = invoke({"study", (dir / "s.yaml").string(), "--store-root", root, "--spool-root", spool});
  REQUIRE(r.code == 0);
  auto j = lines(r.out).at(0);
  CHECK(j["complete"] == 12);
  CHECK(j["failed"] == 0);
  double best = j["best"]["objective"];

  r = invoke({"list", "--studies", "--store-root", root});
  auto studies = lines(r.out);
  REQUIRE(studies.size() == 1);
  CHECK(studies[0]["study_id"] == j["study_id"]);
  CHECK(studies[0]["best_objective"].get<double>() == best);
  CHECK(lines(invoke({"list", "--runs", "--store-root", root}).out).size() == 12);

  r = invoke({"export", "--tag", "loss", "--experiment", "ToyProductStudy", "--store-root", root, "--out",
              (dir / "loss.csv").string()});
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "loss.csv");
  std::stringstream text;
  text << in.rdbuf();
  auto series = viz::parse_csv(text.str());
  auto direct = viz::aggregate_runs(root, {.run_ids = {}, .experiment = "ToyProductStudy", .component = std::nullopt,
                                           .tag = "loss", .step_min = std::nullopt, .step_max = std::nullopt});
  REQUIRE(direct.size() == 1);
  CHECK(series.mean == direct[0].mean);
  CHECK(series.n.front() == 12);

  r = invoke({"plot", "--tag", "loss", "--store-root", root, "--out", (dir / "loss.svg").string()});
  CHECK(r.code == 0);
  CHECK(fs::file_size(dir / "loss.svg") > 0);
  CHECK(invoke({"plot", "--tag", "nothing", "--store-root", root, "--out", (dir / "e.svg").string()}).code ==
        cli::kRuntime);

  r = invoke({"export", "--tag", "z", "--store-root", root, "--group-by", "bogus"});
  CHECK(r.code == cli::kUsage);
}

TEST_CASE("study flag overrides and abort") {
  TempDir dir;
  std::string root = (dir / "store").string(), spool = (dir / "spool").string();
  write(dir / "s.yaml", kStudy);
  auto r = invoke({"study", (dir / "s.yaml").string(), "--n-trials", "3", "--parallelism", "1", "--seed", "2",
                   "--target", "0.05", "--store-root", root, "--spool-root", spool});
  REQUIRE(r.code == 0);
  CHECK(lines(r.out).at(0)["n_trials"] == 3);
  auto studies = study::list_studies(root);
  REQUIRE(studies.size() == 1);
  CHECK(studies[0].config.seed == 2);
  CHECK(studies[0].config.base_args.at("ProductLoss.target").as_real() == 0.05);

  write(dir / "bad.yaml", "experiment: ToyProductStudy\nobjective: no_such_tag\nn_trials: 4\n");
  r = invoke({"study", (dir / "bad.yaml").string(), "--store-root", root, "--spool-root", spool});
  CHECK(r.code == cli::kRuntime);
  CHECK(r.err.find("StudyAborted") != std::string::npos);
}

TEST_CASE("batch script partitions the trial range") {
  study::StudyConfig c;
  c.experiment = "ToyProductStudy";
  c.seed = 100;
  c.n_trials = 10;
  cli::BatchOptions o;
  o.partitions = 3;
  o.headers = {"#SBATCH --time=00:10:00"};
  std::string s = cli::batch_script(c, "/defs/s.yaml", o);
  CHECK(s.rfind("#!/bin/bash\n#SBATCH --time=00:10:00\n#SBATCH --array=0-2\n", 0) == 0);
  CHECK(s.find("COUNTS=(4 3 3)") != std::string::npos);
  CHECK(s.find("OFFSETS=(0 4 7)") != std::string::npos);

  o.partitions = 1;
  s = cli::batch_script(c, "/defs/s.yaml", o);
  CHECK(s.find("--array") == std::string::npos);
  CHECK(s.find("--seed 100 --n-trials 10") != std::string::npos);

  o.partitions = 11;
  CHECK_GATEFLOW_ERROR(cli::batch_script(c, "/d", o), ErrorCode::InvalidArgument);
  o.partitions = 0;
  CHECK_GATEFLOW_ERROR(cli::batch_script(c, "/d", o), ErrorCode::InvalidArgument);
  c.n_trials = 0;
  o.partitions = 1;
  CHECK_GATEFLOW_ERROR(cli::batch_script(c, "/d", o), ErrorCode::InvalidArgument);
}

TEST_CASE("batch script partitions cover every trial seed once") {
  TempDir dir;
  write(dir / "s.yaml", kStudy);
  auto r = invoke({"emit-batch-script", (dir / "s.yaml").string(), "--partitions", "5", "--binary", "echo",
                   "--out", (dir / "job.sh").string()});
  REQUIRE(r.code == 0);
  std::vector<std::int64_t> seeds;
  for (int idx = 0; idx < 5; ++idx) {
    std::string cmd = "SLURM_ARRAY_TASK_ID=" + std::to_string(idx) + " bash " + (dir / "job.sh").string();
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[512];
    std::string line;
    while (fgets(buf, sizeof buf, p)) line += buf;
    REQUIRE(pclose(p) == 0);
    auto seed_at = line.find("--seed ");
    auto n_at = line.find("--n-trials ");
    REQUIRE(seed_at != std::string::npos);
    REQUIRE(n_at != std::string::npos);
    std::int64_t seed = std::stoll(line.substr(seed_at + 7));
    std::int64_t n = std::stoll(line.substr(n_at + 11));
    for (std::int64_t k = 0; k < n; ++k) seeds.push_back(seed + k);
  }
  std::vector<std::int64_t> expected;
  for (std::int64_t k = 0; k < 12; ++k) expected.push_back(11 + k);
  CHECK(seeds == expected);

  write(dir / "z.yaml", "experiment: ToyProductStudy\nobjective: loss\nn_trials: 0\n");
  CHECK(invoke({"emit-batch-script", (dir / "z.yaml").string()}).code == cli::kUsage);
}

TEST_CASE("merge-spool reports counts") {
  TempDir dir;
  auto r = invoke({"merge-spool", "--store-root", (dir / "s").string(), "--spool-root", (dir / "p").string()});
  CHECK(r.code == 0);
  auto j = lines(r.out).at(0);
  CHECK(j["merged"] == 0);
  CHECK(j["skipped"] == 0);
}
