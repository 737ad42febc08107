// Benchmark command line: run, score, rank, synth, compare.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fewshot/datastore/io.hpp"
#include "fewshot/error.hpp"
#include "fewshot/harness/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fewshot;

namespace {

constexpr int kConfigError = 2;
constexpr int kBudgetExhausted = 3;

json read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

int cmd_run(const fs::path& config_path, std::optional<std::uint64_t> seed, std::optional<double> scale,
            std::optional<std::string> out) {
  json doc = read_config_file(config_path);
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  if (seed) doc["seed"] = *seed;
  if (scale) doc["scale"] = *scale;
  if (out) doc["out"] = *out;
  const harness::RunConfig config = harness::parse_run_config(doc);
  const harness::ProtocolResult result = harness::run_protocol(config);
  const auto& means = result.submission.run_means;
  for (std::size_t r = 0; r < means.size(); ++r) std::printf("run %zu: %.6f\n", r, means[r]);
  std::printf("score (worst run): %.6f\n", *std::min_element(means.begin(), means.end()));
  std::printf("reports: %s\n", config.out.string().c_str());
  return result.budget_exhausted ? kBudgetExhausted : 0;
}

int cmd_score(const fs::path& tasks) {
  const auto scores = score::read_tasks_csv(tasks);
  std::cout << score::run_summary(score::aggregate(scores)).dump(2) << '\n';
  return 0;
}

int cmd_rank(const std::vector<fs::path>& dirs) {
  std::vector<score::SubmissionResult> subs;
  for (const auto& dir : dirs) {
    const json doc = score::read_json(dir / "summary.json");
    try {
      subs.push_back({doc.at("id").get<std::string>(), doc.at("timestamp").get<std::int64_t>(),
                      doc.at("league").get<std::string>(), doc.at("run_means").get<std::vector<double>>()});
    } catch (const json::exception& e) {
      throw FormatError((dir / "summary.json").string() + ": " + e.what());
    }
  }
  std::map<std::string, std::string> league;
  for (const auto& s : subs) league[s.id] = s.league;
  std::printf("%-5s %-40s %-10s %-12s %s\n", "rank", "id", "score", "timestamp", "gate");
  for (const auto& r : score::final_rank(subs)) {
    const std::string& lg = league[r.id];
    const std::string gate = score::league_threshold(lg)
                                 ? (score::league_gate(r.score, lg) ? "pass (" : "fail (") + lg + ")"
                                 : "n/a (" + lg + ")";
    std::printf("%-5zu %-40s %-10.6f %-12lld %s\n", r.rank, r.id.c_str(), r.score,
                static_cast<long long>(r.timestamp), gate.c_str());
  }
  return 0;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
  const data::SynthSpec spec = harness::parse_synth_spec(read_config_file(spec_path));
  data::write_meta_dataset(data::synth_meta_dataset(spec), out);
  std::printf("wrote %zu datasets to %s\n", spec.domains, out.string().c_str());
  return 0;
}

int cmd_compare(const fs::path& matrix_path) {
  const json doc = harness::compare_conditions(read_config_file(matrix_path));
  bool exhausted = false;
  for (const auto& c : doc["cells"]) {
    std::printf("%-24s %-10s mean %.6f  worst run %.6f\n", c["method"].get<std::string>().c_str(),
                c["init"].get<std::string>().c_str(), c["overall"]["mean"].get<double>(),
                c["worst_run_mean"].get<double>());
    exhausted = exhausted || c["budget_exhausted"].get<bool>();
  }
  return exhausted ? kBudgetExhausted : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot benchmark harness"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a full protocol from a config file");
  fs::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> scale;
  std::optional<std::string> out;
  run->add_option("--config", config_path, "Run config (flat JSON)")->required();
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--scale", scale, "Desk-scale divisor for schedule counts");
  run->add_option("--out", out, "Output directory");

  auto* score_cmd = app.add_subcommand("score", "Aggregate a tasks.csv");
  fs::path tasks;
  score_cmd->add_option("--tasks", tasks, "tasks.csv")->required();

  auto* rank = app.add_subcommand("rank", "Rank submissions by their worst run");
  std::vector<fs::path> results;
  rank->add_option("--results", results, "Result directories holding summary.json")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic meta-dataset");
  fs::path spec, synth_out;
  synth->add_option("--spec", spec, "Synthetic spec (JSON)")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* compare = app.add_subcommand("compare", "Run and compare a matrix of conditions");
  fs::path matrix;
  compare->add_option("--matrix", matrix, "Matrix file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, seed, scale, out);
    if (*score_cmd) return cmd_score(tasks);
    if (*rank) return cmd_rank(results);
    if (*synth) return cmd_synth(spec, synth_out);
    if (*compare) return cmd_compare(matrix);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const InfeasibleTaskError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
