#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include <gtest/gtest.h>

#include "fewshot/error.hpp"
#include "fewshot/harness/budget.hpp"
#include "fewshot/harness/harness.hpp"
#include "support/fixtures.hpp"

using namespace fewshot;
using namespace fewshot::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny(const std::string& method, const fs::path& out) {
  return {{"method", method},
          {"seed", 5},
          {"run_count", 1},
          {"backbone_input_side", 16},
          {"backbone_width", 8},
          {"backbone_blocks", 2},
          {"synth_domains", 3},
          {"synth_classes", 6},
          {"synth_images_per_class", 30},
          {"meta_train_units", 4},
          {"validate_every", 2},
          {"validation_tasks", 2},
          {"tasks_per_dataset", 3},
          {"workers", 1},
          {"out", out.string()}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fewshot_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Presets, ExactScheduleValues) {
  EXPECT_EQ(preset::cross_domain.meta_train_units, 30000u);
  EXPECT_EQ(preset::cross_domain.validate_every, 5000u);
  EXPECT_EQ(preset::cross_domain.validation_tasks, 300u);
  EXPECT_EQ(preset::cross_domain.validation_queries, 20);
  EXPECT_EQ(preset::within_domain.meta_train_units, 4290u);
  EXPECT_EQ(preset::within_domain.validate_every, 750u);
  EXPECT_EQ(preset::within_domain.validation_tasks, 100u);
  EXPECT_EQ(preset::metadelta.validate_every, 50u);
  EXPECT_EQ(preset::metadelta.validation_tasks, 50u);
  EXPECT_EQ(preset::metadelta.validation_queries, 5);
  EXPECT_EQ(preset::feedback.tasks_per_dataset, 100u);
  EXPECT_EQ(preset::feedback.budget_seconds, 5 * 3600.0);
  EXPECT_EQ(preset::final_phase.tasks_per_dataset, 600u);
  EXPECT_EQ(preset::final_phase.budget_seconds, 9 * 3600.0);
  EXPECT_EQ(preset::desk_budget_seconds, 900.0);
  EXPECT_EQ(RunConfig{}.budget_seconds, 900.0);
}

TEST(Presets, ScaleOneReproducesPresetAndScaleHundredFloors) {
  RunConfig c;
  const Schedule s1 = c.schedule();
  EXPECT_EQ(s1.meta_train_units, 30000u);
  EXPECT_EQ(s1.validate_every, 5000u);
  EXPECT_EQ(s1.validation_tasks, 300u);
  c.scale = 100;
  const Schedule s100 = c.schedule();
  EXPECT_EQ(s100.meta_train_units, 300u);
  EXPECT_EQ(s100.validate_every, 50u);
  EXPECT_EQ(s100.validation_tasks, 3u);
  EXPECT_EQ(scale_count(7, 1000), 1u);
  EXPECT_EQ(scale_count(4290, 100), 42u);
  EXPECT_THROW(scale_count(10, 0.5), ConfigError);
}

TEST(Config, ParsesFlatJsonAndRejectsUnknownKeys) {
  const RunConfig c = parse_run_config(
      {{"method", "pn"}, {"hp_lr", 0.01}, {"hp_T", 7}, {"scale", 10}, {"test_way_max", 8}, {"timestamp", -4}});
  EXPECT_EQ(c.method, base::Method::prototypical_networks);
  EXPECT_EQ(c.hyperparams().lr, 0.01);
  EXPECT_EQ(c.hyperparams().T, 7);
  EXPECT_EQ(c.test_episode.way_range.hi, 8);
  EXPECT_EQ(c.timestamp, -4);
  EXPECT_EQ(c.id(), "prototypical-networks/random/cross-domain");
  EXPECT_THROW(parse_run_config({{"methd", "pn"}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"hp_momentum", 0.9}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"seed", -1}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"seed", "1"}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"budget_seconds", 0}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"run_count", 0}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"protocol", "sideways"}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"init", "imagenet"}}), ConfigError);
  EXPECT_THROW(parse_run_config(json::array()), ConfigError);
}

TEST(Config, WithinDomainMetaTestIsFixedFiveWayFiveShot) {
  const RunConfig c = parse_run_config({{"protocol", "within-domain"}});
  EXPECT_FALSE(c.test_episode.any_way_any_shot);
  EXPECT_EQ(c.test_episode.ways, 5);
  EXPECT_EQ(c.test_episode.shots, 5);
  EXPECT_EQ(c.test_episode.queries, 20);
  EXPECT_EQ(c.data.synth.domains, 1u);
  EXPECT_EQ(preset::within_domain_fractions, (std::array<double, 3>{0.70, 0.15, 0.15}));
  EXPECT_THROW(parse_run_config({{"protocol", "within-domain"}, {"test_mode", "any-way-any-shot"}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"protocol", "within-domain"}, {"test_shots", 1}}), ConfigError);
}

TEST(Config, EchoOmitsOutputDirectory) {
  json a = tiny("pn", "/tmp/a"), b = tiny("pn", "/tmp/b");
  EXPECT_EQ(to_json(parse_run_config(a)), to_json(parse_run_config(b)));
  EXPECT_FALSE(to_json(parse_run_config(a)).contains("out"));
}

TEST(Budget, MonotoneReadings) {
  BudgetClock clock(10.0);
  double last = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double t = clock.mark("m" + std::to_string(i));
    EXPECT_GE(t, last);
    last = t;
  }
  EXPECT_FALSE(clock.exhausted());
  EXPECT_THROW(BudgetClock(0.0), ConfigError);
}

TEST(Evaluate, WorkerCountDoesNotChangeScores) {
  const auto meta = testkit::toy_meta(3, 6, 30, 16);
  base::MethodConfig mc{.method = base::Method::prototypical_networks,
                        .hp = base::default_hyperparams(base::Method::prototypical_networks),
                        .backbone = {.input_side = 16, .width = 8, .blocks = 2},
                        .seed = 3};
  const auto learner = base::make_meta_learner(mc)->snapshot();
  const auto make = per_dataset_tasks(meta, {.any_way_any_shot = true, .way_range = {2, 6}, .shot_range = {1, 5}}, 4,
                                      RngStream(3, {"meta-test", "tasks", 0}));
  const auto one = evaluate(*learner, 12, make, 1);
  const auto three = evaluate(*learner, 12, make, 3);
  ASSERT_EQ(one.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(one[i].task_index, i);
    EXPECT_EQ(one[i].dataset_id, meta.datasets[i / 4].id());
    EXPECT_EQ(one[i].bac, three[i].bac);
    EXPECT_EQ(one[i].normalized, three[i].normalized);
  }
}

TEST(WithinDomain, MinimumClassCountAndRejection) {
  EXPECT_EQ(within_domain_min_classes(5), 34u);
  json cfg = tiny("pn", scratch("wd_small"));
  cfg["protocol"] = "within-domain";
  cfg["synth_domains"] = 1;
  cfg["synth_classes"] = 6;
  try {
    run_within_domain(parse_run_config(cfg));
    FAIL() << "6-class dataset accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("at least 34"), std::string::npos) << e.what();
  }
}

TEST(WithinDomain, RunsFiveWayFiveShotOnHeldOutClasses) {
  const fs::path out = scratch("wd");
  json cfg = tiny("pn", out);
  cfg["protocol"] = "within-domain";
  cfg["synth_domains"] = 1;
  cfg["synth_classes"] = 34;
  const ProtocolResult r = run_within_domain(parse_run_config(cfg));
  ASSERT_EQ(r.runs.size(), 1u);
  const auto scores = score::read_tasks_csv(out / "run_0" / "tasks.csv");
  ASSERT_EQ(scores.size(), 3u);
  for (const auto& s : scores) {
    EXPECT_EQ(s.ways, 5);
    EXPECT_EQ(s.shots, 5);
    EXPECT_NE(s.dataset_id.find("/meta-test"), std::string::npos);
  }
  const json summary = score::read_json(out / "run_0" / "summary.json");
  EXPECT_EQ(summary["meta_fit"]["steps"], 4);
  EXPECT_EQ(summary["meta_fit"]["checkpoints"].size(), 2u);
  fs::remove_all(out);
}

TEST(CrossDomain, SameConfigAndSeedGiveIdenticalReports) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  json cfg = tiny("fomaml", a);
  cfg["run_count"] = 2;
  run_cross_domain(parse_run_config(cfg));
  cfg["out"] = b.string();
  run_cross_domain(parse_run_config(cfg));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  for (const char* run : {"run_0", "run_1"}) {
    EXPECT_EQ(slurp(a / run / "tasks.csv"), slurp(b / run / "tasks.csv"));
    EXPECT_EQ(slurp(a / run / "summary.json"), slurp(b / run / "summary.json"));
  }
  const json top = score::read_json(a / "summary.json");
  EXPECT_EQ(top["run_means"].size(), 2u);
  for (const char* key : {"elapsed", "duration", "wall"}) {
    EXPECT_EQ(slurp(a / "summary.json").find(key), std::string::npos) << key;
    EXPECT_EQ(slurp(a / "run_0" / "summary.json").find(key), std::string::npos) << key;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CrossDomain, SplitsSevenThreeAndTestsOnSeparatePool) {
  const fs::path out = scratch("split");
  json cfg = tiny("pn", out);
  cfg["synth_domains"] = 10;
  cfg["synth_classes"] = 5;
  cfg["synth_images_per_class"] = 30;
  cfg["tasks_per_dataset"] = 1;
  run_cross_domain(parse_run_config(cfg));
  const json s = score::read_json(out / "run_0" / "summary.json");
  EXPECT_EQ(s["splits"]["meta_train"].size(), 7u);
  EXPECT_EQ(s["splits"]["meta_valid"].size(), 3u);
  EXPECT_EQ(s["splits"]["meta_test"].size(), 10u);
  std::set<std::string> train(s["splits"]["meta_train"].begin(), s["splits"]["meta_train"].end());
  for (const auto& d : s["splits"]["meta_test"]) EXPECT_FALSE(train.contains(d.get<std::string>()));
  fs::remove_all(out);
}

TEST(CrossDomain, ExhaustedBudgetKeepsInitialLearner) {
  const fs::path out = scratch("budget");
  json cfg = tiny("pn", out);
  cfg["budget_seconds"] = 1e-9;
  const ProtocolResult r = run_cross_domain(parse_run_config(cfg));
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_EQ(r.runs[0].fit.steps, 0u);
  EXPECT_TRUE(r.runs[0].fit.checkpoints.empty());
  // Initial learner of run 0 uses seed 5.
  base::MethodConfig mc{.method = base::Method::prototypical_networks,
                        .hp = base::default_hyperparams(base::Method::prototypical_networks),
                        .backbone = {.input_side = 16, .width = 8, .blocks = 2},
                        .seed = 5};
  const fs::path init = scratch("budget_init");
  base::make_meta_learner(mc)->snapshot()->save(init);
  EXPECT_EQ(slurp(out / "run_0" / "learner" / "params.bin"), slurp(init / "params.bin"));
  EXPECT_TRUE(score::read_json(out / "summary.json")["budget_exhausted"].get<bool>());
  fs::remove_all(out);
  fs::remove_all(init);
}

TEST(Compare, ReportSchema) {
  const fs::path out = scratch("compare");
  json base = tiny("pn", out);
  base.erase("out");
  base.erase("method");
  base["test_way_max"] = 6;
  json matrix{{"base", base},
              {"cells", {{{"method", "pn"}, {"init", "random"}}, {{"method", "mn"}, {"init", "random"}}}},
              {"out", out.string()}};
  const json doc = compare_conditions(matrix);
  ASSERT_EQ(doc["cells"].size(), 2u);
  std::ifstream csv(out / "by_dataset.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "method,init,dataset,n,mean,ci_half_width");
  std::set<std::string> triples;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    triples.insert(line.substr(0, line.find(',', line.find(',', line.find(',') + 1) + 1)));
  }
  EXPECT_EQ(rows, 2u * 3u);
  EXPECT_EQ(triples.size(), rows);
  for (const auto& cell : doc["cells"]) {
    EXPECT_TRUE(cell.contains("spearman_k"));
    EXPECT_TRUE(cell.contains("spearman_N"));
    std::set<int> observed;
    for (const auto& row : cell["per_N"]) observed.insert(row["N"].get<int>());
    for (int n : observed) EXPECT_TRUE(n >= 2 && n <= 6);
    EXPECT_EQ(cell["per_dataset"].size(), 3u);
  }
  matrix["cells"][1]["method"] = "pn";
  EXPECT_THROW(compare_conditions(matrix), ConfigError);
  fs::remove_all(out);
}
