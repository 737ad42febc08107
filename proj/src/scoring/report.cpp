#include "fewshot/scoring/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fewshot/error.hpp"

namespace fewshot::score {

namespace fs = std::filesystem;

TaskScore score_task(std::size_t task_index, const std::string& dataset_id, int ways, int shots,
                     const nd::Tensor& probs, std::span<const int> truth) {
  const std::vector<int> pred = argmax_rows(probs);
  TaskScore s{task_index, dataset_id, ways, shots, 0.0, 0.0, false};
  s.bac = balanced_accuracy(pred, truth, ways);
  s.normalized = normalized_accuracy(s.bac, ways);
  return s;
}

TaskScore failed_task(std::size_t task_index, const std::string& dataset_id, int ways, int shots) {
  return {task_index, dataset_id, ways, shots, 0.0, normalized_accuracy(0.0, ways), true};
}

namespace {

Stat make_stat(const std::vector<double>& values) {
  Stat s;
  s.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) s.ci = confidence_interval(values);
  return s;
}

}  // namespace

Aggregate aggregate(std::vector<TaskScore> scores) {
  if (scores.empty()) throw ConfigError("cannot aggregate an empty score list");
  std::stable_sort(scores.begin(), scores.end(),
                   [](const TaskScore& a, const TaskScore& b) { return a.task_index < b.task_index; });
  std::vector<double> all;
  std::map<std::string, std::vector<double>> by_dataset;
  std::map<int, std::vector<double>> by_ways, by_shots;
  Aggregate agg;
  for (const auto& s : scores) {
    all.push_back(s.normalized);
    by_dataset[s.dataset_id].push_back(s.normalized);
    by_ways[s.ways].push_back(s.normalized);
    by_shots[s.shots].push_back(s.normalized);
    agg.failed += s.failed;
  }
  agg.overall = make_stat(all);
  for (const auto& [k, v] : by_dataset) agg.per_dataset[k] = make_stat(v);
  for (const auto& [k, v] : by_ways) agg.per_ways[k] = make_stat(v);
  for (const auto& [k, v] : by_shots) agg.per_shots[k] = make_stat(v);
  return agg;
}

std::optional<double> league_threshold(const std::string& league) {
  if (league == "free-style") return 0.587;
  if (league == "meta-learning") return 0.361;
  return std::nullopt;
}

bool league_gate(double mean, const std::string& league) {
  const auto threshold = league_threshold(league);
  if (!threshold) throw ConfigError("league '" + league + "' has no entry gate");
  return mean > *threshold;
}

std::vector<RankedSubmission> final_rank(const std::vector<SubmissionResult>& submissions) {
  std::vector<RankedSubmission> out;
  for (const auto& s : submissions) {
    if (s.run_means.size() != 3) {
      throw ConfigError("submission " + s.id + " has " + std::to_string(s.run_means.size()) +
                        " runs; final ranking needs exactly 3");
    }
    out.push_back({0, s.id, *std::min_element(s.run_means.begin(), s.run_means.end()), s.timestamp});
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedSubmission& a, const RankedSubmission& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.id < b.id;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_tasks_csv(const std::vector<TaskScore>& scores, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "task_index,dataset_id,N,k,bac,normalized\n";
  for (const auto& s : scores) {
    out << s.task_index << ',' << s.dataset_id << ',' << s.ways << ',' << s.shots << ',' << format_double(s.bac)
        << ',' << format_double(s.normalized) << '\n';
  }
}

std::vector<TaskScore> read_tasks_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "task_index,dataset_id,N,k,bac,normalized") {
    throw FormatError(path.string() + ": unexpected header");
  }
  std::vector<TaskScore> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 6 fields");
    try {
      TaskScore s;
      s.task_index = std::stoull(f[0]);
      s.dataset_id = f[1];
      s.ways = std::stoi(f[2]);
      s.shots = std::stoi(f[3]);
      s.bac = std::stod(f[4]);
      s.normalized = std::stod(f[5]);
      out.push_back(s);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

nlohmann::json to_json(const Stat& stat) {
  nlohmann::json j{{"n", stat.n}, {"mean", stat.mean}};
  if (stat.ci) {
    j["ci"] = {{"level", stat.ci->level}, {"half_width", stat.ci->half_width}, {"sigma", stat.ci->sigma},
               {"t", stat.ci->t},         {"df", stat.ci->df}};
  } else {
    j["ci"] = nullptr;
  }
  return j;
}

nlohmann::json to_json(const Aggregate& agg) {
  nlohmann::json j;
  j["overall"] = to_json(agg.overall);
  j["failed_tasks"] = agg.failed;
  j["per_dataset"] = nlohmann::json::object();
  for (const auto& [k, v] : agg.per_dataset) j["per_dataset"][k] = to_json(v);
  j["per_N"] = nlohmann::json::object();
  for (const auto& [k, v] : agg.per_ways) j["per_N"][std::to_string(k)] = to_json(v);
  j["per_k"] = nlohmann::json::object();
  for (const auto& [k, v] : agg.per_shots) j["per_k"][std::to_string(k)] = to_json(v);
  return j;
}

nlohmann::json run_summary(const Aggregate& agg) {
  nlohmann::json j = to_json(agg);
  j["schema_version"] = kSchemaVersion;
  j["gates"] = {{"free-style", league_gate(agg.overall.mean, "free-style")},
                {"meta-learning", league_gate(agg.overall.mean, "meta-learning")}};
  return j;
}

void write_json(const nlohmann::json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace fewshot::score
