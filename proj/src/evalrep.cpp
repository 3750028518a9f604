#include "vrepair/evalrep.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "parallel.hpp"

namespace vrepair::evalrep {

bool sequence_hit(const std::vector<Lexemes>& beam, const Lexemes& gold) {
  return std::find(beam.begin(), beam.end(), gold) != beam.end();
}

namespace {

double mean_hits(const std::vector<std::vector<Lexemes>>& lists, const std::vector<Lexemes>& golds) {
  if (lists.size() != golds.size()) throw std::invalid_argument("prediction and gold counts differ");
  if (golds.empty()) return 0.0;
  std::vector<char> hit(golds.size(), 0);
  detail::parallel_for(golds.size(), [&](std::size_t i) { hit[i] = sequence_hit(lists[i], golds[i]) ? 1 : 0; });
  std::size_t n = 0;
  for (char h : hit) n += static_cast<std::size_t>(h);
  return static_cast<double>(n) / static_cast<double>(golds.size());
}

}  // namespace

double sequence_accuracy(const std::vector<std::vector<Lexemes>>& beams, const std::vector<Lexemes>& golds) {
  return mean_hits(beams, golds);
}

double patch_accuracy(const std::vector<std::vector<Lexemes>>& candidates, const std::vector<Lexemes>& fixed) {
  return mean_hits(candidates, fixed);
}

EvalReport per_cwe_report(const std::vector<SampleResult>& results, std::size_t beam_width,
                          const std::string& split, std::size_t top_k) {
  EvalReport r;
  r.beam_width = beam_width;
  r.split = split;
  r.total = results.size();
  std::size_t seq = 0, patch = 0;
  for (const auto& s : results) {
    auto& row = r.per_cwe[s.cwe];
    row.cwe = s.cwe;
    ++row.total;
    if (s.sequence_hit) {
      ++row.hits;
      ++seq;
    }
    if (s.patch_hit) ++patch;
  }
  for (auto& [cwe, row] : r.per_cwe) row.fraction = static_cast<double>(row.hits) / static_cast<double>(row.total);
  if (r.total) {
    r.overall_sequence_accuracy = static_cast<double>(seq) / static_cast<double>(r.total);
    r.patch_accuracy = static_cast<double>(patch) / static_cast<double>(r.total);
  }
  for (const auto& [cwe, row] : r.per_cwe) r.top.push_back(row);
  std::stable_sort(r.top.begin(), r.top.end(), [](const CweRow& a, const CweRow& b) { return a.total > b.total; });
  if (r.top.size() > top_k) r.top.resize(top_k);
  return r;
}

namespace {

nlohmann::json row_json(const CweRow& row) {
  return {{"cwe", row.cwe}, {"hits", row.hits}, {"total", row.total}, {"fraction", row.fraction}};
}

CweRow row_from(const nlohmann::json& j) {
  return {j.at("cwe").get<std::string>(), j.at("hits").get<std::size_t>(), j.at("total").get<std::size_t>(),
          j.at("fraction").get<double>()};
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [cwe, row] : report.per_cwe) per[cwe] = row_json(row);
  nlohmann::json top = nlohmann::json::array();
  for (const auto& row : report.top) top.push_back(row_json(row));
  return {{"overall_sequence_accuracy", report.overall_sequence_accuracy},
          {"patch_accuracy", report.patch_accuracy},
          {"total", report.total},
          {"per_cwe", per},
          {"top", top},
          {"beam_width", report.beam_width},
          {"split", report.split}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.overall_sequence_accuracy = j.at("overall_sequence_accuracy").get<double>();
  r.patch_accuracy = j.at("patch_accuracy").get<double>();
  r.total = j.at("total").get<std::size_t>();
  for (const auto& [cwe, row] : j.at("per_cwe").items()) r.per_cwe[cwe] = row_from(row);
  for (const auto& row : j.at("top")) r.top.push_back(row_from(row));
  r.beam_width = j.at("beam_width").get<std::size_t>();
  r.split = j.at("split").get<std::string>();
  return r;
}

std::string to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "cwe,hits,total,fraction\n";
  for (const auto& row : report.top) {
    char frac[32];
    std::snprintf(frac, sizeof frac, "%.6f", row.fraction);
    out << row.cwe << ',' << row.hits << ',' << row.total << ',' << frac << '\n';
  }
  return out.str();
}

std::string to_table(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "split %s, beam %zu, %zu samples\n", report.split.c_str(), report.beam_width,
                report.total);
  out << line;
  std::snprintf(line, sizeof line, "sequence accuracy %.2f%%   patch accuracy %.2f%%\n",
                100.0 * report.overall_sequence_accuracy, 100.0 * report.patch_accuracy);
  out << line;
  std::snprintf(line, sizeof line, "%-10s %8s %8s %9s\n", "CWE", "hits", "total", "accuracy");
  out << line;
  for (const auto& row : report.top) {
    std::snprintf(line, sizeof line, "%-10s %8zu %8zu %8.2f%%\n", row.cwe.c_str(), row.hits, row.total,
                  100.0 * row.fraction);
    out << line;
  }
  return out.str();
}

}  // namespace vrepair::evalrep
