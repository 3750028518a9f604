#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrepair/ctok.hpp"

namespace vrepair::evalrep {

/// 1 iff some hypothesis equals the gold diff, lexeme for lexeme.
bool sequence_hit(const std::vector<Lexemes>& beam, const Lexemes& gold);

/// Mean of sequence_hit. Throws std::invalid_argument on misaligned inputs;
/// an empty dataset scores 0.
double sequence_accuracy(const std::vector<std::vector<Lexemes>>& beams, const std::vector<Lexemes>& golds);

/// Mean over samples of "some candidate function equals the fixed function".
double patch_accuracy(const std::vector<std::vector<Lexemes>>& candidates, const std::vector<Lexemes>& fixed);

struct SampleResult {
  std::string cwe;
  bool sequence_hit = false;
  bool patch_hit = false;
};

struct CweRow {
  std::string cwe;
  std::size_t hits = 0;
  std::size_t total = 0;
  double fraction = 0.0;

  bool operator==(const CweRow&) const = default;
};

struct EvalReport {
  double overall_sequence_accuracy = 0.0;
  double patch_accuracy = 0.0;
  std::size_t total = 0;
  std::map<std::string, CweRow> per_cwe;
  std::vector<CweRow> top;  // by total descending, then CWE id
  std::size_t beam_width = 0;
  std::string split;
};

EvalReport per_cwe_report(const std::vector<SampleResult>& results, std::size_t beam_width,
                          const std::string& split, std::size_t top_k = 10);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
/// cwe,hits,total,fraction rows in `top` order.
std::string to_csv(const EvalReport& report);
std::string to_table(const EvalReport& report);

}  // namespace vrepair::evalrep
