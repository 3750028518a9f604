#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrepair/encoding.hpp"
#include "vrepair/inference.hpp"
#include "vrepair/mining.hpp"

// JSON Lines records for the file-based pipeline stages.
namespace vrepair::io {

/// Bad record or unreadable file. `line` is 1-based, 0 when not tied to one.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& path, std::size_t line, const std::string& what);
};

nlohmann::json to_json(const mining::CommitRecord& commit);
mining::CommitRecord commit_from_json(const nlohmann::json& j);

/// Token streams are stored as parallel lexeme and line arrays; kinds are
/// recovered by lexing each lexeme on load.
nlohmann::json to_json(const mining::FunctionPair& pair);
mining::FunctionPair pair_from_json(const nlohmann::json& j);

nlohmann::json to_json(const encoding::Sample& sample);
encoding::Sample sample_from_json(const nlohmann::json& j);

nlohmann::json to_json(const inference::Prediction& prediction, const std::string& input_id);

struct PredictionRecord {
  std::string input_id;
  std::vector<inference::Hypothesis> hypotheses;
  std::vector<Lexemes> candidates;  // in rank order
};
PredictionRecord prediction_from_json(const nlohmann::json& j);

/// One JSON value per non-blank line.
std::vector<nlohmann::json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& records);

/// Reads and converts every line, wrapping conversion failures in DataError.
template <class T, class F>
std::vector<T> read_records(const std::string& path, F&& convert) {
  const auto lines = read_jsonl(path);
  std::vector<T> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(convert(lines[i]));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path, i + 1, e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(path, i + 1, e.what());
    }
  }
  return out;
}

}  // namespace vrepair::io
