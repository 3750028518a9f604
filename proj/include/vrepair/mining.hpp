#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vrepair/ctok.hpp"
#include "vrepair/localization.hpp"

namespace vrepair::mining {

struct FileChange {
  std::string path;
  std::string before;
  std::string after;
};

struct VulnMeta {
  std::string cwe_id;
  std::string cve_id;
  std::string date;  // ISO-8601, YYYY-MM-DD

  bool operator==(const VulnMeta&) const = default;
};

struct CommitRecord {
  std::string message;
  std::vector<FileChange> files;
  std::optional<VulnMeta> meta;
};

/// One changed function: identical signature, lexeme-different body.
struct FunctionPair {
  Lexemes signature;
  ctok::TokenStream before;
  ctok::TokenStream after;
  std::optional<VulnMeta> meta;
};

struct Keywords {
  std::vector<std::string> action = {"fix", "solve", "repair"};
  std::vector<std::string> subject = {"bug", "issue", "problem", "error", "fault", "vulnerability"};
};

/// Whole-word, case-insensitive: some action keyword AND some subject keyword.
bool is_bugfix_message(const std::string& message, const Keywords& keywords = {});

/// Function definitions found in one version of a file, in file order.
struct FunctionDef {
  Lexemes signature;
  ctok::TokenStream tokens;  // signature + body
};
std::vector<FunctionDef> find_functions(const ctok::TokenStream& file);

/// Changed functions between two versions of a `.c` file. Functions present in
/// only one version are ignored. A file that fails to lex yields no pairs and a
/// warning on stderr.
std::vector<FunctionPair> extract_function_pairs(const std::string& before_text, const std::string& after_text);

/// Keeps the first pair for each (before lexemes, serialized n=3 diff) key.
std::vector<FunctionPair> dedup(const std::vector<FunctionPair>& pairs);

struct LengthLimits {
  std::size_t max_input = 1000;
  std::size_t max_output = 100;
  int context_size = 3;
  LocalizationMode mode = LocalizationMode::kFirstLine;
};

/// Drops pairs whose encoded input (CWE token, localization markers and
/// function tokens) exceeds max_input, or whose serialized diff exceeds
/// max_output.
std::vector<FunctionPair> filter_lengths(const std::vector<FunctionPair>& pairs, const LengthLimits& limits = {});

struct MineStats {
  std::size_t commits = 0;
  std::size_t bugfix_commits = 0;
  std::size_t c_commits = 0;
  std::size_t function_pairs = 0;
  std::size_t after_dedup = 0;
  std::size_t after_length_filter = 0;
};

/// The whole source-domain mining stage over commit records. Commits are
/// processed independently and merged in input order.
std::vector<FunctionPair> mine(const std::vector<CommitRecord>& commits, const Keywords& keywords,
                               const LengthLimits& limits, MineStats* stats = nullptr);

}  // namespace vrepair::mining
