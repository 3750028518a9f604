#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vrepair/ctok.hpp"
#include "vrepair/localization.hpp"
#include "vrepair/mining.hpp"

namespace vrepair::encoding {

inline constexpr const char* kStartLoc = "<StartLoc>";
inline constexpr const char* kEndLoc = "<EndLoc>";
inline constexpr const char* kMask = "<MASK>";
inline constexpr const char* kGenericCwe = "CWE-000";

class LocalizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleMeta {
  std::string id;
  std::string cve;
  std::string cwe;
  std::string date;
  std::string split;

  bool operator==(const SampleMeta&) const = default;
};

/// One model instance: `input` is the CWE token followed by the localized
/// function, `target` the serialized token context diff. `fixed` carries the
/// gold patched function for end-to-end scoring when it is known.
struct Sample {
  std::string cwe_token;
  Lexemes input;
  Lexemes target;
  Lexemes fixed;
  SampleMeta meta;

  bool operator==(const Sample&) const = default;
};

/// Lines of `before` touched by the LCS edit script to `after`, ascending.
/// A pure insertion counts against the line of the token it precedes (or the
/// last token when appending).
std::vector<int> changed_lines(const ctok::TokenStream& before, const ctok::TokenStream& after);

/// Flattens `before` behind the CWE token and inserts localization markers.
/// `lines` are the changed lines (ascending); first_line uses lines.front().
/// Throws LocalizationError if a line to mark has no tokens.
Lexemes build_input(const ctok::TokenStream& before, const std::vector<int>& lines, const std::string& cwe_token,
                    LocalizationMode mode);

/// Length build_input would produce, without building it.
std::size_t encoded_input_length(const ctok::TokenStream& before, const std::vector<int>& lines,
                                 LocalizationMode mode);

/// Drops the CWE token and localization markers from an encoded input.
Lexemes strip_input(const Lexemes& input);

/// "CWE-119" for a kept id (bare "119" is accepted too), otherwise CWE-000.
std::string assign_cwe_token(const std::string& cwe_id, const std::set<std::string>& kept);

std::string normalize_cwe(const std::string& cwe_id);

/// Smallest most-frequent-first prefix of CWE ids covering `coverage` of the
/// CWE-labelled entries. Ties break on the numeric id, ascending. Empty and
/// generic labels are ignored.
std::set<std::string> build_cwe_kept_set(const std::vector<std::string>& cwe_ids, double coverage = 0.8);

struct EncodeOptions {
  int context_size = 3;
  LocalizationMode mode = LocalizationMode::kFirstLine;
};

/// Builds one Sample from a function pair; CWE-000 unless the pair's CWE is
/// kept. Throws std::invalid_argument when the pair has no change.
Sample encode_pair(const mining::FunctionPair& pair, const std::set<std::string>& kept_cwes,
                   const EncodeOptions& options);

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  /// Special lexemes with fixed ids, in id order.
  static const std::vector<std::string>& reserved();

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> lexemes);

  std::size_t size() const { return lexemes_.size(); }
  bool contains(const std::string& lexeme) const { return index_.count(lexeme) != 0; }
  /// -1 when absent.
  int find(const std::string& lexeme) const;
  int id_or_unk(const std::string& lexeme) const;
  const std::string& lexeme(int id) const { return lexemes_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& lexemes() const { return lexemes_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return lexemes_ == other.lexemes_; }

 private:
  std::vector<std::string> lexemes_;
  std::unordered_map<std::string, int> index_;
};

/// Reserved lexemes, then `cwe_tokens` (CWE-000 is always included), then the
/// most frequent corpus lexemes (ties by lexeme) until `size_budget` entries.
/// Reserved and CWE entries are kept even if they alone exceed the budget.
Vocabulary build_vocab(const std::vector<Lexemes>& corpus, std::size_t size_budget = 5000,
                       const std::set<std::string>& cwe_tokens = {});

struct NoiseConfig {
  double mask_ratio = 0.15;
  double delete_ratio = 0.10;
  double infill_lambda = 3.0;
  int infill_spans = 1;
};

struct NoisedTokens {
  ctok::TokenStream noised;
  ctok::TokenStream original;
};

std::size_t sample_infill_length(double lambda, std::mt19937_64& rng);

/// Infilling first (each span of Poisson(lambda) tokens collapses into one
/// <MASK>), then per-token masking and deletion. Bit-identical for equal seeds.
NoisedTokens make_noise(const ctok::TokenStream& tokens, const NoiseConfig& config, std::uint64_t seed);

/// Denoising sample: CWE-000 input over the noised function, target the diff
/// back to the original. Returns false when the noise left the function
/// unchanged.
bool encode_noised(const NoisedTokens& noised, const EncodeOptions& options, Sample& out);

}  // namespace vrepair::encoding
