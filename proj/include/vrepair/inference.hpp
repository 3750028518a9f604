#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "vrepair/ctok.hpp"
#include "vrepair/localization.hpp"
#include "vrepair/micronet.hpp"

namespace vrepair::inference {

/// Decoding state for one partial output sequence.
class Session {
 public:
  virtual ~Session() = default;
  virtual std::unique_ptr<Session> clone() const = 0;
  /// Log-probability of every symbol at the next position.
  virtual std::vector<double> next_log_probs() const = 0;
  virtual void push(std::size_t symbol) = 0;
};

/// What beam search needs from a model: a symbol set with an end symbol and
/// a way to open a session on the empty prefix.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual std::size_t symbol_count() const = 0;
  virtual std::string lexeme(std::size_t symbol) const = 0;
  virtual std::size_t end_symbol() const = 0;
  virtual std::unique_ptr<Session> start() const = 0;
};

/// micronet over one source sequence; symbols are the extended vocabulary,
/// so copied out-of-vocabulary lexemes resolve to themselves.
class MicronetModel : public SequenceModel {
 public:
  MicronetModel(const micronet::ModelState& state, const Lexemes& input);

  std::size_t symbol_count() const override { return decoder_.extended().size(); }
  std::string lexeme(std::size_t symbol) const override { return decoder_.extended().lexeme(symbol); }
  std::size_t end_symbol() const override { return encoding::Vocabulary::kEos; }
  std::unique_ptr<Session> start() const override;

 private:
  micronet::IncrementalDecoder decoder_;
};

struct Hypothesis {
  Lexemes tokens;  // without the end symbol
  double log_prob = 0.0;
  bool finished = true;  // false when cut off at max_len

  bool operator==(const Hypothesis&) const = default;
};

/// Beam search without length normalisation. Each step keeps the `width` best
/// extensions; those ending in the end symbol leave the beam as finished
/// hypotheses. Search stops once no open hypothesis can beat the width-th
/// finished one. Width 1 is greedy decoding. The result is sorted by
/// descending log_prob and holds at most `width` entries.
std::vector<Hypothesis> neural_beam(const SequenceModel& model, std::size_t width, std::size_t max_len = 100);

/// max_len is clipped to what the model's position table allows.
std::vector<Hypothesis> neural_beam(const micronet::ModelState& state, const Lexemes& input, std::size_t width,
                                    std::size_t max_len = 100);

struct PatchCandidate {
  Lexemes function;
  std::size_t hypothesis_rank = 0;
  std::size_t interpretation_rank = 0;
  double score = 0.0;

  bool operator==(const PatchCandidate&) const = default;
};

/// Hypothesis-major, interpretation-minor product of parsed hypotheses and
/// their applications to `function`. Malformed or inapplicable hypotheses
/// are skipped, identity patches dropped, duplicates keep their first rank.
std::vector<PatchCandidate> combine(const Lexemes& function, const std::vector<Hypothesis>& hypotheses,
                                    int context_size, std::size_t width);

struct Prediction {
  std::vector<Hypothesis> hypotheses;
  std::vector<PatchCandidate> candidates;
};

/// Beam over an already encoded input (CWE token + localized function).
Prediction predict_encoded(const micronet::ModelState& state, const Lexemes& encoded_input, std::size_t width,
                           int context_size = 3, std::size_t max_len = 100);

/// Encodes `function` with `vuln_lines` and `cwe_token`, then predicts.
Prediction vrepair_beam(const micronet::ModelState& state, const ctok::TokenStream& function,
                        const std::vector<int>& vuln_lines, const std::string& cwe_token, std::size_t width = 50,
                        int context_size = 3, LocalizationMode mode = LocalizationMode::kFirstLine);

}  // namespace vrepair::inference
