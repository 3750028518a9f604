#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrepair/ctok.hpp"

namespace vrepair::diffcodec {

inline constexpr const char* kModStart = "<ModStart>";
inline constexpr const char* kModEnd = "<ModEnd>";
/// Pads contexts that would reach before the first token of the function.
inline constexpr const char* kBeginOfFunction = "<BOF>";
/// Pads end contexts that would reach past the last token of the function.
inline constexpr const char* kEndOfFunction = "<EOF>";

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();
inline constexpr std::size_t kDefaultCap = 50;

enum class ChangeKind { kAdd, kDelete, kReplace };

const char* to_string(ChangeKind kind);

struct ChangeOp {
  ChangeKind kind = ChangeKind::kAdd;
  Lexemes start_ctx;
  std::optional<Lexemes> end_ctx;  // absent for kAdd
  Lexemes insertion;               // empty for kDelete

  bool operator==(const ChangeOp&) const = default;
};

/// An edit script whose changes are located by n-token contexts instead of
/// positions. Ops are ordered by source position and never overlap.
struct TokenContextDiff {
  int context_size = 3;
  std::vector<ChangeOp> ops;

  bool empty() const { return ops.empty(); }
  bool operator==(const TokenContextDiff&) const = default;
};

class MalformedDiff : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoInterpretation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `<ModStart> start_ctx insertion [<ModEnd> end_ctx]` per change, concatenated.
Lexemes serialize_diff(const TokenContextDiff& diff);

/// Inverse of serialize_diff. Throws MalformedDiff unless `tokens` follows the
/// grammar exactly with contexts of `context_size` tokens.
TokenContextDiff parse_diff(const Lexemes& tokens, int context_size);

/// Minimal LCS edit script from `src` to `tgt`. Changes separated by fewer
/// than `context_size` unchanged tokens are merged into one replace.
/// Returns an empty diff when the two sequences are equal.
TokenContextDiff extract_diff(const Lexemes& src, const Lexemes& tgt, int context_size);
TokenContextDiff extract_diff(const ctok::TokenStream& src, const ctok::TokenStream& tgt,
                              int context_size);

/// Every distinct program obtained by matching the diff's contexts in `src`,
/// in leftmost-first order of the match-position tuples, truncated at `cap`.
/// Throws NoInterpretation when no placement exists.
std::vector<Lexemes> enumerate_applications(const Lexemes& src, const TokenContextDiff& diff,
                                            std::size_t cap = kDefaultCap);

/// Number of distinct programs `diff` can produce from `src`; 0 if none.
/// Enumerates them, so the cost grows with the answer.
std::size_t count_interpretations(const Lexemes& src, const TokenContextDiff& diff);

/// True iff `tgt` is one of the programs enumerate_applications(src, diff, ∞)
/// would return. Prunes on the target prefix, so it stays cheap on long,
/// highly ambiguous inputs where full enumeration does not.
bool has_interpretation(const Lexemes& src, const TokenContextDiff& diff, const Lexemes& tgt);

/// A maximal run of differing tokens in an LCS alignment: src[src_begin,
/// src_end) is replaced by tgt[tgt_begin, tgt_end).
struct Hunk {
  std::size_t src_begin, src_end;
  std::size_t tgt_begin, tgt_end;
};

/// Raw LCS hunks, before merging.
std::vector<Hunk> lcs_hunks(const Lexemes& src, const Lexemes& tgt);

}  // namespace vrepair::diffcodec
