#include "vrepair/diffcodec.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace vrepair::diffcodec {

namespace {

bool is_marker(const std::string& lexeme) { return lexeme == kModStart || lexeme == kModEnd; }

// The source as seen by context matching: n <BOF> sentinels, the tokens,
// then n <EOF> sentinels. Real tokens occupy [n, n + size).
class PaddedSource {
 public:
  PaddedSource(const Lexemes& src, int n) : src_(src), n_(static_cast<std::size_t>(n)) {}

  std::size_t n() const { return n_; }
  std::size_t real_end() const { return n_ + src_.size(); }

  const std::string& at(std::size_t p) const {
    static const std::string bof = kBeginOfFunction;
    static const std::string eof = kEndOfFunction;
    if (p < n_) return bof;
    if (p >= real_end()) return eof;
    return src_[p - n_];
  }

  bool matches(std::size_t p, const Lexemes& ctx) const {
    for (std::size_t k = 0; k < ctx.size(); ++k) {
      if (at(p + k) != ctx[k]) return false;
    }
    return true;
  }

  // Start positions p >= from whose insertion point p + n is inside the function.
  std::vector<std::size_t> start_matches(const Lexemes& ctx, std::size_t from) const {
    std::vector<std::size_t> out;
    for (std::size_t p = from; p <= src_.size(); ++p) {
      if (matches(p, ctx)) out.push_back(p);
    }
    return out;
  }

  // End-context positions q >= from; the removed span [from, q) must stay real.
  std::vector<std::size_t> end_matches(const Lexemes& ctx, std::size_t from) const {
    std::vector<std::size_t> out;
    for (std::size_t q = from; q <= real_end(); ++q) {
      if (matches(q, ctx)) out.push_back(q);
    }
    return out;
  }

 private:
  const Lexemes& src_;
  std::size_t n_;
};

void check_context_sizes(const TokenContextDiff& diff) {
  if (diff.context_size < 1) throw std::invalid_argument("context size must be positive");
  const auto n = static_cast<std::size_t>(diff.context_size);
  for (const auto& op : diff.ops) {
    if (op.start_ctx.size() != n || (op.end_ctx && op.end_ctx->size() != n)) {
      throw std::invalid_argument("diff context does not match its context size");
    }
  }
}

class Enumerator {
 public:
  Enumerator(const Lexemes& src, const TokenContextDiff& diff, std::size_t cap)
      : src_(src, diff.context_size), diff_(diff), cap_(cap) {}

  std::vector<Lexemes> run() {
    if (cap_ > 0) visit(0, 0);
    return std::move(results_);
  }

 private:
  bool full() const { return results_.size() >= cap_; }

  void visit(std::size_t op_index, std::size_t cur) {
    if (full()) return;
    if (op_index == diff_.ops.size()) {
      emit();
      return;
    }
    const ChangeOp& op = diff_.ops[op_index];
    const std::size_t n = src_.n();
    for (std::size_t p : src_.start_matches(op.start_ctx, cur)) {
      const std::size_t insert_at = p + n;
      if (!op.end_ctx) {
        placements_.push_back({insert_at, insert_at});
        visit(op_index + 1, insert_at);
        placements_.pop_back();
      } else {
        for (std::size_t q : src_.end_matches(*op.end_ctx, insert_at)) {
          placements_.push_back({insert_at, q});
          visit(op_index + 1, q);
          placements_.pop_back();
          if (full()) return;
        }
      }
      if (full()) return;
    }
  }

  void emit() {
    Lexemes out;
    std::size_t copy_from = src_.n();
    for (std::size_t k = 0; k < placements_.size(); ++k) {
      const auto [insert_at, resume_at] = placements_[k];
      for (std::size_t p = copy_from; p < insert_at; ++p) out.push_back(src_.at(p));
      const auto& ins = diff_.ops[k].insertion;
      out.insert(out.end(), ins.begin(), ins.end());
      copy_from = resume_at;
    }
    for (std::size_t p = copy_from; p < src_.real_end(); ++p) out.push_back(src_.at(p));
    if (seen_.insert(out).second) results_.push_back(std::move(out));
  }

  PaddedSource src_;
  const TokenContextDiff& diff_;
  std::size_t cap_;
  std::vector<std::pair<std::size_t, std::size_t>> placements_;
  std::set<Lexemes> seen_;
  std::vector<Lexemes> results_;
};

// Target-directed search with memoised dead states (op, cursor, output offset).
class MembershipSearch {
 public:
  MembershipSearch(const Lexemes& src, const TokenContextDiff& diff, const Lexemes& tgt)
      : src_(src, diff.context_size), diff_(diff), tgt_(tgt) {}

  bool run() { return visit(0, 0, 0); }

 private:
  // Appends src_[from, to) at tgt offset `out`; returns the new offset or npos.
  std::size_t copy(std::size_t from, std::size_t to, std::size_t out) const {
    for (std::size_t p = from; p < to; ++p, ++out) {
      if (out >= tgt_.size() || tgt_[out] != src_.at(p)) return std::string::npos;
    }
    return out;
  }

  std::size_t insert(const Lexemes& ins, std::size_t out) const {
    for (const auto& tok : ins) {
      if (out >= tgt_.size() || tgt_[out] != tok) return std::string::npos;
      ++out;
    }
    return out;
  }

  bool visit(std::size_t op_index, std::size_t cur, std::size_t out) {
    const std::size_t copy_from = std::max(cur, src_.n());
    if (op_index == diff_.ops.size()) {
      const std::size_t end = copy(copy_from, src_.real_end(), out);
      return end == tgt_.size();
    }
    const std::size_t key = (op_index * (src_.real_end() + src_.n() + 1) + cur) * (tgt_.size() + 1) + out;
    if (dead_.count(key)) return false;

    const ChangeOp& op = diff_.ops[op_index];
    for (std::size_t p : src_.start_matches(op.start_ctx, cur)) {
      const std::size_t insert_at = p + src_.n();
      std::size_t o = copy(copy_from, insert_at, out);
      if (o == std::string::npos) continue;
      o = insert(op.insertion, o);
      if (o == std::string::npos) continue;
      if (!op.end_ctx) {
        if (visit(op_index + 1, insert_at, o)) return true;
      } else {
        for (std::size_t q : src_.end_matches(*op.end_ctx, insert_at)) {
          if (visit(op_index + 1, q, o)) return true;
        }
      }
    }
    dead_.insert(key);
    return false;
  }

  PaddedSource src_;
  const TokenContextDiff& diff_;
  const Lexemes& tgt_;
  std::unordered_set<std::size_t> dead_;
};

}  // namespace

const char* to_string(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::kAdd: return "add";
    case ChangeKind::kDelete: return "delete";
    case ChangeKind::kReplace: return "replace";
  }
  return "unknown";
}

Lexemes serialize_diff(const TokenContextDiff& diff) {
  Lexemes out;
  for (const auto& op : diff.ops) {
    out.emplace_back(kModStart);
    out.insert(out.end(), op.start_ctx.begin(), op.start_ctx.end());
    out.insert(out.end(), op.insertion.begin(), op.insertion.end());
    if (op.end_ctx) {
      out.emplace_back(kModEnd);
      out.insert(out.end(), op.end_ctx->begin(), op.end_ctx->end());
    }
  }
  return out;
}

TokenContextDiff parse_diff(const Lexemes& tokens, int context_size) {
  if (context_size < 1) throw std::invalid_argument("context size must be positive");
  const auto n = static_cast<std::size_t>(context_size);
  TokenContextDiff diff;
  diff.context_size = context_size;

  auto read_context = [&](std::size_t& i, const char* which) {
    Lexemes ctx;
    while (ctx.size() < n) {
      if (i >= tokens.size() || is_marker(tokens[i])) {
        throw MalformedDiff(std::string(which) + " context shorter than " + std::to_string(n) + " tokens");
      }
      ctx.push_back(tokens[i++]);
    }
    return ctx;
  };

  std::size_t i = 0;
  while (i < tokens.size()) {
    if (tokens[i] != kModStart) {
      throw MalformedDiff("expected " + std::string(kModStart) + " at token " + std::to_string(i) + ", got '" +
                          tokens[i] + "'");
    }
    ++i;
    ChangeOp op;
    op.start_ctx = read_context(i, "start");
    while (i < tokens.size() && !is_marker(tokens[i])) op.insertion.push_back(tokens[i++]);
    if (i < tokens.size() && tokens[i] == kModEnd) {
      ++i;
      op.end_ctx = read_context(i, "end");
      op.kind = op.insertion.empty() ? ChangeKind::kDelete : ChangeKind::kReplace;
      if (i < tokens.size() && tokens[i] != kModStart) {
        throw MalformedDiff("stray token '" + tokens[i] + "' after end context");
      }
    } else {
      if (op.insertion.empty()) throw MalformedDiff("add change with empty insertion");
      op.kind = ChangeKind::kAdd;
    }
    diff.ops.push_back(std::move(op));
  }
  return diff;
}

std::vector<Hunk> lcs_hunks(const Lexemes& src, const Lexemes& tgt) {
  // Common prefix/suffix never take part in a hunk; trim them before the DP.
  std::size_t pre = 0;
  while (pre < src.size() && pre < tgt.size() && src[pre] == tgt[pre]) ++pre;
  std::size_t suf = 0;
  while (suf < src.size() - pre && suf < tgt.size() - pre &&
         src[src.size() - 1 - suf] == tgt[tgt.size() - 1 - suf]) {
    ++suf;
  }
  const std::size_t rows = src.size() - pre - suf;
  const std::size_t cols = tgt.size() - pre - suf;

  // suffix LCS lengths: table[i][j] = LCS(src[pre+i..], tgt[pre+j..]) within the trimmed window
  std::vector<std::uint32_t> table((rows + 1) * (cols + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return table[i * (cols + 1) + j]; };
  for (std::size_t i = rows; i-- > 0;) {
    for (std::size_t j = cols; j-- > 0;) {
      at(i, j) = src[pre + i] == tgt[pre + j] ? at(i + 1, j + 1) + 1 : std::max(at(i + 1, j), at(i, j + 1));
    }
  }

  std::vector<Hunk> hunks;
  std::size_t i = 0, j = 0;
  while (i < rows || j < cols) {
    if (i < rows && j < cols && src[pre + i] == tgt[pre + j]) {
      ++i;
      ++j;
      continue;
    }
    Hunk h{pre + i, pre + i, pre + j, pre + j};
    while ((i < rows || j < cols) && !(i < rows && j < cols && src[pre + i] == tgt[pre + j])) {
      if (i < rows && (j >= cols || at(i + 1, j) >= at(i, j + 1))) {
        ++i;
      } else {
        ++j;
      }
    }
    h.src_end = pre + i;
    h.tgt_end = pre + j;
    hunks.push_back(h);
  }
  return hunks;
}

TokenContextDiff extract_diff(const Lexemes& src, const Lexemes& tgt, int context_size) {
  if (context_size < 1) throw std::invalid_argument("context size must be positive");
  const auto n = static_cast<std::size_t>(context_size);
  TokenContextDiff diff;
  diff.context_size = context_size;

  std::vector<Hunk> merged;
  for (const Hunk& h : lcs_hunks(src, tgt)) {
    if (!merged.empty() && h.src_begin - merged.back().src_end < n) {
      merged.back().src_end = h.src_end;
      merged.back().tgt_end = h.tgt_end;
    } else {
      merged.push_back(h);
    }
  }

  const PaddedSource padded(src, context_size);
  for (const Hunk& h : merged) {
    ChangeOp op;
    for (std::size_t k = 0; k < n; ++k) op.start_ctx.push_back(padded.at(h.src_begin + k));
    op.insertion.assign(tgt.begin() + static_cast<std::ptrdiff_t>(h.tgt_begin),
                        tgt.begin() + static_cast<std::ptrdiff_t>(h.tgt_end));
    if (h.src_begin == h.src_end) {
      op.kind = ChangeKind::kAdd;
    } else {
      Lexemes end;
      for (std::size_t k = 0; k < n; ++k) end.push_back(padded.at(h.src_end + n + k));
      op.end_ctx = std::move(end);
      op.kind = op.insertion.empty() ? ChangeKind::kDelete : ChangeKind::kReplace;
    }
    diff.ops.push_back(std::move(op));
  }
  return diff;
}

TokenContextDiff extract_diff(const ctok::TokenStream& src, const ctok::TokenStream& tgt, int context_size) {
  return extract_diff(src.lexemes(), tgt.lexemes(), context_size);
}

std::vector<Lexemes> enumerate_applications(const Lexemes& src, const TokenContextDiff& diff, std::size_t cap) {
  check_context_sizes(diff);
  if (diff.ops.empty()) return cap == 0 ? std::vector<Lexemes>{} : std::vector<Lexemes>{src};
  auto out = Enumerator(src, diff, cap).run();
  if (out.empty() && cap > 0) throw NoInterpretation("diff contexts cannot be placed in the function");
  return out;
}

std::size_t count_interpretations(const Lexemes& src, const TokenContextDiff& diff) {
  check_context_sizes(diff);
  if (diff.ops.empty()) return 1;
  return Enumerator(src, diff, kUnbounded).run().size();
}

bool has_interpretation(const Lexemes& src, const TokenContextDiff& diff, const Lexemes& tgt) {
  check_context_sizes(diff);
  return MembershipSearch(src, diff, tgt).run();
}

}  // namespace vrepair::diffcodec
