#include "vrepair/mining.hpp"

#include <cctype>
#include <deque>
#include <iostream>
#include <map>
#include <set>

#include "parallel.hpp"
#include "vrepair/diffcodec.hpp"
#include "vrepair/encoding.hpp"

namespace vrepair::mining {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Words in the \b...\b sense: maximal runs of [A-Za-z0-9_].
std::set<std::string> words_of(const std::string& text) {
  std::set<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.insert(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(std::move(cur));
  return out;
}

bool any_of_words(const std::set<std::string>& words, const std::vector<std::string>& keys) {
  for (const auto& k : keys) {
    if (words.count(lower(k))) return true;
  }
  return false;
}

bool is_pp(const ctok::Token& t) { return t.kind == ctok::TokenKind::kPreprocessor; }

// Index of the brace closing the one at `open`, or npos.
std::size_t match_brace(const std::vector<ctok::Token>& toks, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < toks.size(); ++i) {
    if (is_pp(toks[i])) continue;
    if (toks[i].text == "{") ++depth;
    if (toks[i].text == "}" && --depth == 0) return i;
  }
  return std::string::npos;
}

// If toks[begin, brace) reads like `... name ( params )`, the index of `)`.
std::size_t signature_end(const std::vector<ctok::Token>& toks, std::size_t begin, std::size_t brace) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < brace; ++i) {
    if (!is_pp(toks[i])) idx.push_back(i);
  }
  if (idx.size() < 3 || toks[idx.back()].text != ")") return std::string::npos;
  int depth = 0;
  std::size_t k = idx.size();
  while (k-- > 0) {
    const auto& text = toks[idx[k]].text;
    if (text == ")") ++depth;
    if (text == "(" && --depth == 0) break;
  }
  if (k == 0 || k == static_cast<std::size_t>(-1)) return std::string::npos;
  const auto& name = toks[idx[k - 1]];
  if (name.kind != ctok::TokenKind::kIdentifier) return std::string::npos;
  int paren = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& text = toks[idx[j]].text;
    if (text == "(") ++paren;
    if (text == ")") --paren;
    if (paren == 0 && text == "=") return std::string::npos;
  }
  return idx.back();
}

}  // namespace

bool is_bugfix_message(const std::string& message, const Keywords& keywords) {
  const auto words = words_of(message);
  return any_of_words(words, keywords.action) && any_of_words(words, keywords.subject);
}

std::vector<FunctionDef> find_functions(const ctok::TokenStream& file) {
  const auto& toks = file.tokens;
  std::vector<FunctionDef> out;
  std::size_t decl_start = 0;
  std::size_t i = 0;
  while (i < toks.size()) {
    const auto& t = toks[i];
    if (is_pp(t)) {
      decl_start = i + 1;
      ++i;
      continue;
    }
    if (t.text == ";" || t.text == "}") {
      decl_start = i + 1;
      ++i;
      continue;
    }
    if (t.text != "{") {
      ++i;
      continue;
    }
    const std::size_t close = match_brace(toks, i);
    if (close == std::string::npos) break;
    const std::size_t sig_end = signature_end(toks, decl_start, i);
    if (sig_end != std::string::npos) {
      FunctionDef def;
      for (std::size_t j = decl_start; j <= sig_end; ++j) {
        if (!is_pp(toks[j])) def.signature.push_back(toks[j].text);
      }
      for (std::size_t j = decl_start; j <= close; ++j) {
        if (j < i && is_pp(toks[j])) continue;
        def.tokens.tokens.push_back(toks[j]);
      }
      out.push_back(std::move(def));
      decl_start = close + 1;
    }
    i = close + 1;
  }
  return out;
}

std::vector<FunctionPair> extract_function_pairs(const std::string& before_text, const std::string& after_text) {
  std::vector<FunctionDef> before, after;
  try {
    before = find_functions(ctok::tokenize(before_text));
    after = find_functions(ctok::tokenize(after_text));
  } catch (const ctok::LexError& e) {
    std::cerr << "warning: skipping file: " << e.what() << "\n";
    return {};
  }

  std::map<Lexemes, std::deque<const FunctionDef*>> by_signature;
  for (const auto& f : after) by_signature[f.signature].push_back(&f);

  std::vector<FunctionPair> out;
  for (const auto& f : before) {
    auto it = by_signature.find(f.signature);
    if (it == by_signature.end() || it->second.empty()) continue;
    const FunctionDef* match = it->second.front();
    it->second.pop_front();
    if (f.tokens.lexemes() == match->tokens.lexemes()) continue;
    out.push_back(FunctionPair{f.signature, f.tokens, match->tokens, std::nullopt});
  }
  return out;
}

std::vector<FunctionPair> dedup(const std::vector<FunctionPair>& pairs) {
  std::set<std::pair<Lexemes, Lexemes>> seen;
  std::vector<FunctionPair> out;
  for (const auto& p : pairs) {
    auto before = p.before.lexemes();
    auto diff = diffcodec::serialize_diff(diffcodec::extract_diff(before, p.after.lexemes(), 3));
    if (seen.emplace(std::move(before), std::move(diff)).second) out.push_back(p);
  }
  return out;
}

std::vector<FunctionPair> filter_lengths(const std::vector<FunctionPair>& pairs, const LengthLimits& limits) {
  std::vector<FunctionPair> out;
  for (const auto& p : pairs) {
    const auto lines = encoding::changed_lines(p.before, p.after);
    if (encoding::encoded_input_length(p.before, lines, limits.mode) > limits.max_input) continue;
    const auto diff = diffcodec::extract_diff(p.before, p.after, limits.context_size);
    if (diffcodec::serialize_diff(diff).size() > limits.max_output) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<FunctionPair> mine(const std::vector<CommitRecord>& commits, const Keywords& keywords,
                               const LengthLimits& limits, MineStats* stats) {
  MineStats local;
  local.commits = commits.size();
  std::vector<std::vector<FunctionPair>> per_commit(commits.size());
  std::vector<char> is_fix(commits.size(), 0), has_c(commits.size(), 0);

  detail::parallel_for(commits.size(), [&](std::size_t k) {
    const auto& c = commits[k];
    if (!is_bugfix_message(c.message, keywords)) return;
    is_fix[k] = 1;
    for (const auto& f : c.files) {
      if (f.path.size() < 2 || f.path.compare(f.path.size() - 2, 2, ".c") != 0) continue;
      has_c[k] = 1;
      for (auto& pair : extract_function_pairs(f.before, f.after)) {
        pair.meta = c.meta;
        per_commit[k].push_back(std::move(pair));
      }
    }
  });

  std::vector<FunctionPair> all;
  for (std::size_t k = 0; k < commits.size(); ++k) {
    local.bugfix_commits += is_fix[k];
    local.c_commits += has_c[k];
    for (auto& p : per_commit[k]) all.push_back(std::move(p));
  }
  local.function_pairs = all.size();
  auto unique = dedup(all);
  local.after_dedup = unique.size();
  auto kept = filter_lengths(unique, limits);
  local.after_length_filter = kept.size();
  if (stats) *stats = local;
  return kept;
}

}  // namespace vrepair::mining
