#include "vrepair/encoding.hpp"

#include <algorithm>
#include <fstream>
#include <string_view>

#include "vrepair/diffcodec.hpp"

namespace vrepair {

const char* to_string(LocalizationMode mode) {
  switch (mode) {
    case LocalizationMode::kFirstLine: return "first_line";
    case LocalizationMode::kNone: return "none";
    case LocalizationMode::kAllLines: return "all_lines";
    case LocalizationMode::kSingleBlock: return "single_block";
  }
  return "unknown";
}

std::optional<LocalizationMode> parse_localization_mode(std::string_view name) {
  for (auto m : {LocalizationMode::kFirstLine, LocalizationMode::kNone, LocalizationMode::kAllLines,
                 LocalizationMode::kSingleBlock}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

namespace encoding {

namespace {

// [first, last] token index range of each marked region.
std::vector<std::pair<std::size_t, std::size_t>> marked_spans(const ctok::TokenStream& before,
                                                              const std::vector<int>& lines,
                                                              LocalizationMode mode) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (mode == LocalizationMode::kNone) return spans;
  if (lines.empty()) throw LocalizationError("no line to localize");

  auto span_of = [&](int lo, int hi) {
    std::size_t first = std::string::npos, last = 0;
    for (std::size_t i = 0; i < before.tokens.size(); ++i) {
      const int l = before.tokens[i].line;
      if (l < lo || l > hi) continue;
      if (first == std::string::npos) first = i;
      last = i;
    }
    if (first == std::string::npos) {
      throw LocalizationError("line " + std::to_string(lo) + " is not part of the function");
    }
    return std::make_pair(first, last);
  };

  const int lo = *std::min_element(lines.begin(), lines.end());
  const int hi = *std::max_element(lines.begin(), lines.end());
  switch (mode) {
    case LocalizationMode::kFirstLine: spans.push_back(span_of(lo, lo)); break;
    case LocalizationMode::kSingleBlock: spans.push_back(span_of(lo, hi)); break;
    case LocalizationMode::kAllLines: {
      std::vector<int> sorted(lines);
      std::sort(sorted.begin(), sorted.end());
      sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
      for (int l : sorted) spans.push_back(span_of(l, l));
      break;
    }
    case LocalizationMode::kNone: break;
  }
  return spans;
}

int cwe_number(const std::string& id) {
  const auto pos = id.find_first_of("0123456789");
  if (pos == std::string::npos) return -1;
  try {
    return std::stoi(id.substr(pos));
  } catch (...) {
    return -1;
  }
}

}  // namespace

std::vector<int> changed_lines(const ctok::TokenStream& before, const ctok::TokenStream& after) {
  const auto& toks = before.tokens;
  std::vector<int> out;
  for (const auto& h : diffcodec::lcs_hunks(before.lexemes(), after.lexemes())) {
    if (h.src_begin < h.src_end) {
      for (std::size_t i = h.src_begin; i < h.src_end; ++i) out.push_back(toks[i].line);
    } else if (!toks.empty()) {
      out.push_back(toks[std::min(h.src_begin, toks.size() - 1)].line);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Lexemes build_input(const ctok::TokenStream& before, const std::vector<int>& lines, const std::string& cwe_token,
                    LocalizationMode mode) {
  const auto spans = marked_spans(before, lines, mode);
  Lexemes out;
  out.reserve(before.size() + 1 + 2 * spans.size());
  out.push_back(cwe_token);
  std::size_t s = 0;
  for (std::size_t i = 0; i < before.tokens.size(); ++i) {
    if (s < spans.size() && spans[s].first == i) out.emplace_back(kStartLoc);
    out.push_back(before.tokens[i].text);
    if (s < spans.size() && spans[s].second == i) {
      out.emplace_back(kEndLoc);
      ++s;
    }
  }
  return out;
}

std::size_t encoded_input_length(const ctok::TokenStream& before, const std::vector<int>& lines,
                                 LocalizationMode mode) {
  return 1 + before.size() + 2 * marked_spans(before, lines, mode).size();
}

Lexemes strip_input(const Lexemes& input) {
  Lexemes out;
  for (std::size_t i = 1; i < input.size(); ++i) {
    if (input[i] == kStartLoc || input[i] == kEndLoc) continue;
    out.push_back(input[i]);
  }
  return out;
}

std::string normalize_cwe(const std::string& cwe_id) {
  if (cwe_id.empty()) return {};
  if (cwe_id.rfind("CWE-", 0) == 0) return cwe_id;
  if (std::all_of(cwe_id.begin(), cwe_id.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return "CWE-" + cwe_id;
  }
  return cwe_id;
}

std::string assign_cwe_token(const std::string& cwe_id, const std::set<std::string>& kept) {
  const auto norm = normalize_cwe(cwe_id);
  return kept.count(norm) ? norm : std::string(kGenericCwe);
}

std::set<std::string> build_cwe_kept_set(const std::vector<std::string>& cwe_ids, double coverage) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& raw : cwe_ids) {
    const auto id = normalize_cwe(raw);
    if (id.empty() || id == kGenericCwe) continue;
    ++counts[id];
    ++total;
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    const int na = cwe_number(a.first), nb = cwe_number(b.first);
    if (na != nb) return na < nb;
    return a.first < b.first;
  });
  std::set<std::string> kept;
  std::size_t cumulative = 0;
  for (const auto& [id, count] : ranked) {
    if (static_cast<double>(cumulative) >= coverage * static_cast<double>(total) - 1e-9) break;
    kept.insert(id);
    cumulative += count;
  }
  return kept;
}

Sample encode_pair(const mining::FunctionPair& pair, const std::set<std::string>& kept_cwes,
                   const EncodeOptions& options) {
  const auto before = pair.before.lexemes();
  const auto after = pair.after.lexemes();
  if (before == after) throw std::invalid_argument("function pair has no change");
  Sample s;
  s.cwe_token = pair.meta ? assign_cwe_token(pair.meta->cwe_id, kept_cwes) : std::string(kGenericCwe);
  s.input = build_input(pair.before, changed_lines(pair.before, pair.after), s.cwe_token, options.mode);
  s.target = diffcodec::serialize_diff(diffcodec::extract_diff(before, after, options.context_size));
  s.fixed = after;
  if (pair.meta) {
    s.meta.cve = pair.meta->cve_id;
    s.meta.cwe = normalize_cwe(pair.meta->cwe_id);
    s.meta.date = pair.meta->date;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Vocabulary

const std::vector<std::string>& Vocabulary::reserved() {
  static const std::vector<std::string> kReserved = {
      "<unk>",    "<pad>",      "<s>",       "</s>",  "<ModStart>", "<ModEnd>",
      kStartLoc,  kEndLoc,      diffcodec::kBeginOfFunction, diffcodec::kEndOfFunction, kMask,
  };
  return kReserved;
}

Vocabulary::Vocabulary() : Vocabulary(reserved()) {}

Vocabulary::Vocabulary(std::vector<std::string> lexemes) : lexemes_(std::move(lexemes)) {
  const auto& res = reserved();
  if (lexemes_.size() < res.size() || !std::equal(res.begin(), res.end(), lexemes_.begin())) {
    throw std::invalid_argument("vocabulary does not start with the reserved lexemes");
  }
  for (std::size_t i = 0; i < lexemes_.size(); ++i) {
    if (!index_.emplace(lexemes_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary entry '" + lexemes_[i] + "'");
    }
  }
}

int Vocabulary::find(const std::string& lexeme) const {
  auto it = index_.find(lexeme);
  return it == index_.end() ? -1 : it->second;
}

int Vocabulary::id_or_unk(const std::string& lexeme) const {
  const int id = find(lexeme);
  return id < 0 ? kUnk : id;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path);
  for (const auto& l : lexemes_) out << l << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary " + path);
  std::vector<std::string> lexemes;
  std::string line;
  while (std::getline(in, line)) lexemes.push_back(line);
  return Vocabulary(std::move(lexemes));
}

Vocabulary build_vocab(const std::vector<Lexemes>& corpus, std::size_t size_budget,
                       const std::set<std::string>& cwe_tokens) {
  std::vector<std::string> lexemes = Vocabulary::reserved();
  std::set<std::string> taken(lexemes.begin(), lexemes.end());
  std::set<std::string> cwes(cwe_tokens);
  cwes.insert(kGenericCwe);
  for (const auto& c : cwes) {
    if (taken.insert(c).second) lexemes.push_back(c);
  }

  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& seq : corpus) {
    for (const auto& l : seq) {
      if (!taken.count(l)) ++freq[l];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (const auto& [lexeme, count] : ranked) {
    if (lexemes.size() >= size_budget) break;
    lexemes.push_back(lexeme);
  }
  return Vocabulary(std::move(lexemes));
}

// ---------------------------------------------------------------------------
// Denoising noise

std::size_t sample_infill_length(double lambda, std::mt19937_64& rng) {
  std::poisson_distribution<std::size_t> poisson(lambda);
  return poisson(rng);
}

NoisedTokens make_noise(const ctok::TokenStream& tokens, const NoiseConfig& config, std::uint64_t seed) {
  if (tokens.empty()) throw std::invalid_argument("cannot noise an empty token stream");
  std::mt19937_64 rng(seed);
  std::vector<ctok::Token> work = tokens.tokens;

  auto mask_token = [](int line) { return ctok::Token{kMask, ctok::TokenKind::kPunctuator, line}; };

  if (config.infill_lambda > 0) {
    for (int s = 0; s < config.infill_spans && !work.empty(); ++s) {
      const std::size_t len = std::min(sample_infill_length(config.infill_lambda, rng), work.size());
      std::uniform_int_distribution<std::size_t> pick(0, work.size() - len);
      const std::size_t start = pick(rng);
      const int line = start < work.size() ? work[start].line : work.back().line;
      work.erase(work.begin() + static_cast<std::ptrdiff_t>(start),
                 work.begin() + static_cast<std::ptrdiff_t>(start + len));
      work.insert(work.begin() + static_cast<std::ptrdiff_t>(start), mask_token(line));
    }
  }

  std::vector<ctok::Token> noised;
  noised.reserve(work.size());
  if (config.mask_ratio > 0 || config.delete_ratio > 0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& t : work) {
      if (t.text == kMask) {
        noised.push_back(std::move(t));
        continue;
      }
      const double u = unit(rng);
      if (u < config.mask_ratio) {
        noised.push_back(mask_token(t.line));
      } else if (u >= config.mask_ratio + config.delete_ratio) {
        noised.push_back(std::move(t));
      }
    }
  } else {
    noised = std::move(work);
  }
  return NoisedTokens{ctok::TokenStream{std::move(noised)}, tokens};
}

bool encode_noised(const NoisedTokens& noised, const EncodeOptions& options, Sample& out) {
  const auto src = noised.noised.lexemes();
  const auto tgt = noised.original.lexemes();
  if (src == tgt || src.empty()) return false;
  out = Sample{};
  out.cwe_token = kGenericCwe;
  out.input = build_input(noised.noised, changed_lines(noised.noised, noised.original), out.cwe_token, options.mode);
  out.target = diffcodec::serialize_diff(diffcodec::extract_diff(src, tgt, options.context_size));
  out.fixed = tgt;
  return true;
}

}  // namespace encoding
}  // namespace vrepair
