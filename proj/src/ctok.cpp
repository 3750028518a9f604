#include "vrepair/ctok.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace vrepair::ctok {

namespace {

constexpr std::array<std::string_view, 44> kKeywords = {
    "auto",       "break",     "case",           "char",          "const",
    "continue",   "default",   "do",             "double",        "else",
    "enum",       "extern",    "float",          "for",           "goto",
    "if",         "inline",    "int",            "long",          "register",
    "restrict",   "return",    "short",          "signed",        "sizeof",
    "static",     "struct",    "switch",         "typedef",       "union",
    "unsigned",   "void",      "volatile",       "while",         "_Alignas",
    "_Alignof",   "_Atomic",   "_Bool",          "_Complex",      "_Generic",
    "_Imaginary", "_Noreturn", "_Static_assert", "_Thread_local",
};

// Ordered longest first so the first hit is the maximal munch.
constexpr std::array<std::string_view, 54> kPunctuators = {
    "%:%:", "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=",
    "==",   "!=",  "&&",  "||",  "*=", "/=", "%=", "+=", "-=", "&=", "^=",
    "|=",   "##",  "<:",  ":>",  "<%", "%>", "%:", "[",  "]",  "(",  ")",
    "{",    "}",   ".",   "&",   "*",  "+",  "-",  "~",  "!",  "/",  "%",
    "<",    ">",   "^",   "|",   "?",  ":",  ";",  "=",  ",",  "#",
};

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$'; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$'; }

// Translation phase 2: drop backslash-newline splices but remember which
// physical line every surviving character came from.
struct SplicedSource {
  std::string text;
  std::vector<int> line;
};

SplicedSource splice_lines(std::string_view source) {
  SplicedSource out;
  out.text.reserve(source.size());
  out.line.reserve(source.size());
  int line = 1;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const char c = source[i];
    if (c == '\\') {
      std::size_t j = i + 1;
      if (j < source.size() && source[j] == '\r') ++j;
      if (j < source.size() && source[j] == '\n') {
        ++line;
        i = j;
        continue;
      }
    }
    out.text.push_back(c);
    out.line.push_back(line);
    if (c == '\n') ++line;
  }
  return out;
}

class Lexer {
 public:
  explicit Lexer(std::string_view source) : src_(splice_lines(source)) {}

  TokenStream run() {
    TokenStream out;
    const std::string& s = src_.text;
    while (pos_ < s.size()) {
      const unsigned char c = s[pos_];
      if (c == '\n') {
        in_directive_ = false;
        at_line_start_ = true;
        ++pos_;
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f') {
        ++pos_;
        continue;
      }
      if (c == '/' && peek(1) == '/') {
        while (pos_ < s.size() && s[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '/' && peek(1) == '*') {
        skip_block_comment();
        continue;
      }
      const int line = src_.line[pos_];
      Token tok = next_token();
      tok.line = line;
      if (at_line_start_ && (tok.text == "#" || tok.text == "%:")) in_directive_ = true;
      at_line_start_ = false;
      if (in_directive_) tok.kind = TokenKind::kPreprocessor;
      out.tokens.push_back(std::move(tok));
    }
    return out;
  }

 private:
  char peek(std::size_t ahead) const {
    const std::size_t p = pos_ + ahead;
    return p < src_.text.size() ? src_.text[p] : '\0';
  }

  void skip_block_comment() {
    const int start_line = src_.line[pos_];
    const std::size_t end = src_.text.find("*/", pos_ + 2);
    if (end == std::string::npos) throw LexError(start_line, "unterminated block comment");
    pos_ = end + 2;
  }

  Token next_token() {
    const std::string& s = src_.text;
    const unsigned char c = s[pos_];

    if (is_ident_start(c)) {
      std::size_t end = pos_;
      while (end < s.size() && is_ident_char(s[end])) ++end;
      const std::string_view word(s.data() + pos_, end - pos_);
      const bool literal_prefix = word == "L" || word == "u" || word == "U" || word == "u8";
      if (literal_prefix && end < s.size() && (s[end] == '"' || s[end] == '\'')) {
        return quoted(end, s[end]);
      }
      Token tok{std::string(word), is_keyword(word) ? TokenKind::kKeyword : TokenKind::kIdentifier};
      pos_ = end;
      return tok;
    }
    if (std::isdigit(c) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      return pp_number();
    }
    if (c == '"' || c == '\'') return quoted(pos_, static_cast<char>(c));

    for (std::string_view p : kPunctuators) {
      if (s.compare(pos_, p.size(), p) == 0) {
        pos_ += p.size();
        return Token{std::string(p), TokenKind::kPunctuator};
      }
    }

    // Stray byte (e.g. '@', '`', or a UTF-8 sequence): keep it as one token.
    std::size_t len = 1;
    if (c >= 0xC0) {
      while (pos_ + len < s.size() && (static_cast<unsigned char>(s[pos_ + len]) & 0xC0) == 0x80) ++len;
    }
    Token tok{s.substr(pos_, len), TokenKind::kPunctuator};
    pos_ += len;
    return tok;
  }

  Token pp_number() {
    const std::string& s = src_.text;
    std::size_t end = pos_ + 1;
    while (end < s.size()) {
      const unsigned char d = s[end];
      if ((d == '+' || d == '-') && std::string_view("eEpP").find(s[end - 1]) != std::string_view::npos) {
        ++end;
      } else if (std::isalnum(d) || d == '_' || d == '.') {
        ++end;
      } else {
        break;
      }
    }
    Token tok{s.substr(pos_, end - pos_), TokenKind::kNumber};
    pos_ = end;
    return tok;
  }

  // `quote_at` points at the opening quote; any prefix starts at pos_.
  Token quoted(std::size_t quote_at, char quote) {
    const std::string& s = src_.text;
    const int line = src_.line[pos_];
    std::size_t i = quote_at + 1;
    while (true) {
      if (i >= s.size() || s[i] == '\n') {
        throw LexError(line, quote == '"' ? "unterminated string literal" : "unterminated character literal");
      }
      if (s[i] == '\\') {
        i += 2;
        continue;
      }
      if (s[i] == quote) break;
      ++i;
    }
    Token tok{s.substr(pos_, i + 1 - pos_), quote == '"' ? TokenKind::kStringLiteral : TokenKind::kCharLiteral};
    pos_ = i + 1;
    return tok;
  }

  SplicedSource src_;
  std::size_t pos_ = 0;
  bool at_line_start_ = true;
  bool in_directive_ = false;
};

}  // namespace

const char* to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::kIdentifier: return "identifier";
    case TokenKind::kKeyword: return "keyword";
    case TokenKind::kNumber: return "number";
    case TokenKind::kStringLiteral: return "string-literal";
    case TokenKind::kCharLiteral: return "char-literal";
    case TokenKind::kPunctuator: return "punctuator";
    case TokenKind::kPreprocessor: return "preprocessor";
  }
  return "unknown";
}

Lexemes TokenStream::lexemes() const {
  Lexemes out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

LexError::LexError(int line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

TokenStream tokenize(std::string_view source) { return Lexer(source).run(); }

std::string detokenize(const Lexemes& lexemes) {
  std::string out;
  for (std::size_t i = 0; i < lexemes.size(); ++i) {
    if (i) out.push_back(' ');
    out += lexemes[i];
  }
  return out;
}

std::string detokenize(const TokenStream& stream) { return detokenize(stream.lexemes()); }

}  // namespace vrepair::ctok
