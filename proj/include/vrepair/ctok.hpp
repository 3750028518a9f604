#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vrepair {

using Lexemes = std::vector<std::string>;

namespace ctok {

enum class TokenKind {
  kIdentifier,
  kKeyword,
  kNumber,
  kStringLiteral,
  kCharLiteral,
  kPunctuator,
  kPreprocessor,
};

const char* to_string(TokenKind kind);

struct Token {
  std::string text;
  TokenKind kind = TokenKind::kPunctuator;
  int line = 1;

  bool operator==(const Token&) const = default;
};

struct TokenStream {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  Lexemes lexemes() const;
};

/// Raised for unterminated string/char literals and block comments.
/// Callers usually skip the offending sample.
class LexError : public std::runtime_error {
 public:
  LexError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// Lexes un-preprocessed C source. Comments are dropped, literals stay whole,
/// multi-character punctuators are maximal-munch, and every token on a
/// preprocessor directive line is tagged kPreprocessor.
TokenStream tokenize(std::string_view source);

/// Joins lexemes with exactly one space.
std::string detokenize(const TokenStream& stream);
std::string detokenize(const Lexemes& lexemes);

bool is_keyword(std::string_view word);

}  // namespace ctok
}  // namespace vrepair
