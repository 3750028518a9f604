#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "vrepair/ctok.hpp"
#include "vrepair/synthetic.hpp"

using namespace vrepair;
using namespace vrepair::ctok;

namespace {

Lexemes lex(std::string_view s) { return tokenize(s).lexemes(); }

const char* kCorpus[] = {
    "int main(void) { return 0; }",
    "static int f(int *a, int n) {\n  for (int i = 0; i < n; ++i) a[i] <<= 2;\n  return a[n-1] >> 1;\n}",
    "void g(char *s) { printf(\"%d\\n\", s[0]); s += 'x'; s->p = L\"wide\"; }",
    "#define MAX(a,b) ((a)>(b)?(a):(b))\nint h(int x) { return MAX(x, 3) ... ; }",
    "long k = 0x1Fu + 1.5e-3f + .5 + 07 ; /* block\n comment */ x ^= y|z&&w||!v; // tail",
    "a->b.c++ --d -> e ; f ... g ## h # i %: j <: k :> l <% m %>",
    "unsigned u = sizeof(struct s) ; char c = '\\'' ; const char *q = u8\"x\" \"y\" ;",
    "int line_join = 1 + \\\n 2 ;",
};

}  // namespace

TEST_CASE("basic lexing") {
  CHECK(lex("int a=0;") == Lexemes{"int", "a", "=", "0", ";"});
  CHECK(lex("/*c*/ x++;") == Lexemes{"x", "++", ";"});
  CHECK(lex("a>>=b->c") == Lexemes{"a", ">>=", "b", "->", "c"});
  CHECK(lex("x = 1.5e+3f;") == Lexemes{"x", "=", "1.5e+3f", ";"});
  CHECK(lex("s = \"a b // c\";") == Lexemes{"s", "=", "\"a b // c\"", ";"});
  CHECK(lex("").empty());
}

TEST_CASE("token kinds and lines") {
  const auto ts = tokenize("#include <stdio.h>\nint x = 'a';\n  return \"s\";");
  REQUIRE(ts.size() >= 10);
  CHECK(ts.tokens[0].kind == TokenKind::kPreprocessor);
  const auto& toks = ts.tokens;
  auto find = [&](const std::string& t) {
    return *std::find_if(toks.begin(), toks.end(), [&](const Token& k) { return k.text == t; });
  };
  CHECK(find("int").kind == TokenKind::kKeyword);
  CHECK(find("int").line == 2);
  CHECK(find("x").kind == TokenKind::kIdentifier);
  CHECK(find("'a'").kind == TokenKind::kCharLiteral);
  CHECK(find("\"s\"").kind == TokenKind::kStringLiteral);
  CHECK(find("\"s\"").line == 3);
  CHECK(is_keyword("while"));
  CHECK_FALSE(is_keyword("whilst"));
}

TEST_CASE("unterminated constructs raise with the line") {
  try {
    tokenize("int a;\nchar *s = \"open;\n");
    FAIL("expected LexError");
  } catch (const LexError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(tokenize("x /* never closed"), LexError);
  CHECK_THROWS_AS(tokenize("c = 'q"), LexError);
}

TEST_CASE("detokenize joins with single spaces") {
  CHECK(detokenize(Lexemes{"int", "a", "=", "0", ";"}) == "int a = 0 ;");
  CHECK(detokenize(Lexemes{}).empty());
  CHECK(detokenize(TokenStream{}).empty());
}

TEST_CASE("retokenizing detokenized text is the identity") {
  for (const char* src : kCorpus) {
    CAPTURE(src);
    const auto first = tokenize(src);
    CHECK(tokenize(detokenize(first)).lexemes() == first.lexemes());
  }
  synthetic::SynthConfig cfg;
  cfg.count = 200;
  for (auto domain : {synthetic::Domain::kSource, synthetic::Domain::kTarget}) {
    cfg.domain = domain;
    for (const auto& p : synthetic::generate(cfg)) {
      CHECK(tokenize(detokenize(p.before)).lexemes() == p.before.lexemes());
      CHECK(tokenize(detokenize(p.after)).lexemes() == p.after.lexemes());
    }
  }
}
