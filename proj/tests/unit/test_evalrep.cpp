#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "../support/oracles.hpp"
#include "vrepair/diffcodec.hpp"
#include "vrepair/evalrep.hpp"
#include "vrepair/inference.hpp"

using namespace vrepair;
using namespace vrepair::evalrep;
using oracle::split_words;

TEST_CASE("sequence accuracy") {
  const std::vector<Lexemes> golds = {split_words("a b"), split_words("c"), split_words("d e f")};
  CHECK(sequence_accuracy({{golds[0]}, {golds[1]}, {golds[2]}}, golds) == 1.0);
  CHECK(sequence_accuracy({{split_words("x")}, {}, {split_words("d e")}}, golds) == 0.0);
  // 2 of 3; hit at rank 3 still counts
  const std::vector<std::vector<Lexemes>> mixed = {
      {split_words("a"), split_words("b"), golds[0]}, {split_words("C")}, {golds[2], split_words("q")}};
  CHECK(sequence_accuracy(mixed, golds) == doctest::Approx(2.0 / 3.0));
  // order within a beam does not matter
  auto shuffled = mixed;
  std::mt19937_64 rng(1);
  for (auto& b : shuffled) std::shuffle(b.begin(), b.end(), rng);
  CHECK(sequence_accuracy(shuffled, golds) == sequence_accuracy(mixed, golds));
  CHECK(sequence_accuracy({}, {}) == 0.0);
  CHECK_THROWS_AS(sequence_accuracy({{}}, golds), std::invalid_argument);
  // lexeme-exact: no whitespace folding
  CHECK_FALSE(sequence_hit({Lexemes{"a b"}}, split_words("a b")));
}

TEST_CASE("patch accuracy counts any interpretation") {
  const auto buggy = oracle::getvalue_buggy();
  const auto fixed = oracle::getvalue_fixed();
  const auto d3 = diffcodec::serialize_diff(diffcodec::extract_diff(buggy, fixed, 3));
  const auto d2 = diffcodec::serialize_diff(diffcodec::extract_diff(buggy, fixed, 2));
  auto funcs = [](const std::vector<inference::PatchCandidate>& c) {
    std::vector<Lexemes> out;
    for (const auto& p : c) out.push_back(p.function);
    return out;
  };
  CHECK(patch_accuracy({funcs(inference::combine(buggy, {{d3, 0.0, true}}, 3, 50))}, {fixed}) == 1.0);
  CHECK(patch_accuracy({funcs(inference::combine(buggy, {{d2, 0.0, true}}, 2, 50))}, {fixed}) == 1.0);
  CHECK(patch_accuracy({funcs(inference::combine(buggy, {{d2, 0.0, true}}, 2, 2))}, {fixed}) == 0.0);
}

TEST_CASE("patch accuracy dominates sequence accuracy") {
  // whenever the gold diff is in the beam, the fixed function is a candidate
  std::mt19937_64 rng(6);
  std::vector<std::vector<Lexemes>> beams, cands;
  std::vector<Lexemes> golds, fixed;
  for (int t = 0; t < 80; ++t) {
    const auto src = oracle::random_stream(rng, 12 + t % 20, 3);
    auto tgt = oracle::random_edits(rng, src, 1 + t % 3, 3);
    if (tgt == src) continue;
    const auto gold = diffcodec::serialize_diff(diffcodec::extract_diff(src, tgt, 2));
    std::vector<inference::Hypothesis> hyps;
    if (rng() % 2) hyps.push_back({gold, -0.2, true});
    const auto other = oracle::random_edits(rng, src, 1, 3);
    if (other != src) hyps.push_back({diffcodec::serialize_diff(diffcodec::extract_diff(src, other, 2)), -0.3, true});
    std::vector<Lexemes> b, c;
    for (const auto& h : hyps) b.push_back(h.tokens);
    for (const auto& p : inference::combine(src, hyps, 2, 1000)) c.push_back(p.function);
    beams.push_back(b);
    cands.push_back(c);
    golds.push_back(gold);
    fixed.push_back(tgt);
  }
  const double seq = sequence_accuracy(beams, golds);
  const double patch = patch_accuracy(cands, fixed);
  CHECK(seq > 0.2);
  CHECK(patch >= seq);
}

TEST_CASE("per-CWE report against a hand tally") {
  // 20 samples: CWE-119 3/8, CWE-20 5/5, CWE-000 0/4, CWE-787 1/3
  std::vector<SampleResult> r;
  auto add = [&](const std::string& cwe, int hits, int total) {
    for (int i = 0; i < total; ++i) r.push_back({cwe, i < hits, i < hits + 1});
  };
  add("CWE-119", 3, 8);
  add("CWE-20", 5, 5);
  add("CWE-000", 0, 4);
  add("CWE-787", 1, 3);
  REQUIRE(r.size() == 20);
  const auto rep = per_cwe_report(r, 50, "test");
  CHECK(rep.total == 20);
  CHECK(rep.overall_sequence_accuracy == doctest::Approx(9.0 / 20.0));
  CHECK(rep.patch_accuracy == doctest::Approx(12.0 / 20.0));
  CHECK(rep.per_cwe.at("CWE-119") == CweRow{"CWE-119", 3, 8, 3.0 / 8.0});
  CHECK(rep.per_cwe.at("CWE-20") == CweRow{"CWE-20", 5, 5, 1.0});
  CHECK(rep.per_cwe.at("CWE-000").hits == 0);
  REQUIRE(rep.top.size() == 4);
  CHECK(rep.top[0].cwe == "CWE-119");
  CHECK(rep.top[1].cwe == "CWE-20");
  CHECK(rep.top[2].cwe == "CWE-000");
  CHECK(rep.top[3].cwe == "CWE-787");
  CHECK(per_cwe_report(r, 50, "test", 2).top.size() == 2);

  // weighted mean of the rows equals the overall figure
  double weighted = 0.0;
  for (const auto& [cwe, row] : rep.per_cwe) weighted += row.fraction * static_cast<double>(row.total);
  CHECK(weighted / 20.0 == doctest::Approx(rep.overall_sequence_accuracy));

  const auto back = report_from_json(nlohmann::json::parse(to_json(rep).dump()));
  CHECK(back.per_cwe == rep.per_cwe);
  CHECK(back.top == rep.top);
  CHECK(back.overall_sequence_accuracy == rep.overall_sequence_accuracy);
  CHECK(back.split == "test");
  CHECK(to_csv(rep) ==
        "cwe,hits,total,fraction\nCWE-119,3,8,0.375000\nCWE-20,5,5,1.000000\nCWE-000,0,4,0.000000\n"
        "CWE-787,1,3,0.333333\n");
  CHECK(to_table(rep).find("sequence accuracy 45.00%") != std::string::npos);
}

TEST_CASE("single-CWE report equals overall") {
  std::vector<SampleResult> r = {{"CWE-1", true, true}, {"CWE-1", false, true}, {"CWE-1", false, false}};
  const auto rep = per_cwe_report(r, 1, "val");
  REQUIRE(rep.top.size() == 1);
  CHECK(rep.top[0].fraction == rep.overall_sequence_accuracy);
  const auto empty = per_cwe_report({}, 1, "val");
  CHECK(empty.total == 0);
  CHECK(empty.overall_sequence_accuracy == 0.0);
  CHECK(empty.top.empty());
}
