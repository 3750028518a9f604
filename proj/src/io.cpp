#include "vrepair/io.hpp"

#include <algorithm>
#include <fstream>

namespace vrepair::io {

using nlohmann::json;

DataError::DataError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(line ? path + ":" + std::to_string(line) + ": " + what : path + ": " + what) {}

namespace {

json meta_json(const mining::VulnMeta& m) { return {{"cwe", m.cwe_id}, {"cve", m.cve_id}, {"date", m.date}}; }

mining::VulnMeta meta_from(const json& j) {
  mining::VulnMeta m;
  m.cwe_id = j.value("cwe", "");
  m.cve_id = j.value("cve", "");
  m.date = j.value("date", "");
  return m;
}

ctok::TokenKind kind_of(const std::string& lexeme) {
  try {
    const auto t = ctok::tokenize(lexeme);
    if (t.size() == 1) return t.tokens[0].kind;
  } catch (const ctok::LexError&) {
  }
  return ctok::TokenKind::kPunctuator;
}

json stream_json(const ctok::TokenStream& s) {
  json lex = json::array(), lines = json::array();
  for (const auto& t : s.tokens) {
    lex.push_back(t.text);
    lines.push_back(t.line);
  }
  return {{"lexemes", lex}, {"lines", lines}};
}

ctok::TokenStream stream_from(const json& j) {
  const auto lex = j.at("lexemes").get<Lexemes>();
  const auto lines = j.at("lines").get<std::vector<int>>();
  if (lex.size() != lines.size()) throw std::invalid_argument("lexemes and lines differ in length");
  ctok::TokenStream s;
  for (std::size_t i = 0; i < lex.size(); ++i) s.tokens.push_back({lex[i], kind_of(lex[i]), lines[i]});
  return s;
}

}  // namespace

json to_json(const mining::CommitRecord& commit) {
  json files = json::array();
  for (const auto& f : commit.files) files.push_back({{"path", f.path}, {"before", f.before}, {"after", f.after}});
  json j = {{"message", commit.message}, {"files", files}};
  if (commit.meta) j["meta"] = meta_json(*commit.meta);
  return j;
}

mining::CommitRecord commit_from_json(const json& j) {
  mining::CommitRecord c;
  c.message = j.at("message").get<std::string>();
  for (const auto& f : j.at("files")) {
    c.files.push_back({f.at("path").get<std::string>(), f.value("before", ""), f.value("after", "")});
  }
  if (j.contains("meta") && !j["meta"].is_null()) c.meta = meta_from(j["meta"]);
  return c;
}

json to_json(const mining::FunctionPair& pair) {
  json j = {{"signature", pair.signature}, {"before", stream_json(pair.before)}, {"after", stream_json(pair.after)}};
  if (pair.meta) j["meta"] = meta_json(*pair.meta);
  return j;
}

mining::FunctionPair pair_from_json(const json& j) {
  mining::FunctionPair p;
  p.signature = j.at("signature").get<Lexemes>();
  p.before = stream_from(j.at("before"));
  p.after = stream_from(j.at("after"));
  if (j.contains("meta") && !j["meta"].is_null()) p.meta = meta_from(j["meta"]);
  return p;
}

json to_json(const encoding::Sample& s) {
  return {{"cwe", s.cwe_token},
          {"input", s.input},
          {"target", s.target},
          {"fixed", s.fixed},
          {"meta",
           {{"id", s.meta.id}, {"cve", s.meta.cve}, {"cwe", s.meta.cwe}, {"date", s.meta.date}, {"split", s.meta.split}}}};
}

encoding::Sample sample_from_json(const json& j) {
  encoding::Sample s;
  s.cwe_token = j.at("cwe").get<std::string>();
  s.input = j.at("input").get<Lexemes>();
  s.target = j.at("target").get<Lexemes>();
  s.fixed = j.value("fixed", Lexemes{});
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    s.meta = {m.value("id", ""), m.value("cve", ""), m.value("cwe", ""), m.value("date", ""), m.value("split", "")};
  }
  return s;
}

json to_json(const inference::Prediction& p, const std::string& input_id) {
  json hyps = json::array(), cands = json::array();
  for (const auto& h : p.hypotheses) hyps.push_back({{"tokens", h.tokens}, {"log_prob", h.log_prob}});
  for (std::size_t r = 0; r < p.candidates.size(); ++r) {
    cands.push_back({{"function_lexemes", p.candidates[r].function}, {"rank", r}});
  }
  return {{"input_id", input_id}, {"hypotheses", hyps}, {"candidates", cands}};
}

PredictionRecord prediction_from_json(const json& j) {
  PredictionRecord r;
  r.input_id = j.at("input_id").get<std::string>();
  for (const auto& h : j.at("hypotheses")) {
    r.hypotheses.push_back({h.at("tokens").get<Lexemes>(), h.at("log_prob").get<double>(), true});
  }
  std::vector<std::pair<std::size_t, Lexemes>> ranked;
  for (const auto& c : j.at("candidates")) {
    ranked.emplace_back(c.at("rank").get<std::size_t>(), c.at("function_lexemes").get<Lexemes>());
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [rank, f] : ranked) r.candidates.push_back(std::move(f));
  return r;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path, 0, "cannot open");
  std::vector<json> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(path, n, e.what());
    }
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, 0, "cannot write");
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw DataError(path, 0, "write failed");
}

}  // namespace vrepair::io
