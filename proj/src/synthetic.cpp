#include "vrepair/synthetic.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <stdexcept>

namespace vrepair::synthetic {

namespace {

using Rng = std::mt19937_64;

const std::vector<std::string> kCommon = {"i",   "j",   "n",    "len",  "buf", "src",   "dst", "p",
                                          "q",   "size", "count", "idx", "data", "ptr", "val", "res",
                                          "tmp", "ret", "str",  "off",  "pos", "cur",  "end", "node"};
const std::vector<std::string> kRareHead = {"ctx", "blk", "pkt", "req", "msg", "hdr", "cfg", "dev",
                                            "sock", "frame", "chunk", "slot", "page", "inode", "skb", "urb"};
const std::vector<std::string> kRareTail = {"len", "cnt", "buf", "ptr", "idx", "pos", "sz", "max",
                                            "lim", "base", "head", "tail", "out", "in", "nr", "id"};
const std::vector<std::string> kFields = {"next", "len", "data", "size", "flags", "state", "owner", "refcnt"};
const std::vector<std::string> kCalls = {"log_debug", "update", "check", "reset", "emit", "touch"};
const std::vector<std::string> kTypes = {"int", "long", "unsigned", "size_t"};

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

int uniform(int lo, int hi, Rng& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Names {
  Rng* rng;
  double rare_rate;
  std::set<std::string> used;

  std::string fresh() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::string name;
      if (std::bernoulli_distribution(rare_rate)(*rng)) {
        name = pick(kRareHead, *rng) + "_" + pick(kRareTail, *rng);
        if (std::bernoulli_distribution(0.5)(*rng)) name += std::to_string(uniform(0, 99, *rng));
      } else {
        name = pick(kCommon, *rng);
      }
      if (used.insert(name).second) return name;
    }
    throw std::logic_error("identifier pool exhausted");
  }

  std::string function_name() {
    std::string name = pick(kRareHead, *rng) + "_" + pick(kCalls, *rng);
    if (std::bernoulli_distribution(0.7)(*rng)) name += "_" + pick(kRareTail, *rng);
    used.insert(name);
    return name;
  }
};

struct Vars {
  std::string arr, n, i, p, d, s, x;
};

// One line whose buggy and fixed forms differ; `after` may span lines.
struct Site {
  std::string before;
  std::string after;
};

std::string num(Rng& rng) { return std::to_string(uniform(1, 64, rng)); }

std::string filler(const Vars& v, Rng& rng) {
  switch (uniform(0, 10, rng)) {
    case 0: return v.x + " = " + v.x + " + " + num(rng) + " ;";
    case 1: return pick(kCalls, rng) + " ( " + v.p + " , " + v.n + " ) ;";
    case 2: return "if ( " + v.x + " > " + num(rng) + " ) " + v.x + " = " + num(rng) + " ;";
    case 3: return v.x + " ++ ;";
    case 4: return v.p + " -> " + pick(kFields, rng) + " = " + v.x + " ;";
    case 5: return v.x + " = " + v.n + " * " + num(rng) + " ;";
    case 6: return pick(kCalls, rng) + " ( " + v.d + " ) ;";
    case 7: return "if ( ! " + v.x + " ) return 0 ;";
    case 8: return "while ( " + v.x + " > 0 ) " + v.x + " -- ;";
    case 9: return "memcpy ( " + v.d + " , " + v.s + " , " + num(rng) + " ) ;";
    default: return v.x + " -= " + v.i + " ;";
  }
}

// Generic bug-fix families.
Site source_site(const Vars& v, Rng& rng) {
  switch (uniform(0, 5, rng)) {
    case 0: {
      const std::string body = v.arr + " [ " + v.i + " ] = " + num(rng) + " ;";
      return {"for ( " + v.i + " = 0 ; " + v.i + " <= " + v.n + " ; " + v.i + " ++ ) " + body,
              "for ( " + v.i + " = 0 ; " + v.i + " < " + v.n + " ; " + v.i + " ++ ) " + body};
    }
    case 1: {
      const std::string use = v.x + " = " + v.p + " -> " + pick(kFields, rng) + " ;";
      return {use, "if ( " + v.p + " == NULL ) return - 1 ;\n  " + use};
    }
    case 2:
      return {"strcpy ( " + v.d + " , " + v.s + " ) ;",
              "strncpy ( " + v.d + " , " + v.s + " , sizeof ( " + v.d + " ) ) ;"};
    case 3:
      return {"free ( " + v.p + " ) ;", "free ( " + v.p + " ) ;\n  " + v.p + " = NULL ;"};
    case 4: {
      const std::string k = num(rng);
      return {"if ( " + v.x + " = " + k + " ) return " + v.x + " ;",
              "if ( " + v.x + " == " + k + " ) return " + v.x + " ;"};
    }
    default: {
      const std::string body = " " + v.x + " = " + v.arr + " [ " + v.i + " ] ;";
      return {"if ( " + v.i + " < " + v.n + " )" + body, "if ( " + v.i + " >= 0 && " + v.i + " < " + v.n + " )" + body};
    }
  }
}

// Vulnerability families: the same repairs in other constructs.
Site target_site(const Vars& v, int family, Rng& rng) {
  switch (family) {
    case 0: {  // CWE-787: write loop bound
      const std::string body = " { " + v.arr + " [ " + v.i + " ++ ] = " + v.x + " ; }";
      return {"while ( " + v.i + " <= " + v.n + " )" + body, "while ( " + v.i + " < " + v.n + " )" + body};
    }
    case 1: {  // CWE-476: dereference without a check
      const std::string use = "return " + v.p + " -> " + pick(kFields, rng) + " ;";
      return {use, "if ( ! " + v.p + " ) return 0 ;\n  " + use};
    }
    case 2:  // CWE-120: unbounded copy length
      return {"memcpy ( " + v.d + " , " + v.s + " , " + v.n + " ) ;",
              "memcpy ( " + v.d + " , " + v.s + " , sizeof ( " + v.d + " ) ) ;"};
    default: {  // CWE-125: negative index read
      const std::string body = " return " + v.arr + " [ " + v.i + " ] ;";
      return {"if ( " + v.i + " < " + v.n + " )" + body, "if ( " + v.i + " >= 0 && " + v.i + " < " + v.n + " )" + body};
    }
  }
}

std::string add_days(const std::string& iso, int days) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3) throw std::invalid_argument("bad date " + iso);
  using namespace std::chrono;
  const sys_days base = year_month_day{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  const year_month_day out{base + std::chrono::days{days}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(out.year()), static_cast<unsigned>(out.month()),
                static_cast<unsigned>(out.day()));
  return buf;
}

}  // namespace

const std::vector<std::string>& target_cwes() {
  static const std::vector<std::string> kIds = {"CWE-787", "CWE-476", "CWE-120", "CWE-125"};
  return kIds;
}

std::vector<mining::FunctionPair> generate(const SynthConfig& config) {
  if (config.min_filler < 0 || config.max_filler < config.min_filler) {
    throw std::invalid_argument("synth: bad filler range");
  }
  Rng rng(config.seed);
  std::vector<mining::FunctionPair> out;
  out.reserve(config.count);
  for (std::size_t k = 0; k < config.count; ++k) {
    Names names{&rng, config.rare_name_rate, {}};
    const std::string fname = names.function_name();
    Vars v{names.fresh(), names.fresh(), names.fresh(), names.fresh(), names.fresh(), names.fresh(), names.fresh()};
    const std::string type = pick(kTypes, rng);
    const std::string header = type + " " + fname + " ( int * " + v.arr + " , int " + v.n + " , struct item * " +
                               v.p + " , char * " + v.d + " , const char * " + v.s + " )";

    int family = 0;
    Site site;
    if (config.domain == Domain::kSource) {
      site = source_site(v, rng);
    } else {
      family = uniform(0, static_cast<int>(target_cwes().size()) - 1, rng);
      site = target_site(v, family, rng);
    }

    std::vector<std::string> lines{"int " + v.i + " = 0 ;", "int " + v.x + " = " + num(rng) + " ;"};
    const int fill = uniform(config.min_filler, config.max_filler, rng);
    for (int f = 0; f < fill; ++f) lines.push_back(filler(v, rng));
    const auto at = static_cast<std::size_t>(uniform(2, static_cast<int>(lines.size()), rng));

    auto render = [&](const std::string& site_text) {
      std::string text = header + " {\n";
      for (std::size_t l = 0; l <= lines.size(); ++l) {
        if (l == at) text += "  " + site_text + "\n";
        if (l < lines.size()) text += "  " + lines[l] + "\n";
      }
      text += "  return " + v.x + " ;\n}\n";
      return text;
    };

    mining::FunctionPair pair;
    pair.before = ctok::tokenize(render(site.before));
    pair.after = ctok::tokenize(render(site.after));
    for (const auto& t : pair.before.tokens) {
      if (t.text == "{") break;
      pair.signature.push_back(t.text);
    }
    const std::string date =
        add_days(config.first_date, uniform(0, std::max(0, config.date_span_days - 1), rng));
    if (config.domain == Domain::kTarget) {
      char cve[32];
      std::snprintf(cve, sizeof cve, "CVE-%s-%05zu", date.substr(0, 4).c_str(), k);
      pair.meta = mining::VulnMeta{target_cwes()[static_cast<std::size_t>(family)], cve, date};
    } else {
      pair.meta = mining::VulnMeta{"", "", date};
    }
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace vrepair::synthetic
