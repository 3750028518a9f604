#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrepair/mining.hpp"

// Generated C-like functions with planted one-site bugs and their fixes.
// The source domain holds generic bug-fix families; the target domain holds
// related, CWE-labelled families in different syntactic dress.
namespace vrepair::synthetic {

enum class Domain { kSource, kTarget };

struct SynthConfig {
  std::size_t count = 5000;
  Domain domain = Domain::kSource;
  std::uint64_t seed = 0;
  int min_filler = 2;
  int max_filler = 5;
  /// Chance that a variable name is drawn from the rare (mostly
  /// out-of-vocabulary) pool instead of the common one.
  double rare_name_rate = 0.3;
  std::string first_date = "2010-01-01";
  int date_span_days = 4000;
};

/// `count` pairs; every pair differs between before and after. Target pairs
/// carry CWE and CVE ids; source pairs only a date.
std::vector<mining::FunctionPair> generate(const SynthConfig& config);

/// CWE ids used by the target domain, e.g. "CWE-787".
const std::vector<std::string>& target_cwes();

}  // namespace vrepair::synthetic
