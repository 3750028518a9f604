#pragma once

#include <regex>
#include <string>
#include <utility>
#include <vector>

namespace fixture {

// Hand-labelled commit messages.
inline const std::vector<std::pair<std::string, bool>>& commit_messages() {
  static const std::vector<std::pair<std::string, bool>> kMessages = {
      {"Fix null deref bug in parser", true},
      {"Add new feature", false},
      {"prefix bugs", false},
      {"FIX: memory ERROR in decoder", true},
      {"solve issue #42 with long lines", true},
      {"Repair fault handling on shutdown", true},
      {"fixed the bug", false},
      {"Fixes bug 1234", false},
      {"fix typo", false},
      {"bug report template", false},
      {"this solves a problem", false},
      {"solve the problem of overflow", true},
      {"repair vulnerability in tls handshake", true},
      {"Fix-up: issue with leaks", true},
      {"hotfix for issue 7", false},
      {"debug error path", false},
      {"fix_bug helper renamed", false},
      {"Refactor: no functional change", false},
      {"Fix\nbug", true},
      {"fix (error) in loop", true},
      {"errors fixed", false},
      {"We FIX a PROBLEM", true},
      {"repair: faulty sensor reading", false},
      {"solve/fault", true},
      {"Update README", false},
      {"fix; vulnerability CVE-2019-0001", true},
      {"Merge branch 'fix' into issue", true},
      {"repairing problems", false},
      {"fix.bug", true},
      {"Solve  Error", true},
  };
  return kMessages;
}

// Independent reference: ECMAScript word boundaries over the lowered message.
inline bool regex_rule(std::string message) {
  for (char& c : message) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  static const std::regex action(R"(\b(fix|solve|repair)\b)");
  static const std::regex subject(R"(\b(bug|issue|problem|error|fault|vulnerability)\b)");
  return std::regex_search(message, action) && std::regex_search(message, subject);
}

}  // namespace fixture
