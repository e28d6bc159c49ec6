#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "driftprobe/data.hpp"
#include "driftprobe/error.hpp"
#include "driftprobe/lexicon.hpp"
#include "driftprobe/probekit.hpp"
#include "driftprobe/provider.hpp"
#include "driftprobe/util/text.hpp"

namespace driftprobe {

// ---------------------------------------------------------------------------
// Probe surface: rubric judge
// ---------------------------------------------------------------------------

struct JudgeScore {
  int value = 0;  // 0..3
  std::string judge_model;
  std::string raw;
};

inline const std::string& rubric_prompt() {
  static const std::string text(util::rtrim(data::file("rubric_prompt.txt")));
  return text;
}

// The judge sees the rubric, the question and the response, nothing else.
inline std::vector<Message> judge_request(std::string_view question, std::string_view response) {
  std::string body = rubric_prompt();
  body += "\n\nQuestion:\n";
  body += question;
  body += "\n\n";
  body += kResponseOpen;
  body += response;
  body += kResponseClose;
  return {{0, Role::user, std::move(body)}};
}

inline std::vector<Message> judge_request(const Probe& probe, std::string_view response) {
  return judge_request(probe.text, response);
}

// A bare digit 0-3, or the last 0-3 that follows a "score" token.
inline std::optional<int> try_parse_judge_output(std::string_view text) {
  const auto t = util::trim(text);
  if (t.size() == 1 && t[0] >= '0' && t[0] <= '3') return t[0] - '0';
  static const std::regex re(R"(score\s*(?:[:=]|is|of)?\s*\**\s*([0-3])(?![0-9]))",
                             std::regex::icase);
  std::optional<int> last;
  for (std::cregex_iterator it(t.data(), t.data() + t.size(), re), end; it != end; ++it) {
    last = (*it)[1].str()[0] - '0';
  }
  return last;
}

inline int parse_judge_output(std::string_view text) {
  if (auto v = try_parse_judge_output(text)) return *v;
  throw ParseError(1, "judge output carries no 0-3 score");
}

// Asks the judge, re-asking up to `max_reasks` times on unparseable output.
// Returns nullopt when the cell must stay unscored.
inline std::optional<JudgeScore> judge(Provider& provider, const TargetSpec& judge_target,
                                       std::string_view question, std::string_view response,
                                       int max_reasks = 2) {
  const auto request = judge_request(question, response);
  for (int attempt = 0; attempt <= max_reasks; ++attempt) {
    const auto c = provider.complete(judge_target, request);
    if (c.finish_state != FinishState::ok) continue;
    if (auto v = try_parse_judge_output(c.text)) return JudgeScore{*v, judge_target.api_model_id, c.text};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Stressor surface: deterministic compliance
// ---------------------------------------------------------------------------

enum class ComplianceReason { ok, multiline, fence, preamble, mismatch };

inline std::string_view to_string(ComplianceReason r) {
  switch (r) {
    case ComplianceReason::ok: return "ok";
    case ComplianceReason::multiline: return "multiline";
    case ComplianceReason::fence: return "fence";
    case ComplianceReason::preamble: return "preamble";
    case ComplianceReason::mismatch: return "mismatch";
  }
  return "mismatch";
}

inline ComplianceReason parse_compliance_reason(std::string_view s) {
  for (auto r : {ComplianceReason::ok, ComplianceReason::multiline, ComplianceReason::fence,
                 ComplianceReason::preamble, ComplianceReason::mismatch}) {
    if (to_string(r) == s) return r;
  }
  throw ParseError(0, "unknown compliance reason \"" + std::string(s) + "\"");
}

struct ComplianceResult {
  std::string stressor_id;
  bool pass = false;
  ComplianceReason reason = ComplianceReason::mismatch;

  friend bool operator==(const ComplianceResult&, const ComplianceResult&) = default;
};

inline const std::vector<std::string>& preamble_lexemes() {
  static const std::vector<std::string> list = util::read_list(data::file("preamble_lexemes.txt"));
  return list;
}

// A lexeme counts only as a whole word; '_' and '-' continue a command name.
inline bool starts_with_preamble(std::string_view line) {
  line = util::trim(line);
  auto continues = [](char c) { return lexicon::is_word_char(c) || c == '_' || c == '-'; };
  for (const auto& lex : preamble_lexemes()) {
    if (!util::starts_with_icase(line, lex)) continue;
    if (line.size() == lex.size() || !continues(line[lex.size()])) return true;
  }
  return false;
}

// Clauses are checked in order: single non-empty line, no fence, no preamble.
inline ComplianceResult is_no_preamble(std::string_view response) {
  const auto body = util::rtrim(response);
  std::size_t non_empty = 0;
  std::string_view line;
  for (auto l : util::split_lines(body)) {
    if (util::trim(l).empty()) continue;
    ++non_empty;
    line = l;
  }
  if (non_empty != 1) return {"S2", false, ComplianceReason::multiline};
  if (body.find("```") != std::string_view::npos) return {"S2", false, ComplianceReason::fence};
  if (starts_with_preamble(line)) return {"S2", false, ComplianceReason::preamble};
  return {"S2", true, ComplianceReason::ok};
}

inline bool is_single_sentence(std::string_view text) {
  const auto body = util::trim(text);
  if (body.empty()) return false;
  const auto last = body.find_last_of(".!?");
  return last == body.size() - 1 && body.find_first_of(".!?") == last;
}

inline ComplianceResult score_stressor(const Stressor& s, std::string_view response) {
  ComplianceResult r{s.id, false, ComplianceReason::mismatch};
  if (s.constraint_kind == ConstraintKind::byte_exact) {
    if (!response.empty() && response.back() == '\n') response.remove_suffix(1);
    if (response == *s.expected_exact) r = {s.id, true, ComplianceReason::ok};
    return r;
  }
  if (s.id == "S3") {
    if (response.find("```") != std::string_view::npos) return {s.id, false, ComplianceReason::fence};
    if (is_single_sentence(response)) r = {s.id, true, ComplianceReason::ok};
    return r;
  }
  r = is_no_preamble(response);
  r.stressor_id = s.id;
  return r;
}

// claude-arm length over filler-arm length, in characters.
inline double length_ratio(std::size_t claude_len, std::size_t filler_len) {
  if (filler_len == 0) throw DomainError("length ratio undefined for an empty filler response");
  return static_cast<double>(claude_len) / static_cast<double>(filler_len);
}

}  // namespace driftprobe
