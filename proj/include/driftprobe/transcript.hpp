#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftprobe/error.hpp"
#include "driftprobe/util/random.hpp"
#include "driftprobe/util/text.hpp"

namespace driftprobe {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Messages and sessions
// ---------------------------------------------------------------------------

enum class Role { user, assistant, system, tool };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::system: return "system";
    case Role::tool: return "tool";
  }
  return "user";
}

inline std::optional<Role> parse_role(std::string_view s) {
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  if (s == "system") return Role::system;
  if (s == "tool") return Role::tool;
  return std::nullopt;
}

struct Message {
  int turn = 0;
  Role role = Role::user;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct CompactionEvent {
  int index = 0;  // k in C_k, 1-based
  int turn = 0;

  friend bool operator==(const CompactionEvent&, const CompactionEvent&) = default;
};

struct SessionMeta {
  std::string donor;
  std::string activity;

  friend bool operator==(const SessionMeta&, const SessionMeta&) = default;
};

struct SessionTranscript {
  std::string session_id;
  std::vector<Message> messages;
  std::vector<CompactionEvent> compactions;
  SessionMeta meta;

  int total_turns() const { return static_cast<int>(messages.size()); }

  friend bool operator==(const SessionTranscript&, const SessionTranscript&) = default;
};

// Throws StructuralError unless every SessionTranscript invariant holds:
// turns 1..N without gaps, compaction turns inside the session, non-empty
// content outside tool messages, and user/assistant alternation (tool and
// system messages may sit between the two halves of an exchange).
inline void validate(const SessionTranscript& t) {
  if (t.messages.empty()) throw StructuralError("session has zero turns");
  for (std::size_t i = 0; i < t.messages.size(); ++i) {
    const auto& m = t.messages[i];
    if (m.turn != static_cast<int>(i) + 1) {
      throw StructuralError("turn indices must run 1.." + std::to_string(t.messages.size()) +
                            " without gaps; found " + std::to_string(m.turn) + " at position " +
                            std::to_string(i + 1));
    }
    if (m.content.empty() && m.role != Role::tool) {
      throw StructuralError("turn " + std::to_string(m.turn) + ": empty content on a " +
                            std::string(to_string(m.role)) + " message");
    }
  }
  std::optional<Role> last;
  for (const auto& m : t.messages) {
    if (m.role != Role::user && m.role != Role::assistant) continue;
    if (last && *last == m.role) {
      throw StructuralError("turn " + std::to_string(m.turn) + ": two consecutive " +
                            std::string(to_string(m.role)) + " messages");
    }
    last = m.role;
  }
  for (const auto& c : t.compactions) {
    if (c.turn < 1 || c.turn > t.total_turns()) {
      throw StructuralError("compaction " + std::to_string(c.index) + " at turn " +
                            std::to_string(c.turn) + " lies outside [1, " +
                            std::to_string(t.total_turns()) + "]");
    }
  }
}

// ---------------------------------------------------------------------------
// JSONL wire format
//
//   {"turn": int, "role": "user|assistant|system|tool", "content": str}
//   {"compaction": int, "turn": int}
//   {"session_id": str, "donor": str, "activity": str}     (optional header)
// ---------------------------------------------------------------------------

inline SessionTranscript parse_transcript(std::istream& in, std::string session_id = "session") {
  SessionTranscript out;
  out.session_id = std::move(session_id);
  std::map<int, Message> by_turn;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(lineno, "record is not a JSON object");
    try {
      if (rec.contains("compaction")) {
        out.compactions.push_back(
            {rec.at("compaction").get<int>(), rec.at("turn").get<int>()});
        continue;
      }
      if (rec.contains("session_id") && !rec.contains("role")) {
        out.session_id = rec.at("session_id").get<std::string>();
        out.meta.donor = rec.value("donor", "");
        out.meta.activity = rec.value("activity", "");
        continue;
      }
      if (!rec.contains("role") || !rec.contains("content") || !rec.contains("turn")) {
        throw ParseError(lineno, "message record needs turn, role and content");
      }
      const auto role_name = rec.at("role").get<std::string>();
      const auto role = parse_role(role_name);
      if (!role) throw ParseError(lineno, "unknown role \"" + role_name + "\"");
      Message m{rec.at("turn").get<int>(), *role, rec.at("content").get<std::string>()};
      if (m.turn < 1) throw ParseError(lineno, "turn must be >= 1");
      if (by_turn.count(m.turn)) {
        throw StructuralError("duplicate turn index " + std::to_string(m.turn) + " (line " +
                              std::to_string(lineno) + ")");
      }
      by_turn.emplace(m.turn, std::move(m));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("bad field type: ") + e.what());
    }
  }
  out.messages.reserve(by_turn.size());
  for (auto& [turn, m] : by_turn) out.messages.push_back(std::move(m));
  std::sort(out.compactions.begin(), out.compactions.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  validate(out);
  return out;
}

inline SessionTranscript parse_transcript_text(std::string_view text,
                                               std::string session_id = "session") {
  std::istringstream in{std::string(text)};
  return parse_transcript(in, std::move(session_id));
}

inline std::string to_jsonl(const SessionTranscript& t) {
  std::string out;
  out += json{{"session_id", t.session_id},
              {"donor", t.meta.donor},
              {"activity", t.meta.activity}}
             .dump();
  out += '\n';
  for (const auto& m : t.messages) {
    out += json{{"turn", m.turn}, {"role", to_string(m.role)}, {"content", m.content}}.dump();
    out += '\n';
  }
  for (const auto& c : t.compactions) {
    out += json{{"compaction", c.index}, {"turn", c.turn}}.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prefixes and measurement positions
// ---------------------------------------------------------------------------

// Messages with turn <= t, in order. The transcript is not touched.
inline std::vector<Message> cut_prefix(const SessionTranscript& t, int turn) {
  if (turn < 1 || turn > t.total_turns()) {
    throw BoundsError("cut turn " + std::to_string(turn) + " outside [1, " +
                      std::to_string(t.total_turns()) + "]");
  }
  return {t.messages.begin(), t.messages.begin() + turn};
}

enum class PositionKind { start, pre_compaction, post_compaction, sweep };

inline std::string_view to_string(PositionKind k) {
  switch (k) {
    case PositionKind::start: return "start";
    case PositionKind::pre_compaction: return "pre_compaction";
    case PositionKind::post_compaction: return "post_compaction";
    case PositionKind::sweep: return "sweep";
  }
  return "sweep";
}

inline PositionKind parse_position_kind(std::string_view s) {
  if (s == "start") return PositionKind::start;
  if (s == "pre_compaction") return PositionKind::pre_compaction;
  if (s == "post_compaction") return PositionKind::post_compaction;
  if (s == "sweep") return PositionKind::sweep;
  throw ConfigError("unknown position kind \"" + std::string(s) + "\"");
}

struct PositionSpec {
  std::string label;
  int turn = 1;
  PositionKind kind = PositionKind::sweep;

  friend bool operator==(const PositionSpec&, const PositionSpec&) = default;
};

// Throws ConfigError unless turns are >= 1, strictly increasing, and labels unique.
inline void validate_positions(const std::vector<PositionSpec>& positions) {
  std::set<std::string> labels;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    if (p.turn < 1) throw ConfigError("position " + p.label + " has turn < 1");
    if (!labels.insert(p.label).second) throw ConfigError("duplicate position label " + p.label);
    if (i > 0 && positions[i - 1].turn >= p.turn) {
      throw ConfigError("position turns must be strictly increasing at " + p.label);
    }
  }
}

// Computed placement: P0 at `start_turn`, then for each compaction C_k a
// pre position `padding` turns before it and a post position `padding` turns
// after it. A post position that would fall past the session end is not
// emitted. Positions that land on an already-used turn are dropped, so the
// result is strictly increasing.
inline std::vector<PositionSpec> position_table(const SessionTranscript& t, int padding,
                                                int start_turn = 100) {
  if (padding < 0) throw DomainError("padding must be >= 0");
  struct Candidate {
    int turn;
    PositionKind kind;
    int compaction;
  };
  std::vector<Candidate> cands;
  cands.push_back({std::clamp(start_turn, 1, t.total_turns()), PositionKind::start, 0});
  for (const auto& c : t.compactions) {
    cands.push_back({std::max(1, c.turn - padding), PositionKind::pre_compaction, c.index});
    if (c.turn + padding <= t.total_turns()) {
      cands.push_back({c.turn + padding, PositionKind::post_compaction, c.index});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const auto& a, const auto& b) { return a.turn < b.turn; });
  std::vector<PositionSpec> out;
  int next_index = 1;
  for (const auto& c : cands) {
    if (!out.empty() && out.back().turn == c.turn) continue;
    std::string label;
    switch (c.kind) {
      case PositionKind::start: label = "P0_start"; break;
      case PositionKind::pre_compaction:
        label = "P" + std::to_string(next_index++) + "_pre_C" + std::to_string(c.compaction);
        break;
      case PositionKind::post_compaction:
        label = "P" + std::to_string(next_index++) + "_post_C" + std::to_string(c.compaction);
        break;
      case PositionKind::sweep: break;
    }
    out.push_back({std::move(label), c.turn, c.kind});
  }
  return out;
}

// Literal table file: [{"label": str, "turn": int, "kind": str}, ...], kept in
// file order.
inline std::vector<PositionSpec> load_position_table(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("position table is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ConfigError("position table must be a JSON array");
  std::vector<PositionSpec> out;
  for (const auto& rec : doc) {
    try {
      out.push_back({rec.at("label").get<std::string>(), rec.at("turn").get<int>(),
                     parse_position_kind(rec.value("kind", "sweep"))});
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad position record: ") + e.what());
    }
  }
  validate_positions(out);
  return out;
}

inline json positions_to_json(const std::vector<PositionSpec>& positions) {
  json out = json::array();
  for (const auto& p : positions) {
    out.push_back({{"label", p.label}, {"turn", p.turn}, {"kind", to_string(p.kind)}});
  }
  return out;
}

// Dense turn sweep (onset curves). Labels are "T<turn>".
inline std::vector<PositionSpec> sweep_positions(std::vector<int> turns) {
  std::sort(turns.begin(), turns.end());
  turns.erase(std::unique(turns.begin(), turns.end()), turns.end());
  std::vector<PositionSpec> out;
  for (int t : turns) out.push_back({"T" + std::to_string(t), t, PositionKind::sweep});
  validate_positions(out);
  return out;
}

// ---------------------------------------------------------------------------
// Redaction
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPlaceholders[] = {
    "<USER>",  "<EMPLOYER>", "<WORKSPACE>", "<HOST>:<PORT>", "<SSH_KEY>",
    "<EMAIL>", "<PROJECT>",  "<REDACTED_QUOTE>"};

// Tokens the scanner steps over so a second pass never rewrites a placeholder.
inline constexpr std::string_view kProtectedTokens[] = {
    "<REDACTED_QUOTE>", "<HOST>:<PORT>", "<WORKSPACE>", "<EMPLOYER>", "<SSH_KEY>",
    "<PROJECT>",        "<EMAIL>",       "<USER>",      "<HOST>",     "<PORT>"};

inline bool is_placeholder(std::string_view s) {
  return std::find(std::begin(kPlaceholders), std::end(kPlaceholders), s) !=
         std::end(kPlaceholders);
}

struct RedactionRule {
  std::string pattern;
  std::string placeholder;
  bool regex = false;
};

// Ordered rule list. Literal rules are applied longest-pattern-first; a regex
// rule competes with literals at each position and the longest match wins.
struct RedactionMap {
  std::vector<RedactionRule> rules;

  void add(std::string pattern, std::string placeholder, bool regex = false) {
    rules.push_back({std::move(pattern), std::move(placeholder), regex});
  }
};

inline void validate(const RedactionMap& map) {
  if (map.rules.empty()) throw ConfigError("redaction map is empty");
  for (const auto& r : map.rules) {
    if (r.pattern.empty()) throw ConfigError("redaction pattern is empty");
    if (!is_placeholder(r.placeholder)) {
      throw ConfigError("placeholder " + r.placeholder + " is not in the fixed vocabulary");
    }
    if (!r.regex && r.pattern.find_first_of("<>") != std::string::npos) {
      throw ConfigError("literal pattern must not contain '<' or '>': " + r.pattern);
    }
  }
}

// {"rules": [{"pattern": str, "placeholder": str, "regex": bool?}, ...]}
inline RedactionMap load_redaction_map(std::string_view json_text) {
  RedactionMap map;
  try {
    const auto doc = json::parse(json_text);
    for (const auto& r : doc.at("rules")) {
      map.add(r.at("pattern").get<std::string>(), r.at("placeholder").get<std::string>(),
              r.value("regex", false));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad redaction map: ") + e.what());
  }
  validate(map);
  return map;
}

namespace detail {

inline std::size_t protected_token_at(std::string_view s, std::size_t i) {
  if (s[i] != '<') return 0;
  for (auto tok : kProtectedTokens) {
    if (s.substr(i, tok.size()) == tok) return tok.size();
  }
  return 0;
}

class Redactor {
 public:
  explicit Redactor(const RedactionMap& map) {
    validate(map);
    for (const auto& r : map.rules) {
      if (r.regex) {
        regexes_.push_back({std::regex(r.pattern, std::regex::ECMAScript), r.placeholder});
      } else {
        literals_.push_back({r.pattern, r.placeholder});
      }
    }
    std::stable_sort(literals_.begin(), literals_.end(), [](const auto& a, const auto& b) {
      return a.first.size() > b.first.size();
    });
  }

  std::string apply(std::string_view s) const {
    // Longest regex candidate per start offset.
    std::map<std::size_t, std::pair<std::size_t, const std::string*>> regex_hits;
    const std::string owned(s);
    for (const auto& [re, placeholder] : regexes_) {
      for (auto it = std::sregex_iterator(owned.begin(), owned.end(), re);
           it != std::sregex_iterator(); ++it) {
        const auto start = static_cast<std::size_t>(it->position());
        const auto len = static_cast<std::size_t>(it->length());
        if (len == 0) continue;
        auto& slot = regex_hits[start];
        if (len > slot.first) slot = {len, &placeholder};
      }
    }
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      if (const auto tok = protected_token_at(s, i)) {
        out.append(s.substr(i, tok));
        i += tok;
        continue;
      }
      std::size_t best_len = 0;
      const std::string* best = nullptr;
      for (const auto& [pattern, placeholder] : literals_) {
        if (pattern.size() > best_len && s.substr(i, pattern.size()) == pattern) {
          best_len = pattern.size();
          best = &placeholder;
          break;  // sorted longest first
        }
      }
      if (auto it = regex_hits.find(i); it != regex_hits.end() && it->second.first > best_len) {
        best_len = it->second.first;
        best = it->second.second;
      }
      if (best && !overlaps_protected(s, i, best_len)) {
        out.append(*best);
        i += best_len;
      } else {
        out.push_back(s[i]);
        ++i;
      }
    }
    return out;
  }

 private:
  static bool overlaps_protected(std::string_view s, std::size_t start, std::size_t len) {
    for (std::size_t j = start; j < start + len; ++j) {
      if (protected_token_at(s, j)) return true;
    }
    return false;
  }

  std::vector<std::pair<std::string, std::string>> literals_;
  std::vector<std::pair<std::regex, std::string>> regexes_;
};

}  // namespace detail

inline std::string anonymize_text(std::string_view text, const RedactionMap& map) {
  return detail::Redactor(map).apply(text);
}

// Replaces every pattern occurrence in every message with its placeholder.
// Idempotent; message count, turns and roles are preserved.
inline SessionTranscript anonymize(const SessionTranscript& t, const RedactionMap& map) {
  const detail::Redactor redactor(map);
  SessionTranscript out = t;
  for (auto& m : out.messages) m.content = redactor.apply(m.content);
  return out;
}

struct RedactionHit {
  int turn = 0;
  std::size_t offset = 0;  // byte offset into the message content
  std::string token;

  friend bool operator==(const RedactionHit&, const RedactionHit&) = default;
};

// Every occurrence of any forbidden string. An empty report is a pass.
inline std::vector<RedactionHit> verify_redaction(const SessionTranscript& t,
                                                  const std::vector<std::string>& forbidden) {
  if (forbidden.empty()) throw ConfigError("forbidden token list is empty");
  std::vector<RedactionHit> hits;
  for (const auto& m : t.messages) {
    for (const auto& tok : forbidden) {
      if (tok.empty()) continue;
      for (auto pos = m.content.find(tok); pos != std::string::npos;
           pos = m.content.find(tok, pos + 1)) {
        hits.push_back({m.turn, pos, tok});
      }
    }
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return std::tie(a.turn, a.offset, a.token) < std::tie(b.turn, b.offset, b.token);
  });
  return hits;
}

// ---------------------------------------------------------------------------
// Synthetic sessions
// ---------------------------------------------------------------------------

enum class SessionFlavor { coding, prose };

inline SessionFlavor parse_flavor(std::string_view s) {
  if (s == "coding") return SessionFlavor::coding;
  if (s == "prose") return SessionFlavor::prose;
  throw ConfigError("unknown session flavor \"" + std::string(s) + "\"");
}

namespace detail {

template <std::size_t N>
std::string_view pick(util::Engine& rng, const std::string_view (&bank)[N]) {
  return bank[util::uniform_index(rng, N)];
}

inline std::string fill_template(std::string_view tmpl, util::Engine& rng,
                                 const std::map<std::string_view, std::vector<std::string_view>>& slots) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      const auto key = tmpl.substr(i + 1, close - i - 1);
      const auto& choices = slots.at(key);
      out.append(choices[util::uniform_index(rng, choices.size())]);
      i = close + 1;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

inline const std::map<std::string_view, std::vector<std::string_view>>& coding_slots() {
  static const std::map<std::string_view, std::vector<std::string_view>> slots{
      {"file",
       {"src/parser/tokenizer.py", "src/cache/store.rs", "lib/render/layout.ts",
        "tools/bench/runner.py", "src/net/retry.go", "core/queue/worker.cpp",
        "scripts/build_index.sh", "src/config/loader.py", "tests/test_scheduler.py",
        "src/storage/segment.rs"}},
      {"func",
       {"parse_header", "flush_pending", "resolve_path", "merge_segments", "load_config",
        "schedule_batch", "retry_with_backoff", "normalize_tokens", "compact_log",
        "render_table"}},
      {"suite", {"unit", "integration", "regression", "smoke", "property"}},
      {"error",
       {"a KeyError", "an index out of range", "a null dereference", "a timeout",
        "a type mismatch", "a missing import", "a deadlock", "an off-by-one"}},
      {"case",
       {"empty input", "unicode paths", "duplicate keys", "a closed socket",
        "very large batches", "trailing whitespace", "concurrent writers", "missing files"}},
      {"fix",
       {"guard the empty case", "copy the buffer before reuse", "sort keys before merging",
        "release the lock earlier", "validate the path first", "widen the integer type",
        "retry only idempotent calls", "strip the trailing newline"}},
      {"count", {"12", "27", "41", "58", "73", "96", "118", "204"}},
  };
  return slots;
}

inline const std::map<std::string_view, std::vector<std::string_view>>& prose_slots() {
  static const std::map<std::string_view, std::vector<std::string_view>> slots{
      {"section",
       {"the introduction", "the methods section", "the related work", "the discussion",
        "the abstract", "the limitations paragraph", "the second figure caption",
        "the conclusion"}},
      {"issue",
       {"the argument jumps too quickly", "two paragraphs repeat the same point",
        "the terminology drifts", "a claim lacks a citation", "the tone is too informal",
        "the transition is abrupt", "the example is confusing"}},
      {"edit",
       {"tightened the opening sentence", "merged the two paragraphs",
        "moved the definition earlier", "added a short example", "cut the hedging phrases",
        "rewrote the topic sentence", "split the long sentence"}},
      {"count", {"80", "120", "150", "200", "250"}},
  };
  return slots;
}

inline constexpr std::string_view kCodingUser[] = {
    "Can you look at {file} and fix the failing {suite} test?",
    "The build fails with {error} in {file}. What is going on?",
    "Please refactor {func} in {file} so it handles {case}.",
    "Run the {suite} tests again and tell me what breaks.",
    "Why does {func} behave differently with {case}?",
    "Add a {suite} test covering {case} for {func}.",
    "Check whether {func} still needs the old workaround.",
    "Profile {func}; it got slow after the last change.",
};

inline constexpr std::string_view kCodingAssistant[] = {
    "I opened {file}. The {func} function assumes the input is non-empty, which breaks on {case}. I changed it to {fix}, and the {suite} tests pass now.",
    "The failure is {error} raised from {func}. It happens with {case}. I will {fix} and rerun the suite.",
    "Ran the {suite} suite: {count} passed, 1 failed. The failing case exercises {case} in {func}.",
    "Done. {func} now handles {case}; the patch is small and keeps the public signature unchanged.",
    "Looking at {file}, the loop in {func} re-reads the config on every iteration. Hoisting it out cut the runtime noticeably.",
    "I added a {suite} test for {case}. It failed before the change to {func} and passes after it.",
    "The workaround in {func} is still needed: removing it reintroduces {error} with {case}.",
};

inline constexpr std::string_view kProseUser[] = {
    "Can you revise {section}? I think {issue}.",
    "Please shorten {section} to about {count} words.",
    "Check {section} for consistency with the rest of the draft.",
    "Does {section} read well now?",
    "Rewrite the first paragraph of {section}; {issue}.",
};

inline constexpr std::string_view kProseAssistant[] = {
    "I revised {section}: I {edit}, because {issue}.",
    "Here is the shorter version of {section}, now about {count} words. I {edit}.",
    "Reading {section} again, {issue}. I {edit} to fix it.",
    "{section} is consistent now. I {edit} and left the rest as it was.",
};

}  // namespace detail

// Deterministic stand-in for a donated session: alternating user/assistant
// exchanges of coding (or manuscript) work, with compaction annotations at
// the requested turns. Contains no real-world identifiers.
inline SessionTranscript synth_session(std::uint64_t seed, int turns,
                                       std::vector<int> compaction_turns,
                                       SessionFlavor flavor = SessionFlavor::coding) {
  if (turns < 1) throw DomainError("synthetic session needs at least one turn");
  std::sort(compaction_turns.begin(), compaction_turns.end());
  SessionTranscript out;
  out.session_id = std::string("synth-") + (flavor == SessionFlavor::coding ? "coding" : "prose") +
                   "-" + std::to_string(seed);
  out.meta = {"synthetic", flavor == SessionFlavor::coding ? "agentic-coding" : "manuscript"};
  util::Engine rng(util::mix_seed(seed, 0x5e55));
  const auto& slots = flavor == SessionFlavor::coding ? detail::coding_slots() : detail::prose_slots();
  out.messages.reserve(static_cast<std::size_t>(turns));
  for (int turn = 1; turn <= turns; ++turn) {
    const bool user = (turn % 2) == 1;
    std::string_view tmpl;
    if (flavor == SessionFlavor::coding) {
      tmpl = user ? detail::pick(rng, detail::kCodingUser) : detail::pick(rng, detail::kCodingAssistant);
    } else {
      tmpl = user ? detail::pick(rng, detail::kProseUser) : detail::pick(rng, detail::kProseAssistant);
    }
    out.messages.push_back({turn, user ? Role::user : Role::assistant,
                            detail::fill_template(tmpl, rng, slots)});
  }
  int k = 0;
  for (int c : compaction_turns) {
    if (c < 1 || c > turns) {
      throw BoundsError("compaction turn " + std::to_string(c) + " outside [1, " +
                        std::to_string(turns) + "]");
    }
    out.compactions.push_back({++k, c});
  }
  validate(out);
  return out;
}

}  // namespace driftprobe
