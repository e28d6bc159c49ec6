#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftprobe/data.hpp"
#include "driftprobe/error.hpp"
#include "driftprobe/transcript.hpp"

namespace driftprobe {

// ---------------------------------------------------------------------------
// Identity probes
// ---------------------------------------------------------------------------

enum class Category { Identity, Experience, Preference, Relational, CodingSelf, NegativeControl };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::Identity: return "Identity";
    case Category::Experience: return "Experience";
    case Category::Preference: return "Preference";
    case Category::Relational: return "Relational";
    case Category::CodingSelf: return "CodingSelf";
    case Category::NegativeControl: return "NegativeControl";
  }
  return "Identity";
}

inline Category parse_category(std::string_view s) {
  for (auto c : {Category::Identity, Category::Experience, Category::Preference,
                 Category::Relational, Category::CodingSelf, Category::NegativeControl}) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown probe category \"" + std::string(s) + "\"");
}

struct Probe {
  std::string id;
  Category category = Category::Identity;
  std::string text;                      // verbatim probe; equals paraphrases[0]
  std::vector<std::string> paraphrases;  // paraphrase 1 is the verbatim text

  std::size_t paraphrase_count() const { return paraphrases.size(); }
};

namespace detail {

struct ProbeBank {
  std::string framing;
  std::vector<Probe> probes;
};

inline const ProbeBank& probe_bank() {
  static const ProbeBank bank = [] {
    const auto doc = json::parse(data::file("probes.json"));
    ProbeBank b;
    b.framing = doc.at("framing").get<std::string>();
    for (const auto& rec : doc.at("probes")) {
      Probe p;
      p.id = rec.at("id").get<std::string>();
      p.category = parse_category(rec.at("category").get<std::string>());
      p.paraphrases = rec.at("paraphrases").get<std::vector<std::string>>();
      if (p.paraphrases.empty()) throw ConfigError("probe " + p.id + " has no paraphrases");
      p.text = p.paraphrases.front();
      b.probes.push_back(std::move(p));
    }
    return b;
  }();
  return bank;
}

}  // namespace detail

// The fixed topic-shift framing placed before every framed probe.
inline const std::string& probe_framing() { return detail::probe_bank().framing; }

// The full shipped battery: 25 identity probes followed by 5 negative controls.
inline const std::vector<Probe>& probe_suite() { return detail::probe_bank().probes; }

inline std::vector<Probe> probes_in(Category c) {
  std::vector<Probe> out;
  for (const auto& p : probe_suite()) {
    if (p.category == c) out.push_back(p);
  }
  return out;
}

inline std::vector<Probe> identity_probes() {
  std::vector<Probe> out;
  for (const auto& p : probe_suite()) {
    if (p.category != Category::NegativeControl) out.push_back(p);
  }
  return out;
}

inline std::vector<Probe> negative_controls() { return probes_in(Category::NegativeControl); }

inline const Probe* find_probe(std::string_view id) {
  const auto& suite = probe_suite();
  auto it = std::find_if(suite.begin(), suite.end(), [&](const Probe& p) { return p.id == id; });
  return it == suite.end() ? nullptr : &*it;
}

enum class FramingMode { framed, bare };

inline std::string_view to_string(FramingMode f) { return f == FramingMode::framed ? "framed" : "bare"; }

inline FramingMode parse_framing(std::string_view s) {
  if (s == "framed") return FramingMode::framed;
  if (s == "bare") return FramingMode::bare;
  throw ConfigError("unknown framing mode \"" + std::string(s) + "\"");
}

// Stimulus message for paraphrase `index` (1-based): framing, one space, then
// the paraphrase. Bare mode drops the framing. Injected messages carry turn 0.
inline Message frame_probe(const Probe& probe, std::size_t index,
                           FramingMode mode = FramingMode::framed) {
  if (index < 1 || index > probe.paraphrase_count()) {
    throw BoundsError("paraphrase index " + std::to_string(index) + " outside [1, " +
                      std::to_string(probe.paraphrase_count()) + "] for " + probe.id);
  }
  const auto& text = probe.paraphrases[index - 1];
  if (mode == FramingMode::bare) return {0, Role::user, text};
  return {0, Role::user, probe_framing() + " " + text};
}

// ---------------------------------------------------------------------------
// Format-contract stressors
// ---------------------------------------------------------------------------

enum class ConstraintKind { byte_exact, soft_format };

struct Stressor {
  std::string id;
  std::string instruction;
  ConstraintKind constraint_kind = ConstraintKind::soft_format;
  std::optional<std::string> expected_exact;  // set iff byte_exact
};

inline const std::vector<Stressor>& stressors() {
  static const std::vector<Stressor> bank = [] {
    const auto doc = json::parse(data::file("stressors.json"));
    std::vector<Stressor> out;
    for (const auto& rec : doc.at("stressors")) {
      Stressor s;
      s.id = rec.at("id").get<std::string>();
      s.instruction = rec.at("instruction").get<std::string>();
      const auto kind = rec.at("constraint_kind").get<std::string>();
      s.constraint_kind = kind == "byte_exact" ? ConstraintKind::byte_exact : ConstraintKind::soft_format;
      if (rec.contains("expected_exact")) s.expected_exact = rec.at("expected_exact").get<std::string>();
      if ((s.constraint_kind == ConstraintKind::byte_exact) != s.expected_exact.has_value()) {
        throw ConfigError("stressor " + s.id + ": expected_exact must be set iff byte_exact");
      }
      out.push_back(std::move(s));
    }
    return out;
  }();
  return bank;
}

inline const Stressor* find_stressor(std::string_view id) {
  const auto& bank = stressors();
  auto it = std::find_if(bank.begin(), bank.end(), [&](const Stressor& s) { return s.id == id; });
  return it == bank.end() ? nullptr : &*it;
}

inline Message stressor_message(const Stressor& s) { return {0, Role::user, s.instruction}; }

// ---------------------------------------------------------------------------
// Anchors
// ---------------------------------------------------------------------------

enum class AnchorId { NONE, V0, V2, A_COMBINED, C_TWOSHOT, V3 };
enum class Placement { user_turn, system_prompt };
enum class SizeClass { small, medium, large };

inline std::string_view to_string(AnchorId a) {
  switch (a) {
    case AnchorId::NONE: return "NONE";
    case AnchorId::V0: return "V0";
    case AnchorId::V2: return "V2";
    case AnchorId::A_COMBINED: return "A_COMBINED";
    case AnchorId::C_TWOSHOT: return "C_TWOSHOT";
    case AnchorId::V3: return "V3";
  }
  return "NONE";
}

inline AnchorId parse_anchor_id(std::string_view s) {
  for (auto a : {AnchorId::NONE, AnchorId::V0, AnchorId::V2, AnchorId::A_COMBINED,
                 AnchorId::C_TWOSHOT, AnchorId::V3}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown anchor recipe \"" + std::string(s) + "\"");
}

inline std::string_view to_string(Placement p) {
  return p == Placement::user_turn ? "user_turn" : "system_prompt";
}

inline std::string_view to_string(SizeClass s) {
  switch (s) {
    case SizeClass::small: return "small";
    case SizeClass::medium: return "medium";
    case SizeClass::large: return "large";
  }
  return "medium";
}

inline SizeClass parse_size_class(std::string_view s) {
  if (s == "small") return SizeClass::small;
  if (s == "medium") return SizeClass::medium;
  if (s == "large") return SizeClass::large;
  throw ConfigError("unknown anchor size class \"" + std::string(s) + "\"");
}

// Character budgets standing in for the small/medium/large token classes.
inline std::size_t char_budget(SizeClass s) {
  switch (s) {
    case SizeClass::small: return 160;
    case SizeClass::medium: return 420;
    case SizeClass::large: return 1100;
  }
  return 420;
}

struct AnchorRecipe {
  AnchorId id = AnchorId::NONE;
  Placement placement = Placement::user_turn;
  SizeClass size_class = SizeClass::small;
  std::vector<Message> messages;

  std::size_t char_count() const {
    std::size_t n = 0;
    for (const auto& m : messages) n += util::char_count(m.content);
    return n;
  }
};

namespace detail {

struct DemoPair {
  std::string user;
  std::string assistant;
};

struct AnchorTexts {
  std::string identity_reminder;
  DemoPair format_demo;
  std::vector<DemoPair> extra_format_demos;
  std::vector<DemoPair> twoshot_demos;
};

inline const AnchorTexts& anchor_texts() {
  static const AnchorTexts texts = [] {
    const auto doc = json::parse(data::file("anchors.json"));
    auto pair = [](const json& j) {
      return DemoPair{j.at("user").get<std::string>(), j.at("assistant").get<std::string>()};
    };
    AnchorTexts t;
    t.identity_reminder = doc.at("identity_reminder").get<std::string>();
    t.format_demo = pair(doc.at("format_demo"));
    for (const auto& d : doc.at("extra_format_demos")) t.extra_format_demos.push_back(pair(d));
    for (const auto& d : doc.at("twoshot_demos")) t.twoshot_demos.push_back(pair(d));
    return t;
  }();
  return texts;
}

inline void append_demo(std::vector<Message>& out, const DemoPair& d) {
  out.push_back({0, Role::user, d.user});
  out.push_back({0, Role::assistant, d.assistant});
}

}  // namespace detail

inline const std::string& identity_reminder_text() { return detail::anchor_texts().identity_reminder; }

// Builds the anchor message sequence.
//   V0         one user turn carrying the identity reminder
//   V2         one-shot bare-command demo pair
//   A_COMBINED V0 then V2; `size` selects small (V0 only), medium (V0+V2,
//              the shipped recipe) or large (V0+V2 plus two extra demos)
//   C_TWOSHOT  two demo pairs, no identity sentence
//   V3         A_COMBINED content rendered into one system message
//   NONE       nothing
// V0, V2 and C_TWOSHOT have a fixed size class and ignore `size`.
inline AnchorRecipe build_anchor(AnchorId id, SizeClass size = SizeClass::medium) {
  const auto& t = detail::anchor_texts();
  AnchorRecipe r;
  r.id = id;
  switch (id) {
    case AnchorId::NONE:
      r.size_class = SizeClass::small;
      break;
    case AnchorId::V0:
      r.size_class = SizeClass::small;
      r.messages.push_back({0, Role::user, t.identity_reminder});
      break;
    case AnchorId::V2:
      r.size_class = SizeClass::small;
      detail::append_demo(r.messages, t.format_demo);
      break;
    case AnchorId::C_TWOSHOT:
      r.size_class = SizeClass::medium;
      for (const auto& d : t.twoshot_demos) detail::append_demo(r.messages, d);
      break;
    case AnchorId::A_COMBINED:
      r.size_class = size;
      r.messages.push_back({0, Role::user, t.identity_reminder});
      if (size != SizeClass::small) detail::append_demo(r.messages, t.format_demo);
      if (size == SizeClass::large) {
        for (const auto& d : t.extra_format_demos) detail::append_demo(r.messages, d);
      }
      break;
    case AnchorId::V3: {
      const auto combined = build_anchor(AnchorId::A_COMBINED, size);
      std::string text;
      for (const auto& m : combined.messages) {
        if (m.role == Role::user && m.content == t.identity_reminder) {
          text += m.content;
        } else {
          text += (text.empty() ? "" : "\n");
          text += m.role == Role::user ? "User: " : "Assistant: ";
          text += m.content;
        }
      }
      r.size_class = size;
      r.placement = Placement::system_prompt;
      r.messages.push_back({0, Role::system, std::move(text)});
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Decay fillers
// ---------------------------------------------------------------------------

struct DecaySchedule {
  std::vector<int> offsets{0, 1, 5, 10, 20};
  std::pair<std::string, std::string> filler_pair{"run the tests", "done"};
};

inline void validate(const DecaySchedule& d) {
  for (std::size_t i = 0; i < d.offsets.size(); ++i) {
    if (d.offsets[i] < 0) throw ConfigError("decay offsets must be non-negative");
    if (i > 0 && d.offsets[i - 1] >= d.offsets[i]) {
      throw ConfigError("decay offsets must be strictly increasing");
    }
  }
}

inline const std::vector<detail::DemoPair>& decay_bank() {
  static const std::vector<detail::DemoPair> bank = [] {
    const auto doc = json::parse(data::file("decay_fillers.json"));
    std::vector<detail::DemoPair> out;
    for (const auto& p : doc.at("pairs")) {
      out.push_back({p.at("user").get<std::string>(), p.at("assistant").get<std::string>()});
    }
    return out;
  }();
  return bank;
}

// N generic coding-style user/assistant pairs, drawn cyclically from the bank.
inline std::vector<Message> decay_filler_turns(int n) {
  if (n < 0) throw DomainError("decay offset must be >= 0");
  const auto& bank = decay_bank();
  std::vector<Message> out;
  out.reserve(static_cast<std::size_t>(n) * 2);
  for (int i = 0; i < n; ++i) {
    detail::append_demo(out, bank[static_cast<std::size_t>(i) % bank.size()]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stimulus identifiers
// ---------------------------------------------------------------------------

inline bool is_stressor_id(std::string_view id) { return find_stressor(id) != nullptr; }
inline bool is_probe_id(std::string_view id) { return find_probe(id) != nullptr; }

}  // namespace driftprobe
