#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftprobe/data.hpp"
#include "driftprobe/error.hpp"
#include "driftprobe/fingerprint.hpp"
#include "driftprobe/probekit.hpp"
#include "driftprobe/provider.hpp"
#include "driftprobe/scorers.hpp"
#include "driftprobe/transcript.hpp"
#include "driftprobe/util/fs.hpp"
#include "driftprobe/util/hash.hpp"
#include "driftprobe/util/random.hpp"
#include "driftprobe/util/text.hpp"

namespace driftprobe {

enum class Arm { claude_session, filler };

inline std::string_view to_string(Arm a) { return a == Arm::filler ? "filler" : "claude_session"; }

inline Arm parse_arm(std::string_view s) {
  if (s == "filler") return Arm::filler;
  if (s == "claude_session" || s == "claude") return Arm::claude_session;
  throw ConfigError("unknown arm \"" + std::string(s) + "\"");
}

// ---------------------------------------------------------------------------
// Filler control
// ---------------------------------------------------------------------------

namespace detail {

struct LoremBank {
  std::vector<std::string> words;
  std::map<std::size_t, std::vector<std::size_t>> by_length;  // length -> indices
  std::size_t max_length = 0;
};

inline const LoremBank& lorem_bank() {
  static const LoremBank bank = [] {
    LoremBank b;
    for (auto w : util::split_words(data::file("lorem_words.txt"))) {
      b.by_length[w.size()].push_back(b.words.size());
      b.max_length = std::max(b.max_length, w.size());
      b.words.emplace_back(w);
    }
    for (std::size_t n = 1; n <= b.max_length; ++n) {
      if (!b.by_length.count(n)) throw ConfigError("lorem bank lacks a word of length " + std::to_string(n));
    }
    return b;
  }();
  return bank;
}

// Lorem text of exactly `length` characters built from whole bank words.
inline std::string lorem_text(std::size_t length, std::uint64_t seed) {
  const auto& bank = lorem_bank();
  util::Engine rng(seed);
  std::string out;
  out.reserve(length);
  std::size_t remaining = length;
  std::vector<std::size_t> eligible;
  while (remaining > 0) {
    if (!out.empty()) {
      out.push_back(' ');
      --remaining;
    }
    if (remaining <= bank.max_length) {
      const auto& exact = bank.by_length.at(remaining);
      out += bank.words[exact[util::uniform_index(rng, exact.size())]];
      break;
    }
    // Leave room for a separator and at least one more word.
    eligible.clear();
    for (const auto& [len, idx] : bank.by_length) {
      if (len + 2 <= remaining) eligible.insert(eligible.end(), idx.begin(), idx.end());
    }
    const auto& w = bank.words[eligible[util::uniform_index(rng, eligible.size())]];
    out += w;
    remaining -= w.size();
  }
  return out;
}

}  // namespace detail

// Same roles, turns and per-message character counts as `real`, with every
// content replaced by lorem words. Deterministic in the prefix.
inline std::vector<Message> make_filler_prefix(const std::vector<Message>& real) {
  std::vector<Message> out;
  out.reserve(real.size());
  for (const auto& m : real) {
    const auto len = util::char_count(m.content);
    const auto seed = util::mix_seed(static_cast<std::uint64_t>(m.turn) * 4 + static_cast<std::uint64_t>(m.role), len);
    out.push_back({m.turn, m.role, len == 0 ? std::string() : detail::lorem_text(len, seed)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fork construction
// ---------------------------------------------------------------------------

// prefix, anchor, 2N decay messages, stimulus. A system-placed anchor goes in
// front of the prefix instead.
inline std::vector<Message> build_fork(const std::vector<Message>& prefix, const AnchorRecipe& anchor,
                                       int decay_n, const Message& stimulus) {
  if (stimulus.role != Role::user) throw DomainError("stimulus must be a single user message");
  std::vector<Message> out;
  out.reserve(prefix.size() + anchor.messages.size() + 2 * static_cast<std::size_t>(std::max(0, decay_n)) + 1);
  const bool system = anchor.placement == Placement::system_prompt;
  if (system) out.insert(out.end(), anchor.messages.begin(), anchor.messages.end());
  out.insert(out.end(), prefix.begin(), prefix.end());
  if (!system) out.insert(out.end(), anchor.messages.begin(), anchor.messages.end());
  const auto decay = decay_filler_turns(decay_n);
  out.insert(out.end(), decay.begin(), decay.end());
  out.push_back(stimulus);
  return out;
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

struct CellPlan {
  std::string experiment;
  std::string session_id;
  std::string target_id;
  PositionSpec position;
  std::string stimulus_id;
  int paraphrase_index = 1;
  Arm arm = Arm::claude_session;
  AnchorId anchor = AnchorId::NONE;
  SizeClass anchor_size = SizeClass::medium;
  int decay_offset = 0;
  FramingMode framing = FramingMode::framed;
};

inline void validate(const CellPlan& p) {
  if (p.paraphrase_index < 1) throw ConfigError("paraphrase index must be >= 1");
  if (p.decay_offset < 0) throw ConfigError("decay offset must be >= 0");
  if (p.decay_offset > 0 && p.anchor == AnchorId::NONE) {
    throw ConfigError("a decay offset needs an anchor");
  }
}

inline json to_json(const CellPlan& p) {
  return {{"experiment", p.experiment},
          {"session_id", p.session_id},
          {"target_id", p.target_id},
          {"position_label", p.position.label},
          {"turn", p.position.turn},
          {"position_kind", to_string(p.position.kind)},
          {"stimulus_id", p.stimulus_id},
          {"paraphrase_index", p.paraphrase_index},
          {"arm", to_string(p.arm)},
          {"anchor", to_string(p.anchor)},
          {"anchor_size", to_string(p.anchor_size)},
          {"decay_offset", p.decay_offset},
          {"framing", to_string(p.framing)}};
}

inline CellPlan plan_from_json(const json& j) {
  CellPlan p;
  p.experiment = j.at("experiment").get<std::string>();
  p.session_id = j.at("session_id").get<std::string>();
  p.target_id = j.at("target_id").get<std::string>();
  p.position.label = j.at("position_label").get<std::string>();
  p.position.turn = j.at("turn").get<int>();
  p.position.kind = parse_position_kind(j.value("position_kind", std::string("sweep")));
  p.stimulus_id = j.at("stimulus_id").get<std::string>();
  p.paraphrase_index = j.at("paraphrase_index").get<int>();
  p.arm = parse_arm(j.at("arm").get<std::string>());
  p.anchor = parse_anchor_id(j.at("anchor").get<std::string>());
  p.anchor_size = parse_size_class(j.value("anchor_size", std::string("medium")));
  p.decay_offset = j.value("decay_offset", 0);
  p.framing = parse_framing(j.value("framing", std::string("framed")));
  return p;
}

// SHA-256 of the canonical (key-sorted, compact) plan serialization.
inline std::string cell_key(const CellPlan& p) { return util::sha256_hex(to_json(p).dump()); }

// Replicates past the end of the paraphrase bank cycle through it.
inline std::size_t paraphrase_for_replicate(int replicate, std::size_t bank_size) {
  if (replicate < 1 || bank_size == 0) throw BoundsError("replicate index must be >= 1");
  return (static_cast<std::size_t>(replicate) - 1) % bank_size + 1;
}

inline Message stimulus_message(const CellPlan& p) {
  if (const auto* probe = find_probe(p.stimulus_id)) {
    return frame_probe(*probe, paraphrase_for_replicate(p.paraphrase_index, probe->paraphrase_count()),
                       p.framing);
  }
  if (const auto* s = find_stressor(p.stimulus_id)) return stressor_message(*s);
  throw ConfigError("unknown stimulus " + p.stimulus_id);
}

// The question text a judge sees for a probe cell.
inline std::string judge_question(const CellPlan& p) {
  const auto* probe = find_probe(p.stimulus_id);
  if (!probe) throw ConfigError("not a probe: " + p.stimulus_id);
  return probe->paraphrases[paraphrase_for_replicate(p.paraphrase_index, probe->paraphrase_count()) - 1];
}

struct ExperimentSpec {
  std::string name;
  std::string session_id;
  std::vector<std::string> targets;
  std::vector<PositionSpec> positions;
  std::vector<std::string> stimuli;
  int paraphrases = 10;
  std::vector<Arm> arms{Arm::filler, Arm::claude_session};
  std::vector<AnchorId> anchors{AnchorId::NONE};
  std::vector<SizeClass> anchor_sizes{SizeClass::medium};
  std::vector<int> decay_offsets{0};
  std::vector<FramingMode> framings{FramingMode::framed};
};

// What plan_cells may reference: known targets and each session's length.
struct Catalog {
  std::set<std::string> targets;
  std::map<std::string, int> session_turns;
};

// Cartesian product in factor order target, position, stimulus, paraphrase,
// arm, anchor, size, decay offset, framing. Decay offsets > 0 are only
// paired with real anchors, so NONE contributes offset 0 alone.
inline std::vector<CellPlan> plan_cells(const ExperimentSpec& e, const Catalog& catalog) {
  if (e.name.empty()) throw ConfigError("experiment needs a name");
  const auto sess = catalog.session_turns.find(e.session_id);
  if (sess == catalog.session_turns.end()) {
    throw ConfigError(e.name + ": unknown session " + e.session_id);
  }
  for (const auto& t : e.targets) {
    if (!catalog.targets.count(t)) throw ConfigError(e.name + ": unknown target " + t);
  }
  validate_positions(e.positions);
  for (const auto& p : e.positions) {
    if (p.turn > sess->second) {
      throw ConfigError(e.name + ": position " + p.label + " at turn " + std::to_string(p.turn) +
                        " exceeds session length " + std::to_string(sess->second));
    }
  }
  for (const auto& s : e.stimuli) {
    if (!is_probe_id(s) && !is_stressor_id(s)) throw ConfigError(e.name + ": unknown stimulus " + s);
  }
  if (e.paraphrases < 1) throw ConfigError(e.name + ": paraphrases must be >= 1");
  for (int d : e.decay_offsets) {
    if (d < 0) throw ConfigError(e.name + ": decay offsets must be >= 0");
  }

  std::vector<CellPlan> out;
  for (const auto& target : e.targets) {
    for (const auto& pos : e.positions) {
      for (const auto& stim : e.stimuli) {
        for (int i = 1; i <= e.paraphrases; ++i) {
          for (auto arm : e.arms) {
            for (auto anchor : e.anchors) {
              for (auto size : e.anchor_sizes) {
                for (int decay : e.decay_offsets) {
                  if (anchor == AnchorId::NONE && decay > 0) continue;
                  for (auto framing : e.framings) {
                    out.push_back({e.name, e.session_id, target, pos, stim, i, arm, anchor, size,
                                   decay, framing});
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records and the store
// ---------------------------------------------------------------------------

struct CellRecord {
  CellPlan plan;
  std::string api_model_id;
  Completion response;
  std::optional<int> judge_score;
  std::string judge_model;
  std::optional<int> audit_judge_score;
  std::string audit_judge_model;
  std::optional<FingerprintVector> features;
  std::optional<bool> compliance;
  std::optional<ComplianceReason> compliance_reason;
  std::string collected_at;

  bool is_probe_cell() const { return is_probe_id(plan.stimulus_id); }
};

inline json to_json(const CellRecord& r) {
  json j = to_json(r.plan);
  j["cell_key"] = cell_key(r.plan);
  j["api_model_id"] = r.api_model_id;
  j["response_text"] = r.response.text;
  j["finish_state"] = to_string(r.response.finish_state);
  j["attempt_count"] = r.response.attempt_count;
  j["collected_at"] = r.collected_at;
  if (r.judge_score) {
    j["judge_score"] = *r.judge_score;
    j["judge_model"] = r.judge_model;
  }
  if (r.audit_judge_score) {
    j["audit_judge_score"] = *r.audit_judge_score;
    j["audit_judge_model"] = r.audit_judge_model;
  }
  if (r.features) {
    j["features"] = to_json(*r.features);
    j["lexicon_hash"] = data::lexicon_hash();
  }
  if (r.compliance) {
    j["compliance"] = *r.compliance;
    j["compliance_reason"] = to_string(r.compliance_reason.value_or(ComplianceReason::mismatch));
  }
  return j;
}

inline CellRecord record_from_json(const json& j) {
  CellRecord r;
  r.plan = plan_from_json(j);
  r.api_model_id = j.value("api_model_id", std::string());
  r.response.text = j.at("response_text").get<std::string>();
  r.response.finish_state = parse_finish_state(j.at("finish_state").get<std::string>());
  r.response.attempt_count = j.value("attempt_count", 1);
  r.response.target_id = r.plan.target_id;
  r.collected_at = j.value("collected_at", std::string());
  r.response.collected_at = r.collected_at;
  if (j.contains("judge_score")) {
    r.judge_score = j.at("judge_score").get<int>();
    r.judge_model = j.value("judge_model", std::string());
  }
  if (j.contains("audit_judge_score")) {
    r.audit_judge_score = j.at("audit_judge_score").get<int>();
    r.audit_judge_model = j.value("audit_judge_model", std::string());
  }
  if (j.contains("features")) r.features = fingerprint_from_json(j.at("features"));
  if (j.contains("compliance")) {
    r.compliance = j.at("compliance").get<bool>();
    r.compliance_reason = parse_compliance_reason(j.value("compliance_reason", std::string("mismatch")));
  }
  return r;
}

// One JSON file per cell under <root>/<experiment>/<target>/<position>/<key>.json.
class CellStore {
 public:
  explicit CellStore(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path path_for(const CellPlan& p) const {
    return root_ / util::safe_path_component(p.experiment) / util::safe_path_component(p.target_id) /
           util::safe_path_component(p.position.label) / (cell_key(p) + ".json");
  }

  bool contains(const CellPlan& p) const { return std::filesystem::exists(path_for(p)); }

  void put(const CellRecord& r) const { util::write_file_atomic(path_for(r.plan), to_json(r).dump(2) + "\n"); }

  CellRecord get(const CellPlan& p) const { return read(path_for(p)); }

  static CellRecord read(const std::filesystem::path& file) {
    const auto j = json::parse(util::read_file(file), nullptr, false);
    if (j.is_discarded()) throw ParseError(1, "corrupt cell record " + file.string());
    return record_from_json(j);
  }

  std::vector<std::string> experiments() const {
    std::vector<std::string> out;
    if (!std::filesystem::exists(root_)) return out;
    for (const auto& e : std::filesystem::directory_iterator(root_)) {
      if (e.is_directory()) out.push_back(e.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Every record of one experiment, ordered by file path.
  std::vector<CellRecord> load(const std::string& experiment) const {
    const auto dir = root_ / util::safe_path_component(experiment);
    if (!std::filesystem::is_directory(dir)) throw NotFoundError("no experiment " + experiment + " in store");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<CellRecord> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read(f));
    return out;
  }

 private:
  std::filesystem::path root_;
};

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct RunSummary {
  std::size_t completed = 0;
  std::size_t cached = 0;
  std::size_t empty = 0;
  std::size_t failed = 0;
  std::size_t unscored = 0;  // probe cells the judge could not score
  std::vector<std::string> errors;
};

struct ExecutionContext {
  Provider* provider = nullptr;
  std::map<std::string, TargetSpec> targets;
  std::map<std::string, const SessionTranscript*> sessions;
  std::optional<TargetSpec> judge;  // scores probe cells inline when set
  int concurrency = 4;
};

// Scores a fresh record in place: judge and fingerprint for probe cells,
// compliance for stressor cells. Empty responses stay unscored.
inline bool score_record(CellRecord& r, Provider& provider, const std::optional<TargetSpec>& judge_target) {
  if (r.response.finish_state != FinishState::ok) return true;
  if (const auto* s = find_stressor(r.plan.stimulus_id)) {
    const auto c = score_stressor(*s, r.response.text);
    r.compliance = c.pass;
    r.compliance_reason = c.reason;
    return true;
  }
  r.features = extract_features(r.response.text);
  if (!judge_target) return true;
  auto js = judge(provider, *judge_target, judge_question(r.plan), r.response.text);
  if (!js) return false;
  r.judge_score = js->value;
  r.judge_model = js->judge_model;
  return true;
}

namespace detail {

class PrefixCache {
 public:
  std::shared_ptr<const std::vector<Message>> get(const SessionTranscript& s, int turn, Arm arm) {
    const auto key = std::make_tuple(s.session_id, turn, arm);
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto real = cut_prefix(s, turn);
    auto value = std::make_shared<const std::vector<Message>>(
        arm == Arm::filler ? make_filler_prefix(real) : std::move(real));
    std::lock_guard lock(mu_);
    return cache_.emplace(key, std::move(value)).first->second;
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<std::string, int, Arm>, std::shared_ptr<const std::vector<Message>>> cache_;
};

}  // namespace detail

// Runs every plan that has no stored record yet. Forks are built on copies;
// transcripts are only read.
inline RunSummary execute_plan(const std::vector<CellPlan>& plans, ExecutionContext& ctx, const CellStore& store) {
  if (!ctx.provider) throw ConfigError("execute_plan needs a provider");
  RunSummary summary;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  detail::PrefixCache prefixes;

  auto note = [&](auto&& fn) {
    std::lock_guard lock(mu);
    fn(summary);
  };

  auto run_one = [&](const CellPlan& plan) {
    if (store.contains(plan)) {
      note([](RunSummary& s) { ++s.cached; });
      return;
    }
    try {
      validate(plan);
      const auto t = ctx.targets.find(plan.target_id);
      if (t == ctx.targets.end()) throw ConfigError("unknown target " + plan.target_id);
      const auto s = ctx.sessions.find(plan.session_id);
      if (s == ctx.sessions.end() || !s->second) throw ConfigError("unknown session " + plan.session_id);
      const auto prefix = prefixes.get(*s->second, plan.position.turn, plan.arm);
      const auto fork = build_fork(*prefix, build_anchor(plan.anchor, plan.anchor_size), plan.decay_offset,
                                   stimulus_message(plan));
      auto completion = ctx.provider->complete(t->second, fork);
      if (completion.finish_state == FinishState::error) {
        note([&](RunSummary& s) {
          ++s.failed;
          s.errors.push_back(plan.target_id + "/" + plan.position.label + "/" + plan.stimulus_id + ": " +
                             completion.error);
        });
        return;
      }
      CellRecord r;
      r.plan = plan;
      r.api_model_id = t->second.api_model_id;
      r.collected_at = completion.collected_at;
      r.response = std::move(completion);
      const bool scored = score_record(r, *ctx.provider, ctx.judge);
      store.put(r);
      note([&](RunSummary& s) {
        if (r.response.finish_state == FinishState::empty) {
          ++s.empty;
        } else {
          ++s.completed;
        }
        if (!scored) ++s.unscored;
      });
    } catch (const std::exception& e) {
      note([&](RunSummary& s) {
        ++s.failed;
        s.errors.push_back(plan.target_id + "/" + plan.position.label + "/" + plan.stimulus_id + ": " + e.what());
      });
    }
  };

  const auto workers = static_cast<std::size_t>(std::max(1, ctx.concurrency));
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < plans.size(); i = next.fetch_add(1)) run_one(plans[i]);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, plans.size()); ++w) pool.emplace_back(worker);
  }
  return summary;
}

}  // namespace driftprobe
