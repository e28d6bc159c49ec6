#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftprobe/error.hpp"
#include "driftprobe/harness.hpp"
#include "driftprobe/probekit.hpp"
#include "driftprobe/provider.hpp"
#include "driftprobe/transcript.hpp"
#include "driftprobe/util/fs.hpp"

// Project config file:
//
//   {
//     "store": "store",                     optional, relative to the file
//     "seed": 42, "resamples": 10000, "concurrency": 4,
//     "judge": "<target_id>",               optional; scores probe cells inline
//     "audit_judge": "<target_id>",         optional; second judge for agreement
//     "targets":  [TargetSpec...],
//     "sessions": [{"id": ..., "path": "x.jsonl"} |
//                  {"id": ..., "synth": {"seed", "turns", "compactions", "flavor"}}],
//     "experiments": [{
//       "name", "session", "targets": [...],
//       "positions": {"computed": {"padding": 50, "start_turn": 100}} | {"sweep": [turns]} |
//                    {"file": "positions.json"} | [{"label", "turn", "kind"}...],
//       "stimuli": [ids or groups: identity, negative_controls, stressors, <Category>],
//       "paraphrases": 10, "arms": [...], "anchors": [...], "anchor_sizes": [...],
//       "decay_offsets": [...], "framings": [...]
//     }]
//   }
namespace driftprobe {

struct SessionSource {
  std::string id;
  std::filesystem::path path;
  std::optional<json> synth;
};

struct ProjectConfig {
  std::filesystem::path base_dir;
  std::filesystem::path store;
  std::uint64_t seed = 42;
  int resamples = 10000;
  int concurrency = 4;
  std::optional<std::string> judge;
  std::optional<std::string> audit_judge;
  std::vector<TargetSpec> targets;
  std::vector<SessionSource> sessions;
  std::vector<json> experiments;

  const TargetSpec& target(const std::string& id) const {
    for (const auto& t : targets) {
      if (t.target_id == id) return t;
    }
    throw ConfigError("unknown target " + id);
  }

  const json& experiment(const std::string& name) const {
    for (const auto& e : experiments) {
      if (e.value("name", std::string()) == name) return e;
    }
    throw ConfigError("unknown experiment " + name);
  }
};

inline ProjectConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  ProjectConfig c;
  c.base_dir = base_dir;
  c.store = base_dir / doc.value("store", std::string("store"));
  c.seed = doc.value("seed", std::uint64_t{42});
  c.resamples = doc.value("resamples", 10000);
  c.concurrency = doc.value("concurrency", 4);
  if (doc.contains("targets")) c.targets = load_panel(doc.at("targets"));
  if (doc.contains("judge")) c.judge = doc.at("judge").get<std::string>();
  if (doc.contains("audit_judge")) c.audit_judge = doc.at("audit_judge").get<std::string>();
  for (const auto& s : doc.value("sessions", json::array())) {
    SessionSource src;
    src.id = s.at("id").get<std::string>();
    if (s.contains("synth")) {
      src.synth = s.at("synth");
    } else {
      src.path = base_dir / s.at("path").get<std::string>();
    }
    c.sessions.push_back(std::move(src));
  }
  c.experiments = doc.value("experiments", json::array());
  if (c.judge) c.target(*c.judge);
  if (c.audit_judge) c.target(*c.audit_judge);
  return c;
}

inline ProjectConfig load_config(const std::filesystem::path& path) {
  const auto doc = json::parse(util::read_file(path), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return parse_config(doc, path.parent_path());
}

inline SessionTranscript load_session(const SessionSource& src) {
  if (src.synth) {
    const auto& j = *src.synth;
    auto t = synth_session(j.value("seed", std::uint64_t{1}), j.value("turns", 2000),
                           j.value("compactions", std::vector<int>{}),
                           parse_flavor(j.value("flavor", std::string("coding"))));
    t.session_id = src.id;
    return t;
  }
  std::istringstream in(util::read_file(src.path));
  return parse_transcript(in, src.id);
}

inline std::vector<std::string> expand_stimuli(const json& list) {
  std::vector<std::string> out;
  for (const auto& item : list) {
    const auto s = item.get<std::string>();
    if (s == "identity") {
      for (const auto& p : identity_probes()) out.push_back(p.id);
    } else if (s == "negative_controls") {
      for (const auto& p : negative_controls()) out.push_back(p.id);
    } else if (s == "stressors") {
      for (const auto& st : stressors()) out.push_back(st.id);
    } else if (is_probe_id(s) || is_stressor_id(s)) {
      out.push_back(s);
    } else {
      for (const auto& p : probes_in(parse_category(s))) out.push_back(p.id);
    }
  }
  return out;
}

inline std::vector<PositionSpec> resolve_positions(const json& spec, const SessionTranscript& session,
                                                   const std::filesystem::path& base_dir) {
  if (spec.is_array()) return load_position_table(spec.dump());
  if (spec.contains("sweep")) return sweep_positions(spec.at("sweep").get<std::vector<int>>());
  if (spec.contains("file")) return load_position_table(util::read_file(base_dir / spec.at("file").get<std::string>()));
  const auto& c = spec.contains("computed") ? spec.at("computed") : spec;
  return position_table(session, c.value("padding", 50), c.value("start_turn", 100));
}

template <typename T, typename F>
std::vector<T> parse_list(const json& j, const char* key, std::vector<T> fallback, F parse) {
  if (!j.contains(key)) return fallback;
  std::vector<T> out;
  for (const auto& v : j.at(key)) out.push_back(parse(v));
  return out;
}

inline ExperimentSpec experiment_from_json(const json& j, const SessionTranscript& session,
                                           const std::filesystem::path& base_dir) {
  ExperimentSpec e;
  e.name = j.at("name").get<std::string>();
  e.session_id = j.at("session").get<std::string>();
  e.targets = j.at("targets").get<std::vector<std::string>>();
  e.positions = resolve_positions(j.value("positions", json{{"computed", json::object()}}), session, base_dir);
  e.stimuli = expand_stimuli(j.at("stimuli"));
  e.paraphrases = j.value("paraphrases", 10);
  e.arms = parse_list<Arm>(j, "arms", e.arms, [](const json& v) { return parse_arm(v.get<std::string>()); });
  e.anchors = parse_list<AnchorId>(j, "anchors", e.anchors,
                                   [](const json& v) { return parse_anchor_id(v.get<std::string>()); });
  e.anchor_sizes = parse_list<SizeClass>(j, "anchor_sizes", e.anchor_sizes,
                                         [](const json& v) { return parse_size_class(v.get<std::string>()); });
  e.decay_offsets = parse_list<int>(j, "decay_offsets", e.decay_offsets, [](const json& v) { return v.get<int>(); });
  e.framings = parse_list<FramingMode>(j, "framings", e.framings,
                                       [](const json& v) { return parse_framing(v.get<std::string>()); });
  return e;
}

// Sessions, targets and plans for one experiment, ready for execute_plan.
struct LoadedExperiment {
  ExperimentSpec spec;
  std::shared_ptr<SessionTranscript> session;
  std::vector<CellPlan> plans;
};

inline LoadedExperiment load_experiment(const ProjectConfig& cfg, const std::string& name) {
  const auto& j = cfg.experiment(name);
  const auto session_id = j.at("session").get<std::string>();
  const SessionSource* src = nullptr;
  for (const auto& s : cfg.sessions) {
    if (s.id == session_id) src = &s;
  }
  if (!src) throw ConfigError(name + ": unknown session " + session_id);
  LoadedExperiment out;
  out.session = std::make_shared<SessionTranscript>(load_session(*src));
  out.spec = experiment_from_json(j, *out.session, cfg.base_dir);
  Catalog catalog;
  for (const auto& t : cfg.targets) catalog.targets.insert(t.target_id);
  catalog.session_turns[session_id] = out.session->total_turns();
  out.plans = plan_cells(out.spec, catalog);
  return out;
}

}  // namespace driftprobe
