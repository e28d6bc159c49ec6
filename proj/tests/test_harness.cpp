#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "driftprobe/config.hpp"
#include "driftprobe/harness.hpp"

using namespace driftprobe;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("driftprobe_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TargetSpec sim_target(const std::string& id, int onset) {
  TargetSpec t;
  t.target_id = id;
  t.api_model_id = id + "-model";
  t.endpoint = "sim://drift";
  SimProfile p;
  p.seed = 3;
  p.drift_onset_turn = onset;
  t.sim = p;
  return t;
}

TargetSpec sim_judge() {
  TargetSpec t;
  t.target_id = "judge";
  t.api_model_id = "rule-judge";
  t.endpoint = "sim://judge";
  return t;
}

ExperimentSpec small_experiment() {
  ExperimentSpec e;
  e.name = "exp";
  e.session_id = "s";
  e.targets = {"sim"};
  e.positions = sweep_positions({20, 120});
  e.stimuli = {identity_probes().front().id, "S2"};
  e.paraphrases = 2;
  return e;
}

Catalog catalog_for(const SessionTranscript& s) {
  Catalog c;
  c.targets = {"sim"};
  c.session_turns[s.session_id] = s.total_turns();
  return c;
}

}  // namespace

TEST(Filler, MatchesCharacterCountsAndRoles) {
  const auto s = synth_session(4, 200, {});
  const auto real = cut_prefix(s, 200);
  const auto filler = make_filler_prefix(real);
  ASSERT_EQ(filler.size(), real.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    EXPECT_EQ(filler[i].role, real[i].role);
    EXPECT_EQ(filler[i].turn, real[i].turn);
    EXPECT_EQ(util::char_count(filler[i].content), util::char_count(real[i].content));
    EXPECT_TRUE(detail::lorem_only(filler[i].content)) << filler[i].content;
  }
  EXPECT_EQ(make_filler_prefix(real), filler);
}

TEST(Filler, ExactLengthForEveryShortLength) {
  for (std::size_t n = 1; n <= 300; ++n) {
    const auto t = detail::lorem_text(n, n * 7);
    EXPECT_EQ(t.size(), n);
    EXPECT_NE(t.front(), ' ');
    EXPECT_NE(t.back(), ' ');
    EXPECT_EQ(t.find("  "), std::string::npos);
  }
}

TEST(Filler, MultibyteContentIsMatchedInCodePoints) {
  const std::vector<Message> real{{1, Role::user, "naïve café — ok"}, {2, Role::tool, ""}};
  const auto f = make_filler_prefix(real);
  EXPECT_EQ(util::char_count(f[0].content), util::char_count(real[0].content));
  EXPECT_TRUE(f[1].content.empty());
}

TEST(Fork, OrderIsPrefixAnchorDecayStimulus) {
  const std::vector<Message> prefix{{1, Role::user, "a"}, {2, Role::assistant, "b"}};
  const Message stim{0, Role::user, "q"};
  const auto anchor = build_anchor(AnchorId::A_COMBINED);
  const auto fork = build_fork(prefix, anchor, 2, stim);
  ASSERT_EQ(fork.size(), 2 + 3 + 4 + 1u);
  EXPECT_EQ(fork[0].content, "a");
  EXPECT_EQ(fork[2].content, identity_reminder_text());
  EXPECT_EQ(fork[5].content, decay_bank()[0].user);
  EXPECT_EQ(fork.back(), stim);

  const auto sys = build_fork(prefix, build_anchor(AnchorId::V3), 0, stim);
  ASSERT_EQ(sys.size(), 4u);
  EXPECT_EQ(sys[0].role, Role::system);
  EXPECT_EQ(sys[1].content, "a");

  EXPECT_THROW(build_fork(prefix, anchor, 0, {0, Role::assistant, "x"}), DomainError);
  EXPECT_EQ(build_fork(prefix, build_anchor(AnchorId::NONE), 0, stim).size(), 3u);
}

TEST(Plans, CartesianProductInFactorOrder) {
  const auto s = synth_session(1, 200, {});
  auto e = small_experiment();
  e.session_id = s.session_id;
  e.anchors = {AnchorId::NONE, AnchorId::A_COMBINED};
  e.decay_offsets = {0, 5};
  const auto plans = plan_cells(e, catalog_for(s));
  // 2 positions x 2 stimuli x 2 paraphrases x 2 arms x (NONE@0 + A@0 + A@5)
  EXPECT_EQ(plans.size(), 2u * 2 * 2 * 2 * 3);
  EXPECT_EQ(plans[0].arm, Arm::filler);
  EXPECT_EQ(plans[0].anchor, AnchorId::NONE);
  EXPECT_EQ(plans[1].anchor, AnchorId::A_COMBINED);
  EXPECT_EQ(plans[2].decay_offset, 5);
  EXPECT_EQ(plans[3].arm, Arm::claude_session);
  for (const auto& p : plans) {
    EXPECT_FALSE(p.anchor == AnchorId::NONE && p.decay_offset > 0);
    EXPECT_NO_THROW(validate(p));
  }
  std::set<std::string> keys;
  for (const auto& p : plans) keys.insert(cell_key(p));
  EXPECT_EQ(keys.size(), plans.size());
}

TEST(Plans, DanglingReferencesAreConfigErrors) {
  const auto s = synth_session(1, 200, {});
  auto e = small_experiment();
  e.session_id = s.session_id;
  auto bad = e;
  bad.targets = {"ghost"};
  EXPECT_THROW(plan_cells(bad, catalog_for(s)), ConfigError);
  bad = e;
  bad.stimuli = {"P999"};
  EXPECT_THROW(plan_cells(bad, catalog_for(s)), ConfigError);
  bad = e;
  bad.positions = sweep_positions({500});
  EXPECT_THROW(plan_cells(bad, catalog_for(s)), ConfigError);
  bad = e;
  bad.session_id = "other";
  EXPECT_THROW(plan_cells(bad, catalog_for(s)), ConfigError);
  CellPlan p;
  p.decay_offset = 3;
  EXPECT_THROW(validate(p), ConfigError);
}

TEST(Plans, ReplicatesCycleThroughTheParaphraseBank) {
  EXPECT_EQ(paraphrase_for_replicate(1, 10), 1u);
  EXPECT_EQ(paraphrase_for_replicate(10, 10), 10u);
  EXPECT_EQ(paraphrase_for_replicate(11, 10), 1u);
  EXPECT_EQ(paraphrase_for_replicate(25, 10), 5u);
  EXPECT_THROW(paraphrase_for_replicate(0, 10), BoundsError);
  CellPlan p;
  p.stimulus_id = identity_probes().front().id;
  p.paraphrase_index = 12;
  EXPECT_EQ(judge_question(p), identity_probes().front().paraphrases[1]);
  EXPECT_EQ(stimulus_message(p).content, probe_framing() + " " + identity_probes().front().paraphrases[1]);
  p.stimulus_id = "S1";
  EXPECT_EQ(stimulus_message(p).content, find_stressor("S1")->instruction);
}

TEST(Plans, JsonRoundTrip) {
  CellPlan p;
  p.experiment = "e";
  p.session_id = "s";
  p.target_id = "t";
  p.position = {"P1_pre_C1", 750, PositionKind::pre_compaction};
  p.stimulus_id = "S3";
  p.paraphrase_index = 4;
  p.arm = Arm::filler;
  p.anchor = AnchorId::V3;
  p.anchor_size = SizeClass::large;
  p.decay_offset = 10;
  p.framing = FramingMode::bare;
  const auto back = plan_from_json(to_json(p));
  EXPECT_EQ(to_json(back), to_json(p));
  EXPECT_EQ(cell_key(back), cell_key(p));
}

TEST(Store, PutGetLoad) {
  const auto dir = fresh_dir("store");
  CellStore store(dir);
  CellRecord r;
  r.plan.experiment = "e";
  r.plan.target_id = "t/x";
  r.plan.stimulus_id = "S1";
  r.plan.position = {"T5", 5, PositionKind::sweep};
  r.response.text = "yes";
  r.response.finish_state = FinishState::ok;
  r.response.attempt_count = 2;
  r.compliance = true;
  r.compliance_reason = ComplianceReason::ok;
  EXPECT_FALSE(store.contains(r.plan));
  store.put(r);
  EXPECT_TRUE(store.contains(r.plan));
  const auto back = store.get(r.plan);
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_EQ(store.load("e").size(), 1u);
  EXPECT_EQ(store.experiments(), std::vector<std::string>{"e"});
  EXPECT_THROW(store.load("missing"), NotFoundError);
  fs::remove_all(dir);
}

TEST(Execute, RunsScoresPersistsAndCaches) {
  const auto dir = fresh_dir("exec");
  const auto s = synth_session(2, 200, {});
  auto e = small_experiment();
  e.session_id = s.session_id;
  const auto plans = plan_cells(e, catalog_for(s));

  Provider provider;
  ExecutionContext ctx;
  ctx.provider = &provider;
  ctx.targets["sim"] = sim_target("sim", 100);
  ctx.sessions[s.session_id] = &s;
  ctx.judge = sim_judge();
  ctx.concurrency = 3;
  CellStore store(dir);

  const auto first = execute_plan(plans, ctx, store);
  EXPECT_EQ(first.completed, plans.size());
  EXPECT_EQ(first.failed, 0u);
  EXPECT_EQ(first.unscored, 0u);
  const auto records = store.load("exp");
  ASSERT_EQ(records.size(), plans.size());
  for (const auto& r : records) {
    if (r.is_probe_cell()) {
      ASSERT_TRUE(r.judge_score.has_value());
      EXPECT_TRUE(r.features.has_value());
      const int expected = r.plan.position.turn >= 100 && r.plan.arm == Arm::claude_session ? 0 : 3;
      EXPECT_EQ(*r.judge_score, expected) << r.plan.position.label << " " << to_string(r.plan.arm);
    } else {
      EXPECT_TRUE(r.compliance.has_value());
    }
  }

  const auto calls = provider.calls();
  const auto second = execute_plan(plans, ctx, store);
  EXPECT_EQ(second.cached, plans.size());
  EXPECT_EQ(second.completed, 0u);
  EXPECT_EQ(provider.calls(), calls);
  fs::remove_all(dir);
}

TEST(Execute, FailuresAreCountedAndNotPersisted) {
  const auto dir = fresh_dir("fail");
  const auto s = synth_session(2, 200, {});
  auto e = small_experiment();
  e.session_id = s.session_id;
  const auto plans = plan_cells(e, catalog_for(s));
  Provider provider;
  ExecutionContext ctx;
  ctx.provider = &provider;
  TargetSpec live;
  live.target_id = "sim";
  live.endpoint = "https://example.invalid/v1";
  live.auth = "DRIFTPROBE_NEVER_SET";
  ::unsetenv("DRIFTPROBE_NEVER_SET");
  ctx.targets["sim"] = live;
  ctx.sessions[s.session_id] = &s;
  CellStore store(dir);
  const auto sum = execute_plan(plans, ctx, store);
  EXPECT_EQ(sum.failed, plans.size());
  EXPECT_EQ(sum.errors.size(), plans.size());
  EXPECT_FALSE(store.contains(plans.front()));
  fs::remove_all(dir);
}

TEST(Config, LoadsInlineSynthSessionAndPlans) {
  const json doc = {
      {"seed", 7},
      {"judge", "judge"},
      {"targets", json::array({to_json(sim_target("sim", 100)), to_json(sim_judge())})},
      {"sessions", json::array({{{"id", "synth"}, {"synth", {{"seed", 1}, {"turns", 400}, {"compactions", {200}}}}}})},
      {"experiments",
       json::array({{{"name", "main"},
                     {"session", "synth"},
                     {"targets", {"sim"}},
                     {"positions", {{"computed", {{"padding", 50}}}}},
                     {"stimuli", {"identity", "stressors"}},
                     {"paraphrases", 1},
                     {"anchors", {"NONE", "A_COMBINED"}}}})}};
  const auto cfg = parse_config(doc, fresh_dir("cfg"));
  EXPECT_EQ(cfg.seed, 7u);
  const auto loaded = load_experiment(cfg, "main");
  EXPECT_EQ(loaded.session->session_id, "synth");
  EXPECT_EQ(loaded.spec.positions.size(), 3u);
  EXPECT_EQ(loaded.spec.stimuli.size(), 29u);
  EXPECT_EQ(loaded.plans.size(), 3u * 29 * 1 * 2 * 2);
  EXPECT_THROW(load_experiment(cfg, "nope"), ConfigError);
  EXPECT_THROW(expand_stimuli(json::array({"Mood"})), ConfigError);
  EXPECT_EQ(expand_stimuli(json::array({"Preference"})).size(), 4u);
}
