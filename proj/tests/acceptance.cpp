// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "driftprobe/driftprobe.hpp"

using namespace driftprobe;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kTrajectoryTol = 0.05;        // #1 post-onset gap vs programmed magnitude
constexpr double kRuntimeBudgetSec = 60.0;     // #1
constexpr double kPermutationTol = 0.02;       // #2 monte-carlo vs exact
constexpr double kAgreementTol = 1e-9;         // #4
constexpr double kShareLo = 0.40;              // #5
constexpr double kShareHi = 0.60;              // #5
constexpr double kFillerLengthTol = 0.005;     // #7 relative
constexpr double kPc1Floor = 0.999;            // #8
constexpr double kReconstructionTol = 1e-9;    // #8
constexpr double kFractionSumTol = 1e-9;       // #8

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("driftprobe_acceptance_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

TargetSpec drift_target(const std::string& id, int onset, double magnitude) {
  TargetSpec t;
  t.target_id = id;
  t.api_model_id = id + "-model";
  t.endpoint = "sim://drift";
  SimProfile p;
  p.seed = 2024;
  p.drift_onset_turn = onset;
  p.drift_magnitude = magnitude;
  p.anchor_sensitivity = true;
  t.sim = p;
  return t;
}

TargetSpec rule_judge() {
  TargetSpec t;
  t.target_id = "judge";
  t.api_model_id = "rule-judge";
  t.endpoint = "sim://judge";
  return t;
}

std::vector<std::string> ids(const std::vector<Probe>& probes) {
  std::vector<std::string> out;
  for (const auto& p : probes) out.push_back(p.id);
  return out;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto session = synth_session(1, 2000, {450, 1200});
  const auto dir = scratch("c1");
  ExperimentSpec e;
  e.name = "trajectory";
  e.session_id = session.session_id;
  e.targets = {"sim"};
  e.positions = position_table(session, 100);
  e.stimuli = ids(identity_probes());
  e.paraphrases = 2;
  e.anchors = {AnchorId::NONE, AnchorId::A_COMBINED};
  Catalog cat;
  cat.targets = {"sim"};
  cat.session_turns[session.session_id] = session.total_turns();
  const auto plans = plan_cells(e, cat);

  Provider provider;
  ExecutionContext ctx;
  ctx.provider = &provider;
  ctx.targets["sim"] = drift_target("sim", 500, 3.0);
  ctx.sessions[session.session_id] = &session;
  ctx.judge = rule_judge();
  CellStore store(dir);
  const auto sum = execute_plan(plans, ctx, store);
  const auto cells = aggregate(store.load("trajectory"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<stats::CellAggregate> bare, anchored;
  for (const auto& c : cells) (c.anchor == "NONE" ? bare : anchored).push_back(c);
  const auto g = stats::drift_gap(bare);
  const auto a = stats::drift_gap(anchored);

  bool ok = sum.failed == 0 && sum.unscored == 0 && secs < kRuntimeBudgetSec;
  int before = 0, after = 0;
  std::string worst;
  for (const auto& pg : g.per_position) {
    if (pg.turn < 500) {
      ++before;
      if (pg.gap != 0.0) {
        ok = false;
        worst += " " + pg.label + "=" + f3(pg.gap);
      }
    } else {
      ++after;
      if (std::abs(pg.gap - 3.0) > kTrajectoryTol) {
        ok = false;
        worst += " " + pg.label + "=" + f3(pg.gap);
      }
    }
  }
  for (const auto& pg : a.per_position) {
    if (pg.claude_mean != 3.0) {
      ok = false;
      worst += " anchored " + pg.label + "=" + f3(pg.claude_mean);
    }
  }
  ok = ok && before > 0 && after > 0;
  fs::remove_all(dir);
  return {ok, std::to_string(plans.size()) + " cells, " + std::to_string(before) + " positions before onset at Δ=0, " +
                  std::to_string(after) + " after at Δ=3±" + f3(kTrajectoryTol) +
                  ", A_COMBINED claude mean 3.0 everywhere, " + f3(secs) + " s" + (worst.empty() ? "" : ";" + worst)};
}

double exact_by_enumeration(const std::vector<double>& d) {
  const auto n = d.size();
  double obs = 0, scale = 0;
  for (double x : d) {
    obs += x;
    scale += std::abs(x);
  }
  const double thr = std::abs(obs) - 1e-9 * std::max(1.0, scale);
  std::uint64_t hits = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1) ? -d[i] : d[i];
    hits += std::abs(s) >= thr;
  }
  return static_cast<double>(hits) / static_cast<double>(std::uint64_t{1} << n);
}

Outcome criterion_2() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(1, 12);
  std::normal_distribution<double> g(0.3, 1.0);
  double worst = 0;
  bool exact_ok = true;
  for (int f = 0; f < 50; ++f) {
    std::vector<double> d(static_cast<std::size_t>(size(rng)));
    for (auto& x : d) x = std::round(g(rng) * 3.0) / 3.0;
    const double oracle = exact_by_enumeration(d);
    const auto ex = stats::paired_permutation(d, 10000, 42, stats::PermutationMode::exact);
    const auto mc = stats::paired_permutation(d, 10000, 42, stats::PermutationMode::monte_carlo);
    exact_ok = exact_ok && ex.p == oracle;
    worst = std::max(worst, std::abs(mc.p - ex.p));
  }
  const auto hand = stats::paired_permutation(std::vector<double>(10, 1.0), 10000, 42, stats::PermutationMode::exact);
  const bool ok = exact_ok && worst <= kPermutationTol && hand.p == 2.0 / 1024.0;
  return {ok, "50 fixtures, max |p_mc - p_exact| = " + f3(worst) + ", exact mode equals enumeration: " +
                  (exact_ok ? "yes" : "no") + ", all-positive n=10 p = " + std::to_string(hand.p * 1024) + "/1024"};
}

std::vector<double> holm_step_down(const std::vector<double>& p) {
  const auto m = p.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  double prev = 0;
  for (std::size_t k = 0; k < m; ++k) {
    double v = static_cast<double>(m - k) * p[order[k]];
    if (v > 1.0) v = 1.0;
    if (v < prev) v = prev;
    out[order[k]] = v;
    prev = v;
  }
  return out;
}

Outcome criterion_3() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int matched = 0;
  for (int f = 0; f < 100; ++f) {
    std::vector<double> p(static_cast<std::size_t>(size(rng)));
    for (auto& x : p) x = u(rng) * u(rng);
    matched += stats::holm_correct(p) == holm_step_down(p);
  }
  const auto ex = stats::holm_correct({0.01, 0.02, 0.04});
  const bool ex_ok = std::abs(ex[0] - 0.03) < 1e-15 && std::abs(ex[1] - 0.04) < 1e-15 && std::abs(ex[2] - 0.04) < 1e-15;
  return {matched == 100 && ex_ok, std::to_string(matched) + "/100 vectors match the step-down reference exactly; "
                                       "(0.01,0.02,0.04) -> (" + f3(ex[0]) + "," + f3(ex[1]) + "," + f3(ex[2]) + ")"};
}

double kappa_direct(const std::vector<std::pair<int, int>>& pairs) {
  double table[4][4] = {};
  for (auto [a, b] : pairs) table[a][b] += 1;
  const double n = static_cast<double>(pairs.size());
  double po = 0, pe = 0;
  for (int i = 0; i < 4; ++i) {
    po += table[i][i] / n;
    double row = 0, col = 0;
    for (int j = 0; j < 4; ++j) {
      row += table[i][j];
      col += table[j][i];
    }
    pe += (row / n) * (col / n);
  }
  return (po - pe) / (1 - pe);
}

double spearman_direct(const std::vector<std::pair<int, int>>& pairs) {
  auto ranks = [&](bool first) {
    std::vector<double> r;
    for (const auto& p : pairs) {
      const int v = first ? p.first : p.second;
      double less = 0, equal = 0;
      for (const auto& q : pairs) {
        const int w = first ? q.first : q.second;
        less += w < v;
        equal += w == v;
      }
      r.push_back(less + (equal + 1) / 2);
    }
    return r;
  };
  const auto ra = ranks(true), rb = ranks(false);
  const double n = static_cast<double>(pairs.size());
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sa += ra[i];
    sb += rb[i];
    sab += ra[i] * rb[i];
    saa += ra[i] * ra[i];
    sbb += rb[i] * rb[i];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

Outcome criterion_4() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> label(0, 3), noise(-1, 1), size(5, 60);
  double worst = 0;
  int checked = 0;
  for (int f = 0; f < 100; ++f) {
    std::vector<std::pair<int, int>> pairs;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) {
      const int a = label(rng);
      pairs.emplace_back(a, std::clamp(f % 3 == 0 ? label(rng) : a + noise(rng), 0, 3));
    }
    const auto r = stats::agreement(pairs);
    if (!r.kappa || !r.spearman) continue;
    worst = std::max(worst, std::abs(*r.kappa - kappa_direct(pairs)));
    worst = std::max(worst, std::abs(*r.spearman - spearman_direct(pairs)));
    ++checked;
  }
  const auto perfect = stats::agreement({{0, 0}, {1, 1}, {2, 2}, {3, 3}, {1, 1}});
  const bool ok = checked >= 95 && worst <= kAgreementTol && perfect.kappa == 1.0 && perfect.spearman == 1.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", worst);
  return {ok, std::to_string(checked) + " non-degenerate tables, max deviation " + buf + ", perfect agreement κ=ρ=1"};
}

Outcome criterion_5() {
  double share_sum = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> groups(5);
    for (auto& grp : groups) {
      const double mu = g(rng);
      for (int i = 0; i < 200; ++i) grp.push_back(mu + g(rng));
    }
    share_sum += stats::variance_decomposition(groups).between_share;
  }
  const double mean_share = share_sum / 20.0;
  const auto flat = stats::variance_decomposition({{1, 2, 3, 4}, {4, 3, 2, 1}, {2.5, 2.5, 2.5, 2.5}});
  const bool ok = mean_share >= kShareLo && mean_share <= kShareHi && flat.sigma2_between == 0.0;
  return {ok, "mean between-share over seeds 1..20 = " + f3(mean_share) + "; equal-means between = " +
                  f3(flat.sigma2_between)};
}

Outcome criterion_6() {
  std::ifstream in(std::string(DRIFTPROBE_TEST_DATA) + "/stressor_fixtures.json");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto doc = json::parse(ss.str());
  std::size_t total = 0, passed = 0;
  std::string first_bad;
  for (const auto& row : doc.at("rows")) {
    ++total;
    const auto* s = find_stressor(row.at("stressor").get<std::string>());
    const ComplianceResult want{row.at("stressor").get<std::string>(), row.at("pass").get<bool>(),
                                parse_compliance_reason(row.at("reason").get<std::string>())};
    if (s && score_stressor(*s, row.at("response").get<std::string>()) == want) {
      ++passed;
    } else if (first_bad.empty()) {
      first_bad = row.at("response").dump();
    }
  }
  return {total >= 30 && passed == total,
          std::to_string(passed) + "/" + std::to_string(total) + " fixture rows" +
              (first_bad.empty() ? "" : ", first mismatch " + first_bad)};
}

Outcome criterion_7() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> turns(2, 400);
  double worst = 0;
  bool roles = true, deterministic = true;
  for (int f = 0; f < 100; ++f) {
    const int n = turns(rng);
    const auto s = synth_session(rng(), n, {}, f % 2 ? SessionFlavor::prose : SessionFlavor::coding);
    const auto real = cut_prefix(s, 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n)));
    const auto filler = make_filler_prefix(real);
    std::size_t real_chars = 0, filler_chars = 0;
    roles = roles && filler.size() == real.size();
    for (std::size_t i = 0; i < real.size() && i < filler.size(); ++i) {
      roles = roles && filler[i].role == real[i].role;
      real_chars += util::char_count(real[i].content);
      filler_chars += util::char_count(filler[i].content);
    }
    worst = std::max(worst, std::abs(static_cast<double>(filler_chars) - static_cast<double>(real_chars)) /
                                static_cast<double>(real_chars));
    const auto again = make_filler_prefix(real);
    for (std::size_t i = 0; i < filler.size(); ++i) deterministic = deterministic && again[i].content == filler[i].content;
  }
  return {roles && deterministic && worst <= kFillerLengthTol,
          "100 prefixes, max relative char-count deviation " + f3(worst) + ", roles identical: " +
              (roles ? "yes" : "no") + ", byte-exact determinism: " + (deterministic ? "yes" : "no")};
}

Outcome criterion_8() {
  std::vector<FingerprintVector> rank1;
  for (int t = 0; t < 20; ++t) {
    FingerprintVector v;
    v.hedge_density = 0.5 + 0.7 * t;
    v.experiential_density = 3.0 - 0.1 * t;
    v.preference_commit = t % 20;
    v.em_dash_count = 3 * t;
    v.paragraph_breaks = t + 2;
    v.log_length = 4.5 + 0.05 * t;
    rank1.push_back(v);
  }
  const double pc1 = fit_pca(rank1).explained_fractions[0];

  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 1);
  std::uniform_int_distribution<int> k(0, 5);
  std::vector<FingerprintVector> rows;
  for (int i = 0; i < 60; ++i) {
    FingerprintVector v;
    v.hedge_density = 2 + g(rng);
    v.experiential_density = 1 + g(rng) + 0.4 * v.hedge_density;
    v.preference_commit = k(rng) % 2;
    v.em_dash_count = k(rng);
    v.paragraph_breaks = k(rng);
    v.log_length = 5 + 0.3 * g(rng);
    rows.push_back(v);
  }
  const auto m = fit_pca(rows);
  double err = 0;
  for (const auto& r : rows) {
    const auto z = standardize(m, r);
    const auto back = reconstruct(m, project(m, r, kFeatureDims));
    for (std::size_t j = 0; j < kFeatureDims; ++j) err = std::max(err, std::abs(back[j] - z[j]));
  }
  double sum = 0;
  for (double f : m.explained_fractions) sum += f;
  char buf[96];
  std::snprintf(buf, sizeof buf, "PC1 fraction %.6f, max reconstruction error %.2e, fraction sum - 1 = %.2e", pc1, err,
                sum - 1.0);
  return {pc1 >= kPc1Floor && err <= kReconstructionTol && std::abs(sum - 1.0) <= kFractionSumTol, buf};
}

Outcome criterion_9() {
  auto session = synth_session(9, 400, {200});
  std::mt19937_64 rng(9);
  const char* first[] = {"Marisol", "Tobiah", "Quenby", "Ludovica", "Erasmo"};
  const char* last[] = {"Vantreight", "Oyelaran", "Szczepanik", "Haldorsen", "Brightwater"};
  std::vector<std::pair<std::string, std::string>> planted;  // identifier, placeholder
  for (int i = 0; i < 10; ++i) {
    const std::string name = std::string(first[i % 5]) + " " + last[(i * 3 + 1) % 5] + std::to_string(i);
    planted.push_back({name, "<USER>"});
    planted.push_back({"user" + std::to_string(i) + "@corp" + std::to_string(i) + ".example", "<EMAIL>"});
    planted.push_back({"build-" + std::to_string(i) + ".corp.internal:" + std::to_string(8000 + i), "<HOST>:<PORT>"});
    planted.push_back({"Project-Heliotrope-" + std::to_string(i), "<PROJECT>"});
    planted.push_back({"AAAAC3NzaC1lZDI1NTE5AAAA" + std::to_string(1000 + i) + "xQ", "<SSH_KEY>"});
  }
  RedactionMap map;
  std::vector<std::string> forbidden;
  for (const auto& [id, ph] : planted) {
    map.add(id, ph);
    forbidden.push_back(id);
    auto& m = session.messages[rng() % session.messages.size()];
    m.content += " (ref " + id + ")";
  }
  const auto pre_hits = verify_redaction(session, forbidden).size();
  const auto once = anonymize(session, map);
  const auto hits = verify_redaction(once, forbidden);
  const auto twice = anonymize(once, map);
  const bool idem = to_jsonl(twice) == to_jsonl(once);
  return {planted.size() == 50 && pre_hits >= 50 && hits.empty() && idem,
          std::to_string(planted.size()) + " planted identifiers (" + std::to_string(pre_hits) +
              " occurrences), post-anonymize hits " + std::to_string(hits.size()) + ", idempotent: " +
              (idem ? "yes" : "no")};
}

Outcome criterion_10() {
  std::ifstream in(std::string(DRIFTPROBE_TEST_DATA) + "/panel_table.csv");
  std::string line;
  std::getline(in, line);
  std::vector<ForestInput> inputs;
  std::vector<std::string> printed, table_order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    inputs.push_back(forest_input_from_means(f[0], f[1], f[2], std::stod(f[3]), std::stod(f[4]), std::stoi(f[6])));
    printed.push_back(f[5]);
    table_order.push_back(f[0]);
  }
  int exact = 0, stars = 0;
  std::string misses;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto got = fmt(inputs[i].result.gap, 2, true);
    if (got == printed[i]) {
      ++exact;
    } else {
      misses += " " + inputs[i].result.target_id + "(" + got + " vs " + printed[i] + ")";
    }
  }
  const auto rows = forest_table(inputs);
  for (const auto& r : rows) stars += r.star;
  std::size_t order_match = 0;
  while (order_match < rows.size() && rows[order_match].target_id == table_order[order_match]) ++order_match;
  const bool ok = exact == static_cast<int>(inputs.size()) && stars == 17 && order_match == rows.size();
  return {ok, std::to_string(exact) + "/" + std::to_string(inputs.size()) + " Δ values reproduced exactly" +
                  (misses.empty() ? "" : " (differ:" + misses + ")") + "; stars " + std::to_string(stars) +
                  "/23 (want 17); sorted order matches table for the first " + std::to_string(order_match) +
                  " rows"};
}

Outcome criterion_11() {
  const auto dir = scratch("c11");
  const auto synth = synth_session(11, 1500, {500, 1000});
  util::write_file_atomic(dir / "session.jsonl", to_jsonl(synth));
  std::ifstream sin(dir / "session.jsonl");
  const auto session = parse_transcript(sin, "fork-isolation");
  const auto file_hash_before = prereg_hash(util::read_file(dir / "session.jsonl"));
  const auto mem_hash_before = prereg_hash(to_jsonl(session));

  ExperimentSpec e;
  e.name = "isolation";
  e.session_id = session.session_id;
  e.targets = {"sim"};
  e.positions = position_table(session, 50);
  e.stimuli = ids(identity_probes());
  e.paraphrases = 2;
  e.anchors = {AnchorId::NONE, AnchorId::A_COMBINED};
  Catalog cat;
  cat.targets = {"sim"};
  cat.session_turns[session.session_id] = session.total_turns();
  const auto plans = plan_cells(e, cat);

  Provider provider;
  ExecutionContext ctx;
  ctx.provider = &provider;
  ctx.targets["sim"] = drift_target("sim", 600, 3.0);
  ctx.sessions[session.session_id] = &session;
  ctx.judge = rule_judge();
  CellStore store(dir / "cells");
  const auto first = execute_plan(plans, ctx, store);
  const auto calls_after_first = provider.calls();
  const auto second = execute_plan(plans, ctx, store);
  const auto rerun_calls = provider.calls() - calls_after_first;

  const bool same = prereg_hash(util::read_file(dir / "session.jsonl")) == file_hash_before &&
                    prereg_hash(to_jsonl(session)) == mem_hash_before;
  fs::remove_all(dir);
  return {plans.size() == 1000 && first.completed == 1000 && same && second.cached == 1000 && rerun_calls == 0,
          std::to_string(plans.size()) + " cells; transcript hash unchanged: " + (same ? "yes" : "no") +
              "; rerun cache hits " + std::to_string(second.cached) + ", provider calls " +
              std::to_string(rerun_calls)};
}

Outcome criterion_12() {
  const bool abc = prereg_hash("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
  const bool empty = prereg_hash("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
  const bool two_block = prereg_hash("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
                         "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1";
  return {abc && empty && two_block, std::string("\"abc\": ") + (abc ? "ok" : "MISMATCH") + ", empty: " +
                                         (empty ? "ok" : "MISMATCH") + ", 448-bit: " + (two_block ? "ok" : "MISMATCH")};
}

class RecordingJudge : public ChatTransport {
 public:
  TransportReply send(const TargetSpec&, const std::string&, const std::vector<Message>& messages) override {
    std::lock_guard lock(mu);
    requests.push_back(messages);
    return {TransportReply::Status::ok, "Score: 2", ""};
  }
  std::mutex mu;
  std::vector<std::vector<Message>> requests;
};

Outcome criterion_13() {
  const auto dir = scratch("c13");
  auto session = synth_session(13, 900, {300, 600});
  session.session_id = "sess-CANARYSESS";
  std::vector<PositionSpec> positions;
  for (const auto& p : position_table(session, 50)) {
    positions.push_back({"pos-CANARYPOS-" + std::to_string(p.turn), p.turn, p.kind});
  }
  ExperimentSpec e;
  e.name = "exp-CANARYEXP";
  e.session_id = session.session_id;
  e.targets = {"tgt-CANARYTGT"};
  e.positions = positions;
  e.stimuli = ids(identity_probes());
  e.paraphrases = 4;
  Catalog cat;
  cat.targets = {"tgt-CANARYTGT"};
  cat.session_turns[session.session_id] = session.total_turns();
  const auto plans = plan_cells(e, cat);

  ::setenv("DRIFTPROBE_ACCEPTANCE_JUDGE_KEY", "unused", 1);
  auto recorder = std::make_shared<RecordingJudge>();
  RetryPolicy policy;
  policy.base_backoff = std::chrono::milliseconds(0);
  Provider provider(recorder, policy);
  TargetSpec judge;
  judge.target_id = "judge";
  judge.api_model_id = "judge-model";
  judge.endpoint = "https://judge.invalid/v1";
  judge.auth = "DRIFTPROBE_ACCEPTANCE_JUDGE_KEY";
  ExecutionContext ctx;
  ctx.provider = &provider;
  ctx.targets["tgt-CANARYTGT"] = drift_target("tgt-CANARYTGT", 400, 3.0);
  ctx.targets["tgt-CANARYTGT"].api_model_id = "model-CANARYMODEL";
  ctx.sessions[session.session_id] = &session;
  ctx.judge = judge;
  CellStore store(dir);
  execute_plan(plans, ctx, store);

  const std::vector<std::string> canaries{"canarysess", "canarypos", "canaryexp",  "canarytgt",
                                          "canarymodel", "claude_session", "filler", "a_combined"};
  std::size_t hits = 0, shape_bad = 0;
  for (const auto& req : recorder->requests) {
    if (req.size() != 1 || req[0].role != Role::user) ++shape_bad;
    for (const auto& m : req) {
      const auto low = util::to_lower_ascii(m.content);
      for (const auto& c : canaries) hits += util::count_occurrences(low, c);
    }
  }
  fs::remove_all(dir);
  return {recorder->requests.size() == 1000 && hits == 0 && shape_bad == 0,
          std::to_string(recorder->requests.size()) + " judge requests scanned, canary occurrences " +
              std::to_string(hits) + ", malformed requests " + std::to_string(shape_bad)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"end-to-end simulated drift", criterion_1},
      {"permutation oracle", criterion_2},
      {"Holm oracle", criterion_3},
      {"agreement oracle", criterion_4},
      {"variance decomposition", criterion_5},
      {"stressor scorer fixtures", criterion_6},
      {"filler control", criterion_7},
      {"PCA", criterion_8},
      {"anonymizer", criterion_9},
      {"panel arithmetic replay", criterion_10},
      {"fork isolation", criterion_11},
      {"prereg hashing", criterion_12},
      {"judge blinding", criterion_13},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %2zu %-28s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
  return failures == 0 ? 0 : 1;
}
