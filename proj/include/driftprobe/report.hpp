#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "driftprobe/data.hpp"
#include "driftprobe/fingerprint.hpp"
#include "driftprobe/harness.hpp"
#include "driftprobe/scorers.hpp"
#include "driftprobe/stats.hpp"
#include "driftprobe/util/fs.hpp"
#include "driftprobe/util/hash.hpp"
#include "driftprobe/util/time.hpp"

namespace driftprobe {

// ---------------------------------------------------------------------------
// Pre-registration
// ---------------------------------------------------------------------------

inline std::string prereg_hash(std::string_view bytes) { return util::sha256_hex(bytes); }

struct PreregEntry {
  std::string path;
  std::string sha256;
};

struct PreregManifest {
  std::vector<PreregEntry> entries;
  std::string locked_at;
};

// Hashes each document plus every shipped data file (as "data/<name>").
inline PreregManifest make_manifest(const std::vector<std::filesystem::path>& documents) {
  PreregManifest m;
  m.locked_at = util::iso8601_now();
  for (const auto& p : documents) m.entries.push_back({p.generic_string(), prereg_hash(util::read_file(p))});
  for (const auto& f : data::manifest()) m.entries.push_back({"data/" + f.name, f.sha256});
  return m;
}

// sha256sum-compatible lines preceded by a lock timestamp comment.
inline std::string render_manifest(const PreregManifest& m) {
  std::string out = "# locked_at " + m.locked_at + "\n";
  for (const auto& e : m.entries) out += e.sha256 + "  " + e.path + "\n";
  return out;
}

inline PreregManifest parse_manifest(std::string_view text) {
  PreregManifest m;
  for (auto line : util::split_lines(text)) {
    line = util::trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.rfind("# locked_at ", 0) == 0) m.locked_at = std::string(line.substr(12));
      continue;
    }
    const auto sep = line.find("  ");
    if (sep != 64) throw ParseError(0, "malformed manifest line: " + std::string(line));
    m.entries.push_back({std::string(line.substr(66)), std::string(line.substr(0, 64))});
  }
  return m;
}

// Entries whose current hash differs; data/ entries are checked against the
// shipped data and paths resolve against `base`.
inline std::vector<std::string> verify_manifest(const PreregManifest& m, const std::filesystem::path& base) {
  std::map<std::string, std::string> shipped;
  for (const auto& f : data::manifest()) shipped["data/" + f.name] = f.sha256;
  std::vector<std::string> bad;
  for (const auto& e : m.entries) {
    std::string now;
    if (auto it = shipped.find(e.path); it != shipped.end()) {
      now = it->second;
    } else {
      try {
        now = prereg_hash(util::read_file(base / e.path));
      } catch (const NotFoundError&) {
        now.clear();
      }
    }
    if (now != e.sha256) bad.push_back(e.path);
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Forest table
// ---------------------------------------------------------------------------

struct ForestRow {
  std::string target_id;
  std::string org;
  std::string tier;
  double filler_mean = 0;
  double claude_mean = 0;
  double gap = 0;
  std::optional<stats::Interval> ci;
  int n_positions = 0;
  bool star = false;
  bool pilot = false;
};

struct ForestInput {
  stats::DriftGapResult result;
  std::string org;
  std::string tier;
};

inline std::vector<ForestRow> forest_table(const std::vector<ForestInput>& inputs) {
  std::vector<ForestRow> rows;
  rows.reserve(inputs.size());
  for (const auto& in : inputs) {
    const auto& r = in.result;
    ForestRow row{r.target_id, in.org, in.tier, r.filler_mean, r.claude_mean,
                  r.filler_mean - r.claude_mean, r.ci, r.n_positions, false, r.pilot};
    row.star = stats::is_star(row.gap);
    if (row.pilot) row.ci.reset();
    rows.push_back(std::move(row));
  }
  // Gaps equal to 1e-9 keep input order.
  auto key = [](double gap) { return std::llround(gap * 1e9); };
  std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) { return key(a.gap) > key(b.gap); });
  return rows;
}

// Row from reported per-target means, as printed in a panel table.
inline ForestInput forest_input_from_means(std::string target_id, std::string org, std::string tier,
                                           double filler_mean, double claude_mean, int n_positions) {
  stats::DriftGapResult r;
  r.target_id = std::move(target_id);
  r.filler_mean = filler_mean;
  r.claude_mean = claude_mean;
  r.gap = filler_mean - claude_mean;
  r.n_positions = n_positions;
  r.pilot = n_positions == 1;
  r.star = stats::is_star(r.gap);
  return {std::move(r), std::move(org), std::move(tier)};
}

inline std::string fmt(double v, int digits = 2, bool sign = false) {
  char buf[64];
  std::snprintf(buf, sizeof buf, sign ? "%+.*f" : "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0.00" || s == "+-0.00") s = sign ? "+0.00" : "0.00";
  return s;
}

inline std::string forest_markdown(const std::vector<ForestRow>& rows) {
  std::string out = "| Target | Org | Tier | filler | claude | Δ | 95% CI | n_pos |\n";
  out += "|---|---|---|---:|---:|---:|---|---:|\n";
  for (const auto& r : rows) {
    std::string gap = fmt(r.gap, 2, true);
    if (r.star) gap = "**" + gap + "** ★";
    const std::string ci = r.pilot ? "pilot" : (r.ci ? "[" + fmt(r.ci->lo) + ", " + fmt(r.ci->hi) + "]" : "");
    out += "| " + r.target_id + " | " + r.org + " | " + r.tier + " | " + fmt(r.filler_mean) + " | " +
           fmt(r.claude_mean) + " | " + gap + " | " + ci + " | " + std::to_string(r.n_positions) + " |\n";
  }
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  return "\"" + util::replace_all(std::string(s), "\"", "\"\"") + "\"";
}

inline std::string forest_csv(const std::vector<ForestRow>& rows) {
  std::string out = "target_id,org,tier,filler_mean,claude_mean,gap,ci_lo,ci_hi,n_positions,star,pilot\n";
  for (const auto& r : rows) {
    out += csv_field(r.target_id) + "," + csv_field(r.org) + "," + csv_field(r.tier) + "," +
           fmt(r.filler_mean, 6) + "," + fmt(r.claude_mean, 6) + "," + fmt(r.gap, 6) + "," +
           (r.ci ? fmt(r.ci->lo, 6) : "") + "," + (r.ci ? fmt(r.ci->hi, 6) : "") + "," +
           std::to_string(r.n_positions) + "," + (r.star ? "1" : "0") + "," + (r.pilot ? "1" : "0") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation from cell records
// ---------------------------------------------------------------------------

// Experimental condition of a cell other than its arm: anchor recipe, then
// any non-default size, decay offset or framing.
inline std::string condition_label(const CellPlan& p) {
  std::string s(to_string(p.anchor));
  if ((p.anchor == AnchorId::A_COMBINED || p.anchor == AnchorId::V3) && p.anchor_size != SizeClass::medium) {
    s += "/" + std::string(to_string(p.anchor_size));
  }
  if (p.decay_offset > 0) s += "/N=" + std::to_string(p.decay_offset);
  if (p.framing == FramingMode::bare) s += "/bare";
  return s;
}

// Mean judge score over paraphrases for every probe cell; records without a
// score are left out of the mean.
inline std::vector<stats::CellAggregate> aggregate(const std::vector<CellRecord>& records) {
  using Key = std::tuple<std::string, int, std::string, std::string, std::string, std::string>;
  std::map<Key, std::pair<double, int>> acc;
  for (const auto& r : records) {
    if (!r.is_probe_cell() || !r.judge_score) continue;
    auto& slot = acc[{r.plan.target_id, r.plan.position.turn, r.plan.position.label, r.plan.stimulus_id,
                      std::string(to_string(r.plan.arm)), condition_label(r.plan)}];
    slot.first += *r.judge_score;
    slot.second += 1;
  }
  std::vector<stats::CellAggregate> out;
  for (const auto& [k, v] : acc) {
    const auto& [target, turn, label, stim, arm, cond] = k;
    out.push_back({target, label, turn, stim, arm, cond, v.first / v.second, v.second});
  }
  return out;
}

inline std::string aggregates_csv(const std::vector<stats::CellAggregate>& cells) {
  std::string out = "target_id,position_label,turn,stimulus_id,arm,condition,mean_score,n_scored\n";
  for (const auto& c : cells) {
    out += csv_field(c.target_id) + "," + csv_field(c.position_label) + "," + std::to_string(c.turn) + "," +
           csv_field(c.stimulus_id) + "," + c.arm + "," + csv_field(c.anchor) + "," + fmt(c.mean_score, 6) +
           "," + std::to_string(c.n_scored) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report bundle
// ---------------------------------------------------------------------------

struct ReportOptions {
  int resamples = 10000;
  std::uint64_t seed = 42;
  std::vector<TargetSpec> targets;  // org and tier for the panel table
};

struct ReportBundle {
  std::string markdown;
  std::string aggregates_csv;
  nlohmann::json plot_data;
  nlohmann::json results;
};

namespace detail {

inline bool is_control(const std::string& stimulus_id) {
  const auto* p = find_probe(stimulus_id);
  return p && p->category == Category::NegativeControl;
}

inline std::vector<stats::CellAggregate> select(const std::vector<stats::CellAggregate>& cells,
                                                const std::string& target, const std::string& cond,
                                                bool controls) {
  std::vector<stats::CellAggregate> out;
  for (const auto& c : cells) {
    if (c.target_id == target && c.anchor == cond && is_control(c.stimulus_id) == controls) out.push_back(c);
  }
  return out;
}

struct StressorSummary {
  std::string target_id, condition, stressor_id;
  std::size_t filler_n = 0, filler_pass = 0, claude_n = 0, claude_pass = 0;
  std::vector<double> ratios;
  std::size_t pairs = 0, retained = 0;
};

inline std::vector<StressorSummary> summarize_stressors(const std::vector<CellRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::string>;
  using PairKey = std::tuple<std::string, std::string, int>;
  std::map<Key, StressorSummary> sums;
  std::map<Key, std::map<PairKey, std::pair<const CellRecord*, const CellRecord*>>> paired;
  for (const auto& r : records) {
    if (!r.compliance || r.response.finish_state != FinishState::ok) continue;
    const Key k{r.plan.target_id, condition_label(r.plan), r.plan.stimulus_id};
    auto& s = sums[k];
    std::tie(s.target_id, s.condition, s.stressor_id) = k;
    auto& slot = paired[k][{r.plan.position.label, r.plan.session_id, r.plan.paraphrase_index}];
    if (r.plan.arm == Arm::filler) {
      ++s.filler_n;
      s.filler_pass += *r.compliance;
      slot.first = &r;
    } else {
      ++s.claude_n;
      s.claude_pass += *r.compliance;
      slot.second = &r;
    }
  }
  std::vector<StressorSummary> out;
  for (auto& [k, s] : sums) {
    std::vector<stats::StressorPair> pairs;
    for (const auto& [pk, pr] : paired[k]) {
      if (!pr.first || !pr.second) continue;
      const auto fl = util::char_count(pr.first->response.text);
      const auto cl = util::char_count(pr.second->response.text);
      pairs.push_back({std::get<0>(pk), std::get<2>(pk), *pr.first->compliance, *pr.second->compliance, fl, cl});
      if (fl > 0) s.ratios.push_back(length_ratio(cl, fl));
    }
    s.pairs = pairs.size();
    s.retained = stats::conditional_compliance_filter(pairs).size();
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string rate(std::size_t pass, std::size_t n) {
  return n == 0 ? "n/a" : fmt(100.0 * static_cast<double>(pass) / static_cast<double>(n), 1) + "%";
}

}  // namespace detail

// Read-only over the store.
inline ReportBundle build_report(const CellStore& store, const std::string& experiment,
                                 const ReportOptions& opt = {}) {
  const auto records = store.load(experiment);
  const auto cells = aggregate(records);
  ReportBundle b;
  b.aggregates_csv = aggregates_csv(cells);
  b.results = {{"experiment", experiment}, {"records", records.size()}, {"seed", opt.seed},
               {"resamples", opt.resamples}};
  b.plot_data = {{"experiment", experiment}, {"series", nlohmann::json::array()}};

  std::ostringstream md;
  md << "# Experiment `" << experiment << "`\n\n";
  std::size_t ok = 0, empty = 0, scored = 0;
  for (const auto& r : records) {
    ok += r.response.finish_state == FinishState::ok;
    empty += r.response.finish_state == FinishState::empty;
    scored += r.judge_score.has_value();
  }
  md << "Cells stored: " << records.size() << " (" << ok << " ok, " << empty << " empty). Judge-scored probe cells: "
     << scored << ".\n\n";

  std::set<std::string> targets, conditions;
  for (const auto& c : cells) {
    targets.insert(c.target_id);
    conditions.insert(c.anchor);
  }

  // Probe surface: per target and condition.
  std::vector<ForestInput> forest;
  std::vector<double> pvalues;
  std::vector<std::string> tested;
  nlohmann::json gaps = nlohmann::json::array();
  for (const auto& target : targets) {
    std::map<int, nlohmann::json> points;  // turn -> plot point
    for (const auto& cond : conditions) {
      const auto sel = detail::select(cells, target, cond, false);
      if (sel.empty()) continue;
      stats::DriftGapResult g;
      try {
        g = stats::drift_gap_with_ci(sel, opt.resamples, opt.seed);
      } catch (const InsufficientDataError&) {
        continue;
      }
      std::vector<double> diffs;
      {
        std::map<std::pair<int, std::string>, std::pair<std::optional<double>, std::optional<double>>> pr;
        for (const auto& c : sel) {
          auto& s = pr[{c.turn, c.stimulus_id}];
          (c.arm == "filler" ? s.first : s.second) = c.mean_score;
        }
        for (const auto& [k, v] : pr) {
          if (v.first && v.second) diffs.push_back(*v.first - *v.second);
        }
      }
      const auto perm = stats::paired_permutation(diffs, opt.resamples, opt.seed);
      auto gj = stats::to_json(g);
      gj["condition"] = cond;
      gj["permutation"] = stats::to_json(perm);
      gaps.push_back(gj);
      if (cond == "NONE") {
        ForestInput fi{g, "", ""};
        for (const auto& t : opt.targets) {
          if (t.target_id != target) continue;
          fi.org = t.org;
          fi.tier = t.tier == Tier::reasoning ? "R" : "N";
        }
        forest.push_back(std::move(fi));
        pvalues.push_back(perm.p);
        tested.push_back(target);
      }

      md << "## " << target << " / " << cond << "\n\n";
      md << "Δ = " << fmt(g.gap, 3, true);
      if (g.ci) md << " (95% CI " << fmt(g.ci->lo, 3) << " to " << fmt(g.ci->hi, 3) << ")";
      if (g.pilot) md << " (pilot, single position)";
      md << ", permutation p = " << fmt(perm.p, 4) << " over " << diffs.size() << " paired cells";
      if (g.dropped_unpaired > 0) md << "; " << g.dropped_unpaired << " unpaired cells dropped";
      md << ".\n\n| Position | Turn | filler | claude | Δ |\n|---|---:|---:|---:|---:|\n";
      for (const auto& pg : g.per_position) {
        md << "| " << pg.label << " | " << pg.turn << " | " << fmt(pg.filler_mean) << " | " << fmt(pg.claude_mean)
           << " | " << fmt(pg.gap, 2, true) << " |\n";
        auto& pt = points[pg.turn];
        pt["label"] = pg.label;
        pt["turn"] = pg.turn;
        if (cond == "NONE") {
          pt["filler_mean"] = pg.filler_mean;
          pt["claude_mean"] = pg.claude_mean;
        } else {
          pt["anchor_means"][cond] = pg.claude_mean;
        }
      }
      md << "\n";

      const auto controls = detail::select(cells, target, cond, true);
      if (!controls.empty()) {
        try {
          const auto nc = stats::drift_gap(controls);
          md << "Negative controls: Δ = " << fmt(nc.gap, 3, true) << ".\n\n";
          gaps.back()["negative_control_gap"] = nc.gap;
        } catch (const InsufficientDataError&) {
        }
      }
    }
    nlohmann::json series{{"target_id", target}, {"points", nlohmann::json::array()}};
    for (auto& [turn, pt] : points) series["points"].push_back(pt);
    b.plot_data["series"].push_back(series);
  }
  b.results["drift_gaps"] = gaps;

  if (!forest.empty()) {
    const auto adj = stats::holm_correct(pvalues);
    md << "## Panel (no anchor)\n\n" << forest_markdown(forest_table(forest)) << "\n";
    md << "Holm-adjusted permutation p across " << adj.size() << " targets:";
    nlohmann::json holm = nlohmann::json::object();
    for (std::size_t i = 0; i < adj.size(); ++i) {
      md << (i ? ", " : " ") << tested[i] << " " << fmt(adj[i], 4);
      holm[tested[i]] = adj[i];
    }
    md << ".\n\n";
    b.results["holm"] = holm;
  }

  // Decay series: anchored claude-arm mean by decay offset.
  {
    std::map<std::string, std::map<int, std::pair<double, int>>> decay;
    bool any = false;
    for (const auto& r : records) {
      if (!r.is_probe_cell() || !r.judge_score || r.plan.anchor == AnchorId::NONE ||
          r.plan.arm != Arm::claude_session || detail::is_control(r.plan.stimulus_id)) {
        continue;
      }
      any = any || r.plan.decay_offset > 0;
      auto& slot = decay[r.plan.target_id + " / " + std::string(to_string(r.plan.anchor))][r.plan.decay_offset];
      slot.first += *r.judge_score;
      slot.second += 1;
    }
    if (any) {
      md << "## Anchor decay\n\n| Target / anchor | N | claude mean |\n|---|---:|---:|\n";
      nlohmann::json dj = nlohmann::json::array();
      for (const auto& [name, byn] : decay) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& [n, v] : byn) {
          const double m = v.first / v.second;
          md << "| " << name << " | " << n << " | " << fmt(m) << " |\n";
          pts.push_back({{"decay_offset", n}, {"claude_mean", m}});
        }
        dj.push_back({{"series", name}, {"points", pts}});
      }
      md << "\n";
      b.plot_data["decay"] = dj;
    }
  }

  // Stressor surface.
  const auto stressor_sums = detail::summarize_stressors(records);
  if (!stressor_sums.empty()) {
    md << "## Stressors\n\n| Target | Condition | Stressor | filler pass | claude pass | gap (pp) | median length ratio | "
          "both-pass pairs |\n|---|---|---|---:|---:|---:|---:|---:|\n";
    nlohmann::json sj = nlohmann::json::array();
    for (const auto& s : stressor_sums) {
      const double fr = s.filler_n ? static_cast<double>(s.filler_pass) / static_cast<double>(s.filler_n) : 0;
      const double cr = s.claude_n ? static_cast<double>(s.claude_pass) / static_cast<double>(s.claude_n) : 0;
      const std::optional<double> med = s.ratios.empty() ? std::nullopt : std::optional(stats::median(s.ratios));
      md << "| " << s.target_id << " | " << s.condition << " | " << s.stressor_id << " | "
         << detail::rate(s.filler_pass, s.filler_n) << " | " << detail::rate(s.claude_pass, s.claude_n) << " | "
         << fmt(100.0 * (fr - cr), 1, true) << " | " << (med ? fmt(*med, 2) + "×" : "n/a") << " | " << s.retained
         << " of " << s.pairs << " |\n";
      nlohmann::json row{{"target_id", s.target_id}, {"condition", s.condition}, {"stressor_id", s.stressor_id},
                         {"filler_pass_rate", fr}, {"claude_pass_rate", cr}, {"compliance_gap", fr - cr},
                         {"pairs", s.pairs}, {"both_pass_pairs", s.retained}};
      row["median_length_ratio"] = med ? nlohmann::json(*med) : nlohmann::json();
      sj.push_back(row);
    }
    md << "\n";
    b.results["stressors"] = sj;
  }

  // Cross-judge agreement, when an audit judge has scored the same cells.
  {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& r : records) {
      if (r.judge_score && r.audit_judge_score) pairs.emplace_back(*r.judge_score, *r.audit_judge_score);
    }
    if (!pairs.empty()) {
      const auto a = stats::agreement(pairs);
      md << "## Judge agreement\n\n" << a.n << " paired scores: exact " << fmt(100 * a.exact, 1) << "%, within-one "
         << fmt(100 * a.within_one, 1) << "%, κ " << (a.kappa ? fmt(*a.kappa, 3) : std::string("degenerate"))
         << ", ρ " << (a.spearman ? fmt(*a.spearman, 3) : std::string("undefined")) << ".\n\n";
      b.results["agreement"] = stats::to_json(a);
    }
  }

  // Judge-free fingerprint.
  {
    std::vector<FingerprintVector> rows;
    for (const auto& r : records) {
      if (r.features) rows.push_back(*r.features);
    }
    if (rows.size() > kFeatureDims) {
      try {
        const auto model = fit_pca(rows);
        std::size_t top = 0;
        for (std::size_t j = 1; j < kFeatureDims; ++j) {
          if (std::abs(model.components[0][j]) > std::abs(model.components[0][top])) top = j;
        }
        md << "## Behavioral fingerprint\n\nPCA over " << rows.size() << " responses: PC1 explains "
           << fmt(100 * model.explained_fractions[0], 1) << "% of variance; top loading " << kFeatureNames[top]
           << " (" << fmt(model.components[0][top], 2, true) << "). Lexicon hash " << model.lexicon_hash.substr(0, 12)
           << ".\n\n";
        b.results["pca"] = to_json(model);
      } catch (const DomainError&) {
      }
    }
  }

  b.markdown = md.str();
  return b;
}

// Writes report.md, aggregates.csv, plot_data.json and results.json.
inline ReportBundle emit_report(const CellStore& store, const std::string& experiment,
                                const std::filesystem::path& out_dir, const ReportOptions& opt = {}) {
  auto b = build_report(store, experiment, opt);
  util::write_file_atomic(out_dir / "report.md", b.markdown);
  util::write_file_atomic(out_dir / "aggregates.csv", b.aggregates_csv);
  util::write_file_atomic(out_dir / "plot_data.json", b.plot_data.dump(2) + "\n");
  util::write_file_atomic(out_dir / "results.json", b.results.dump(2) + "\n");
  return b;
}

}  // namespace driftprobe
