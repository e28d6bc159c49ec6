// driftprobe command-line front end.
//
// Exit codes: 0 success, 1 usage or config error, 2 some cells failed,
// 3 redaction scan found a forbidden token.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "driftprobe/driftprobe.hpp"
#include "driftprobe/http_transport.hpp"

using namespace driftprobe;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitPartial = 2;
constexpr int kExitRedactionHit = 3;

struct Globals {
  std::string config;
  std::string store;
  std::optional<std::uint64_t> seed;
  std::optional<int> concurrency;
  bool dry_run = false;
};

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    util::write_file_atomic(path, text);
  }
}

SessionTranscript read_session(const std::string& path, const std::string& id) {
  std::istringstream in(util::read_file(path));
  return parse_transcript(in, id.empty() ? fs::path(path).stem().string() : id);
}

ProjectConfig require_config(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required for this command");
  auto cfg = load_config(g.config);
  if (!g.store.empty()) cfg.store = g.store;
  if (g.seed) cfg.seed = *g.seed;
  if (g.concurrency) cfg.concurrency = *g.concurrency;
  return cfg;
}

Provider make_provider(const ProjectConfig& cfg) {
  return Provider(std::make_shared<HttpTransport>(), RetryPolicy{}, std::max(1, cfg.concurrency));
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(util::read_file(path));
  for (std::string line; std::getline(in, line);) {
    line = std::string(util::trim(line));
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

int cmd_ingest(const std::string& in, const std::string& id, const std::string& out) {
  const auto t = read_session(in, id);
  std::fprintf(stderr, "%s: %d turns, %zu messages, %zu compactions\n", t.session_id.c_str(), t.total_turns(),
               t.messages.size(), t.compactions.size());
  for (const auto& c : t.compactions) std::fprintf(stderr, "  C%d at turn %d\n", c.index, c.turn);
  if (!out.empty()) write_or_print(out, to_jsonl(t));
  return kExitOk;
}

int cmd_anonymize(const std::string& in, const std::string& map_path, const std::string& out) {
  const auto map = load_redaction_map(util::read_file(map_path));
  write_or_print(out, to_jsonl(anonymize(read_session(in, ""), map)));
  return kExitOk;
}

int cmd_verify(const std::string& in, const std::string& forbidden_path) {
  const auto hits = verify_redaction(read_session(in, ""), read_lines(forbidden_path));
  for (const auto& h : hits) std::printf("turn %d offset %zu: %s\n", h.turn, h.offset, h.token.c_str());
  std::fprintf(stderr, "%zu forbidden occurrence(s)\n", hits.size());
  return hits.empty() ? kExitOk : kExitRedactionHit;
}

int cmd_synth(const Globals& g, int turns, const std::vector<int>& compactions, const std::string& flavor,
              const std::string& out) {
  write_or_print(out, to_jsonl(synth_session(g.seed.value_or(1), turns, compactions, parse_flavor(flavor))));
  return kExitOk;
}

int cmd_plan(const Globals& g, const std::string& experiment, const std::string& out) {
  const auto cfg = require_config(g);
  const auto loaded = load_experiment(cfg, experiment);
  std::string text;
  for (const auto& p : loaded.plans) text += to_json(p).dump() + "\n";
  write_or_print(out, text);
  std::fprintf(stderr, "%s: %zu cells over %zu positions\n", experiment.c_str(), loaded.plans.size(),
               loaded.spec.positions.size());
  return kExitOk;
}

int cmd_run(const Globals& g, const std::string& experiment) {
  const auto cfg = require_config(g);
  const auto loaded = load_experiment(cfg, experiment);
  CellStore store(cfg.store);
  if (g.dry_run) {
    std::size_t pending = 0;
    for (const auto& p : loaded.plans) pending += !store.contains(p);
    std::printf("%s: %zu cells, %zu pending, %zu cached\n", experiment.c_str(), loaded.plans.size(), pending,
                loaded.plans.size() - pending);
    return kExitOk;
  }
  auto provider = make_provider(cfg);
  ExecutionContext ctx;
  ctx.provider = &provider;
  ctx.concurrency = cfg.concurrency;
  for (const auto& t : cfg.targets) ctx.targets[t.target_id] = t;
  ctx.sessions[loaded.session->session_id] = loaded.session.get();
  if (cfg.judge) ctx.judge = cfg.target(*cfg.judge);
  const auto s = execute_plan(loaded.plans, ctx, store);
  std::printf("completed %zu, cached %zu, empty %zu, failed %zu, unscored %zu, provider calls %zu\n", s.completed,
              s.cached, s.empty, s.failed, s.unscored, provider.calls());
  for (const auto& e : s.errors) std::fprintf(stderr, "error: %s\n", e.c_str());
  return s.failed > 0 ? kExitPartial : kExitOk;
}

// Fills missing primary judge scores and, when configured, audit scores.
int cmd_score(const Globals& g, const std::string& experiment) {
  const auto cfg = require_config(g);
  if (!cfg.judge && !cfg.audit_judge) throw ConfigError("config names no judge or audit_judge");
  CellStore store(cfg.store);
  auto records = store.load(experiment);
  auto provider = make_provider(cfg);
  std::size_t updated = 0, pending = 0, failed = 0;
  for (auto& r : records) {
    if (!r.is_probe_cell() || r.response.finish_state != FinishState::ok) continue;
    bool changed = false;
    auto fill = [&](const std::string& judge_id, std::optional<int>& score, std::string& model) {
      if (score) return;
      ++pending;
      if (g.dry_run) return;
      const auto js = judge(provider, cfg.target(judge_id), judge_question(r.plan), r.response.text);
      if (!js) {
        ++failed;
        return;
      }
      score = js->value;
      model = js->judge_model;
      changed = true;
    };
    if (cfg.judge) fill(*cfg.judge, r.judge_score, r.judge_model);
    if (cfg.audit_judge) fill(*cfg.audit_judge, r.audit_judge_score, r.audit_judge_model);
    if (!r.features && !g.dry_run) {
      r.features = extract_features(r.response.text);
      changed = true;
    }
    if (changed) {
      store.put(r);
      ++updated;
    }
  }
  std::printf("%zu judge calls needed, %zu records updated, %zu left unscored\n", pending, updated, failed);
  return failed > 0 ? kExitPartial : kExitOk;
}

int cmd_fingerprint(const Globals& g, const std::string& experiment, const std::string& out) {
  const auto cfg = require_config(g);
  std::vector<FingerprintVector> rows;
  for (const auto& r : CellStore(cfg.store).load(experiment)) {
    if (r.features) rows.push_back(*r.features);
  }
  const auto model = fit_pca(rows);
  write_or_print(out, to_json(model).dump(2) + "\n");
  std::fprintf(stderr, "PCA over %zu responses: PC1 %.3f of variance\n", rows.size(), model.explained_fractions[0]);
  return kExitOk;
}

int cmd_stats(const Globals& g, const std::string& experiment, int resamples) {
  const auto cfg = require_config(g);
  ReportOptions opt;
  opt.seed = cfg.seed;
  opt.resamples = resamples > 0 ? resamples : cfg.resamples;
  opt.targets = cfg.targets;
  std::cout << build_report(CellStore(cfg.store), experiment, opt).results.dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const Globals& g, const std::string& experiment, const std::string& out, int resamples) {
  const auto cfg = require_config(g);
  ReportOptions opt;
  opt.seed = cfg.seed;
  opt.resamples = resamples > 0 ? resamples : cfg.resamples;
  opt.targets = cfg.targets;
  const fs::path dir = out.empty() ? fs::path("reports") / experiment : fs::path(out);
  emit_report(CellStore(cfg.store), experiment, dir, opt);
  std::fprintf(stderr, "wrote %s\n", dir.string().c_str());
  return kExitOk;
}

int cmd_prereg(const std::vector<std::string>& docs, const std::string& manifest, bool verify) {
  if (verify) {
    const auto m = parse_manifest(util::read_file(manifest));
    const auto bad = verify_manifest(m, fs::path(manifest).parent_path());
    for (const auto& b : bad) std::printf("MISMATCH %s\n", b.c_str());
    std::fprintf(stderr, "%zu of %zu entries changed since %s\n", bad.size(), m.entries.size(), m.locked_at.c_str());
    return bad.empty() ? kExitOk : kExitUsage;
  }
  if (docs.empty()) throw ConfigError("prereg-hash needs at least one document");
  std::vector<fs::path> paths(docs.begin(), docs.end());
  write_or_print(manifest, render_manifest(make_manifest(paths)));
  return kExitOk;
}

// Forest table from a CSV of per-target arm means:
// target,org,tier,filler,claude[,delta],n_pos
int cmd_replay(const std::string& csv, const std::string& out_md, const std::string& out_csv) {
  std::istringstream in(util::read_file(csv));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    for (std::string h; std::getline(hs, h, ',');) header.push_back(std::string(util::trim(h)));
  }
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ConfigError("replay CSV lacks column " + name);
  };
  const auto ct = col("target"), co = col("org"), cr = col("tier"), cf = col("filler"), cc = col("claude"),
             cn = col("n_pos");
  std::vector<ForestInput> inputs;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (util::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() < header.size()) throw ParseError(lineno, "short row in " + csv);
    inputs.push_back(forest_input_from_means(f[ct], f[co], f[cr], std::stod(f[cf]), std::stod(f[cc]),
                                             std::stoi(f[cn])));
  }
  const auto rows = forest_table(inputs);
  write_or_print(out_md, forest_markdown(rows));
  if (!out_csv.empty()) util::write_file_atomic(out_csv, forest_csv(rows));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftprobe: snapshot-then-probe drift measurement"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "project config JSON");
  app.add_option("--store", g.store, "cell store directory (overrides config)");
  app.add_option("--seed", g.seed, "seed for synthesis and resampling");
  app.add_option("--concurrency", g.concurrency, "in-flight requests per target")->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", g.dry_run, "report what would run without calling providers");

  std::string in, out, id, map_path, forbidden, flavor = "coding", experiment, manifest = "PREREG.lock", out_csv;
  int turns = 2000, resamples = 0;
  bool verify = false;
  std::vector<int> compactions;
  std::vector<std::string> docs;

  auto* ingest = app.add_subcommand("ingest", "parse and validate a transcript");
  ingest->add_option("input", in, "session JSONL")->required();
  ingest->add_option("--id", id, "session id (defaults to file stem)");
  ingest->add_option("-o,--out", out, "write normalized JSONL");

  auto* anon = app.add_subcommand("anonymize", "replace identifiers with placeholders");
  anon->add_option("input", in)->required();
  anon->add_option("--map", map_path, "redaction map JSON")->required();
  anon->add_option("-o,--out", out);

  auto* verify_cmd = app.add_subcommand("verify-redaction", "scan a transcript for forbidden tokens");
  verify_cmd->add_option("input", in)->required();
  verify_cmd->add_option("--forbidden", forbidden, "file with one token per line")->required();

  auto* synth = app.add_subcommand("synth", "generate a synthetic session");
  synth->add_option("--turns", turns)->check(CLI::PositiveNumber);
  synth->add_option("--compactions", compactions, "compaction turns");
  synth->add_option("--flavor", flavor)->check(CLI::IsMember({"coding", "prose"}));
  synth->add_option("-o,--out", out);

  auto* plan = app.add_subcommand("plan", "expand an experiment into cells");
  plan->add_option("experiment", experiment)->required();
  plan->add_option("-o,--out", out);

  auto* run = app.add_subcommand("run", "execute pending cells");
  run->add_option("experiment", experiment)->required();

  auto* score = app.add_subcommand("score", "fill missing judge and audit-judge scores");
  score->add_option("experiment", experiment)->required();

  auto* fp = app.add_subcommand("fingerprint", "fit PCA over stored response features");
  fp->add_option("experiment", experiment)->required();
  fp->add_option("-o,--out", out);

  auto* st = app.add_subcommand("stats", "print drift gaps and tests as JSON");
  st->add_option("experiment", experiment)->required();
  st->add_option("--resamples", resamples);

  auto* rep = app.add_subcommand("report", "write report.md, CSV and plot data");
  rep->add_option("experiment", experiment)->required();
  rep->add_option("-o,--out", out, "output directory");
  rep->add_option("--resamples", resamples);

  auto* pre = app.add_subcommand("prereg-hash", "lock or verify pre-registration documents");
  pre->add_option("documents", docs);
  pre->add_option("--manifest", manifest);
  pre->add_flag("--verify", verify);

  auto* replay = app.add_subcommand("replay", "forest table from published per-target means");
  replay->add_option("csv", in)->required();
  replay->add_option("-o,--out", out, "markdown output");
  replay->add_option("--csv-out", out_csv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) return cmd_ingest(in, id, out);
    if (*anon) return cmd_anonymize(in, map_path, out);
    if (*verify_cmd) return cmd_verify(in, forbidden);
    if (*synth) return cmd_synth(g, turns, compactions, flavor, out);
    if (*plan) return cmd_plan(g, experiment, out);
    if (*run) return cmd_run(g, experiment);
    if (*score) return cmd_score(g, experiment);
    if (*fp) return cmd_fingerprint(g, experiment, out);
    if (*st) return cmd_stats(g, experiment, resamples);
    if (*rep) return cmd_report(g, experiment, out, resamples);
    if (*pre) return cmd_prereg(docs, manifest, verify);
    if (*replay) return cmd_replay(in, out, out_csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "driftprobe: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
