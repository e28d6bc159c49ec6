// Runs the "trajectory" experiment from a project config against its
// simulated target and prints the per-position drift gap.
//
//   sample_trajectory [config.json] [store-dir]

#include <cstdio>
#include <filesystem>

#include "driftprobe/driftprobe.hpp"

using namespace driftprobe;

int main(int argc, char** argv) {
  const std::filesystem::path config = argc > 1 ? argv[1] : DRIFTPROBE_SAMPLE_CONFIG;
  try {
    auto cfg = load_config(config);
    if (argc > 2) cfg.store = argv[2];
    const auto loaded = load_experiment(cfg, "trajectory");

    Provider provider;
    ExecutionContext ctx;
    ctx.provider = &provider;
    ctx.concurrency = cfg.concurrency;
    for (const auto& t : cfg.targets) ctx.targets[t.target_id] = t;
    ctx.sessions[loaded.session->session_id] = loaded.session.get();
    if (cfg.judge) ctx.judge = cfg.target(*cfg.judge);

    CellStore store(cfg.store);
    const auto run = execute_plan(loaded.plans, ctx, store);
    std::printf("%zu cells: %zu new, %zu cached, %zu failed\n\n", loaded.plans.size(), run.completed, run.cached,
                run.failed);

    const auto cells = aggregate(store.load("trajectory"));
    std::vector<stats::CellAggregate> bare;
    for (const auto& c : cells) {
      if (c.anchor == "NONE" && !detail::is_control(c.stimulus_id)) bare.push_back(c);
    }
    const auto gap = stats::drift_gap(bare);
    std::printf("%-14s %6s %8s %8s %8s\n", "position", "turn", "filler", "claude", "gap");
    for (const auto& p : gap.per_position) {
      std::printf("%-14s %6d %8.3f %8.3f %+8.3f\n", p.label.c_str(), p.turn, p.filler_mean, p.claude_mean, p.gap);
    }
    std::printf("\noverall drift gap %+.3f over %zu positions\n", gap.gap, gap.per_position.size());
    return run.failed == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sample_trajectory: %s\n", e.what());
    return 1;
  }
}
