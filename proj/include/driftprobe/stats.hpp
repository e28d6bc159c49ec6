#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftprobe/error.hpp"
#include "driftprobe/util/random.hpp"

namespace driftprobe::stats {

inline constexpr double kStarThreshold = 0.30;
inline constexpr double kStarSlack = 1e-9;

// |Δ| >= 0.30, with slack for decimal inputs that land a hair under 0.30.
inline bool is_star(double gap) { return std::abs(gap) >= kStarThreshold - kStarSlack; }

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw InsufficientDataError("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Linear-interpolation percentile (Hyndman-Fan type 7) of sorted data, q in [0, 1].
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw InsufficientDataError("percentile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return percentile_sorted(xs, 0.5);
}

// ---------------------------------------------------------------------------
// Drift gap
// ---------------------------------------------------------------------------

struct CellAggregate {
  std::string target_id;
  std::string position_label;
  int turn = 0;
  std::string stimulus_id;
  std::string arm;  // "filler" or "claude_session"
  std::string anchor = "NONE";
  double mean_score = 0;
  int n_scored = 0;
};

struct PositionGap {
  std::string label;
  int turn = 0;
  double gap = 0;
  double filler_mean = 0;
  double claude_mean = 0;
  int n_pairs = 0;
};

struct Interval {
  double lo = 0;
  double hi = 0;
};

struct DriftGapResult {
  std::string target_id;
  double gap = 0;
  double filler_mean = 0;  // position-equal-weighted
  double claude_mean = 0;
  std::optional<Interval> ci;
  int n_positions = 0;
  std::vector<PositionGap> per_position;
  int dropped_unpaired = 0;
  bool pilot = false;
  bool star = false;
  std::uint64_t seed = 0;
  int resamples = 0;
};

// Pairs the filler and claude cells at each (position, stimulus); the gap at
// a position is the mean over its stimuli and Δ weights every position equally.
inline DriftGapResult drift_gap(const std::vector<CellAggregate>& cells) {
  struct Pair {
    std::optional<double> filler, claude;
  };
  std::map<std::pair<int, std::string>, std::map<std::string, Pair>> by_position;
  DriftGapResult out;
  for (const auto& c : cells) {
    if (out.target_id.empty()) out.target_id = c.target_id;
    if (c.n_scored < 1) continue;
    auto& slot = by_position[{c.turn, c.position_label}][c.stimulus_id];
    auto& side = c.arm == "filler" ? slot.filler : slot.claude;
    if (side) throw DomainError("duplicate cell at " + c.position_label + "/" + c.stimulus_id + "/" + c.arm);
    side = c.mean_score;
  }
  for (const auto& [pos, stimuli] : by_position) {
    PositionGap pg{pos.second, pos.first, 0, 0, 0, 0};
    for (const auto& [stim, pair] : stimuli) {
      if (!pair.filler || !pair.claude) {
        ++out.dropped_unpaired;
        continue;
      }
      pg.filler_mean += *pair.filler;
      pg.claude_mean += *pair.claude;
      ++pg.n_pairs;
    }
    if (pg.n_pairs == 0) continue;
    pg.filler_mean /= pg.n_pairs;
    pg.claude_mean /= pg.n_pairs;
    pg.gap = pg.filler_mean - pg.claude_mean;
    out.per_position.push_back(pg);
  }
  if (out.per_position.empty()) throw InsufficientDataError("no paired cells at any position");
  for (const auto& pg : out.per_position) {
    out.gap += pg.gap;
    out.filler_mean += pg.filler_mean;
    out.claude_mean += pg.claude_mean;
  }
  const double n = static_cast<double>(out.per_position.size());
  out.gap /= n;
  out.filler_mean /= n;
  out.claude_mean /= n;
  out.n_positions = static_cast<int>(out.per_position.size());
  out.pilot = out.n_positions == 1;
  out.star = is_star(out.gap);
  return out;
}

// Position-clustered percentile bootstrap. Fewer than two positions yields
// no interval. Gaps are sorted first so the result ignores input order.
inline std::optional<Interval> bootstrap_ci(std::vector<double> gaps, int resamples = 10000,
                                            std::uint64_t seed = 42) {
  if (gaps.size() < 2) return std::nullopt;
  if (resamples < 1) throw DomainError("resamples must be >= 1");
  std::sort(gaps.begin(), gaps.end());
  util::Engine rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < gaps.size(); ++i) s += gaps[util::uniform_index(rng, gaps.size())];
    m = s / static_cast<double>(gaps.size());
  }
  std::sort(means.begin(), means.end());
  return Interval{percentile_sorted(means, 0.025), percentile_sorted(means, 0.975)};
}

inline DriftGapResult drift_gap_with_ci(const std::vector<CellAggregate>& cells, int resamples = 10000,
                                        std::uint64_t seed = 42) {
  auto r = drift_gap(cells);
  std::vector<double> gaps;
  for (const auto& pg : r.per_position) gaps.push_back(pg.gap);
  r.ci = bootstrap_ci(gaps, resamples, seed);
  r.seed = seed;
  r.resamples = resamples;
  return r;
}

// ---------------------------------------------------------------------------
// Paired permutation test
// ---------------------------------------------------------------------------

enum class PermutationMode { exact, monte_carlo, automatic };

inline std::string_view to_string(PermutationMode m) {
  switch (m) {
    case PermutationMode::exact: return "exact";
    case PermutationMode::monte_carlo: return "monte_carlo";
    case PermutationMode::automatic: return "automatic";
  }
  return "automatic";
}

struct PermutationResult {
  double p = 1.0;
  double observed = 0;  // mean difference
  PermutationMode mode = PermutationMode::exact;
  int resamples = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMaxExactN = 24;

// Two-sided sign-flip test on the mean difference. The identity assignment is
// counted, so p > 0. `automatic` enumerates exactly for n <= 20.
inline PermutationResult paired_permutation(const std::vector<double>& diffs, int resamples = 10000,
                                            std::uint64_t seed = 42,
                                            PermutationMode mode = PermutationMode::automatic) {
  const auto n = diffs.size();
  if (n == 0) throw InsufficientDataError("permutation test needs at least one difference");
  if (mode == PermutationMode::automatic) mode = n <= 20 ? PermutationMode::exact : PermutationMode::monte_carlo;
  double obs = 0, scale = 0;
  for (double d : diffs) {
    obs += d;
    scale += std::abs(d);
  }
  const double threshold = std::abs(obs) - 1e-9 * std::max(1.0, scale);

  PermutationResult r;
  r.observed = obs / static_cast<double>(n);
  r.mode = mode;
  r.seed = seed;
  if (mode == PermutationMode::exact) {
    if (n > kMaxExactN) throw DomainError("exact enumeration is limited to n <= 24");
    // Walk all sign assignments in Gray-code order, flipping one sign per step.
    const std::uint64_t total = std::uint64_t{1} << n;
    std::vector<int> sign(n, 1);
    double s = obs;
    std::uint64_t hits = std::abs(s) >= threshold ? 1 : 0;
    for (std::uint64_t k = 1; k < total; ++k) {
      const auto bit = static_cast<std::size_t>(__builtin_ctzll(k));
      s -= 2.0 * sign[bit] * diffs[bit];
      sign[bit] = -sign[bit];
      if (std::abs(s) >= threshold) ++hits;
    }
    r.p = static_cast<double>(hits) / static_cast<double>(total);
    r.resamples = static_cast<int>(std::min<std::uint64_t>(total, INT32_MAX));
    return r;
  }
  if (resamples < 1) throw DomainError("resamples must be >= 1");
  util::Engine rng(seed);
  std::uint64_t hits = 1;
  for (int k = 0; k < resamples; ++k) {
    double s = 0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng();
      s += (bits & 1) ? -diffs[i] : diffs[i];
      bits >>= 1;
    }
    if (std::abs(s) >= threshold) ++hits;
  }
  r.p = static_cast<double>(hits) / static_cast<double>(resamples + 1);
  r.resamples = resamples;
  return r;
}

// ---------------------------------------------------------------------------
// Holm step-down
// ---------------------------------------------------------------------------

inline std::vector<double> holm_correct(const std::vector<double>& p) {
  for (double x : p) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("p-values must lie in [0, 1]");
  }
  const auto m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double scaled = std::min(1.0, static_cast<double>(m - k) * p[order[k]]);
    running = std::max(running, scaled);
    adj[order[k]] = running;
  }
  return adj;
}

// ---------------------------------------------------------------------------
// Inter-judge agreement
// ---------------------------------------------------------------------------

struct AgreementReport {
  std::size_t n = 0;
  double exact = 0;
  double within_one = 0;
  std::optional<double> kappa;  // empty when chance agreement is 1
  bool kappa_degenerate = false;
  std::optional<double> spearman;  // empty when either side is constant
};

// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline AgreementReport agreement(const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) throw InsufficientDataError("agreement needs at least one pair");
  AgreementReport r;
  r.n = pairs.size();
  std::array<double, 4> ma{}, mb{};
  std::vector<double> a, b;
  std::size_t same = 0, near = 0;
  for (auto [x, y] : pairs) {
    if (x < 0 || x > 3 || y < 0 || y > 3) throw DomainError("agreement labels must lie in 0..3");
    same += x == y;
    near += std::abs(x - y) <= 1;
    ma[static_cast<std::size_t>(x)] += 1;
    mb[static_cast<std::size_t>(y)] += 1;
    a.push_back(x);
    b.push_back(y);
  }
  const double n = static_cast<double>(r.n);
  r.exact = static_cast<double>(same) / n;
  r.within_one = static_cast<double>(near) / n;
  double pe = 0;
  for (std::size_t k = 0; k < 4; ++k) pe += (ma[k] / n) * (mb[k] / n);
  if (std::abs(1.0 - pe) < 1e-15) {
    r.kappa_degenerate = true;
  } else {
    r.kappa = (r.exact - pe) / (1.0 - pe);
  }
  r.spearman = pearson(average_ranks(a), average_ranks(b));
  return r;
}

// ---------------------------------------------------------------------------
// One-way random-effects variance decomposition (method of moments)
// ---------------------------------------------------------------------------

struct VarianceDecomposition {
  double sigma2_between = 0;
  double sigma2_within = 0;
  double between_share = 0;
  double n0 = 0;
  int groups = 0;
  int n = 0;
};

inline VarianceDecomposition variance_decomposition(const std::vector<std::vector<double>>& groups) {
  std::vector<const std::vector<double>*> g;
  for (const auto& x : groups) {
    if (!x.empty()) g.push_back(&x);
  }
  if (g.size() < 2) throw InsufficientDataError("variance decomposition needs at least two groups");
  const auto k = static_cast<double>(g.size());
  double total = 0, sum_sq_sizes = 0;
  std::size_t n = 0;
  for (const auto* x : g) {
    n += x->size();
    total += std::accumulate(x->begin(), x->end(), 0.0);
    sum_sq_sizes += static_cast<double>(x->size()) * static_cast<double>(x->size());
  }
  if (n == g.size()) throw InsufficientDataError("every group is a singleton; within variance is undefined");
  const double N = static_cast<double>(n);
  const double grand = total / N;
  double ssb = 0, ssw = 0;
  for (const auto* x : g) {
    const double m = mean(*x);
    ssb += static_cast<double>(x->size()) * (m - grand) * (m - grand);
    for (double v : *x) ssw += (v - m) * (v - m);
  }
  const double msb = ssb / (k - 1.0);
  const double msw = ssw / (N - k);
  VarianceDecomposition r;
  r.n0 = (N - sum_sq_sizes / N) / (k - 1.0);
  r.sigma2_within = msw;
  r.sigma2_between = std::max(0.0, (msb - msw) / r.n0);
  const double sum = r.sigma2_between + r.sigma2_within;
  r.between_share = sum > 0 ? r.sigma2_between / sum : 0.0;
  r.groups = static_cast<int>(g.size());
  r.n = static_cast<int>(n);
  return r;
}

// ---------------------------------------------------------------------------
// Conditional-on-compliance filter
// ---------------------------------------------------------------------------

struct StressorPair {
  std::string position_label;
  int paraphrase_index = 0;
  bool filler_pass = false;
  bool claude_pass = false;
  std::size_t filler_length = 0;
  std::size_t claude_length = 0;
};

inline std::vector<StressorPair> conditional_compliance_filter(const std::vector<StressorPair>& pairs) {
  std::vector<StressorPair> kept;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(kept),
               [](const StressorPair& p) { return p.filler_pass && p.claude_pass; });
  return kept;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DriftGapResult& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& pg : r.per_position) {
    per.push_back({{"label", pg.label}, {"turn", pg.turn}, {"gap", pg.gap},
                   {"filler_mean", pg.filler_mean}, {"claude_mean", pg.claude_mean}, {"n_pairs", pg.n_pairs}});
  }
  nlohmann::json j{{"target_id", r.target_id},     {"gap", r.gap},
                   {"filler_mean", r.filler_mean}, {"claude_mean", r.claude_mean},
                   {"n_positions", r.n_positions}, {"per_position", per},
                   {"dropped_unpaired", r.dropped_unpaired},
                   {"pilot", r.pilot},             {"star", r.star},
                   {"seed", r.seed},               {"resamples", r.resamples},
                   {"mode", "bootstrap_percentile"}};
  if (r.ci) j["ci"] = {r.ci->lo, r.ci->hi};
  return j;
}

inline nlohmann::json to_json(const PermutationResult& r) {
  return {{"p", r.p}, {"observed", r.observed}, {"mode", to_string(r.mode)},
          {"resamples", r.resamples}, {"seed", r.seed}};
}

inline nlohmann::json to_json(const AgreementReport& r) {
  nlohmann::json j{{"n", r.n}, {"exact", r.exact}, {"within_one", r.within_one},
                   {"kappa_degenerate", r.kappa_degenerate}};
  j["kappa"] = r.kappa ? nlohmann::json(*r.kappa) : nlohmann::json();
  j["spearman"] = r.spearman ? nlohmann::json(*r.spearman) : nlohmann::json();
  return j;
}

inline nlohmann::json to_json(const VarianceDecomposition& v) {
  return {{"sigma2_between", v.sigma2_between}, {"sigma2_within", v.sigma2_within},
          {"between_share", v.between_share},   {"n0", v.n0},
          {"groups", v.groups},                 {"n", v.n}};
}

}  // namespace driftprobe::stats
