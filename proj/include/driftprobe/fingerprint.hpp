#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftprobe/data.hpp"
#include "driftprobe/error.hpp"
#include "driftprobe/lexicon.hpp"
#include "driftprobe/util/text.hpp"

namespace driftprobe {

inline constexpr std::size_t kFeatureDims = 6;

inline constexpr std::array<std::string_view, kFeatureDims> kFeatureNames{
    "hedge_density", "experiential_density", "preference_commit",
    "em_dash_count", "paragraph_breaks",     "log_length"};

struct FingerprintVector {
  double hedge_density = 0;         // matches per 100 words
  double experiential_density = 0;  // matches per 100 words
  int preference_commit = 0;        // 0 or 1
  int em_dash_count = 0;
  int paragraph_breaks = 0;
  double log_length = 0;            // ln(character count)

  std::array<double, kFeatureDims> values() const {
    return {hedge_density, experiential_density, static_cast<double>(preference_commit),
            static_cast<double>(em_dash_count), static_cast<double>(paragraph_breaks), log_length};
  }

  friend bool operator==(const FingerprintVector&, const FingerprintVector&) = default;
};

// Runs of blank lines that separate two non-blank lines.
inline int count_paragraph_breaks(std::string_view text) {
  int breaks = 0;
  bool seen_text = false;
  bool in_gap = false;
  for (auto line : util::split_lines(text)) {
    if (util::trim(line).empty()) {
      if (seen_text) in_gap = true;
      continue;
    }
    if (in_gap) ++breaks;
    in_gap = false;
    seen_text = true;
  }
  return breaks;
}

inline FingerprintVector extract_features(std::string_view response) {
  if (response.empty()) throw DomainError("features are undefined for an empty response");
  const auto norm = lexicon::normalize(response);
  const auto words = util::split_words(response).size();
  FingerprintVector v;
  if (words > 0) {
    v.hedge_density = 100.0 * static_cast<double>(lexicon::hedge().count(norm)) / static_cast<double>(words);
    v.experiential_density =
        100.0 * static_cast<double>(lexicon::experiential().count(norm)) / static_cast<double>(words);
  }
  v.preference_commit = lexicon::preference_commit(response) ? 1 : 0;
  v.em_dash_count = static_cast<int>(util::count_occurrences(response, "\xE2\x80\x94"));
  v.paragraph_breaks = count_paragraph_breaks(response);
  v.log_length = std::log(static_cast<double>(util::char_count(response)));
  return v;
}

inline nlohmann::json to_json(const FingerprintVector& v) {
  return {{"hedge_density", v.hedge_density},
          {"experiential_density", v.experiential_density},
          {"preference_commit", v.preference_commit},
          {"em_dash_count", v.em_dash_count},
          {"paragraph_breaks", v.paragraph_breaks},
          {"log_length", v.log_length}};
}

inline FingerprintVector fingerprint_from_json(const nlohmann::json& j) {
  FingerprintVector v;
  v.hedge_density = j.at("hedge_density").get<double>();
  v.experiential_density = j.at("experiential_density").get<double>();
  v.preference_commit = j.at("preference_commit").get<int>();
  v.em_dash_count = j.at("em_dash_count").get<int>();
  v.paragraph_breaks = j.at("paragraph_breaks").get<int>();
  v.log_length = j.at("log_length").get<double>();
  return v;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PCAModel {
  using Vec = std::array<double, kFeatureDims>;

  Vec means{};
  Vec scales{};
  std::array<Vec, kFeatureDims> components{};  // rows, eigenvalue-descending
  Vec eigenvalues{};
  Vec explained_fractions{};
  std::size_t n_rows = 0;
  std::string lexicon_hash;
};

inline PCAModel::Vec standardize(const PCAModel& m, const FingerprintVector& v) {
  const auto x = v.values();
  PCAModel::Vec z{};
  for (std::size_t j = 0; j < kFeatureDims; ++j) z[j] = (x[j] - m.means[j]) / m.scales[j];
  return z;
}

// Standardizes with the sample standard deviation, eigendecomposes the
// covariance of the standardized rows, and orients every component so its
// largest-magnitude loading is nonnegative.
inline PCAModel fit_pca(const std::vector<FingerprintVector>& rows) {
  constexpr auto d = kFeatureDims;
  if (rows.size() < d + 1) {
    throw InsufficientDataError("PCA needs at least " + std::to_string(d + 1) + " rows, got " +
                                std::to_string(rows.size()));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = rows[static_cast<std::size_t>(i)].values();
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(v[j])) throw DomainError("PCA input has an undefined feature");
      x(i, static_cast<Eigen::Index>(j)) = v[j];
    }
  }

  PCAModel m;
  m.n_rows = rows.size();
  m.lexicon_hash = data::lexicon_hash();
  for (std::size_t j = 0; j < d; ++j) {
    auto col = x.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    m.means[j] = mean;
    m.scales[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
    col = (col.array() - mean) / m.scales[j];
  }
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DomainError("eigendecomposition failed");

  double total = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const auto src = static_cast<Eigen::Index>(d - 1 - k);
    const double lambda = std::max(0.0, solver.eigenvalues()(src));
    m.eigenvalues[k] = lambda;
    total += lambda;
    auto vec = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    vec.cwiseAbs().maxCoeff(&arg);
    const double sign = vec(arg) < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) m.components[k][j] = sign * vec(static_cast<Eigen::Index>(j));
  }
  if (total <= 0) throw DomainError("PCA input has no variance");
  for (std::size_t k = 0; k < d; ++k) m.explained_fractions[k] = m.eigenvalues[k] / total;
  return m;
}

inline std::vector<double> project(const PCAModel& m, const FingerprintVector& v, std::size_t k) {
  if (k < 1 || k > kFeatureDims) throw BoundsError("projection dims must lie in [1, 6]");
  const auto z = standardize(m, v);
  std::vector<double> out(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < kFeatureDims; ++j) out[c] += m.components[c][j] * z[j];
  }
  return out;
}

// Standardized-space point from PC coordinates.
inline PCAModel::Vec reconstruct(const PCAModel& m, const std::vector<double>& coords) {
  PCAModel::Vec z{};
  for (std::size_t c = 0; c < coords.size() && c < kFeatureDims; ++c) {
    for (std::size_t j = 0; j < kFeatureDims; ++j) z[j] += m.components[c][j] * coords[c];
  }
  return z;
}

inline nlohmann::json to_json(const PCAModel& m) {
  return {{"features", kFeatureNames},
          {"means", m.means},
          {"scales", m.scales},
          {"components", m.components},
          {"eigenvalues", m.eigenvalues},
          {"explained_fractions", m.explained_fractions},
          {"n_rows", m.n_rows},
          {"lexicon_hash", m.lexicon_hash}};
}

inline PCAModel pca_from_json(const nlohmann::json& j) {
  PCAModel m;
  m.means = j.at("means").get<PCAModel::Vec>();
  m.scales = j.at("scales").get<PCAModel::Vec>();
  m.components = j.at("components").get<std::array<PCAModel::Vec, kFeatureDims>>();
  m.eigenvalues = j.at("eigenvalues").get<PCAModel::Vec>();
  m.explained_fractions = j.at("explained_fractions").get<PCAModel::Vec>();
  m.n_rows = j.at("n_rows").get<std::size_t>();
  m.lexicon_hash = j.value("lexicon_hash", std::string());
  return m;
}

}  // namespace driftprobe
