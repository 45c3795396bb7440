#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gcfa/error.hpp"

namespace gcfa {

using Index = Eigen::Index;
using MissingMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

enum class MarginKind { Continuous, Ordinal, Binary };

struct MarginSpec {
  MarginKind kind = MarginKind::Continuous;
  int levels = 0;
  std::string label;

  static MarginSpec continuous(std::string label = {}) {
    return {MarginKind::Continuous, 0, std::move(label)};
  }
  static MarginSpec ordinal(int levels, std::string label = {}) {
    if (levels < 2) throw input_error("ordinal margin needs at least 2 levels");
    return {MarginKind::Ordinal, levels, std::move(label)};
  }
  static MarginSpec binary(std::string label = {}) {
    return {MarginKind::Binary, 2, std::move(label)};
  }

  bool discrete() const { return kind != MarginKind::Continuous; }
  // Binary is Ordinal(2) everywhere downstream.
  int level_count() const { return kind == MarginKind::Binary ? 2 : levels; }
};

/// n x p observed data of mixed type. Missing cells hold NaN and are flagged in
/// the mask. Construction validates every ingestion invariant, so an existing
/// object is always usable by the samplers.
class MixedDataMatrix {
 public:
  MixedDataMatrix() = default;

  MixedDataMatrix(Eigen::MatrixXd values, MissingMask missing, std::vector<MarginSpec> margins)
      : values_(std::move(values)), missing_(std::move(missing)), margins_(std::move(margins)) {
    validate();
  }

  // Missing cells are inferred from NaN entries.
  MixedDataMatrix(Eigen::MatrixXd values, std::vector<MarginSpec> margins)
      : values_(std::move(values)), margins_(std::move(margins)) {
    missing_ = values_.array().isNaN();
    validate();
  }

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  double operator()(Index i, Index j) const { return values_(i, j); }
  bool is_missing(Index i, Index j) const { return missing_(i, j); }
  const Eigen::MatrixXd& values() const { return values_; }
  const MissingMask& missing() const { return missing_; }
  const std::vector<MarginSpec>& margins() const { return margins_; }
  const MarginSpec& margin(Index j) const { return margins_[static_cast<std::size_t>(j)]; }

  std::span<const double> column(Index j) const {
    return {values_.data() + j * values_.rows(), static_cast<std::size_t>(values_.rows())};
  }

  Index observed_count(Index j) const { return (!missing_.col(j)).count(); }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < margins_.size(); ++j)
      out.push_back(margins_[j].label.empty() ? "V" + std::to_string(j + 1) : margins_[j].label);
    return out;
  }

  // Same data with column j replaced; used for monotone-transform checks.
  MixedDataMatrix with_column(Index j, const Eigen::VectorXd& column) const {
    Eigen::MatrixXd v = values_;
    v.col(j) = column;
    for (Index i = 0; i < rows(); ++i)
      if (missing_(i, j)) v(i, j) = kMissing;
    return MixedDataMatrix(std::move(v), missing_, margins_);
  }

 private:
  void validate() {
    const Index n = values_.rows();
    const Index p = values_.cols();
    if (n == 0 || p == 0) throw input_error("data matrix is empty");
    if (missing_.rows() != n || missing_.cols() != p)
      throw input_error("missing mask shape does not match data");
    if (static_cast<Index>(margins_.size()) != p)
      throw input_error("expected " + std::to_string(p) + " margin specs, got " +
                        std::to_string(margins_.size()));
    for (Index j = 0; j < p; ++j) {
      const auto& m = margins_[static_cast<std::size_t>(j)];
      const std::string name = m.label.empty() ? "column " + std::to_string(j + 1) : "'" + m.label + "'";
      if (m.kind == MarginKind::Ordinal && m.levels < 2)
        throw input_error(name + ": ordinal margin needs at least 2 levels");
      double first = kMissing;
      bool varies = false;
      Index seen = 0;
      for (Index i = 0; i < n; ++i) {
        if (missing_(i, j)) {
          values_(i, j) = kMissing;
          continue;
        }
        const double y = values_(i, j);
        if (!std::isfinite(y))
          throw input_error(name + ", row " + std::to_string(i + 1) + ": non-finite value");
        if (m.discrete()) {
          const int c = m.level_count();
          if (y != std::round(y) || y < 1 || y > c)
            throw input_error(name + ", row " + std::to_string(i + 1) + ": ordinal code " +
                              std::to_string(y) + " outside 1.." + std::to_string(c));
        }
        if (seen == 0) first = y;
        else if (y != first) varies = true;
        ++seen;
      }
      if (seen == 0) throw input_error(name + " is entirely missing");
      if (!varies)
        throw input_error(name + " is constant; it carries no rank information");
    }
  }

  Eigen::MatrixXd values_;
  MissingMask missing_;
  std::vector<MarginSpec> margins_;
};

// ---------------------------------------------------------------------------
// Rank structure of the extended rank likelihood.

struct TieGroup {
  double value = 0.0;
  std::vector<Index> rows;
};

// Groups of one column, strictly increasing in value. Missing rows are kept
// apart; they take no part in the ordering.
struct ColumnTies {
  std::vector<TieGroup> groups;
  std::vector<Index> missing;

  std::size_t size() const { return groups.size(); }
  const TieGroup& operator[](std::size_t g) const { return groups[g]; }
  auto begin() const { return groups.begin(); }
  auto end() const { return groups.end(); }
};

struct TieGroups {
  std::vector<ColumnTies> columns;

  const ColumnTies& column(Index j) const { return columns[static_cast<std::size_t>(j)]; }
  Index cols() const { return static_cast<Index>(columns.size()); }
};

/// Partition of the observed rows of one column by distinct value. NaN marks a
/// missing row. Rows within a group carry no mutual ordering constraint.
inline ColumnTies build_column_ties(std::span<const double> column) {
  ColumnTies ties;
  std::vector<Index> order;
  order.reserve(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (std::isnan(column[i])) ties.missing.push_back(static_cast<Index>(i));
    else order.push_back(static_cast<Index>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return column[static_cast<std::size_t>(a)] < column[static_cast<std::size_t>(b)];
  });
  auto& groups = ties.groups;
  for (Index i : order) {
    const double y = column[static_cast<std::size_t>(i)];
    if (groups.empty() || groups.back().value != y) groups.push_back({y, {}});
    groups.back().rows.push_back(i);
  }
  return ties;
}

inline TieGroups build_tie_groups(const MixedDataMatrix& data) {
  TieGroups ties;
  ties.columns.reserve(static_cast<std::size_t>(data.cols()));
  for (Index j = 0; j < data.cols(); ++j) ties.columns.push_back(build_column_ties(data.column(j)));
  return ties;
}

// True when every column of z (n x p) is consistent with the observed ordering.
inline bool respects_ranks(const Eigen::MatrixXd& z, const TieGroups& ties) {
  for (Index j = 0; j < ties.cols(); ++j) {
    double previous_max = -std::numeric_limits<double>::infinity();
    for (const auto& g : ties.column(j)) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (Index i : g.rows) {
        lo = std::min(lo, z(i, j));
        hi = std::max(hi, z(i, j));
      }
      if (!(lo > previous_max)) return false;
      previous_max = hi;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Scaled empirical marginal cdf, F(t) = #{y_i <= t} / (n + 1).

class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;

  /// NaN entries are ignored.
  static EmpiricalCdf from_column(std::span<const double> column) {
    EmpiricalCdf cdf;
    std::vector<double> y;
    for (double v : column)
      if (!std::isnan(v)) y.push_back(v);
    if (y.empty()) throw input_error("empirical cdf of an empty column");
    std::sort(y.begin(), y.end());
    const double denom = static_cast<double>(y.size()) + 1.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (i + 1 < y.size() && y[i + 1] == y[i]) continue;
      cdf.values_.push_back(y[i]);
      cdf.cumulative_.push_back(static_cast<double>(i + 1) / denom);
    }
    cdf.count_ = y.size();
    return cdf;
  }

  double operator()(double t) const {
    auto it = std::upper_bound(values_.begin(), values_.end(), t);
    if (it == values_.begin()) return 0.0;
    return cumulative_[static_cast<std::size_t>(it - values_.begin()) - 1];
  }

  // Left limit F(t-), the proportion strictly below t.
  double lower_limit(double t) const {
    auto it = std::lower_bound(values_.begin(), values_.end(), t);
    if (it == values_.begin()) return 0.0;
    return cumulative_[static_cast<std::size_t>(it - values_.begin()) - 1];
  }

  /// Pseudo-inverse inf{y : F(y) >= u}. Values of u above the largest stored
  /// proportion map to the column maximum.
  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw input_error("quantile level must lie in (0,1)");
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) return values_.back();
    return values_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

  bool on_support(double x) const { return std::binary_search(values_.begin(), values_.end(), x); }

  const std::vector<double>& support() const { return values_; }
  const std::vector<double>& cumulative() const { return cumulative_; }
  std::size_t count() const { return count_; }
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }

 private:
  std::vector<double> values_;
  std::vector<double> cumulative_;
  std::size_t count_ = 0;
};

inline EmpiricalCdf empirical_cdf(const MixedDataMatrix& data, Index j) {
  return EmpiricalCdf::from_column(data.column(j));
}

inline std::vector<EmpiricalCdf> empirical_cdfs(const MixedDataMatrix& data) {
  std::vector<EmpiricalCdf> out;
  for (Index j = 0; j < data.cols(); ++j) out.push_back(empirical_cdf(data, j));
  return out;
}

inline double pseudo_inverse_cdf(const EmpiricalCdf& cdf, double u) { return cdf.quantile(u); }

}  // namespace gcfa
