#include "lesionbench/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lesionbench/errors.hpp"

namespace lesionbench {

std::vector<double> rank_transform(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n == 0) throw DomainError("rank transform needs at least one score");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(scores[i]))
      throw DomainError("score at index " + std::to_string(i) + " is not finite");
  if (n == 1) return {0.5};

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // A tie block at sorted positions [i, j) shares the 1-based average rank
  // (i + 1 + j) / 2, so (r - 1) / (n - 1) = (i + j - 1) / (2 (n - 1)).
  std::vector<double> ranked(n);
  const double denom = 2.0 * static_cast<double>(n - 1);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double value = static_cast<double>(i + j - 1) / denom;
    for (std::size_t t = i; t < j; ++t) ranked[order[t]] = value;
    i = j;
  }
  return ranked;
}

PredictionSet rank_average(std::span<const PredictionSet> models) {
  if (models.empty()) throw DomainError("rank averaging needs at least one model");
  const auto& reference = models.front();
  const std::size_t n = reference.size();

  std::vector<std::vector<std::size_t>> row_of(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& model = models[m];
    bool same = model.size() == n;
    if (same) {
      row_of[m].resize(n);
      for (std::size_t i = 0; i < n && same; ++i) {
        const auto row = model.find(reference.images()[i]);
        if (!row) same = false;
        else row_of[m][i] = *row;
      }
    }
    if (!same) {
      std::set<std::string> a(reference.images().begin(), reference.images().end());
      std::set<std::string> b(model.images().begin(), model.images().end());
      std::vector<std::string> diff;
      std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(),
                                    std::back_inserter(diff));
      std::string listed;
      for (std::size_t k = 0; k < std::min<std::size_t>(diff.size(), 10); ++k)
        listed += (k ? ", " : "") + diff[k];
      throw CoverageError("model " + std::to_string(m) + " covers a different image set (" +
                          std::to_string(diff.size()) + " differing: " + listed + ")");
    }
  }

  std::vector<std::vector<double>> ranks;
  ranks.reserve(models.size());
  for (const auto& model : models) {
    const auto scores = model.scores();
    ranks.push_back(rank_transform(scores));
  }

  // Each image's ranks are summed in sorted order so the result is
  // bitwise independent of model order.
  std::vector<double> averaged(n);
  std::vector<double> column(models.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < models.size(); ++m) column[m] = ranks[m][row_of[m][i]];
    std::sort(column.begin(), column.end());
    averaged[i] = std::accumulate(column.begin(), column.end(), 0.0) /
                  static_cast<double>(models.size());
  }
  return PredictionSet::scalar(reference.images(), std::move(averaged));
}

}  // namespace lesionbench
