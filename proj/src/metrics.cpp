#include "lesionbench/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "csv.hpp"
#include "lesionbench/errors.hpp"
#include "lesionbench/parallel.hpp"
#include "lesionbench/random.hpp"

namespace lesionbench {
namespace {

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::isnan(scores[i])) throw DomainError("score " + std::to_string(i) + " is NaN");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

// Twice the Mann-Whitney U of the positives, from per-sample multiplicities
// visited in ascending score order. Each tie block contributes
// 2 * pos * neg_below + pos * neg.
struct PairCount {
  std::uint64_t twice_u = 0;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;

  double auc() const {
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) *
                                           static_cast<double>(negatives));
  }
};

template <typename WeightFn>
PairCount count_pairs(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      const std::vector<std::size_t>& order, WeightFn&& weight) {
  PairCount pc;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const std::uint64_t w = weight(order[j]);
      (labels[order[j]] ? pos : neg) += w;
      ++j;
    }
    pc.twice_u += 2 * pos * pc.negatives + pos * neg;
    pc.positives += pos;
    pc.negatives += neg;
    i = j;
  }
  return pc;
}

void check_labeled(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ShapeError(std::to_string(scores.size()) + " scores but " +
                     std::to_string(labels.size()) + " labels");
  for (std::uint8_t l : labels)
    if (l > 1) throw DomainError("labels must be 0 or 1");
}

double sample_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0));
}

}  // namespace

std::optional<double> try_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_labeled(scores, labels);
  const auto pc = count_pairs(scores, labels, order_by_score(scores), [](std::size_t) { return 1u; });
  if (pc.positives == 0 || pc.negatives == 0) return std::nullopt;
  return pc.auc();
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto a = try_auc(scores, labels);
  if (!a) throw DomainError("AUC needs at least one positive and one negative sample");
  return *a;
}

CvResult evaluate_cv(const PredictionSet& preds, const Dataset& d, const FoldAssignment& f) {
  std::vector<double> scores(d.size());
  std::vector<std::uint8_t> labels(d.size());
  std::vector<std::size_t> fold(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& r = d[i];
    const auto p = preds.find(r.image_name);
    if (!p) throw CoverageError("no prediction for image " + r.image_name);
    const auto k = f.fold_of(r.image_name);
    if (!k) throw CoverageError("image " + r.image_name + " has no fold assignment");
    scores[i] = preds.score(*p);
    labels[i] = r.malignant() ? 1 : 0;
    fold[i] = *k;
  }

  const auto subset_auc = [&](auto&& keep) {
    std::vector<double> s;
    std::vector<std::uint8_t> l;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!keep(i)) continue;
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    return try_auc(s, l);
  };

  CvResult result;
  result.cv_all = try_auc(scores, labels);
  result.cv_2020 = subset_auc([&](std::size_t i) { return d[i].source == SourceYear::Y2020; });
  for (std::size_t k = 0; k < f.k(); ++k)
    result.per_fold.push_back(subset_auc([&](std::size_t i) { return fold[i] == k; }));
  return result;
}

std::string_view metric_name(Metric m) noexcept {
  switch (m) {
    case Metric::CvAll: return "cv_all";
    case Metric::Cv2020: return "cv_2020";
    case Metric::PrivateLb: return "private_lb";
    case Metric::PublicLb: return "public_lb";
  }
  return "";
}

ScoreTable::ScoreTable(std::vector<ScoreRow> rows) : rows_(std::move(rows)) {
  std::unordered_set<std::string> ids;
  for (const auto& r : rows_) {
    if (!ids.insert(r.model_id).second) throw UniquenessError(r.model_id);
    for (double v : r.values)
      if (!(v >= 0.0 && v <= 1.0))
        throw RangeError("model " + r.model_id + ": score " + format_double(v) +
                         " outside [0, 1]");
  }
}

ScoreTable parse_score_table_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  const std::vector<std::string> expected = {"model", "cv_all", "cv_2020", "private_lb",
                                             "public_lb"};
  if (rows.empty() || rows.front().fields.size() != expected.size())
    throw FormatError("score table header must be 'model,cv_all,cv_2020,private_lb,public_lb'");
  for (std::size_t c = 0; c < expected.size(); ++c)
    if (csv::trim(rows.front().fields[c]) != expected[c])
      throw FormatError("score table is missing column '" + expected[c] + "'");

  std::vector<ScoreRow> out;
  for (std::size_t ri = 1; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    if (row.fields.size() != expected.size()) throw ParseError(row.line, "expected 5 fields");
    ScoreRow sr;
    sr.model_id = std::string(csv::trim(row.fields[0]));
    for (std::size_t c = 0; c < 4; ++c) {
      const auto cell = csv::trim(row.fields[c + 1]);
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), sr.values[c]);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw ParseError(row.line, "'" + std::string(cell) + "' is not a number");
    }
    out.push_back(std::move(sr));
  }
  return ScoreTable(std::move(out));
}

StabilityResult stability(const ScoreTable& t) {
  if (t.size() < 2) throw DomainError("stability needs at least two models");
  StabilityResult result;
  for (std::size_t m = 0; m < 4; ++m) {
    std::vector<double> column;
    column.reserve(t.size());
    for (const auto& r : t.rows()) column.push_back(r.values[m]);
    // Summation order must not depend on row order.
    std::sort(column.begin(), column.end());
    result.stddev[m] = sample_std(column);
  }
  std::array<std::size_t, 4> idx = {0, 1, 2, 3};
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return result.stddev[a] < result.stddev[b]; });
  for (std::size_t i = 0; i < 4; ++i) result.ranking[i] = static_cast<Metric>(idx[i]);
  return result;
}

BootstrapResult bootstrap_auc_std(std::span<const double> scores,
                                  std::span<const std::uint8_t> labels, std::size_t n_boot,
                                  std::uint64_t seed, std::size_t threads) {
  check_labeled(scores, labels);
  if (n_boot < kMinBootstrap)
    throw DomainError("bootstrap needs at least " + std::to_string(kMinBootstrap) +
                      " replicates, got " + std::to_string(n_boot));
  auc(scores, labels);  // validates the two-class precondition

  const std::size_t n = scores.size();
  const auto order = order_by_score(scores);

  struct Replicate {
    std::optional<double> auc;
    std::size_t redraws = 0;
  };
  std::vector<Replicate> reps(n_boot);
  parallel_for(n_boot, threads, [&](std::size_t b) {
    Rng rng(splitmix64(seed ^ splitmix64(b)));
    std::vector<std::uint32_t> weight(n);
    for (std::size_t attempt = 0; attempt <= kBootstrapRetries; ++attempt) {
      std::fill(weight.begin(), weight.end(), 0u);
      for (std::size_t i = 0; i < n; ++i) ++weight[rng.below(n)];
      const auto pc = count_pairs(scores, labels, order, [&](std::size_t i) { return weight[i]; });
      if (pc.positives > 0 && pc.negatives > 0) {
        reps[b].auc = pc.auc();
        return;
      }
      ++reps[b].redraws;
    }
  });

  BootstrapResult result;
  std::vector<double> aucs;
  for (const auto& r : reps) {
    result.redraws += r.redraws;
    if (r.auc)
      aucs.push_back(*r.auc);
    else
      ++result.skipped;
  }
  if (aucs.empty()) throw DomainError("every bootstrap resample had a single class");
  result.replicates = aucs.size();
  result.stddev = aucs.size() > 1 ? sample_std(aucs) : 0.0;
  return result;
}

}  // namespace lesionbench
