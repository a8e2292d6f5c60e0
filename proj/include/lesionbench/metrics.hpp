#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesionbench/datamodel.hpp"
#include "lesionbench/folds.hpp"

namespace lesionbench {

// Mann-Whitney AUC with ties counted half. Throws DomainError unless both
// classes are present and ShapeError on a length mismatch.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Same, but returns nullopt instead of throwing on single-class input.
std::optional<double> try_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct CvResult {
  std::optional<double> cv_all;
  std::optional<double> cv_2020;
  std::vector<std::optional<double>> per_fold;
};

// cv_all over all records, cv_2020 over the 2020 cohort and one AUC per fold.
// Throws CoverageError naming the first record without a prediction.
CvResult evaluate_cv(const PredictionSet& preds, const Dataset& d, const FoldAssignment& f);

enum class Metric : std::size_t { CvAll = 0, Cv2020 = 1, PrivateLb = 2, PublicLb = 3 };
std::string_view metric_name(Metric m) noexcept;

struct ScoreRow {
  std::string model_id;
  std::array<double, 4> values{};
};

class ScoreTable {
 public:
  ScoreTable() = default;
  explicit ScoreTable(std::vector<ScoreRow> rows);
  const std::vector<ScoreRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }

 private:
  std::vector<ScoreRow> rows_;
};

// Header `model,cv_all,cv_2020,private_lb,public_lb`.
ScoreTable parse_score_table_csv(std::string_view text);

struct StabilityResult {
  std::array<double, 4> stddev{};
  // Metrics from most to least stable (ascending standard deviation).
  std::array<Metric, 4> ranking{};
};

// Sample standard deviation of each metric column; needs at least two rows.
StabilityResult stability(const ScoreTable& t);

struct BootstrapResult {
  double stddev = 0.0;
  std::size_t replicates = 0;
  std::size_t redraws = 0;
  std::size_t skipped = 0;
};

inline constexpr std::size_t kMinBootstrap = 100;
inline constexpr std::size_t kBootstrapRetries = 64;

// Standard deviation of AUC over `n_boot` full-size resamples with
// replacement. Replicate i draws from a generator seeded by
// (seed, i), so the result does not depend on `threads`.
BootstrapResult bootstrap_auc_std(std::span<const double> scores,
                                  std::span<const std::uint8_t> labels, std::size_t n_boot,
                                  std::uint64_t seed, std::size_t threads = 1);

}  // namespace lesionbench
