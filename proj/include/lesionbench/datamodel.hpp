#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lesionbench/targets.hpp"

namespace lesionbench {

enum class Sex { Male, Female, Missing };
enum class BinaryTarget { Benign, Malignant };
enum class SourceYear { Y2019, Y2020 };

// One lesion image's metadata row.
struct SampleRecord {
  std::string image_name;
  std::string patient_id;
  Sex sex = Sex::Missing;
  std::optional<double> age_approx;
  std::optional<std::string> anatom_site;
  std::optional<std::string> diagnosis;
  BinaryTarget target = BinaryTarget::Benign;
  SourceYear source = SourceYear::Y2020;
  std::optional<std::uint64_t> image_size_bytes;

  bool malignant() const noexcept { return target == BinaryTarget::Malignant; }
  bool operator==(const SampleRecord&) const = default;
};

// Ordered records plus a patient index. Construction checks image_name
// uniqueness and the per-field invariants of SampleRecord.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<SampleRecord> records);

  const std::vector<SampleRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const SampleRecord& operator[](std::size_t i) const { return records_[i]; }

  // Positions of every record of each patient, in file order.
  const std::unordered_map<std::string, std::vector<std::size_t>>& by_patient() const noexcept {
    return by_patient_;
  }
  // Patient ids in order of first appearance.
  const std::vector<std::string>& patients() const noexcept { return patients_; }

  std::optional<std::size_t> find(std::string_view image_name) const;
  bool has_image_sizes() const noexcept;

  bool operator==(const Dataset& other) const { return records_ == other.records_; }

 private:
  std::vector<SampleRecord> records_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_patient_;
  std::unordered_map<std::string, std::size_t> by_image_;
  std::vector<std::string> patients_;
};

struct ValidationIssue {
  std::string image_name;
  std::string rule;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;

  bool ok() const noexcept { return errors.empty(); }
};

// Class a record trains and stratifies on: MEL for malignant images,
// otherwise the mapped diagnosis.
DiagnosisClass record_class(const SampleRecord& r, TargetScheme scheme);

inline constexpr double kExpectedPositiveRatio2020 = 0.0176;

Dataset parse_metadata_csv(std::string_view text);
std::string write_metadata_csv(const Dataset& d);

// Flags every record breaking "malignant iff diagnosis is melanoma", warns on
// missing diagnoses and on a 2020 positive ratio more than a factor of two
// away from 1.76%.
ValidationReport validate_consistency(const Dataset& d);

// Per-image predictions, either one MEL score per image (scalar) or the full
// class-probability rows of a scheme.
class PredictionSet {
 public:
  PredictionSet() = default;

  static PredictionSet scalar(std::vector<std::string> images, std::vector<double> scores);
  static PredictionSet full(TargetScheme scheme, std::vector<std::string> images,
                            std::vector<double> row_major_probs);

  bool is_scalar() const noexcept { return !scheme_.has_value(); }
  const std::optional<TargetScheme>& scheme() const noexcept { return scheme_; }
  std::size_t size() const noexcept { return images_.size(); }
  std::size_t width() const noexcept { return width_; }
  const std::vector<std::string>& images() const noexcept { return images_; }
  const std::vector<double>& values() const noexcept { return values_; }

  // Scalar score for row i: the value itself, or MEL's probability.
  double score(std::size_t i) const;
  std::vector<double> scores() const;
  std::optional<std::size_t> find(std::string_view image_name) const;

  bool operator==(const PredictionSet& other) const {
    return scheme_ == other.scheme_ && images_ == other.images_ && values_ == other.values_;
  }

 private:
  std::optional<TargetScheme> scheme_;
  std::size_t width_ = 1;
  std::vector<std::string> images_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::string write_predictions_csv(const PredictionSet& p);
PredictionSet parse_predictions_csv(std::string_view text);

// Image-keyed fixed-width numeric table, used for the feature export
// (`image_name,f0,...`) and external CNN features (`image_name,c0,...`).
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(std::size_t dim, std::vector<std::string> images, std::vector<double> values);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return images_.size(); }
  const std::vector<std::string>& images() const noexcept { return images_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::optional<std::size_t> find(std::string_view image_name) const;
  const double* row(std::size_t i) const { return values_.data() + i * dim_; }

  bool operator==(const FeatureTable& o) const {
    return dim_ == o.dim_ && images_ == o.images_ && values_ == o.values_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> images_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::string write_feature_csv(const FeatureTable& t, char column_prefix);
FeatureTable parse_feature_csv(std::string_view text, char column_prefix);

// Text for a double that parses back to the same value.
std::string format_double(double v);

}  // namespace lesionbench
