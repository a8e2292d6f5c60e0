#include "lesionbench/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_set>

#include "csv.hpp"
#include "lesionbench/errors.hpp"

namespace lesionbench {
namespace {

constexpr std::string_view kMetadataColumns[] = {
    "image_name", "patient_id", "sex",    "age_approx", "anatom_site_general_challenge",
    "diagnosis",  "target",     "source"};
constexpr std::string_view kSizeColumn = "image_size_bytes";

std::optional<double> parse_real(std::string_view s) {
  s = csv::trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_unsigned(std::string_view s) {
  s = csv::trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::string> optional_cell(const std::string& cell) {
  if (csv::trim(cell).empty()) return std::nullopt;
  return cell;
}

std::size_t column_of(const std::vector<std::string>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (csv::trim(header[i]) == name) return i;
  return header.size();
}

void check_record(const SampleRecord& r) {
  if (r.image_name.empty()) throw FormatError("record with empty image_name");
  if (r.age_approx && !(*r.age_approx >= 0.0 && *r.age_approx <= 120.0))
    throw RangeError("image " + r.image_name + ": age_approx " + format_double(*r.age_approx) +
                     " outside [0, 120]");
  if (r.image_size_bytes && *r.image_size_bytes == 0)
    throw RangeError("image " + r.image_name + ": image_size_bytes must be positive");
}

const std::vector<std::string>& probability_columns(TargetScheme scheme) {
  static const auto build = [](TargetScheme s) {
    std::vector<std::string> cols;
    for (DiagnosisClass c : scheme_classes(s)) cols.push_back("prob_" + std::string(class_name(c)));
    return cols;
  };
  static const std::vector<std::string> nine = build(TargetScheme::NineClass);
  static const std::vector<std::string> four = build(TargetScheme::FourClass);
  return scheme == TargetScheme::NineClass ? nine : four;
}

void check_probability(double v, const std::string& image) {
  if (!(v >= 0.0 && v <= 1.0))
    throw RangeError("image " + image + ": probability " + format_double(v) + " outside [0, 1]");
}

std::unordered_map<std::string, std::size_t> index_images(const std::vector<std::string>& images) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    if (!index.emplace(images[i], i).second) throw UniquenessError(images[i]);
  return index;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<SampleRecord> records) : records_(std::move(records)) {
  by_image_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    check_record(r);
    if (!by_image_.emplace(r.image_name, i).second) throw UniquenessError(r.image_name);
    auto [it, inserted] = by_patient_.try_emplace(r.patient_id);
    if (inserted) patients_.push_back(r.patient_id);
    it->second.push_back(i);
  }
}

std::optional<std::size_t> Dataset::find(std::string_view image_name) const {
  const auto it = by_image_.find(std::string(image_name));
  if (it == by_image_.end()) return std::nullopt;
  return it->second;
}

bool Dataset::has_image_sizes() const noexcept {
  return std::any_of(records_.begin(), records_.end(),
                     [](const SampleRecord& r) { return r.image_size_bytes.has_value(); });
}

Dataset parse_metadata_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw FormatError("metadata CSV is empty; missing column 'image_name'");
  const auto& header = rows.front().fields;

  std::size_t col[std::size(kMetadataColumns)];
  for (std::size_t c = 0; c < std::size(kMetadataColumns); ++c) {
    col[c] = column_of(header, kMetadataColumns[c]);
    if (col[c] == header.size())
      throw FormatError("metadata header is missing column '" + std::string(kMetadataColumns[c]) +
                        "'");
  }
  const std::size_t size_col = column_of(header, kSizeColumn);
  const bool has_size = size_col != header.size();

  std::vector<SampleRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t ri = 1; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    const std::size_t line = row.line;
    if (row.fields.size() != header.size())
      throw ParseError(line, "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(row.fields.size()));
    const auto cell = [&](std::size_t c) -> const std::string& { return row.fields[col[c]]; };

    SampleRecord r;
    r.image_name = std::string(csv::trim(cell(0)));
    r.patient_id = std::string(csv::trim(cell(1)));
    if (r.image_name.empty()) throw ParseError(line, "empty image_name");

    const auto sex = csv::trim(cell(2));
    if (sex.empty())
      r.sex = Sex::Missing;
    else if (sex == "male")
      r.sex = Sex::Male;
    else if (sex == "female")
      r.sex = Sex::Female;
    else
      throw ParseError(line, "sex must be 'male', 'female' or empty, got '" + std::string(sex) + "'");

    if (!csv::trim(cell(3)).empty()) {
      const auto age = parse_real(cell(3));
      if (!age) throw ParseError(line, "age_approx '" + cell(3) + "' is not a number");
      if (!(*age >= 0.0 && *age <= 120.0))
        throw ParseError(line, "age_approx " + cell(3) + " outside [0, 120]");
      r.age_approx = *age;
    }
    r.anatom_site = optional_cell(cell(4));
    r.diagnosis = optional_cell(cell(5));

    const auto target = csv::trim(cell(6));
    if (target == "1")
      r.target = BinaryTarget::Malignant;
    else if (target == "0")
      r.target = BinaryTarget::Benign;
    else
      throw ParseError(line, "target must be 0 or 1, got '" + std::string(target) + "'");

    const auto source = csv::trim(cell(7));
    if (source == "2019")
      r.source = SourceYear::Y2019;
    else if (source == "2020")
      r.source = SourceYear::Y2020;
    else
      throw ParseError(line, "source must be 2019 or 2020, got '" + std::string(source) + "'");

    if (has_size && !csv::trim(row.fields[size_col]).empty()) {
      const auto bytes = parse_unsigned(row.fields[size_col]);
      if (!bytes || *bytes == 0)
        throw ParseError(line, "image_size_bytes '" + row.fields[size_col] +
                                   "' is not a positive integer");
      r.image_size_bytes = *bytes;
    }
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records));
}

std::string write_metadata_csv(const Dataset& d) {
  const bool with_size = d.has_image_sizes();
  std::string out;
  for (std::size_t c = 0; c < std::size(kMetadataColumns); ++c) {
    if (c) out.push_back(',');
    out += kMetadataColumns[c];
  }
  if (with_size) out += "," + std::string(kSizeColumn);
  out.push_back('\n');

  for (const auto& r : d.records()) {
    std::vector<std::string> f;
    f.push_back(r.image_name);
    f.push_back(r.patient_id);
    f.push_back(r.sex == Sex::Male ? "male" : r.sex == Sex::Female ? "female" : "");
    f.push_back(r.age_approx ? format_double(*r.age_approx) : "");
    f.push_back(r.anatom_site.value_or(""));
    f.push_back(r.diagnosis.value_or(""));
    f.push_back(r.malignant() ? "1" : "0");
    f.push_back(r.source == SourceYear::Y2019 ? "2019" : "2020");
    if (with_size) f.push_back(r.image_size_bytes ? std::to_string(*r.image_size_bytes) : "");
    out += csv::join(f);
    out.push_back('\n');
  }
  return out;
}

DiagnosisClass record_class(const SampleRecord& r, TargetScheme scheme) {
  if (r.malignant()) return DiagnosisClass::MEL;
  return map_diagnosis(r.diagnosis, scheme);
}

ValidationReport validate_consistency(const Dataset& d) {
  ValidationReport report;
  std::size_t cohort = 0;
  std::size_t cohort_positive = 0;
  for (const auto& r : d.records()) {
    if (r.source == SourceYear::Y2020) {
      ++cohort;
      cohort_positive += r.malignant() ? 1 : 0;
    }
    if (!r.diagnosis) {
      report.warnings.push_back({r.image_name, "missing-diagnosis",
                                 "diagnosis missing; malignant/melanoma agreement unverifiable"});
      continue;
    }
    const bool mel = map_diagnosis(r.diagnosis, TargetScheme::NineClass) == DiagnosisClass::MEL;
    if (mel && !r.malignant())
      report.errors.push_back({r.image_name, "mel-iff-malignant",
                               "diagnosis '" + *r.diagnosis + "' is melanoma but target is benign"});
    else if (!mel && r.malignant())
      report.errors.push_back(
          {r.image_name, "mel-iff-malignant",
           "target is malignant but diagnosis '" + *r.diagnosis + "' is not melanoma"});
  }
  if (cohort > 0) {
    const double ratio = static_cast<double>(cohort_positive) / static_cast<double>(cohort);
    if (ratio > 2.0 * kExpectedPositiveRatio2020 || ratio < kExpectedPositiveRatio2020 / 2.0)
      report.warnings.push_back({"", "cohort-positive-ratio",
                                 "2020 positive ratio " + format_double(ratio) +
                                     " is more than a factor of 2 away from 0.0176"});
  }
  return report;
}

// ---------------------------------------------------------------------------
// PredictionSet

PredictionSet PredictionSet::scalar(std::vector<std::string> images, std::vector<double> scores) {
  if (images.size() != scores.size())
    throw ShapeError("prediction set has " + std::to_string(images.size()) + " images but " +
                     std::to_string(scores.size()) + " scores");
  for (std::size_t i = 0; i < scores.size(); ++i) check_probability(scores[i], images[i]);
  PredictionSet p;
  p.index_ = index_images(images);
  p.images_ = std::move(images);
  p.values_ = std::move(scores);
  p.width_ = 1;
  return p;
}

PredictionSet PredictionSet::full(TargetScheme scheme, std::vector<std::string> images,
                                  std::vector<double> row_major_probs) {
  const std::size_t width = class_count(scheme);
  if (row_major_probs.size() != images.size() * width)
    throw ShapeError("prediction set needs " + std::to_string(images.size() * width) +
                     " probabilities, got " + std::to_string(row_major_probs.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double v = row_major_probs[i * width + c];
      check_probability(v, images[i]);
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw RangeError("image " + images[i] + ": probabilities sum to " + format_double(sum));
  }
  PredictionSet p;
  p.index_ = index_images(images);
  p.scheme_ = scheme;
  p.width_ = width;
  p.images_ = std::move(images);
  p.values_ = std::move(row_major_probs);
  return p;
}

double PredictionSet::score(std::size_t i) const {
  if (!scheme_) return values_.at(i);
  return mel_probability(std::span<const double>(values_).subspan(i * width_, width_), *scheme_);
}

std::vector<double> PredictionSet::scores() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = score(i);
  return out;
}

std::optional<std::size_t> PredictionSet::find(std::string_view image_name) const {
  const auto it = index_.find(std::string(image_name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string write_predictions_csv(const PredictionSet& p) {
  std::string out = "image_name";
  if (p.is_scalar()) {
    out += ",target";
  } else {
    for (const auto& c : probability_columns(*p.scheme())) out += "," + c;
  }
  out.push_back('\n');
  for (std::size_t i = 0; i < p.size(); ++i) {
    out += csv::escape(p.images()[i]);
    for (std::size_t c = 0; c < p.width(); ++c) {
      out.push_back(',');
      out += format_double(p.values()[i * p.width() + c]);
    }
    out.push_back('\n');
  }
  return out;
}

PredictionSet parse_predictions_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw FormatError("prediction CSV is empty");
  std::vector<std::string> header;
  for (const auto& h : rows.front().fields) header.emplace_back(csv::trim(h));

  std::optional<TargetScheme> scheme;
  const auto matches = [&](const std::vector<std::string>& cols) {
    return header.size() == cols.size() + 1 && std::equal(cols.begin(), cols.end(), header.begin() + 1);
  };
  if (header.empty() || header[0] != "image_name")
    throw FormatError("prediction CSV header must start with 'image_name'");
  if (header.size() == 2 && header[1] == "target") {
    scheme = std::nullopt;
  } else if (matches(probability_columns(TargetScheme::NineClass))) {
    scheme = TargetScheme::NineClass;
  } else if (matches(probability_columns(TargetScheme::FourClass))) {
    scheme = TargetScheme::FourClass;
  } else {
    throw FormatError("unrecognized prediction CSV header");
  }

  std::vector<std::string> images;
  std::vector<double> values;
  images.reserve(rows.size() - 1);
  for (std::size_t ri = 1; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    if (row.fields.size() != header.size())
      throw ParseError(row.line, "expected " + std::to_string(header.size()) + " fields");
    images.emplace_back(csv::trim(row.fields[0]));
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      const auto v = parse_real(row.fields[c]);
      if (!v) throw ParseError(row.line, "'" + row.fields[c] + "' is not a number");
      values.push_back(*v);
    }
  }
  if (!scheme) return PredictionSet::scalar(std::move(images), std::move(values));
  return PredictionSet::full(*scheme, std::move(images), std::move(values));
}

// ---------------------------------------------------------------------------
// FeatureTable

FeatureTable::FeatureTable(std::size_t dim, std::vector<std::string> images,
                           std::vector<double> values)
    : dim_(dim), images_(std::move(images)), values_(std::move(values)) {
  if (values_.size() != images_.size() * dim_)
    throw ShapeError("feature table needs " + std::to_string(images_.size() * dim_) +
                     " values, got " + std::to_string(values_.size()));
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i]))
      throw DomainError("non-finite feature value for image " + images_[i / dim_]);
  index_ = index_images(images_);
}

std::optional<std::size_t> FeatureTable::find(std::string_view image_name) const {
  const auto it = index_.find(std::string(image_name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string write_feature_csv(const FeatureTable& t, char column_prefix) {
  std::string out = "image_name";
  for (std::size_t c = 0; c < t.dim(); ++c) {
    out.push_back(',');
    out.push_back(column_prefix);
    out += std::to_string(c);
  }
  out.push_back('\n');
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += csv::escape(t.images()[i]);
    for (std::size_t c = 0; c < t.dim(); ++c) {
      out.push_back(',');
      out += format_double(t.row(i)[c]);
    }
    out.push_back('\n');
  }
  return out;
}

FeatureTable parse_feature_csv(std::string_view text, char column_prefix) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw FormatError("feature CSV is empty");
  const auto& header = rows.front().fields;
  if (header.empty() || csv::trim(header[0]) != "image_name")
    throw FormatError("feature CSV header must start with 'image_name'");
  const std::size_t dim = header.size() - 1;
  for (std::size_t c = 0; c < dim; ++c) {
    const std::string expected = std::string(1, column_prefix) + std::to_string(c);
    if (csv::trim(header[c + 1]) != expected)
      throw FormatError("feature CSV column " + std::to_string(c + 1) + " must be '" + expected +
                        "'");
  }
  std::vector<std::string> images;
  std::vector<double> values;
  for (std::size_t ri = 1; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    if (row.fields.size() != header.size())
      throw ParseError(row.line, "expected " + std::to_string(header.size()) + " fields");
    images.emplace_back(csv::trim(row.fields[0]));
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      const auto v = parse_real(row.fields[c]);
      if (!v) throw ParseError(row.line, "'" + row.fields[c] + "' is not a number");
      values.push_back(*v);
    }
  }
  return FeatureTable(dim, std::move(images), std::move(values));
}

}  // namespace lesionbench
