#include "lesionbench/folds.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "csv.hpp"
#include "lesionbench/errors.hpp"

namespace lesionbench {
namespace {

constexpr std::size_t kClasses = kAllClasses.size();

struct PatientGroup {
  std::string id;
  std::array<std::size_t, kClasses> counts{};
  std::size_t total = 0;
  std::vector<std::size_t> rows;
};

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

FoldAssignment::FoldAssignment(std::size_t k, std::uint64_t seed, std::vector<std::string> images,
                               std::vector<std::size_t> folds)
    : k_(k), seed_(seed), images_(std::move(images)), folds_(std::move(folds)) {
  if (k_ < 2) throw DomainError("fold count must be at least 2, got " + std::to_string(k_));
  if (images_.size() != folds_.size()) throw ShapeError("fold assignment size mismatch");
  index_.reserve(images_.size());
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (folds_[i] >= k_)
      throw RangeError("image " + images_[i] + " assigned to fold " + std::to_string(folds_[i]) +
                       " of " + std::to_string(k_));
    if (!index_.emplace(images_[i], i).second) throw UniquenessError(images_[i]);
  }
}

std::optional<std::size_t> FoldAssignment::fold_of(std::string_view image_name) const {
  const auto it = index_.find(std::string(image_name));
  if (it == index_.end()) return std::nullopt;
  return folds_[it->second];
}

FoldAssignment assign_folds(const Dataset& d, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw DomainError("fold count must be at least 2, got " + std::to_string(k));
  if (d.empty()) throw DomainError("cannot split an empty dataset");

  std::vector<PatientGroup> groups;
  groups.reserve(d.patients().size());
  for (const auto& pid : d.patients()) {
    PatientGroup g;
    g.id = pid;
    g.rows = d.by_patient().at(pid);
    for (std::size_t i : g.rows) {
      ++g.counts[class_index(record_class(d[i], TargetScheme::NineClass), TargetScheme::NineClass)];
      ++g.total;
    }
    groups.push_back(std::move(g));
  }
  std::sort(groups.begin(), groups.end(), [](const PatientGroup& a, const PatientGroup& b) {
    if (a.total != b.total) return a.total > b.total;
    if (a.counts != b.counts) return a.counts > b.counts;
    return a.id < b.id;
  });

  std::vector<std::array<std::size_t, kClasses>> class_load(k);
  std::vector<std::size_t> fold_size(k, 0);
  std::vector<std::size_t> fold_of_row(d.size(), 0);
  std::vector<std::size_t> tied;
  tied.reserve(k);

  for (const auto& g : groups) {
    std::size_t best_load = SIZE_MAX;
    std::size_t best_size = SIZE_MAX;
    tied.clear();
    for (std::size_t f = 0; f < k; ++f) {
      std::size_t load = 0;
      for (std::size_t c = 0; c < kClasses; ++c) load += g.counts[c] * class_load[f][c];
      if (load < best_load || (load == best_load && fold_size[f] < best_size)) {
        best_load = load;
        best_size = fold_size[f];
        tied.assign(1, f);
      } else if (load == best_load && fold_size[f] == best_size) {
        tied.push_back(f);
      }
    }
    const std::uint64_t draw = splitmix64(seed ^ fnv1a64(g.id));
    const std::size_t fold = tied[draw % tied.size()];
    for (std::size_t c = 0; c < kClasses; ++c) class_load[fold][c] += g.counts[c];
    fold_size[fold] += g.total;
    for (std::size_t i : g.rows) fold_of_row[i] = fold;
  }

  std::vector<std::string> images;
  images.reserve(d.size());
  for (const auto& r : d.records()) images.push_back(r.image_name);
  return FoldAssignment(k, seed, std::move(images), std::move(fold_of_row));
}

FoldRatioReport fold_ratio_report(const Dataset& d, const FoldAssignment& f) {
  FoldRatioReport report;
  report.folds.resize(f.k());
  for (const auto& r : d.records()) {
    const auto fold = f.fold_of(r.image_name);
    if (!fold) throw CoverageError("image " + r.image_name + " has no fold assignment");
    auto& s = report.folds[*fold];
    ++s.size;
    ++report.global.size;
    if (r.malignant()) {
      ++s.positives;
      ++report.global.positives;
    }
  }
  const auto finish = [](FoldStats& s) {
    s.ratio = s.size ? static_cast<double>(s.positives) / static_cast<double>(s.size) : 0.0;
  };
  for (auto& s : report.folds) finish(s);
  finish(report.global);
  return report;
}

std::string write_folds_csv(const FoldAssignment& f) {
  std::string out = "image_name,fold\n";
  for (std::size_t i = 0; i < f.images().size(); ++i) {
    out += csv::escape(f.images()[i]);
    out.push_back(',');
    out += std::to_string(f.folds()[i]);
    out.push_back('\n');
  }
  return out;
}

FoldAssignment parse_folds_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows.front().fields.size() != 2 ||
      csv::trim(rows.front().fields[0]) != "image_name" ||
      csv::trim(rows.front().fields[1]) != "fold")
    throw FormatError("folds CSV header must be 'image_name,fold'");
  std::vector<std::string> images;
  std::vector<std::size_t> folds;
  std::size_t k = 0;
  for (std::size_t ri = 1; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    if (row.fields.size() != 2) throw ParseError(row.line, "expected 2 fields");
    const auto cell = csv::trim(row.fields[1]);
    std::size_t fold = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), fold);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
      throw ParseError(row.line, "fold '" + std::string(cell) + "' is not a non-negative integer");
    images.emplace_back(csv::trim(row.fields[0]));
    folds.push_back(fold);
    k = std::max(k, fold + 1);
  }
  return FoldAssignment(std::max<std::size_t>(k, 2), 0, std::move(images), std::move(folds));
}

}  // namespace lesionbench
