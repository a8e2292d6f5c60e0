#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lesionbench/datamodel.hpp"

namespace lesionbench {

class FoldAssignment {
 public:
  FoldAssignment() = default;
  FoldAssignment(std::size_t k, std::uint64_t seed, std::vector<std::string> images,
                 std::vector<std::size_t> folds);

  std::size_t k() const noexcept { return k_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::string>& images() const noexcept { return images_; }
  const std::vector<std::size_t>& folds() const noexcept { return folds_; }
  std::optional<std::size_t> fold_of(std::string_view image_name) const;

  bool operator==(const FoldAssignment& o) const {
    return k_ == o.k_ && images_ == o.images_ && folds_ == o.folds_;
  }

 private:
  std::size_t k_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::string> images_;
  std::vector<std::size_t> folds_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// Patient-grouped, nine-class-stratified greedy k-fold assignment.
//
// Patients are visited largest first (total images, then class-count
// signature, then patient_id). Each goes to the fold with the smallest load
// on the patient's own classes, then the smallest total size; remaining ties
// are broken by splitmix64(seed ^ fnv1a64(patient_id)). With fewer patients
// than folds, some folds stay empty.
FoldAssignment assign_folds(const Dataset& d, std::size_t k, std::uint64_t seed);

struct FoldStats {
  std::size_t size = 0;
  std::size_t positives = 0;
  double ratio = 0.0;
};

struct FoldRatioReport {
  std::vector<FoldStats> folds;
  FoldStats global;
};

FoldRatioReport fold_ratio_report(const Dataset& d, const FoldAssignment& f);

// Folds CSV, header `image_name,fold`.
std::string write_folds_csv(const FoldAssignment& f);
FoldAssignment parse_folds_csv(std::string_view text);

}  // namespace lesionbench
