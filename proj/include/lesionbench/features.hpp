#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lesionbench/datamodel.hpp"

namespace lesionbench {

inline constexpr std::size_t kSiteSlots = 10;
inline constexpr std::size_t kMetaFeatures = 14;
inline constexpr double kStdFloor = 1e-8;

// Feature slots: [sex, age_z, site_0..site_9, log_size_z, n_images_z].
namespace feature_slot {
inline constexpr std::size_t kSex = 0;
inline constexpr std::size_t kAge = 1;
inline constexpr std::size_t kSiteBegin = 2;
inline constexpr std::size_t kLogSize = 12;
inline constexpr std::size_t kImageCount = 13;
}  // namespace feature_slot

using ImageCounts = std::unordered_map<std::string, std::size_t>;

// Number of records sharing each image's patient_id.
ImageCounts compute_n_images(const Dataset& d);

class SiteVocabulary {
 public:
  // Sorted distinct sites, padded with `__unused_k__` placeholders.
  static SiteVocabulary build(const Dataset& d);

  const std::array<std::string, kSiteSlots>& sites() const noexcept { return sites_; }
  // Slot of a site, or -1 when out of vocabulary.
  int slot(const std::string& site) const;

 private:
  std::array<std::string, kSiteSlots> sites_;
  std::size_t used_ = 0;  // real sites; the rest are placeholders
};

inline SiteVocabulary build_site_vocab(const Dataset& d) { return SiteVocabulary::build(d); }

struct FeatureStats {
  double mean = 0.0;
  double std = 1.0;
  // False when no value was available and the 0/1 fallback is in use.
  bool fitted = false;
};

struct NormStats {
  FeatureStats age;
  FeatureStats log_size;
  FeatureStats n_images;
};

// Sample mean/std over the records at `train_rows`. Throws DomainError on an
// empty selection.
NormStats fit_norm_stats(const Dataset& d, const ImageCounts& n_images,
                         std::span<const std::size_t> train_rows);

struct FeatureVector {
  std::array<double, kMetaFeatures> values{};
};

// Throws LookupError if the record's image is absent from `n_images`.
FeatureVector encode(const SampleRecord& r, const SiteVocabulary& vocab, const NormStats& stats,
                     const ImageCounts& n_images);

// Encodes every record of `d`, fitting statistics on `train_rows` (all rows
// when empty).
FeatureTable build_feature_table(const Dataset& d, std::span<const std::size_t> train_rows = {});

}  // namespace lesionbench
