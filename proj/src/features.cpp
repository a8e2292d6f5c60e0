#include "lesionbench/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lesionbench/errors.hpp"

namespace lesionbench {
namespace {

// Sample mean and (n - 1) standard deviation, floored. Values are summed in
// sorted order so the result does not depend on record order.
FeatureStats summarize(std::vector<double> xs) {
  FeatureStats s;
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  const double sd = xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.std = std::max(sd, kStdFloor);
  s.fitted = true;
  return s;
}

double zscore(double x, const FeatureStats& s) { return (x - s.mean) / s.std; }

}  // namespace

ImageCounts compute_n_images(const Dataset& d) {
  ImageCounts counts;
  counts.reserve(d.size());
  for (const auto& [patient, rows] : d.by_patient())
    for (std::size_t i : rows) counts[d[i].image_name] = rows.size();
  return counts;
}

SiteVocabulary SiteVocabulary::build(const Dataset& d) {
  std::set<std::string> distinct;
  for (const auto& r : d.records())
    if (r.anatom_site) distinct.insert(*r.anatom_site);
  if (distinct.size() > kSiteSlots) {
    std::string extras;
    std::size_t i = 0;
    for (const auto& s : distinct) {
      if (i++ < kSiteSlots) continue;
      if (!extras.empty()) extras += ", ";
      extras += "'" + s + "'";
    }
    throw CapacityError(std::to_string(distinct.size()) + " distinct anatomical sites exceed the " +
                        std::to_string(kSiteSlots) + " one-hot slots; extras: " + extras);
  }
  SiteVocabulary v;
  std::size_t slot = 0;
  for (const auto& s : distinct) v.sites_[slot++] = s;
  v.used_ = slot;
  for (std::size_t k = 0; slot < kSiteSlots; ++k) v.sites_[slot++] = "__unused_" + std::to_string(k) + "__";
  return v;
}

int SiteVocabulary::slot(const std::string& site) const {
  for (std::size_t i = 0; i < used_; ++i)
    if (sites_[i] == site) return static_cast<int>(i);
  return -1;
}

NormStats fit_norm_stats(const Dataset& d, const ImageCounts& n_images,
                         std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw DomainError("cannot fit normalization on an empty subset");
  std::vector<double> ages, sizes, counts;
  for (std::size_t i : train_rows) {
    const auto& r = d.records().at(i);
    if (r.age_approx) ages.push_back(*r.age_approx);
    if (r.image_size_bytes) sizes.push_back(std::log(static_cast<double>(*r.image_size_bytes)));
    const auto it = n_images.find(r.image_name);
    if (it == n_images.end()) throw LookupError("no image count for " + r.image_name);
    counts.push_back(static_cast<double>(it->second));
  }
  return NormStats{summarize(ages), summarize(sizes), summarize(counts)};
}

FeatureVector encode(const SampleRecord& r, const SiteVocabulary& vocab, const NormStats& stats,
                     const ImageCounts& n_images) {
  const auto count = n_images.find(r.image_name);
  if (count == n_images.end()) throw LookupError("no image count for " + r.image_name);

  FeatureVector f;
  auto& v = f.values;
  v[feature_slot::kSex] = r.sex == Sex::Male ? 1.0 : r.sex == Sex::Female ? 0.0 : -1.0;
  v[feature_slot::kAge] = r.age_approx ? zscore(*r.age_approx, stats.age) : 0.0;
  if (r.anatom_site) {
    const int slot = vocab.slot(*r.anatom_site);
    if (slot >= 0) v[feature_slot::kSiteBegin + static_cast<std::size_t>(slot)] = 1.0;
  }
  v[feature_slot::kLogSize] =
      r.image_size_bytes ? zscore(std::log(static_cast<double>(*r.image_size_bytes)), stats.log_size)
                         : 0.0;
  v[feature_slot::kImageCount] = zscore(static_cast<double>(count->second), stats.n_images);
  return f;
}

FeatureTable build_feature_table(const Dataset& d, std::span<const std::size_t> train_rows) {
  const auto counts = compute_n_images(d);
  const auto vocab = SiteVocabulary::build(d);
  std::vector<std::size_t> all;
  if (train_rows.empty()) {
    all.resize(d.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    train_rows = all;
  }
  const auto stats = fit_norm_stats(d, counts, train_rows);
  std::vector<std::string> images;
  std::vector<double> values;
  images.reserve(d.size());
  values.reserve(d.size() * kMetaFeatures);
  for (const auto& r : d.records()) {
    images.push_back(r.image_name);
    const auto f = encode(r, vocab, stats, counts);
    values.insert(values.end(), f.values.begin(), f.values.end());
  }
  return FeatureTable(kMetaFeatures, std::move(images), std::move(values));
}

}  // namespace lesionbench
