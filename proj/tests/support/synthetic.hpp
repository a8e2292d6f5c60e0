#pragma once

// Synthetic metadata for training and pipeline tests.

#include <string>
#include <vector>

#include "lesionbench/datamodel.hpp"
#include "lesionbench/random.hpp"

namespace lesionbench::synthetic {

// Patients aged 20-50 are benign (nevus), patients aged 65-85 malignant
// (melanoma): the label is a threshold on one metadata feature, so a
// perfect linear scorer exists. Images are spread round-robin over patients.
inline Dataset separable_dataset(std::size_t n_images, std::size_t n_patients, std::uint64_t seed,
                                 double malignant_fraction = 0.3) {
  Rng rng(seed);
  const std::vector<std::string> sites = {"torso", "head/neck", "upper extremity",
                                          "lower extremity", "palms/soles", "oral/genital"};
  struct Patient {
    bool malignant;
    double age;
    Sex sex;
  };
  std::vector<Patient> patients(n_patients);
  for (auto& p : patients) {
    p.malignant = rng.uniform() < malignant_fraction;
    p.age = p.malignant ? 65.0 + 5.0 * static_cast<double>(rng.below(5))
                        : 20.0 + 5.0 * static_cast<double>(rng.below(7));
    p.sex = rng.below(2) ? Sex::Male : Sex::Female;
  }
  std::vector<SampleRecord> records;
  records.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    const std::size_t pid = i % n_patients;
    const auto& p = patients[pid];
    SampleRecord r;
    r.image_name = "ISIC_" + std::to_string(1000000 + i);
    r.patient_id = "IP_" + std::to_string(pid);
    r.sex = p.sex;
    r.age_approx = p.age;
    r.anatom_site = sites[rng.below(sites.size())];
    r.diagnosis = p.malignant ? "melanoma" : "nevus";
    r.target = p.malignant ? BinaryTarget::Malignant : BinaryTarget::Benign;
    r.source = pid % 2 ? SourceYear::Y2019 : SourceYear::Y2020;
    r.image_size_bytes = 50'000 + rng.below(2'000'000);
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records));
}

// Standard-normal noise features, one row per image.
inline FeatureTable noise_features(const Dataset& d, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> images;
  std::vector<double> values;
  for (const auto& r : d.records()) {
    images.push_back(r.image_name);
    for (std::size_t c = 0; c < dim; ++c) values.push_back(rng.normal());
  }
  return FeatureTable(dim, std::move(images), std::move(values));
}

}  // namespace lesionbench::synthetic
