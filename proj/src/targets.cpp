#include "lesionbench/targets.hpp"

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>

#include "csv.hpp"
#include "lesionbench/errors.hpp"

namespace lesionbench {
namespace {

constexpr std::array<DiagnosisClass, 4> kFourClasses = {
    DiagnosisClass::NV, DiagnosisClass::MEL, DiagnosisClass::BKL, DiagnosisClass::Unknown};

const std::unordered_map<std::string, DiagnosisClass>& diagnosis_table() {
  static const std::unordered_map<std::string, DiagnosisClass> table = {
      // 2019 codes
      {"nv", DiagnosisClass::NV},
      {"mel", DiagnosisClass::MEL},
      {"bcc", DiagnosisClass::BCC},
      {"bkl", DiagnosisClass::BKL},
      {"ak", DiagnosisClass::AK},
      {"scc", DiagnosisClass::SCC},
      {"vasc", DiagnosisClass::VASC},
      {"df", DiagnosisClass::DF},
      // 2020 phrases
      {"nevus", DiagnosisClass::NV},
      {"melanoma", DiagnosisClass::MEL},
      {"seborrheic keratosis", DiagnosisClass::BKL},
      {"lichenoid keratosis", DiagnosisClass::BKL},
      {"solar lentigo", DiagnosisClass::BKL},
      {"lentigo nos", DiagnosisClass::BKL},
      {"cafe-au-lait macule", DiagnosisClass::Unknown},
      {"atypical melanocytic proliferation", DiagnosisClass::Unknown},
  };
  return table;
}

}  // namespace

std::size_t class_count(TargetScheme scheme) noexcept {
  return scheme == TargetScheme::NineClass ? kAllClasses.size() : kFourClasses.size();
}

std::span<const DiagnosisClass> scheme_classes(TargetScheme scheme) noexcept {
  if (scheme == TargetScheme::NineClass) return kAllClasses;
  return kFourClasses;
}

std::string_view class_name(DiagnosisClass c) noexcept {
  switch (c) {
    case DiagnosisClass::NV: return "NV";
    case DiagnosisClass::MEL: return "MEL";
    case DiagnosisClass::BCC: return "BCC";
    case DiagnosisClass::BKL: return "BKL";
    case DiagnosisClass::AK: return "AK";
    case DiagnosisClass::SCC: return "SCC";
    case DiagnosisClass::VASC: return "VASC";
    case DiagnosisClass::DF: return "DF";
    case DiagnosisClass::Unknown: return "Unknown";
  }
  return "Unknown";
}

DiagnosisClass collapse(DiagnosisClass c) noexcept {
  switch (c) {
    case DiagnosisClass::NV:
    case DiagnosisClass::MEL:
    case DiagnosisClass::BKL:
      return c;
    default:
      return DiagnosisClass::Unknown;
  }
}

DiagnosisClass map_diagnosis(std::string_view raw, TargetScheme scheme) {
  std::string key(csv::trim(raw));
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  const auto& table = diagnosis_table();
  const auto it = table.find(key);
  const DiagnosisClass nine = it == table.end() ? DiagnosisClass::Unknown : it->second;
  return scheme == TargetScheme::FourClass ? collapse(nine) : nine;
}

DiagnosisClass map_diagnosis(const std::optional<std::string>& raw, TargetScheme scheme) {
  if (!raw) return DiagnosisClass::Unknown;
  return map_diagnosis(std::string_view(*raw), scheme);
}

std::size_t class_index(DiagnosisClass c, TargetScheme scheme) {
  const auto classes = scheme_classes(scheme);
  const auto it = std::find(classes.begin(), classes.end(), c);
  if (it == classes.end())
    throw DomainError("class " + std::string(class_name(c)) +
                      " is not part of the four-class scheme; collapse it first");
  return static_cast<std::size_t>(it - classes.begin());
}

double mel_probability(std::span<const double> probs, TargetScheme scheme) {
  if (probs.size() != class_count(scheme))
    throw ShapeError("probability vector has " + std::to_string(probs.size()) +
                     " entries, scheme expects " + std::to_string(class_count(scheme)));
  return probs[class_index(DiagnosisClass::MEL, scheme)];
}

}  // namespace lesionbench
