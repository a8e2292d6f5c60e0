#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace lesionbench {

// Column order of every probability vector, weight file and prediction CSV.
enum class DiagnosisClass { NV, MEL, BCC, BKL, AK, SCC, VASC, DF, Unknown };

inline constexpr std::array<DiagnosisClass, 9> kAllClasses = {
    DiagnosisClass::NV,  DiagnosisClass::MEL,  DiagnosisClass::BCC,
    DiagnosisClass::BKL, DiagnosisClass::AK,   DiagnosisClass::SCC,
    DiagnosisClass::VASC, DiagnosisClass::DF,  DiagnosisClass::Unknown};

enum class TargetScheme { NineClass, FourClass };

std::size_t class_count(TargetScheme scheme) noexcept;

// Classes present in the scheme's output layer, in column order.
std::span<const DiagnosisClass> scheme_classes(TargetScheme scheme) noexcept;

std::string_view class_name(DiagnosisClass c) noexcept;

// Four-class collapse: BCC, AK, SCC, VASC and DF become Unknown.
DiagnosisClass collapse(DiagnosisClass c) noexcept;

// Total mapping from a raw 2019 code or 2020 phrase to a target class.
// Matching is case-insensitive and ignores surrounding whitespace; missing
// and unrecognized strings map to Unknown.
DiagnosisClass map_diagnosis(const std::optional<std::string>& raw, TargetScheme scheme);
DiagnosisClass map_diagnosis(std::string_view raw, TargetScheme scheme);

// Throws DomainError for an uncollapsed class under FourClass.
std::size_t class_index(DiagnosisClass c, TargetScheme scheme);

// Probability of MEL; throws ShapeError on a length mismatch.
double mel_probability(std::span<const double> probs, TargetScheme scheme);

}  // namespace lesionbench
