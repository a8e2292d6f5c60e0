#pragma once

#include <span>
#include <vector>

#include "lesionbench/datamodel.hpp"

namespace lesionbench {

// Average ranks mapped to (r - 1) / (n - 1); a single score maps to 0.5.
// Throws DomainError naming the index of a non-finite score.
std::vector<double> rank_transform(std::span<const double> scores);

// Mean of each model's rank-transformed scores, in the first model's image
// order. Every model must cover the same image set.
PredictionSet rank_average(std::span<const PredictionSet> models);

}  // namespace lesionbench
