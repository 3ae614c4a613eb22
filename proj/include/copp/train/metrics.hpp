#pragma once

#include <span>
#include <vector>

namespace copp::train {

/// Pearson linear correlation. Throws UndefinedCorrelationError when either
/// input is constant and DomainError for fewer than two samples.
double plcc(std::span<const double> x, std::span<const double> y);
/// Spearman rank correlation: plcc of the average-rank vectors.
double srcc(std::span<const double> x, std::span<const double> y);
double rmse(std::span<const double> x, std::span<const double> y);

/// 1-based ranks, tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace copp::train
