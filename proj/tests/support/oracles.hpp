#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace llmdmd::testing {

enum class RefTrigger { Continue, Extend, Terminate };

/// Reference stagnation/termination rule written directly from its
/// definition: scores s_0..s_t, increments d_j = s_j - s_{j-1}.
RefTrigger reference_trigger(const std::vector<double>& s, double epsilon, double gamma, int window);

std::string to_string(RefTrigger t);

/// Every history of length 1..max_len over `grid`.
std::vector<std::vector<double>> all_histories(const std::vector<double>& grid, std::size_t max_len);

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson goodness of fit of observed counts against probabilities.
/// Cells with expected count below 5 are pooled into one.
ChiSquare chi_square(const std::vector<std::uint64_t>& observed, const std::vector<double>& probs);

}  // namespace llmdmd::testing
