#pragma once

// Sequential thresholded least squares over polynomial candidate libraries.

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "llmdmd/evaluator.hpp"

namespace llmdmd::sindy {

enum class Variant { Accurate, Overcomplete, Missing };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

struct LibraryConfig {
  Variant variant = Variant::Accurate;
  int degree = 1;
  std::vector<std::string> variables;  // full variable set, in declared order
  std::vector<std::string> excluded;
  bool include_constant = true;

  /// Degree and exclusions implied by the variant.
  static LibraryConfig for_variant(Variant v, std::vector<std::string> variables, std::vector<std::string> excluded = {});
  void validate() const;
  std::vector<std::string> active_variables() const;
};

/// One library term: a product of variables (empty = constant).
struct Term {
  std::vector<std::string> factors;
  std::string name() const;
  bool operator==(const Term&) const = default;
};

struct Library {
  std::vector<Term> terms;
  Eigen::MatrixXd theta;  // samples x terms
};

/// Constant, linear terms in declared order, then x_a*x_b with a <= b.
std::vector<Term> library_terms(const LibraryConfig& cfg);
Library build_library(const LibraryConfig& cfg, const SampleBatch& columns);
double term_value(const Term& term, const std::vector<std::string>& names, const std::vector<double>& values);

struct StlsqOptions {
  double threshold = 0.05;
  int iterations = 10;
  double ridge = 1e-8;
  double rcond_floor = 1e-12;
};

struct SindyModel {
  std::vector<std::string> targets;  // state names
  std::vector<Term> terms;
  Eigen::MatrixXd xi;                   // targets x terms
  std::vector<std::vector<bool>> mask;  // [target][term]
  std::vector<bool> degenerate;         // all terms thresholded out
  std::vector<double> residual_rms;
  bool ridge_used = false;
  LibraryConfig config;
  StlsqOptions options;

  std::size_t active_terms() const;
  nlohmann::json to_json() const;
  static SindyModel from_json(const nlohmann::json& j);
};

/// Least squares on the active columns via the normal equations.
/// Falls back to a small ridge penalty if the Gram matrix is not SPD or
/// badly conditioned; `ridge_used` reports it.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double ridge, double rcond_floor,
                              bool& ridge_used);

/// `targets` is samples x n_targets.
SindyModel stlsq(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& targets, const StlsqOptions& opt);

/// Builds the library from `batch`, regresses every d<state>_dt column.
SindyModel fit(const LibraryConfig& cfg, const SampleBatch& batch, const std::vector<std::string>& states,
               const StlsqOptions& opt);

}  // namespace llmdmd::sindy
