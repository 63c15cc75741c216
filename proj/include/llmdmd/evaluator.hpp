#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "llmdmd/skeleton.hpp"

namespace llmdmd {

/// Named columns of equal length; one row per sample.
class SampleBatch {
 public:
  SampleBatch() = default;

  /// Throws std::invalid_argument on a length mismatch or non-finite value.
  void add_column(const std::string& name, std::vector<double> values);
  bool has_column(const std::string& name) const { return columns_.count(name) > 0; }
  /// Throws MissingColumn.
  const std::vector<double>& column(const std::string& name) const;
  std::size_t size() const { return n_samples_; }
  std::vector<std::string> column_names() const;

  /// Rows [first, first + count).
  SampleBatch slice(std::size_t first, std::size_t count) const;
  /// Appends rows of `other`; both batches must carry the same columns.
  static SampleBatch concat(const SampleBatch& a, const SampleBatch& b);

 private:
  std::map<std::string, std::vector<double>> columns_;
  std::size_t n_samples_ = 0;
};

class MissingColumn : public std::runtime_error {
 public:
  explicit MissingColumn(const std::string& name) : std::runtime_error("missing column '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

struct DomainFault {
  std::size_t target = 0;
  std::size_t sample = 0;
  std::string reason;
};

class DomainFaultError : public std::runtime_error {
 public:
  explicit DomainFaultError(const DomainFault& f)
      : std::runtime_error("domain fault at sample " + std::to_string(f.sample) + ": " + f.reason), fault_(f) {}
  const DomainFault& fault() const { return fault_; }

 private:
  DomainFault fault_;
};

/// Denominators smaller than this in magnitude are treated as a singularity.
constexpr double kDivisionGuard = 1e-12;

struct EvalResult {
  std::size_t n_targets = 0;
  std::size_t n_samples = 0;
  std::size_t n_params = 0;
  std::vector<double> outputs;    // [target][sample]
  std::vector<double> gradients;  // [target][sample][param]
  std::optional<DomainFault> fault;

  double output(std::size_t t, std::size_t i) const { return outputs[t * n_samples + i]; }
  double gradient(std::size_t t, std::size_t i, std::size_t k) const {
    return gradients[(t * n_samples + i) * n_params + k];
  }
  bool ok() const { return !fault.has_value(); }
};

/// Evaluates every target expression over the batch and back-propagates
/// d(output)/d(param) per sample. On a domain violation the result carries
/// `fault` and the remaining work is skipped.
EvalResult evaluate(const Skeleton& s, std::span<const double> params, const SampleBatch& batch,
                    bool with_gradients = true);

/// Max relative deviation between reverse-mode gradients and central finite
/// differences with step 1e-6 * max(1, |p_k|). Relative error is measured as
/// |g - g_fd| / max(1, |g|, |g_fd|). Throws DomainFaultError.
double gradient_check(const Skeleton& s, std::span<const double> params, const SampleBatch& batch);

/// Scalar evaluator over a fixed variable ordering, for trajectory replay.
class PointEvaluator {
 public:
  PointEvaluator(const Skeleton& s, const std::vector<std::string>& variable_order);

  /// Writes one value per target. Returns false on a domain violation.
  bool evaluate(std::span<const double> variables, std::span<const double> params, std::span<double> out) const;
  std::size_t n_targets() const { return programs_.size(); }

  struct Instr;

 private:
  std::vector<std::vector<Instr>> programs_;
  mutable std::vector<double> scratch_;
};

struct PointEvaluator::Instr {
  NodeKind kind;
  BinaryOp op;
  Function fn;
  int a = -1;
  int b = -1;
  int ref = -1;  // parameter slot, variable index or exponent
  double value = 0.0;
};

}  // namespace llmdmd
