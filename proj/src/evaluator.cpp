#include "llmdmd/evaluator.hpp"

#include <algorithm>
#include <cmath>

namespace llmdmd {

using Instr = PointEvaluator::Instr;

namespace {

template <typename Resolve>
int flatten(const Expr& e, std::vector<Instr>& code, Resolve&& resolve) {
  Instr in{e.kind, e.op, e.fn};
  switch (e.kind) {
    case NodeKind::Constant:
      in.value = e.value;
      break;
    case NodeKind::Parameter:
      in.ref = e.index;
      break;
    case NodeKind::Variable:
      in.ref = resolve(e.name);
      break;
    case NodeKind::Power:
      in.ref = e.index;
      in.a = flatten(e.children[0], code, resolve);
      break;
    case NodeKind::Negate:
    case NodeKind::Call:
      in.a = flatten(e.children[0], code, resolve);
      break;
    case NodeKind::Binary:
      in.a = flatten(e.children[0], code, resolve);
      in.b = flatten(e.children[1], code, resolve);
      break;
  }
  code.push_back(in);
  return static_cast<int>(code.size()) - 1;
}

double apply_function(Function fn, double x) {
  switch (fn) {
    case Function::Sin: return std::sin(x);
    case Function::Cos: return std::cos(x);
    case Function::Tan: return std::tan(x);
    case Function::Exp: return std::exp(x);
    case Function::Log: return std::log(x);
    case Function::Sqrt: return std::sqrt(x);
    case Function::Tanh: return std::tanh(x);
    case Function::Abs: return std::abs(x);
  }
  return 0.0;
}

double function_derivative(Function fn, double x, double fx) {
  switch (fn) {
    case Function::Sin: return std::cos(x);
    case Function::Cos: return -std::sin(x);
    case Function::Tan: return 1.0 + fx * fx;
    case Function::Exp: return fx;
    case Function::Log: return 1.0 / x;
    case Function::Sqrt: return 0.5 / fx;
    case Function::Tanh: return 1.0 - fx * fx;
    case Function::Abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  }
  return 0.0;
}

// Returns a reason string when the argument is outside the function's domain.
const char* domain_violation(Function fn, double x) {
  if (fn == Function::Log && x <= 0.0) return "log of non-positive argument";
  if (fn == Function::Sqrt && x < 0.0) return "sqrt of negative argument";
  return nullptr;
}

double int_power(double base, int n) { return n == 0 ? 1.0 : std::pow(base, n); }

}  // namespace

void SampleBatch::add_column(const std::string& name, std::vector<double> values) {
  if (!columns_.empty() && values.size() != n_samples_) {
    throw std::invalid_argument("column '" + name + "' has " + std::to_string(values.size()) + " rows, expected " +
                                std::to_string(n_samples_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("column '" + name + "' contains a non-finite value");
  }
  n_samples_ = values.size();
  columns_[name] = std::move(values);
}

const std::vector<double>& SampleBatch::column(const std::string& name) const {
  auto it = columns_.find(name);
  if (it == columns_.end()) throw MissingColumn(name);
  return it->second;
}

std::vector<std::string> SampleBatch::column_names() const {
  std::vector<std::string> names;
  for (const auto& [k, v] : columns_) names.push_back(k);
  return names;
}

SampleBatch SampleBatch::slice(std::size_t first, std::size_t count) const {
  SampleBatch out;
  for (const auto& [k, v] : columns_) {
    const std::size_t lo = std::min(first, v.size());
    const std::size_t hi = std::min(first + count, v.size());
    out.add_column(k, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                          v.begin() + static_cast<std::ptrdiff_t>(hi)));
  }
  return out;
}

SampleBatch SampleBatch::concat(const SampleBatch& a, const SampleBatch& b) {
  if (a.column_names() != b.column_names()) throw std::invalid_argument("cannot concatenate batches with different columns");
  SampleBatch out;
  for (const auto& [k, v] : a.columns_) {
    std::vector<double> joined = v;
    const auto& tail = b.columns_.at(k);
    joined.insert(joined.end(), tail.begin(), tail.end());
    out.add_column(k, std::move(joined));
  }
  return out;
}

EvalResult evaluate(const Skeleton& s, std::span<const double> params, const SampleBatch& batch, bool with_gradients) {
  if (params.size() != s.n_params) {
    throw std::invalid_argument("expected " + std::to_string(s.n_params) + " parameters, got " +
                                std::to_string(params.size()));
  }
  EvalResult r;
  r.n_targets = s.expressions.size();
  r.n_samples = batch.size();
  r.n_params = s.n_params;
  const std::size_t ns = r.n_samples;
  const std::size_t np = r.n_params;
  r.outputs.assign(r.n_targets * ns, 0.0);
  if (with_gradients) r.gradients.assign(r.n_targets * ns * np, 0.0);

  std::vector<double> values;
  std::vector<double> adjoint;
  for (std::size_t t = 0; t < r.n_targets; ++t) {
    std::vector<const std::vector<double>*> columns;
    std::vector<Instr> code;
    const int root = flatten(s.expressions[t], code, [&](const std::string& name) {
      columns.push_back(&batch.column(name));
      return static_cast<int>(columns.size()) - 1;
    });

    values.assign(code.size() * ns, 0.0);
    auto fault = [&](std::size_t i, const std::string& why) {
      r.fault = DomainFault{t, i, why};
    };

    for (std::size_t n = 0; n < code.size(); ++n) {
      const Instr& in = code[n];
      double* out = values.data() + n * ns;
      const double* a = in.a >= 0 ? values.data() + static_cast<std::size_t>(in.a) * ns : nullptr;
      const double* b = in.b >= 0 ? values.data() + static_cast<std::size_t>(in.b) * ns : nullptr;
      switch (in.kind) {
        case NodeKind::Constant:
          std::fill(out, out + ns, in.value);
          break;
        case NodeKind::Parameter:
          std::fill(out, out + ns, params[static_cast<std::size_t>(in.ref)]);
          break;
        case NodeKind::Variable: {
          const auto& col = *columns[static_cast<std::size_t>(in.ref)];
          std::copy(col.begin(), col.end(), out);
          break;
        }
        case NodeKind::Negate:
          for (std::size_t i = 0; i < ns; ++i) out[i] = -a[i];
          break;
        case NodeKind::Binary:
          switch (in.op) {
            case BinaryOp::Add:
              for (std::size_t i = 0; i < ns; ++i) out[i] = a[i] + b[i];
              break;
            case BinaryOp::Sub:
              for (std::size_t i = 0; i < ns; ++i) out[i] = a[i] - b[i];
              break;
            case BinaryOp::Mul:
              for (std::size_t i = 0; i < ns; ++i) out[i] = a[i] * b[i];
              break;
            case BinaryOp::Div:
              for (std::size_t i = 0; i < ns; ++i) {
                if (std::abs(b[i]) < kDivisionGuard) {
                  fault(i, "division by near-zero denominator");
                  return r;
                }
                out[i] = a[i] / b[i];
              }
              break;
          }
          break;
        case NodeKind::Call:
          for (std::size_t i = 0; i < ns; ++i) {
            if (const char* why = domain_violation(in.fn, a[i])) {
              fault(i, why);
              return r;
            }
            out[i] = apply_function(in.fn, a[i]);
          }
          break;
        case NodeKind::Power:
          for (std::size_t i = 0; i < ns; ++i) {
            if (in.ref < 0 && std::abs(a[i]) < kDivisionGuard) {
              fault(i, "negative power of near-zero base");
              return r;
            }
            out[i] = int_power(a[i], in.ref);
          }
          break;
      }
      for (std::size_t i = 0; i < ns; ++i) {
        if (!std::isfinite(out[i])) {
          fault(i, "non-finite intermediate value");
          return r;
        }
      }
    }

    const double* root_values = values.data() + static_cast<std::size_t>(root) * ns;
    std::copy(root_values, root_values + ns, r.outputs.begin() + static_cast<std::ptrdiff_t>(t * ns));
    if (!with_gradients || np == 0) continue;

    adjoint.assign(code.size() * ns, 0.0);
    std::fill(adjoint.begin() + static_cast<std::ptrdiff_t>(root) * static_cast<std::ptrdiff_t>(ns),
              adjoint.begin() + static_cast<std::ptrdiff_t>(root + 1) * static_cast<std::ptrdiff_t>(ns), 1.0);
    double* grads = r.gradients.data() + t * ns * np;
    for (int n = root; n >= 0; --n) {
      const Instr& in = code[static_cast<std::size_t>(n)];
      const double* g = adjoint.data() + static_cast<std::size_t>(n) * ns;
      const double* v = values.data() + static_cast<std::size_t>(n) * ns;
      double* ga = in.a >= 0 ? adjoint.data() + static_cast<std::size_t>(in.a) * ns : nullptr;
      double* gb = in.b >= 0 ? adjoint.data() + static_cast<std::size_t>(in.b) * ns : nullptr;
      const double* a = in.a >= 0 ? values.data() + static_cast<std::size_t>(in.a) * ns : nullptr;
      const double* b = in.b >= 0 ? values.data() + static_cast<std::size_t>(in.b) * ns : nullptr;
      switch (in.kind) {
        case NodeKind::Parameter:
          for (std::size_t i = 0; i < ns; ++i) grads[i * np + static_cast<std::size_t>(in.ref)] += g[i];
          break;
        case NodeKind::Negate:
          for (std::size_t i = 0; i < ns; ++i) ga[i] -= g[i];
          break;
        case NodeKind::Binary:
          switch (in.op) {
            case BinaryOp::Add:
              for (std::size_t i = 0; i < ns; ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
              }
              break;
            case BinaryOp::Sub:
              for (std::size_t i = 0; i < ns; ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
              }
              break;
            case BinaryOp::Mul:
              for (std::size_t i = 0; i < ns; ++i) {
                ga[i] += g[i] * b[i];
                gb[i] += g[i] * a[i];
              }
              break;
            case BinaryOp::Div:
              for (std::size_t i = 0; i < ns; ++i) {
                ga[i] += g[i] / b[i];
                gb[i] -= g[i] * v[i] / b[i];
              }
              break;
          }
          break;
        case NodeKind::Call:
          for (std::size_t i = 0; i < ns; ++i) ga[i] += g[i] * function_derivative(in.fn, a[i], v[i]);
          break;
        case NodeKind::Power:
          for (std::size_t i = 0; i < ns; ++i) ga[i] += g[i] * in.ref * int_power(a[i], in.ref - 1);
          break;
        default:
          break;
      }
    }
    for (std::size_t i = 0; i < ns * np; ++i) {
      if (!std::isfinite(grads[i])) {
        fault(i / np, "non-finite gradient");
        return r;
      }
    }
  }
  return r;
}

double gradient_check(const Skeleton& s, std::span<const double> params, const SampleBatch& batch) {
  const EvalResult base = evaluate(s, params, batch, true);
  if (base.fault) throw DomainFaultError(*base.fault);
  std::vector<double> p(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(p[k]));
    const double saved = p[k];
    p[k] = saved + h;
    const EvalResult up = evaluate(s, p, batch, false);
    p[k] = saved - h;
    const EvalResult down = evaluate(s, p, batch, false);
    p[k] = saved;
    if (up.fault) throw DomainFaultError(*up.fault);
    if (down.fault) throw DomainFaultError(*down.fault);
    for (std::size_t t = 0; t < base.n_targets; ++t) {
      for (std::size_t i = 0; i < base.n_samples; ++i) {
        const double fd = (up.output(t, i) - down.output(t, i)) / (2.0 * h);
        const double ad = base.gradient(t, i, k);
        const double scale = std::max({1.0, std::abs(fd), std::abs(ad)});
        worst = std::max(worst, std::abs(fd - ad) / scale);
      }
    }
  }
  return worst;
}

PointEvaluator::PointEvaluator(const Skeleton& s, const std::vector<std::string>& variable_order) {
  for (const auto& e : s.expressions) {
    std::vector<Instr> code;
    flatten(e, code, [&](const std::string& name) {
      auto it = std::find(variable_order.begin(), variable_order.end(), name);
      if (it == variable_order.end()) throw MissingColumn(name);
      return static_cast<int>(it - variable_order.begin());
    });
    programs_.push_back(std::move(code));
  }
}

bool PointEvaluator::evaluate(std::span<const double> variables, std::span<const double> params,
                              std::span<double> out) const {
  for (std::size_t t = 0; t < programs_.size(); ++t) {
    const auto& code = programs_[t];
    scratch_.resize(code.size());
    for (std::size_t n = 0; n < code.size(); ++n) {
      const Instr& in = code[n];
      const double a = in.a >= 0 ? scratch_[static_cast<std::size_t>(in.a)] : 0.0;
      const double b = in.b >= 0 ? scratch_[static_cast<std::size_t>(in.b)] : 0.0;
      double v = 0.0;
      switch (in.kind) {
        case NodeKind::Constant: v = in.value; break;
        case NodeKind::Parameter: v = params[static_cast<std::size_t>(in.ref)]; break;
        case NodeKind::Variable: v = variables[static_cast<std::size_t>(in.ref)]; break;
        case NodeKind::Negate: v = -a; break;
        case NodeKind::Binary:
          switch (in.op) {
            case BinaryOp::Add: v = a + b; break;
            case BinaryOp::Sub: v = a - b; break;
            case BinaryOp::Mul: v = a * b; break;
            case BinaryOp::Div:
              if (std::abs(b) < kDivisionGuard) return false;
              v = a / b;
              break;
          }
          break;
        case NodeKind::Call:
          if (domain_violation(in.fn, a)) return false;
          v = apply_function(in.fn, a);
          break;
        case NodeKind::Power:
          if (in.ref < 0 && std::abs(a) < kDivisionGuard) return false;
          v = int_power(a, in.ref);
          break;
      }
      if (!std::isfinite(v)) return false;
      scratch_[n] = v;
    }
    out[t] = scratch_.back();
  }
  return true;
}

}  // namespace llmdmd
