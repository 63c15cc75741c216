#pragma once

// Equation-skeleton language: a closed infix expression DSL with trainable
// parameter slots p0..pK. Parsing a skeleton doubles as the compile check
// for generated candidates; only text that parses and resolves against the
// current symbol scope is ever fitted.
//
// Grammar (EBNF):
//
//   skeleton   = line { newline line } ;
//   line       = lhs "=" expr ;
//   lhs        = "d" name "/dt"            (* differential targets *)
//              | name ;                    (* algebraic targets    *)
//   expr       = term { ("+" | "-") term } ;
//   term       = unary { ("*" | "/") unary } ;
//   unary      = "-" unary | power ;
//   power      = primary [ "^" exponent ] ;
//   exponent   = [ "(" ] [ "-" | "+" ] integer [ ")" ] ;   (* -4 .. 4 *)
//   primary    = number | param | name | func "(" expr ")" | "(" expr ")" ;
//   param      = "p" digit { digit } ;
//   func       = "sin" | "cos" | "tan" | "exp" | "log" | "sqrt" | "tanh" | "abs" ;
//
// Blank lines and lines starting with '#' are ignored.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace llmdmd {

enum class NodeKind { Constant, Parameter, Variable, Negate, Binary, Call, Power };
enum class BinaryOp { Add, Sub, Mul, Div };
enum class Function { Sin, Cos, Tan, Exp, Log, Sqrt, Tanh, Abs };

std::string_view function_name(Function fn);
std::optional<Function> function_from_name(std::string_view name);
const std::vector<std::string>& reserved_function_names();

/// Expression tree node. Value type; children are owned.
///
/// Constants are always finite and non-negative: a leading minus is a
/// Negate node. Power nodes carry their integer exponent in `index`.
struct Expr {
  NodeKind kind = NodeKind::Constant;
  double value = 0.0;
  int index = 0;
  std::string name;
  BinaryOp op = BinaryOp::Add;
  Function fn = Function::Sin;
  std::vector<Expr> children;

  bool operator==(const Expr&) const = default;

  static Expr constant(double v);
  static Expr parameter(int slot);
  static Expr variable(std::string name);
  static Expr negate(Expr child);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
  static Expr call(Function fn, Expr arg);
  static Expr power(Expr base, int exponent);
};

constexpr int kMinExponent = -4;
constexpr int kMaxExponent = 4;

enum class TargetKind { Differential, Algebraic };

std::string_view to_string(TargetKind kind);

/// Names visible to a skeleton: the system states plus admitted
/// algebraic/input variables. The function vocabulary is fixed.
class SymbolScope {
 public:
  SymbolScope() = default;
  /// Throws std::invalid_argument on empty, duplicate or reserved names.
  SymbolScope(std::vector<std::string> states, std::vector<std::string> variables);

  const std::vector<std::string>& states() const { return states_; }
  const std::vector<std::string>& variables() const { return variables_; }
  /// States first, then variables.
  std::vector<std::string> all() const;
  bool contains(std::string_view name) const;

 private:
  std::vector<std::string> states_;
  std::vector<std::string> variables_;
};

/// True for identifiers of the form p<digits>, which always denote slots.
bool is_parameter_name(std::string_view name);
bool is_identifier(std::string_view name);

struct Skeleton {
  TargetKind kind = TargetKind::Differential;
  std::vector<std::string> targets;
  std::vector<Expr> expressions;
  std::size_t n_params = 0;
  std::string source;

  /// Structural equality; ignores the raw source text.
  bool same_structure(const Skeleton& other) const;
};

enum class ParseErrorKind { UnknownIdentifier, ArityError, SyntaxError, MissingTarget, DuplicateTarget };

std::string_view to_string(ParseErrorKind kind);

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::string token, std::size_t line, const std::string& detail);

  ParseErrorKind kind() const { return kind_; }
  const std::string& token() const { return token_; }
  std::size_t line() const { return line_; }

 private:
  ParseErrorKind kind_;
  std::string token_;
  std::size_t line_;
};

/// Parses one expression (no left-hand side). Parameter slots keep the
/// indices written in the text.
Expr parse_expression(std::string_view text, const SymbolScope& scope);

/// Parses a full skeleton and canonicalizes parameter slots so they are
/// numbered 0..n_p-1 in order of first appearance (targets in the given
/// order, each expression read left to right). Throws ParseError.
Skeleton parse(std::string_view text, const SymbolScope& scope, const std::vector<std::string>& target_names,
               TargetKind kind = TargetKind::Differential);

/// The compile filter: true iff `parse` would succeed.
bool compiles(std::string_view text, const SymbolScope& scope, const std::vector<std::string>& target_names,
              TargetKind kind = TargetKind::Differential);

std::string serialize(const Expr& expr);
std::string lhs_text(TargetKind kind, const std::string& target);
/// Canonical text: one `lhs = expr` line per target joined with '\n'.
std::string serialize(const Skeleton& skeleton);

/// Character count of the canonical serialization.
std::size_t code_length(const Skeleton& skeleton);

/// Sorted, de-duplicated variable names referenced anywhere in the skeleton.
std::vector<std::string> referenced_variables(const Skeleton& skeleton);
void collect_variables(const Expr& expr, std::vector<std::string>& out);

/// Shortest decimal text that reads back to exactly `value`.
std::string format_number(double value);

}  // namespace llmdmd
