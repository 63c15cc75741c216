#include "llmdmd/skeleton.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <utility>

namespace llmdmd {

namespace {

constexpr std::array<std::pair<Function, std::string_view>, 8> kFunctions{{
    {Function::Sin, "sin"},
    {Function::Cos, "cos"},
    {Function::Tan, "tan"},
    {Function::Exp, "exp"},
    {Function::Log, "log"},
    {Function::Sqrt, "sqrt"},
    {Function::Tanh, "tanh"},
    {Function::Abs, "abs"},
}};

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Lexer {
 public:
  Lexer(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (pos_ >= text_.size()) break;
      const char c = text_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
        out.push_back(number());
      } else if (is_ident_start(c)) {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        out.push_back({Tok::Ident, std::string(text_.substr(start, pos_ - start)), 0.0});
      } else {
        Tok kind;
        switch (c) {
          case '+': kind = Tok::Plus; break;
          case '-': kind = Tok::Minus; break;
          case '*': kind = Tok::Star; break;
          case '/': kind = Tok::Slash; break;
          case '^': kind = Tok::Caret; break;
          case '(': kind = Tok::LParen; break;
          case ')': kind = Tok::RParen; break;
          case ',': kind = Tok::Comma; break;
          default:
            throw ParseError(ParseErrorKind::SyntaxError, std::string(1, c), line_, "unexpected character");
        }
        out.push_back({kind, std::string(1, c), 0.0});
        ++pos_;
      }
    }
    out.push_back({Tok::End, "<end of line>", 0.0});
    return out;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  Token number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits();
      } else {
        pos_ = save;
      }
    }
    std::string lexeme(text_.substr(start, pos_ - start));
    double value = 0.0;
    // from_chars rejects a leading '.', so normalise it.
    std::string normalized = lexeme.front() == '.' ? "0" + lexeme : lexeme;
    auto [ptr, ec] = std::from_chars(normalized.data(), normalized.data() + normalized.size(), value);
    if (ec != std::errc() || ptr != normalized.data() + normalized.size() || !std::isfinite(value)) {
      throw ParseError(ParseErrorKind::SyntaxError, lexeme, line_, "malformed number");
    }
    return {Tok::Number, lexeme, value};
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, const SymbolScope& scope, std::size_t line)
      : tokens_(std::move(tokens)), scope_(scope), line_(line) {}

  Expr parse_all() {
    Expr e = expr();
    if (peek().kind != Tok::End) fail(ParseErrorKind::SyntaxError, peek().text, "unexpected token");
    return e;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }
  bool accept(Tok kind) {
    if (peek().kind == kind) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(ParseErrorKind kind, const std::string& token, const std::string& detail) const {
    throw ParseError(kind, token, line_, detail);
  }

  Expr expr() {
    Expr lhs = term();
    while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
      const BinaryOp op = next().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
      lhs = Expr::binary(op, std::move(lhs), term());
    }
    return lhs;
  }

  Expr term() {
    Expr lhs = unary();
    while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
      const BinaryOp op = next().kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
      lhs = Expr::binary(op, std::move(lhs), unary());
    }
    return lhs;
  }

  Expr unary() {
    if (accept(Tok::Minus)) return Expr::negate(unary());
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (!accept(Tok::Caret)) return base;
    const bool paren = accept(Tok::LParen);
    bool negative = false;
    if (accept(Tok::Minus)) {
      negative = true;
    } else {
      accept(Tok::Plus);
    }
    if (peek().kind != Tok::Number) fail(ParseErrorKind::SyntaxError, peek().text, "exponent must be an integer literal");
    const Token& tok = next();
    double value = negative ? -tok.number : tok.number;
    if (value != std::floor(value) || value < kMinExponent || value > kMaxExponent) {
      fail(ParseErrorKind::SyntaxError, tok.text, "exponent must be an integer in [-4, 4]");
    }
    if (paren && !accept(Tok::RParen)) fail(ParseErrorKind::SyntaxError, peek().text, "expected ')'");
    if (peek().kind == Tok::Caret) fail(ParseErrorKind::SyntaxError, "^", "chained exponents are not supported");
    return Expr::power(std::move(base), static_cast<int>(value));
  }

  Expr primary() {
    const Token& tok = next();
    switch (tok.kind) {
      case Tok::Number:
        return Expr::constant(tok.number);
      case Tok::LParen: {
        Expr inner = expr();
        if (!accept(Tok::RParen)) fail(ParseErrorKind::SyntaxError, peek().text, "expected ')'");
        return inner;
      }
      case Tok::Ident:
        return identifier(tok);
      default:
        fail(ParseErrorKind::SyntaxError, tok.text, "expected an operand");
    }
  }

  Expr identifier(const Token& tok) {
    if (auto fn = function_from_name(tok.text)) {
      if (!accept(Tok::LParen)) fail(ParseErrorKind::ArityError, tok.text, "function takes exactly one argument");
      if (peek().kind == Tok::RParen) fail(ParseErrorKind::ArityError, tok.text, "function takes exactly one argument");
      Expr arg = expr();
      if (peek().kind == Tok::Comma) fail(ParseErrorKind::ArityError, tok.text, "function takes exactly one argument");
      if (!accept(Tok::RParen)) fail(ParseErrorKind::SyntaxError, peek().text, "expected ')'");
      return Expr::call(*fn, std::move(arg));
    }
    if (peek().kind == Tok::LParen) fail(ParseErrorKind::UnknownIdentifier, tok.text, "unknown function");
    if (is_parameter_name(tok.text)) {
      int slot = 0;
      const char* first = tok.text.data() + 1;
      auto [ptr, ec] = std::from_chars(first, tok.text.data() + tok.text.size(), slot);
      if (ec != std::errc()) fail(ParseErrorKind::SyntaxError, tok.text, "parameter index out of range");
      return Expr::parameter(slot);
    }
    if (!scope_.contains(tok.text)) fail(ParseErrorKind::UnknownIdentifier, tok.text, "identifier not in scope");
    return Expr::variable(tok.text);
  }

  std::vector<Token> tokens_;
  const SymbolScope& scope_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

Expr parse_line_expression(std::string_view text, const SymbolScope& scope, std::size_t line) {
  Lexer lexer(text, line);
  Parser parser(lexer.run(), scope, line);
  return parser.parse_all();
}

void renumber(Expr& e, std::map<int, int>& mapping) {
  if (e.kind == NodeKind::Parameter) {
    auto [it, inserted] = mapping.emplace(e.index, static_cast<int>(mapping.size()));
    e.index = it->second;
  }
  for (auto& c : e.children) renumber(c, mapping);
}

// Binding strength used by the printer; atoms bind tightest.
int precedence(const Expr& e) {
  switch (e.kind) {
    case NodeKind::Binary:
      return (e.op == BinaryOp::Add || e.op == BinaryOp::Sub) ? 1 : 2;
    case NodeKind::Negate:
      return 3;
    case NodeKind::Power:
      return 4;
    default:
      return 5;
  }
}

void print(const Expr& e, std::string& out);

void print_wrapped(const Expr& e, bool wrap, std::string& out) {
  if (wrap) out += '(';
  print(e, out);
  if (wrap) out += ')';
}

void print(const Expr& e, std::string& out) {
  switch (e.kind) {
    case NodeKind::Constant:
      out += format_number(e.value);
      break;
    case NodeKind::Parameter:
      out += 'p';
      out += std::to_string(e.index);
      break;
    case NodeKind::Variable:
      out += e.name;
      break;
    case NodeKind::Negate:
      out += '-';
      print_wrapped(e.children[0], precedence(e.children[0]) < 3, out);
      break;
    case NodeKind::Power:
      print_wrapped(e.children[0], precedence(e.children[0]) < 5, out);
      out += '^';
      if (e.index < 0) {
        out += "(" + std::to_string(e.index) + ")";
      } else {
        out += std::to_string(e.index);
      }
      break;
    case NodeKind::Call:
      out += function_name(e.fn);
      out += '(';
      print(e.children[0], out);
      out += ')';
      break;
    case NodeKind::Binary: {
      const int p = precedence(e);
      print_wrapped(e.children[0], precedence(e.children[0]) < p, out);
      switch (e.op) {
        case BinaryOp::Add: out += " + "; break;
        case BinaryOp::Sub: out += " - "; break;
        case BinaryOp::Mul: out += '*'; break;
        case BinaryOp::Div: out += '/'; break;
      }
      // Operators are left-associative, so an equal-precedence right child
      // must keep its parentheses to survive a round trip.
      print_wrapped(e.children[1], precedence(e.children[1]) <= p, out);
      break;
    }
  }
}

}  // namespace

std::string_view function_name(Function fn) {
  for (const auto& [f, name] : kFunctions) {
    if (f == fn) return name;
  }
  return "?";
}

std::optional<Function> function_from_name(std::string_view name) {
  for (const auto& [f, n] : kFunctions) {
    if (n == name) return f;
  }
  return std::nullopt;
}

const std::vector<std::string>& reserved_function_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [f, n] : kFunctions) v.emplace_back(n);
    return v;
  }();
  return names;
}

Expr Expr::constant(double v) {
  Expr e;
  e.kind = NodeKind::Constant;
  e.value = v;
  return e;
}

Expr Expr::parameter(int slot) {
  Expr e;
  e.kind = NodeKind::Parameter;
  e.index = slot;
  return e;
}

Expr Expr::variable(std::string name) {
  Expr e;
  e.kind = NodeKind::Variable;
  e.name = std::move(name);
  return e;
}

Expr Expr::negate(Expr child) {
  Expr e;
  e.kind = NodeKind::Negate;
  e.children.push_back(std::move(child));
  return e;
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  Expr e;
  e.kind = NodeKind::Binary;
  e.op = op;
  e.children.push_back(std::move(lhs));
  e.children.push_back(std::move(rhs));
  return e;
}

Expr Expr::call(Function fn, Expr arg) {
  Expr e;
  e.kind = NodeKind::Call;
  e.fn = fn;
  e.children.push_back(std::move(arg));
  return e;
}

Expr Expr::power(Expr base, int exponent) {
  Expr e;
  e.kind = NodeKind::Power;
  e.index = exponent;
  e.children.push_back(std::move(base));
  return e;
}

std::string_view to_string(TargetKind kind) { return kind == TargetKind::Differential ? "DE" : "AE"; }

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::UnknownIdentifier: return "UnknownIdentifier";
    case ParseErrorKind::ArityError: return "ArityError";
    case ParseErrorKind::SyntaxError: return "SyntaxError";
    case ParseErrorKind::MissingTarget: return "MissingTarget";
    case ParseErrorKind::DuplicateTarget: return "DuplicateTarget";
  }
  return "ParseError";
}

ParseError::ParseError(ParseErrorKind kind, std::string token, std::size_t line, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": '" + token + "' on line " + std::to_string(line) + " (" +
                         detail + ")"),
      kind_(kind),
      token_(std::move(token)),
      line_(line) {}

bool is_parameter_name(std::string_view name) {
  if (name.size() < 2 || name[0] != 'p') return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_identifier(std::string_view name) {
  if (name.empty() || !is_ident_start(name[0])) return false;
  return std::all_of(name.begin(), name.end(), is_ident_char);
}

SymbolScope::SymbolScope(std::vector<std::string> states, std::vector<std::string> variables)
    : states_(std::move(states)), variables_(std::move(variables)) {
  std::set<std::string> seen;
  auto check = [&](const std::string& n) {
    if (!is_identifier(n)) throw std::invalid_argument("invalid symbol name '" + n + "'");
    if (is_parameter_name(n)) throw std::invalid_argument("symbol '" + n + "' collides with a parameter slot");
    if (function_from_name(n)) throw std::invalid_argument("symbol '" + n + "' is a reserved function name");
    if (!seen.insert(n).second) throw std::invalid_argument("duplicate symbol '" + n + "'");
  };
  for (const auto& n : states_) check(n);
  for (const auto& n : variables_) check(n);
}

std::vector<std::string> SymbolScope::all() const {
  std::vector<std::string> out = states_;
  out.insert(out.end(), variables_.begin(), variables_.end());
  return out;
}

bool SymbolScope::contains(std::string_view name) const {
  return std::find(states_.begin(), states_.end(), name) != states_.end() ||
         std::find(variables_.begin(), variables_.end(), name) != variables_.end();
}

bool Skeleton::same_structure(const Skeleton& other) const {
  return kind == other.kind && targets == other.targets && expressions == other.expressions &&
         n_params == other.n_params;
}

Expr parse_expression(std::string_view text, const SymbolScope& scope) {
  return parse_line_expression(text, scope, 1);
}

Skeleton parse(std::string_view text, const SymbolScope& scope, const std::vector<std::string>& target_names,
               TargetKind kind) {
  std::vector<std::optional<Expr>> slots(target_names.size());
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(ParseErrorKind::SyntaxError, std::string(line), line_no, "expected '<target> = <expr>'");
    }
    std::string_view lhs = trim(line.substr(0, eq));
    std::string target;
    if (kind == TargetKind::Differential) {
      // d<name>/dt
      const std::size_t slash = lhs.find('/');
      std::string_view head = slash == std::string_view::npos ? lhs : trim(lhs.substr(0, slash));
      std::string_view tail = slash == std::string_view::npos ? "" : trim(lhs.substr(slash + 1));
      if (slash == std::string_view::npos || tail != "dt" || head.size() < 2 || head[0] != 'd' ||
          !is_identifier(head.substr(1))) {
        throw ParseError(ParseErrorKind::SyntaxError, std::string(lhs), line_no, "expected 'd<state>/dt'");
      }
      target = std::string(head.substr(1));
    } else {
      if (!is_identifier(lhs)) {
        throw ParseError(ParseErrorKind::SyntaxError, std::string(lhs), line_no, "expected a target name");
      }
      target = std::string(lhs);
    }
    auto it = std::find(target_names.begin(), target_names.end(), target);
    if (it == target_names.end()) {
      throw ParseError(ParseErrorKind::UnknownIdentifier, target, line_no, "not a target of this loop");
    }
    auto& slot = slots[static_cast<std::size_t>(it - target_names.begin())];
    if (slot) throw ParseError(ParseErrorKind::DuplicateTarget, target, line_no, "target defined twice");
    std::string_view rhs = line.substr(eq + 1);
    if (rhs.find('=') != std::string_view::npos) {
      throw ParseError(ParseErrorKind::SyntaxError, "=", line_no, "more than one '=' on a line");
    }
    slot = parse_line_expression(rhs, scope, line_no);
  }

  Skeleton s;
  s.kind = kind;
  s.targets = target_names;
  s.source = std::string(text);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw ParseError(ParseErrorKind::MissingTarget, target_names[i], line_no, "no equation for target");
    s.expressions.push_back(std::move(*slots[i]));
  }
  std::map<int, int> mapping;
  for (auto& e : s.expressions) renumber(e, mapping);
  s.n_params = mapping.size();
  return s;
}

bool compiles(std::string_view text, const SymbolScope& scope, const std::vector<std::string>& target_names,
              TargetKind kind) {
  try {
    parse(text, scope, target_names, kind);
    return true;
  } catch (const ParseError&) {
    return false;
  }
}

std::string serialize(const Expr& expr) {
  std::string out;
  print(expr, out);
  return out;
}

std::string lhs_text(TargetKind kind, const std::string& target) {
  return kind == TargetKind::Differential ? "d" + target + "/dt" : target;
}

std::string serialize(const Skeleton& skeleton) {
  std::string out;
  for (std::size_t i = 0; i < skeleton.targets.size(); ++i) {
    if (i > 0) out += '\n';
    out += lhs_text(skeleton.kind, skeleton.targets[i]);
    out += " = ";
    print(skeleton.expressions[i], out);
  }
  return out;
}

std::size_t code_length(const Skeleton& skeleton) { return serialize(skeleton).size(); }

void collect_variables(const Expr& expr, std::vector<std::string>& out) {
  if (expr.kind == NodeKind::Variable) out.push_back(expr.name);
  for (const auto& c : expr.children) collect_variables(c, out);
}

std::vector<std::string> referenced_variables(const Skeleton& skeleton) {
  std::vector<std::string> names;
  for (const auto& e : skeleton.expressions) collect_variables(e, names);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

}  // namespace llmdmd
