#include <doctest.h>

#include "llmdmd/skeleton.hpp"
#include "support/random_skeleton.hpp"

using namespace llmdmd;

namespace {

SymbolScope swing_scope() { return SymbolScope({"delta", "omega"}, {}); }

ParseErrorKind error_kind(std::string_view text, const SymbolScope& scope, const std::vector<std::string>& targets) {
  try {
    parse(text, scope, targets);
  } catch (const ParseError& e) {
    return e.kind();
  }
  FAIL("expected a ParseError for: " << text);
  return ParseErrorKind::SyntaxError;
}

}  // namespace

TEST_CASE("minimal differential line") {
  const auto s = parse("ddelta/dt = p0*(omega - 1)", swing_scope(), {"delta"});
  CHECK(s.targets == std::vector<std::string>{"delta"});
  CHECK(s.expressions.size() == 1);
  CHECK(s.n_params == 1);
  CHECK(s.kind == TargetKind::Differential);
}

TEST_CASE("out-of-scope identifier is rejected") {
  try {
    parse("ddelta/dt = p0*sin(theta_x)", swing_scope(), {"delta"});
    FAIL("accepted an unknown identifier");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseErrorKind::UnknownIdentifier);
    CHECK(e.token() == "theta_x");
    CHECK(e.line() == 1);
  }
  CHECK_FALSE(compiles("ddelta/dt = p0*sin(theta_x)", swing_scope(), {"delta"}));
}

TEST_CASE("swing right-hand side matches a hand-built tree") {
  const auto s = parse("domega/dt = (p0 - p1*sin(delta) - p2*(omega-1))/p3", swing_scope(), {"omega"});
  CHECK(s.n_params == 4);
  const Expr inner = Expr::binary(
      BinaryOp::Sub,
      Expr::binary(BinaryOp::Sub, Expr::parameter(0),
                   Expr::binary(BinaryOp::Mul, Expr::parameter(1), Expr::call(Function::Sin, Expr::variable("delta")))),
      Expr::binary(BinaryOp::Mul, Expr::parameter(2),
                   Expr::binary(BinaryOp::Sub, Expr::variable("omega"), Expr::constant(1.0))));
  const Expr expected = Expr::binary(BinaryOp::Div, inner, Expr::parameter(3));
  CHECK(s.expressions[0] == expected);
  CHECK(serialize(s.expressions[0]) == serialize(expected));
  CHECK(serialize(s) == "domega/dt = (p0 - p1*sin(delta) - p2*(omega - 1))/p3");
}

TEST_CASE("non-contiguous slots are renumbered by first appearance") {
  const auto s = parse("ddelta/dt = p2*omega + p0", swing_scope(), {"delta"});
  CHECK(s.n_params == 2);
  CHECK(serialize(s) == "ddelta/dt = p0*omega + p1");
  const auto two = parse("ddelta/dt = p5*omega\ndomega/dt = p5 + p1*delta", swing_scope(), {"delta", "omega"});
  CHECK(two.n_params == 2);
  CHECK(serialize(two) == "ddelta/dt = p0*omega\ndomega/dt = p0 + p1*delta");
}

TEST_CASE("code length counts canonical characters") {
  const auto s = parse("ddelta/dt = p0*(omega - 1)", swing_scope(), {"delta"});
  CHECK(serialize(s) == "ddelta/dt = p0*(omega - 1)");
  CHECK(code_length(s) == 26);
  const auto spaced = parse("ddelta/dt   =   p0 *  (omega-1)", swing_scope(), {"delta"});
  CHECK(code_length(spaced) == code_length(s));
  CHECK(spaced.same_structure(s));
}

TEST_CASE("canonical spacing") {
  CHECK(serialize(parse_expression("p0 * ( omega-1 )", swing_scope())) == "p0*(omega - 1)");
  CHECK(serialize(parse_expression("-  delta ^2", swing_scope())) == "-delta^2");
  CHECK(serialize(parse_expression("(-delta)^2", swing_scope())) == "(-delta)^2");
  CHECK(serialize(parse_expression("delta - (omega - 1)", swing_scope())) == "delta - (omega - 1)");
  CHECK(serialize(parse_expression("delta/(omega*p0)", swing_scope())) == "delta/(omega*p0)");
  CHECK(serialize(parse_expression("delta^(-2)", swing_scope())) == "delta^(-2)");
}

TEST_CASE("algebraic targets use a bare left-hand side") {
  const SymbolScope scope({"delta", "omega"}, {"P_e"});
  const auto s = parse("P_e = p0*sin(delta)", scope, {"P_e"}, TargetKind::Algebraic);
  CHECK(s.kind == TargetKind::Algebraic);
  CHECK(serialize(s) == "P_e = p0*sin(delta)");
  CHECK(referenced_variables(s) == std::vector<std::string>{"delta"});
}

TEST_CASE("grammar errors") {
  const auto sc = swing_scope();
  CHECK(error_kind("ddelta/dt = p0*", sc, {"delta"}) == ParseErrorKind::SyntaxError);
  CHECK(error_kind("ddelta/dt = omega^p0", sc, {"delta"}) == ParseErrorKind::SyntaxError);
  CHECK(error_kind("ddelta/dt = omega^5", sc, {"delta"}) == ParseErrorKind::SyntaxError);
  CHECK(error_kind("ddelta/dt = omega^2.5", sc, {"delta"}) == ParseErrorKind::SyntaxError);
  CHECK(error_kind("ddelta/dt = sin(omega, delta)", sc, {"delta"}) == ParseErrorKind::ArityError);
  CHECK(error_kind("ddelta/dt = sin()", sc, {"delta"}) == ParseErrorKind::ArityError);
  CHECK(error_kind("ddelta/dt = omega", sc, {"delta", "omega"}) == ParseErrorKind::MissingTarget);
  CHECK(error_kind("ddelta/dt = omega\nddelta/dt = p0", sc, {"delta"}) == ParseErrorKind::DuplicateTarget);
  CHECK(error_kind("dfoo/dt = omega", sc, {"delta"}) == ParseErrorKind::UnknownIdentifier);
  CHECK(error_kind("", sc, {"delta"}) == ParseErrorKind::MissingTarget);
}

TEST_CASE("comments and blank lines are ignored") {
  const auto s = parse("# comment\n\nddelta/dt = p0*omega\n", swing_scope(), {"delta"});
  CHECK(serialize(s) == "ddelta/dt = p0*omega");
}

TEST_CASE("scope validation") {
  CHECK_THROWS_AS(SymbolScope({"delta", "delta"}, {}), std::invalid_argument);
  CHECK_THROWS_AS(SymbolScope({"sin"}, {}), std::invalid_argument);
  CHECK_THROWS_AS(SymbolScope({"p3"}, {}), std::invalid_argument);
  CHECK_THROWS_AS(SymbolScope({""}, {}), std::invalid_argument);
  const SymbolScope s({"delta"}, {"P_e"});
  CHECK(s.all() == std::vector<std::string>{"delta", "P_e"});
  CHECK(s.contains("P_e"));
  CHECK_FALSE(s.contains("omega"));
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.0, 1.0, 0.1, 314.159265, 1e-7, 6.02e23, 0.30000000000000004}) {
    CHECK(std::stod(format_number(v)) == v);
  }
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("round-trip over random ASTs") {
  testing::SkeletonGenerator gen({"delta", "omega", "e_q1"}, {"P_e", "i_d"}, 42);
  for (int i = 0; i < 2000; ++i) {
    const Skeleton s = gen.next();
    const std::string text = serialize(s);
    Skeleton back;
    REQUIRE_NOTHROW(back = parse(text, gen.scope(), s.targets));
    INFO(text);
    CHECK(back.same_structure(s));
    CHECK(serialize(back) == text);
    CHECK(back.n_params == s.n_params);
  }
}

TEST_CASE("accepted skeletons evaluate without unbound symbols") {
  testing::SkeletonGenerator gen({"delta", "omega"}, {"P_e"}, 7);
  const auto batch = testing::random_batch(gen.scope(), 8, 3);
  for (int i = 0; i < 300; ++i) {
    const Skeleton s = gen.next();
    std::vector<double> params(s.n_params, 0.5);
    CHECK_NOTHROW(evaluate(s, params, batch));
  }
}
