#include <cmath>
#include <span>

#include <gtest/gtest.h>

#include "geoctrl/expr.hpp"
#include "geoctrl/vector_field.hpp"
#include "random_fields.hpp"

namespace geoctrl {
namespace {

using testing::RandomExpr;
using testing::RandomField;
using testing::RandomPoint;

const std::vector<std::string> kVars2 = {"x1", "x2"};
const std::vector<std::string> kVars3 = {"x1", "x2", "x3"};

double Eval(const Expr& e, std::vector<double> p) { return Evaluate(e, p); }

Vector V(std::initializer_list<double> xs) {
  Vector v(xs.size());
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

VectorField Field(std::vector<std::string> src, const std::vector<std::string>& vars) {
  return ParseVectorField(src, vars);
}

GTEST_TEST(ParseExpression, Variable) {
  const Expr e = ParseExpression("x2", kVars2);
  EXPECT_EQ(e.op(), Op::kVar);
  EXPECT_EQ(e.var(), 1);
}

GTEST_TEST(ParseExpression, GrammarDerivation) {
  const Expr e = ParseExpression("1 + x2^2", kVars2);
  const Expr expected =
      Expr::Constant(1) + Expr::Binary(Op::kPow, Expr::Variable(1), Expr::Constant(2));
  EXPECT_TRUE(StructurallyEqual(e, expected));
}

GTEST_TEST(ParseExpression, UnclosedParenthesis) {
  try {
    ParseExpression("cos(x3)*x1 - sin(", kVars3);
    FAIL() << "expected a syntax error";
  } catch (const ParseError& err) {
    EXPECT_EQ(err.code(), ErrorCode::kSyntax);
    EXPECT_EQ(err.line(), 1);
    EXPECT_EQ(err.column(), 18);  // end of input after "sin("
  }
}

GTEST_TEST(ParseExpression, Errors) {
  auto code_of = [](const std::string& src) {
    try {
      ParseExpression(src, kVars3);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;  // sentinel: no error
  };
  EXPECT_EQ(code_of("x4"), ErrorCode::kUnknownIdentifier);
  EXPECT_EQ(code_of("sin(x1, x2)"), ErrorCode::kArity);
  EXPECT_EQ(code_of("sin x1"), ErrorCode::kArity);
  EXPECT_EQ(code_of("cos()"), ErrorCode::kArity);
  EXPECT_EQ(code_of("x1^x2"), ErrorCode::kExponent);
  EXPECT_EQ(code_of("x1 + * x2"), ErrorCode::kSyntax);
  EXPECT_EQ(code_of("(x1"), ErrorCode::kSyntax);
  EXPECT_EQ(code_of("x1 $ 2"), ErrorCode::kSyntax);
  EXPECT_EQ(code_of("x1^-1"), ErrorCode::kIo);
  EXPECT_EQ(code_of("2.5e-3*x1"), ErrorCode::kIo);
}

GTEST_TEST(ParseExpression, ErrorLocationWithOffsets) {
  try {
    ParseExpression("x1 + y", kVars3, 7, 10);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 7);
    EXPECT_EQ(err.column(), 15);
  }
}

GTEST_TEST(ParseExpression, Precedence) {
  EXPECT_DOUBLE_EQ(Eval(ParseExpression("-x1^2", kVars2), {3, 0}), -9);
  EXPECT_DOUBLE_EQ(Eval(ParseExpression("2*3+4/2-1", kVars2), {0, 0}), 7);
  EXPECT_DOUBLE_EQ(Eval(ParseExpression("x1-x2-1", kVars2), {5, 1}), 3);
  EXPECT_DOUBLE_EQ(Eval(ParseExpression("x1/x2/2", kVars2), {8, 2}), 2);
  EXPECT_DOUBLE_EQ(Eval(ParseExpression("x1^(-1)", kVars2), {4, 0}), 0.25);
}

GTEST_TEST(ParseExpression, PrintRoundTrip) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Expr e = RandomExpr(rng, 3, 4);
    const Expr back = ParseExpression(ToString(e, kVars3), kVars3);
    const Point p = RandomPoint(rng, 3, 2.0);
    const std::span<const double> ps(p.data(), 3);
    EXPECT_NEAR(Evaluate(back, ps), Evaluate(e, ps), 1e-12 * (1 + std::abs(Evaluate(e, ps))))
        << ToString(e, kVars3);
  }
}

GTEST_TEST(Evaluate, Examples) {
  EXPECT_DOUBLE_EQ(Eval(ParseExpression("x2", kVars2), {3, -0.5}), -0.5);
  EXPECT_DOUBLE_EQ(Eval(ParseExpression("1 + x2^2", kVars2), {0, 2}), 5);
}

GTEST_TEST(Evaluate, DomainErrors) {
  for (const char* src : {"ln(x1)", "sqrt(x1)", "x2/x2", "x1^0.5", "x2^(-1)"}) {
    try {
      Eval(ParseExpression(src, kVars2), {-1, 0});
      ADD_FAILURE() << src;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDomain) << src;
    }
  }
}

GTEST_TEST(Program, MatchesTreeEvaluation) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Expr e = RandomExpr(rng, 3, 5);
    const Program prog(e);
    const Point p = RandomPoint(rng, 3, 2.0);
    const std::span<const double> ps(p.data(), 3);
    EXPECT_EQ(prog(ps), Evaluate(e, ps));
  }
  EXPECT_THROW(Program(ParseExpression("ln(x1)", kVars2))(std::vector<double>{-1, 0}), Error);
}

GTEST_TEST(Differentiate, Examples) {
  EXPECT_EQ(ToString(Differentiate(ParseExpression("x2^2", kVars2), 1), kVars2), "2*x2^1");
  EXPECT_EQ(ToString(Differentiate(ParseExpression("sin(x1)*x2", kVars2), 0), kVars2),
            "cos(x1)*x2");
  EXPECT_TRUE(Differentiate(ParseExpression("x2", kVars2), 0).is_constant(0.0));
}

// Property: symbolic derivative against central differences, h = 1e-5.
GTEST_TEST(Differentiate, MatchesCentralDifferences) {
  Rng rng(2024);
  const double h = 1e-5;
  int checked = 0;
  for (int expr_index = 0; expr_index < 30; ++expr_index) {
    const Expr e = RandomExpr(rng, 3, 4);
    for (int var = 0; var < 3; ++var) {
      const Expr d = Differentiate(e, var);
      for (int trial = 0; trial < 100; ++trial) {
        Point p = RandomPoint(rng, 3, 1.5);
        const std::span<const double> ps(p.data(), 3);
        const double exact = Evaluate(d, ps);
        Point hi = p, lo = p;
        hi[var] += h;
        lo[var] -= h;
        const double fd = (Evaluate(e, std::span<const double>(hi.data(), 3)) -
                           Evaluate(e, std::span<const double>(lo.data(), 3))) /
                          (2 * h);
        // Relative error with an absolute floor where the derivative vanishes.
        const double scale = std::max(1.0, std::abs(exact));
        EXPECT_LE(std::abs(fd - exact) / scale, 1e-6) << ToString(e, kVars3) << " d/x" << var + 1;
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 30 * 3 * 100);
}

GTEST_TEST(Simplify, Examples) {
  EXPECT_EQ(ToString(Simplify(ParseExpression("0*x1 + x2", kVars2)), kVars2), "x2");
  EXPECT_EQ(ToString(Simplify(ParseExpression("x1 - x1", kVars2)), kVars2), "0");
  EXPECT_EQ(ToString(Simplify(ParseExpression("2*x1^1", kVars2)), kVars2), "2*x1");
  EXPECT_EQ(ToString(Simplify(ParseExpression("x1 + 2*x1 - 3*x1 + 1 + 2", kVars2)), kVars2),
            "3");
  EXPECT_EQ(ToString(Simplify(ParseExpression("-(-x1)", kVars2)), kVars2), "x1");
  EXPECT_EQ(ToString(Simplify(ParseExpression("sin(0) + cos(0)*x2", kVars2)), kVars2), "x2");
}

GTEST_TEST(Simplify, PreservesValue) {
  Rng rng(99);
  for (int expr_index = 0; expr_index < 50; ++expr_index) {
    const Expr e = RandomExpr(rng, 3, 5);
    const Expr s = Simplify(e);
    for (int trial = 0; trial < 100; ++trial) {
      const Point p = RandomPoint(rng, 3, 2.0);
      const std::span<const double> ps(p.data(), 3);
      const double a = Evaluate(e, ps);
      const double b = Evaluate(s, ps);
      EXPECT_LE(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(a)))
          << ToString(e, kVars3) << "  =>  " << ToString(s, kVars3);
    }
  }
}

GTEST_TEST(Jacobian, Examples) {
  const ExprGrid j1 = Jacobian(Field({"x2", "0"}, kVars2));
  EXPECT_TRUE(j1[0][0].is_constant(0));
  EXPECT_TRUE(j1[0][1].is_constant(1));
  EXPECT_TRUE(j1[1][0].is_constant(0));
  EXPECT_TRUE(j1[1][1].is_constant(0));

  // Oracle: d/dx3 cos(x3) = -sin(x3), d/dx3 sin(x3) = cos(x3).
  const ExprGrid j2 = Jacobian(Field({"cos(x3)", "sin(x3)", "0"}, kVars3));
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Point p = RandomPoint(rng, 3, 3.0);
    const std::span<const double> ps(p.data(), 3);
    for (int j = 0; j < 3; ++j) {
      EXPECT_DOUBLE_EQ(Evaluate(j2[0][j], ps), j == 2 ? -std::sin(p[2]) : 0.0);
      EXPECT_DOUBLE_EQ(Evaluate(j2[1][j], ps), j == 2 ? std::cos(p[2]) : 0.0);
      EXPECT_TRUE(j2[2][j].is_constant(0));
    }
  }

  const ExprGrid j3 = Jacobian(Field({"3", "-1", "2.5"}, kVars3));
  for (const auto& row : j3) {
    for (const auto& e : row) EXPECT_TRUE(e.is_constant(0));
  }
}

GTEST_TEST(LieBracket, ConstantFieldsCommute) {
  const VectorField b = LieBracket(Field({"1", "0", "0"}, kVars3), Field({"0", "1", "0"}, kVars3));
  for (const auto& c : b.components) EXPECT_TRUE(c.is_constant(0));
}

GTEST_TEST(LieBracket, Heisenberg) {
  const VectorField x = Field({"1", "0", "-x2/2"}, kVars3);
  const VectorField y = Field({"0", "1", "x1/2"}, kVars3);
  const VectorField b = LieBracket(x, y);
  EXPECT_TRUE(b[0].is_constant(0));
  EXPECT_TRUE(b[1].is_constant(0));
  EXPECT_TRUE(b[2].is_constant(1)) << ToString(b[2], kVars3);
}

GTEST_TEST(LieBracket, UnicycleTurn) {
  const VectorField b =
      LieBracket(Field({"0", "0", "1"}, kVars3), Field({"cos(x3)", "sin(x3)", "0"}, kVars3));
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Point p = RandomPoint(rng, 3, 3.0);
    const Vector v = Evaluate(b, p);
    EXPECT_DOUBLE_EQ(v[0], -std::sin(p[2]));
    EXPECT_DOUBLE_EQ(v[1], std::cos(p[2]));
    EXPECT_EQ(v[2], 0.0);
  }
}

GTEST_TEST(LieBracket, DimensionMismatch) {
  EXPECT_THROW(LieBracket(Field({"1", "0"}, kVars2), Field({"1", "0", "0"}, kVars3)), Error);
}

// Property: antisymmetry and the Jacobi identity at random points.
GTEST_TEST(LieBracket, AntisymmetryAndJacobi) {
  Rng rng(31337);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorField x = RandomField(rng, 3, 2);
    const VectorField y = RandomField(rng, 3, 2);
    const VectorField z = RandomField(rng, 3, 2);
    const VectorField xy = LieBracket(x, y);
    const VectorField yx = LieBracket(y, x);
    const VectorField j1 = LieBracket(xy, z);
    const VectorField j2 = LieBracket(LieBracket(y, z), x);
    const VectorField j3 = LieBracket(LieBracket(z, x), y);
    for (int k = 0; k < 10; ++k) {
      const Point p = RandomPoint(rng, 3, 1.5);
      const Vector a = Evaluate(xy, p);
      const Vector b = Evaluate(yx, p);
      EXPECT_LE((a + b).norm(), 1e-12 * std::max(1.0, a.norm()));
      const Vector jac = Evaluate(j1, p) + Evaluate(j2, p) + Evaluate(j3, p);
      const double scale = std::max(
          1.0, Evaluate(j1, p).norm() + Evaluate(j2, p).norm() + Evaluate(j3, p).norm());
      EXPECT_LE(jac.norm() / scale, 1e-9);
    }
  }
}

GTEST_TEST(CompiledField, MatchesEvaluate) {
  const VectorField f = Field({"cos(x3)", "sin(x3)*x1", "x2^2"}, kVars3);
  const CompiledField cf(f);
  const CompiledJacobian cj(f);
  const Point p = V({0.3, -1.2, 0.7});
  EXPECT_EQ((cf(p) - Evaluate(f, p)).norm(), 0.0);
  const ExprGrid j = Jacobian(f);
  const Matrix m = cj(p);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(m(r, c), Evaluate(j[r][c], std::span<const double>(p.data(), 3)));
    }
  }
}

}  // namespace
}  // namespace geoctrl
