#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "geoctrl/criterion.hpp"
#include "random_fields.hpp"

namespace geoctrl {
namespace {

using testing::RandomPoint;
using testing::VarNames;

VectorField F(std::vector<std::string> src) {
  return ParseVectorField(src, VarNames(static_cast<int>(src.size())));
}

Vector V(std::initializer_list<double> xs) {
  Vector v(xs.size());
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

SystemSpec Planar(const std::string& drift0) {
  SystemSpec s = MakeSystem("planar", {"x1", "x2"}, {{drift0, "0"}}, {{"0", "1"}},
                            {{-2, 2}, {-2, 2}});
  s.budgets.grid = 11;
  return s;
}

SystemSpec Unicycle(const std::string& drift0) {
  SystemSpec s = MakeSystem("unicycle", {"x1", "x2", "x3"}, {{drift0, "sin(x3)", "0"}},
                            {{"0", "0", "1"}},
                            {{-2, 2}, {-2, 2}, {-std::numbers::pi, std::numbers::pi}});
  s.budgets.grid = 5;
  return s;
}

SystemSpec SinPlane() {
  SystemSpec s = MakeSystem("sin-plane", {"x1", "x2", "x3"}, {{"0", "0", "sin(x1)"}},
                            {{"1", "0", "0"}, {"0", "1", "0"}}, {{-2, 2}, {-2, 2}, {-2, 2}});
  s.frame = {MakeFieldSource({"1", "0", "0"}, s.var_names),
             MakeFieldSource({"0", "1", "0"}, s.var_names)};
  s.budgets.grid = 5;
  return s;
}

// ---------------------------------------------------------------------------

GTEST_TEST(CriterionValue, Examples) {
  Point p = V({0.3, -1.7});
  EXPECT_DOUBLE_EQ(CriterionValue(F({"x2", "0"}), {F({"0", "1"})}, p), -1.7);
  Point q = V({0.4, 2, -1});
  EXPECT_NEAR(CriterionValue(F({"0", "0", "sin(x1)"}), {F({"1", "0", "0"}), F({"0", "1", "0"})}, q),
              std::sin(0.4), 1e-15);
  EXPECT_EQ(CriterionValue(F({"x1", "1"}), {F({"x1", "1"})}, p), 0.0);
  EXPECT_THROW(CriterionValue(F({"x2", "0"}), {}, p), Error);
}

// Property: alternating in the frame columns; compiled and tree paths agree.
GTEST_TEST(CriterionValue, AlternatingAndCompiled) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorField f = testing::RandomField(rng, 3, 2);
    const VectorField a = testing::RandomField(rng, 3, 2);
    const VectorField b = testing::RandomField(rng, 3, 2);
    const Point x = RandomPoint(rng, 3, 1.5);
    const double c = CriterionValue(f, {a, b}, x);
    EXPECT_NEAR(CriterionValue(f, {b, a}, x), -c, 1e-12 * (1 + std::abs(c)));
    EXPECT_NEAR(MakeCriterion(f, {a, b})(x), c, 1e-12 * (1 + std::abs(c)));
  }
}

// ---------------------------------------------------------------------------

LeafSample LeafWithValues(std::vector<double> values) {
  LeafSample leaf;
  leaf.base = V({values.front()});
  for (double v : values) leaf.visits.push_back({V({v}), {}});
  leaf.attempts = static_cast<int>(values.size());
  return leaf;
}

GTEST_TEST(SignChangeOnLeaf, Examples) {
  const CriterionFn identity = [](const Point& p) { return p[0]; };
  auto v = SignChangeOnLeaf(LeafWithValues({0.5, -0.3, 0.1}), identity);
  EXPECT_TRUE(v.condition_holds);
  ASSERT_TRUE(v.sign_change);
  EXPECT_EQ(v.sign_change->positive_value, 0.5);
  EXPECT_EQ(v.sign_change->negative_value, -0.3);
  EXPECT_FALSE(SignChangeOnLeaf(LeafWithValues({0.5, 0.2, 1e-12}), identity, 1e-9).condition_holds);
  EXPECT_FALSE(SignChangeOnLeaf(LeafWithValues({0.5, -1e-10}), identity, 1e-9).condition_holds);

  const auto leaf = SampleLeaf({F({"0", "1"})}, V({0, 0}), 50, 1.0, 3);
  EXPECT_TRUE(SignChangeOnLeaf(leaf, MakeCriterion(F({"x2", "0"}), {F({"0", "1"})})).condition_holds);
}

// Property: scaling f by a positive constant or by -1 leaves the verdict.
GTEST_TEST(SignChangeOnLeaf, ScalingInvariance) {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const Point base = RandomPoint(rng, 2, 1.0);
    const auto leaf = SampleLeaf({F({"0", "1"})}, base, 20, 0.5, trial);
    const VectorField f = testing::RandomField(rng, 2, 2);
    const bool reference = SignChangeOnLeaf(leaf, MakeCriterion(f, {F({"0", "1"})})).condition_holds;
    for (double scale : {3.5, 0.25, -1.0}) {
      const VectorField scaled(
          {Expr::Constant(scale) * f.components[0], Expr::Constant(scale) * f.components[1]});
      EXPECT_EQ(SignChangeOnLeaf(leaf, MakeCriterion(scaled, {F({"0", "1"})})).condition_holds,
                reference);
    }
  }
}

// ---------------------------------------------------------------------------

GTEST_TEST(QuotientProjection, Examples) {
  Matrix g2(2, 1);
  g2 << 0, 1;
  const Matrix q2 = QuotientProjection(g2);
  ASSERT_EQ(q2.cols(), 1);
  EXPECT_NEAR(std::abs(q2(0, 0)), 1.0, 1e-15);
  EXPECT_NEAR(q2(1, 0), 0.0, 1e-15);

  Matrix g3(3, 1);
  g3 << 0, 0, 1;
  const Matrix q3 = QuotientProjection(g3);
  ASSERT_EQ(q3.cols(), 2);
  EXPECT_NEAR((q3.transpose() * q3 - Matrix::Identity(2, 2)).norm(), 0.0, 1e-14);
  EXPECT_NEAR(q3.row(2).norm(), 0.0, 1e-15);

  EXPECT_EQ(QuotientProjection(Matrix::Identity(3, 3)).cols(), 0);
  EXPECT_THROW(QuotientProjection(g3, kDefaultRankTol, 2), Error);
}

GTEST_TEST(QuotientProjection, OrthogonalToRandomSpans) {
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 4;
    const int r = trial % n;
    Matrix g(n, r + 1);
    for (int c = 0; c < r; ++c) g.col(c) = RandomPoint(rng, n, 1.0);
    g.col(r) = r > 0 ? Vector(g.col(0) - g.col(r - 1)) : Vector(Vector::Zero(n));
    const Matrix q = QuotientProjection(g, kDefaultRankTol, r);
    ASSERT_EQ(q.cols(), n - r);
    EXPECT_LE((q.transpose() * g).norm(), 1e-12);
    EXPECT_LE((q.transpose() * q - Matrix::Identity(n - r, n - r)).norm(), 1e-12);
  }
}

// ---------------------------------------------------------------------------

std::vector<Vector> Points2(std::initializer_list<std::pair<double, double>> xs) {
  std::vector<Vector> out;
  for (auto [a, b] : xs) out.push_back(V({a, b}));
  return out;
}

GTEST_TEST(InteriorConvexTest, Examples) {
  EXPECT_TRUE(InteriorConvexTest({V({0.5}), V({-0.3})}, 1e-6).inside);
  const auto one_sided = InteriorConvexTest({V({0.5}), V({0.3})}, 1e-6);
  EXPECT_FALSE(one_sided.inside);
  EXPECT_EQ((*one_sided.witness)[0], 1.0);

  std::vector<Vector> roots;
  for (int j = 0; j < 8; ++j) {
    roots.push_back(V({std::cos(j * std::numbers::pi / 4), std::sin(j * std::numbers::pi / 4)}));
  }
  EXPECT_TRUE(InteriorConvexTest(roots, 1e-7).inside);

  std::vector<Vector> shifted;
  for (int j = 0; j < 12; ++j) {
    const double t = j * std::numbers::pi / 6;
    shifted.push_back(V({2 + std::cos(t), std::sin(t)}));
  }
  const auto out = InteriorConvexTest(shifted, 1e-7);
  EXPECT_FALSE(out.inside);
  EXPECT_NEAR((*out.witness - V({1, 0})).norm(), 0.0, 1e-12);

  EXPECT_THROW(InteriorConvexTest({}, 1e-7), Error);
}

GTEST_TEST(InteriorConvexTest, DegenerateHullsAreOutside) {
  // Segment through the origin: 0 is in the hull but not its interior.
  EXPECT_FALSE(InteriorConvexTest(Points2({{1, 0}, {-1, 0}}), 1e-7).inside);
  EXPECT_FALSE(InteriorConvexTest(Points2({{0, 0}}), 1e-7).inside);
  EXPECT_TRUE(InteriorConvexTest(Points2({{1, 0}, {-1, 0.1}, {-1, -0.1}}), 1e-7).inside);
}

GTEST_TEST(InteriorConvexTest, HigherDimensions) {
  std::vector<Vector> cross;
  for (int i = 0; i < 3; ++i) {
    cross.push_back(Vector::Unit(3, i));
    cross.push_back(-Vector::Unit(3, i));
  }
  const auto inside = InteriorConvexTest(cross, 1e-7);
  EXPECT_TRUE(inside.inside);
  EXPECT_TRUE(inside.approximate);
  cross.pop_back();
  const auto outside = InteriorConvexTest(cross, 1e-7);
  EXPECT_FALSE(outside.inside);
  for (const auto& p : cross) EXPECT_GE(outside.witness->dot(p), -1e-7);
  EXPECT_GE(detail::SphereDesign(5).size(), 50u);
}

// Oracle: scan 10^4 equally spaced directions; 0 is interior iff every
// direction sees some point strictly beyond the margin.
bool BruteForceInside(const std::vector<Vector>& pts, double margin) {
  for (int i = 0; i < 10000; ++i) {
    const double a = 2 * std::numbers::pi * i / 10000;
    const Vector d = V({std::cos(a), std::sin(a)});
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) best = std::max(best, d.dot(p));
    if (!(best > margin)) return false;
  }
  return true;
}

double MaxAngularGap(const std::vector<Vector>& pts) {
  std::vector<double> a;
  for (const auto& p : pts) a.push_back(std::atan2(p[1], p[0]));
  std::sort(a.begin(), a.end());
  double gap = a.front() + 2 * std::numbers::pi - a.back();
  for (std::size_t i = 1; i < a.size(); ++i) gap = std::max(gap, a[i] - a[i - 1]);
  return gap;
}

GTEST_TEST(InteriorConvexTest, MatchesBruteForceScan) {
  Rng rng(34);
  int tested = 0, inside = 0;
  while (tested < 1000) {
    const int count = rng.Integer(1, 12);
    std::vector<Vector> pts;
    const double shift = rng.Uniform(-1, 1);
    for (int i = 0; i < count; ++i) {
      pts.push_back(V({rng.Uniform(-1, 1) + shift, rng.Uniform(-1, 1)}));
    }
    // Directions on a finite scan cannot resolve gaps within their spacing of pi.
    if (std::abs(MaxAngularGap(pts) - std::numbers::pi) < 1e-3) continue;
    ++tested;
    const bool fast = InteriorConvexTest(pts, 1e-7).inside;
    inside += fast;
    EXPECT_EQ(fast, BruteForceInside(pts, 1e-7)) << "set " << tested;
  }
  EXPECT_GT(inside, 100);
  EXPECT_LT(inside, 900);
}

// Property: adding points never turns inside into outside.
GTEST_TEST(InteriorConvexTest, Monotone) {
  Rng rng(35);
  for (int k = 1; k <= 3; ++k) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Vector> pts;
      bool was_inside = false;
      for (int i = 0; i < 15; ++i) {
        pts.push_back(RandomPoint(rng, k, 1.0) + Vector::Constant(k, 0.4));
        const bool now = InteriorConvexTest(pts, 1e-7).inside;
        EXPECT_TRUE(now || !was_inside);
        was_inside = now;
      }
    }
  }
}

// Property: witnesses are valid separating covectors.
GTEST_TEST(InteriorConvexTest, WitnessSeparates) {
  Rng rng(36);
  for (int k = 1; k <= 4; ++k) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Vector> pts;
      const int count = rng.Integer(1, 10);
      for (int i = 0; i < count; ++i) {
        pts.push_back(RandomPoint(rng, k, 1.0) + Vector::Constant(k, 0.5));
      }
      const auto r = InteriorConvexTest(pts, 1e-7);
      if (r.inside) continue;
      ASSERT_TRUE(r.witness);
      EXPECT_NEAR(r.witness->norm(), 1.0, 1e-12);
      for (const auto& p : pts) EXPECT_GE(r.witness->dot(p), -1e-7);
    }
  }
}

// ---------------------------------------------------------------------------

GTEST_TEST(CheckCondition, UnicycleHolds) {
  const auto ctx = PrepareAnalysis(Unicycle("cos(x3)"));
  const auto v = CheckCondition(ctx, V({0, 0, 0}), 7);
  EXPECT_EQ(v.codimension, 2);
  EXPECT_TRUE(v.condition_holds);
  EXPECT_EQ(v.witness, PointVerdict::Witness::kInterior);
  EXPECT_FALSE(v.approximate);
}

// Re-sample the leaf independently and check the covector against every
// shifted drift.
void ExpectWitnessValid(const AnalysisContext& ctx, const PointVerdict& v, std::uint64_t seed) {
  ASSERT_EQ(v.covector.size(), v.quotient_basis.cols());
  std::vector<VectorField> gens, drifts;
  for (const auto& g : ctx.generators) gens.push_back(g.field());
  for (const auto& f : ctx.drifts) drifts.push_back(f.field());
  auto leaf = SampleLeaf(gens, v.base, 100, ctx.options.max_duration, seed, ctx.leaf_window);
  for (const auto& s : ShiftDriftSet(gens, drifts, leaf)) {
    EXPECT_GE(v.covector.dot(v.quotient_basis.transpose() * s), -ctx.options.margin);
  }
}

GTEST_TEST(CheckCondition, ShiftedUnicycleFails) {
  const auto ctx = PrepareAnalysis(Unicycle("2 + cos(x3)"));
  const auto v = CheckCondition(ctx, V({0, 0, 0}), 7);
  EXPECT_FALSE(v.condition_holds);
  EXPECT_EQ(v.witness, PointVerdict::Witness::kSeparating);
  EXPECT_EQ(v.samples_used, ctx.options.leaf_budget);
  // The gap midpoint depends on the sampled extremes of the drift angles.
  EXPECT_NEAR((v.quotient_basis * v.covector - V({1, 0, 0})).norm(), 0.0, 1e-3);
  ExpectWitnessValid(ctx, v, 99);
}

GTEST_TEST(CheckCondition, PlanarHolds) {
  const auto ctx = PrepareAnalysis(Planar("x2"));
  const auto v = CheckCondition(ctx, V({0, 0}), 1);
  EXPECT_TRUE(v.condition_holds);
  EXPECT_EQ(v.codimension, 1);
}

GTEST_TEST(CheckCondition, FullRankVacuous) {
  SystemSpec s = MakeSystem("heis", {"x1", "x2", "x3"}, {{"1", "0", "0"}},
                            {{"1", "0", "-x2/2"}, {"0", "1", "x1/2"}}, {{-1, 1}, {-1, 1}, {-1, 1}});
  s.budgets.grid = 3;
  const auto v = CheckCondition(PrepareAnalysis(s), V({0.2, 0.1, 0}), 1);
  EXPECT_EQ(v.codimension, 0);
  EXPECT_TRUE(v.condition_holds);
}

// The convex path and the determinant path agree point by point.
GTEST_TEST(CheckCondition, DeterminantPathAgrees) {
  for (const std::string drift : {"sin(x1)", "1 + x1^2"}) {
    SystemSpec s = SinPlane();
    s.drifts = {MakeFieldSource({"0", "0", drift}, s.var_names)};
    AnalysisContext ctx = PrepareAnalysis(s);
    ctx.options.early_stop = false;
    ctx.options.leaf_budget = 40;
    for (const auto& x : ctx.window.Grid(4)) {
      const auto v = CheckCondition(ctx, x, 5);
      ASSERT_TRUE(v.determinant_holds);
      EXPECT_EQ(*v.determinant_holds, v.condition_holds);
    }
  }
}

// Rotating the unicycle by a fixed orthogonal matrix leaves verdicts intact
// and rotates ambient witnesses.
GTEST_TEST(CheckCondition, RotationalEquivariance) {
  Rng rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    Matrix a(3, 3);
    for (int i = 0; i < 3; ++i) a.col(i) = RandomPoint(rng, 3, 1.0);
    const Eigen::HouseholderQR<Matrix> qr(a);
    const Matrix r = qr.householderQ();
    for (const std::string offset : {"", "2 + "}) {
      std::ostringstream heading;
      heading.precision(17);
      heading << "(" << r(0, 2) << "*x1 + " << r(1, 2) << "*x2 + " << r(2, 2) << "*x3)";
      const std::string h = heading.str();
      std::vector<std::string> drift, control;
      for (int i = 0; i < 3; ++i) {
        std::ostringstream e;
        e.precision(17);
        e << r(i, 0) << "*(" << offset << "cos" << h << ") + " << r(i, 1) << "*sin" << h;
        drift.push_back(e.str());
        std::ostringstream c;
        c.precision(17);
        c << r(i, 2);
        control.push_back(c.str());
      }
      SystemSpec original = Unicycle(offset + "cos(x3)");
      SystemSpec rotated =
          MakeSystem("rotated", {"x1", "x2", "x3"}, {drift}, {control}, {{-5, 5}, {-5, 5}, {-5, 5}});
      original.window = rotated.window;
      original.budgets.grid = rotated.budgets.grid = 3;
      const auto ctx0 = PrepareAnalysis(original);
      const auto ctx1 = PrepareAnalysis(rotated);
      for (const Point& x : {V({0, 0, 0}), V({0.5, -0.3, 1.0})}) {
        const auto v0 = CheckCondition(ctx0, x, 11);
        const auto v1 = CheckCondition(ctx1, r * x, 11);
        EXPECT_EQ(v0.condition_holds, v1.condition_holds);
        if (!v0.condition_holds) {
          const Vector w0 = r * (v0.quotient_basis * v0.covector);
          const Vector w1 = v1.quotient_basis * v1.covector;
          EXPECT_LE((w0 - w1).norm(), 1e-6);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

GTEST_TEST(GlobalVerdict, PlanarCertified) {
  const auto g = ComputeGlobalVerdict(Planar("x2"));
  EXPECT_EQ(g.status, VerdictStatus::kControllableCertified);
  EXPECT_EQ(g.points.size(), 121u);
  EXPECT_EQ(g.codimension, 1);
}

GTEST_TEST(GlobalVerdict, PlanarCounterexample) {
  const auto g = ComputeGlobalVerdict(Planar("1 + x2^2"));
  EXPECT_EQ(g.status, VerdictStatus::kUncontrollableEvidence);
  for (const auto& p : g.points) {
    EXPECT_FALSE(p.condition_holds);
    ASSERT_EQ(p.covector.size(), 1);
    EXPECT_EQ(p.covector[0] * p.quotient_basis(0, 0), 1.0);
  }
}

GTEST_TEST(GlobalVerdict, SinPlaneCertified) {
  EXPECT_EQ(ComputeGlobalVerdict(SinPlane()).status, VerdictStatus::kControllableCertified);
}

GTEST_TEST(GlobalVerdict, AssumptionGatesNecessity) {
  SystemSpec s = Planar("1 + x2^2");
  s.assume_not_dense = false;
  EXPECT_EQ(ComputeGlobalVerdict(s).status, VerdictStatus::kInconclusive);
}

GTEST_TEST(GlobalVerdict, NotRegular) {
  SystemSpec s = MakeSystem("nonreg", {"x1", "x2"}, {{"0", "0"}}, {{"1", "0"}, {"0", "x1"}},
                            {{-2, 2}, {-2, 2}});
  EXPECT_EQ(ComputeGlobalVerdict(s).status, VerdictStatus::kNotRegular);
}

GTEST_TEST(GlobalVerdict, InvariantDeduplicatesLeaves) {
  SystemSpec s = Planar("x2");
  s.invariants = {ParseExpression("x1", s.var_names)};
  const auto g = ComputeGlobalVerdict(s);
  EXPECT_EQ(g.points.size(), 11u);
  EXPECT_EQ(g.status, VerdictStatus::kControllableCertified);
}

// ---------------------------------------------------------------------------

GTEST_TEST(SwitchedCondition, SymmetricFamilyHolds) {
  Rng rng(38);
  const SystemSpec s = Unicycle("2 + cos(x3)");
  const auto f = s.DriftFields().front();
  for (int i = 0; i < 5; ++i) {
    const Point x = RandomPoint(rng, 3, 1.0);
    EXPECT_TRUE(SwitchedCondition(s, {f, -f}, x, i).condition_holds);
  }
}

GTEST_TEST(SwitchedCondition, ConstantDriftFails) {
  const SystemSpec s = Unicycle("cos(x3)");
  const auto v = SwitchedCondition(s, {F({"1", "0", "0"})}, V({0, 0, 0}), 3);
  EXPECT_FALSE(v.condition_holds);
  EXPECT_NEAR((v.quotient_basis * v.covector - V({1, 0, 0})).norm(), 0.0, 1e-12);
  EXPECT_THROW(SwitchedCondition(s, {}, V({0, 0, 0}), 3), Error);
}

GTEST_TEST(SwitchedCondition, SingleDriftMatchesCheck) {
  for (const std::string d : {"cos(x3)", "2 + cos(x3)"}) {
    const SystemSpec s = Unicycle(d);
    const auto ctx = PrepareAnalysis(s);
    for (const Point& x : {V({0, 0, 0}), V({1, -1, 0.5})}) {
      const auto a = CheckCondition(ctx, x, 21);
      const auto b = SwitchedCondition(s, s.DriftFields(), x, 21);
      EXPECT_EQ(a.condition_holds, b.condition_holds);
      EXPECT_EQ(a.samples_used, b.samples_used);
      EXPECT_EQ(a.vectors_collected, b.vectors_collected);
      EXPECT_EQ(a.covector, b.covector);
      EXPECT_EQ(a.quotient_basis, b.quotient_basis);
    }
  }
}

// ---------------------------------------------------------------------------

GTEST_TEST(SupportingDistribution, ShiftedUnicycleConcludes) {
  SystemSpec s = Unicycle("2 + cos(x3)");
  s.budgets.leaf_budget = 60;
  const auto ctx = PrepareAnalysis(s);
  const auto r = VerifySupportingDistribution(ctx, {F({"0", "1", "0"})}, 3, 1e-8, 1);
  EXPECT_TRUE(r.complement);
  EXPECT_TRUE(r.invariant);
  EXPECT_TRUE(r.half_space);
  EXPECT_TRUE(r.drift_outside);
  EXPECT_TRUE(r.concludes_not_controllable);
  EXPECT_NE(r.conclusion.find("not globally controllable"), std::string::npos);
}

GTEST_TEST(SupportingDistribution, WrongSize) {
  const auto ctx = PrepareAnalysis(Unicycle("2 + cos(x3)"));
  EXPECT_THROW(VerifySupportingDistribution(ctx, {}, 3, 1e-8, 1), Error);
  EXPECT_THROW(
      VerifySupportingDistribution(ctx, {F({"0", "1", "0"}), F({"1", "0", "0"})}, 3, 1e-8, 1),
      Error);
  EXPECT_THROW(VerifySupportingDistribution(PrepareAnalysis(Planar("x2")), {}, 3, 1e-8, 1), Error);
}

GTEST_TEST(SupportingDistribution, NotInvariantRejected) {
  SystemSpec s = Unicycle("2 + cos(x3)");
  s.budgets.leaf_budget = 20;
  const auto ctx = PrepareAnalysis(s);
  // [g, S] = (0, 1, 0) leaves span{G, S} on the x3 = 0 plane.
  const auto r = VerifySupportingDistribution(ctx, {F({"0", "x3", "0"})}, 3, 1e-8, 1);
  EXPECT_FALSE(r.invariant);
  EXPECT_FALSE(r.concludes_not_controllable);
  EXPECT_NE(r.conclusion.find("candidate rejected"), std::string::npos);
  EXPECT_NE(r.conclusion.find("(b)"), std::string::npos);

  // A rotating candidate fails (b) alone.
  const auto rot = VerifySupportingDistribution(ctx, {F({"sin(x3)", "cos(x3)", "0"})}, 3, 1e-8, 1);
  EXPECT_TRUE(rot.complement);
  EXPECT_FALSE(rot.invariant);
  EXPECT_FALSE(rot.concludes_not_controllable);
}

// Property: with leaf-identifying invariants clause (c) is computed once per
// leaf and copied; the per-clause verdicts match the pointwise run.
GTEST_TEST(SupportingDistribution, LeafReuseMatchesPointwise) {
  SystemSpec s = Unicycle("2 + cos(x3)");
  s.budgets.leaf_budget = 20;
  SystemSpec with_leaves = s;
  with_leaves.invariants = {ParseExpression("x1", s.var_names),
                            ParseExpression("x2", s.var_names)};
  for (const auto& cand : {F({"0", "1", "0"}), F({"0", "x3", "0"})}) {
    const auto a = VerifySupportingDistribution(PrepareAnalysis(s), {cand}, 3, 1e-8, 1);
    const auto b = VerifySupportingDistribution(PrepareAnalysis(with_leaves), {cand}, 3, 1e-8, 1);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      EXPECT_EQ(a.points[i].complement, b.points[i].complement);
      EXPECT_EQ(a.points[i].invariant, b.points[i].invariant);
      EXPECT_EQ(a.points[i].half_space, b.points[i].half_space);
      EXPECT_EQ(a.points[i].side, b.points[i].side);
      EXPECT_EQ(a.points[i].drift_outside, b.points[i].drift_outside);
    }
  }
}

}  // namespace
}  // namespace geoctrl
