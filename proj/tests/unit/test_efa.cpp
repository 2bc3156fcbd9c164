#include <cmath>

#include <Eigen/QR>
#include <gtest/gtest.h>

#include "phantom/efa.hpp"
#include "phantom/error.hpp"
#include "phantom/instrument.hpp"
#include "phantom/synth.hpp"
#include "testkit.hpp"

using namespace phantom;
using namespace phantom::efa;
using num::Index;

namespace {

Matrix random_orthogonal(Rng& rng, Index k) {
  const Matrix a = testkit::random_normal(rng, k, k);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

}  // namespace

TEST(Quartimin, HandComputed) {
  Matrix l(2, 2);
  l << 1, 1, 1, 0;
  Matrix g;
  EXPECT_DOUBLE_EQ(quartimin(l, &g), 1.0);
  EXPECT_DOUBLE_EQ(g(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(g(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(quartimin(num::block_loadings(3, 4, 0.7)), 0.0);
}

TEST(Quartimin, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix l = testkit::random_normal(rng, 8, 3);
    Matrix g;
    quartimin(l, &g);
    const Eigen::Map<const Eigen::VectorXd> flat(l.data(), l.size());
    const auto fd = testkit::central_gradient(
        [&](const Eigen::VectorXd& v) { return quartimin(Eigen::Map<const Matrix>(v.data(), 8, 3)); }, flat);
    EXPECT_LT(testkit::relative_error(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()), fd), 1e-7);
  }
}

TEST(Quartimin, TransformGradientMatchesFiniteDifferences) {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix a = testkit::random_normal(rng, 10, 3);
    Matrix t = testkit::random_normal(rng, 3, 3) + 2 * Matrix::Identity(3, 3);
    Matrix g;
    quartimin_of_transform(a, t, &g);
    const Eigen::Map<const Eigen::VectorXd> flat(t.data(), t.size());
    const auto fd = testkit::central_gradient(
        [&](const Eigen::VectorXd& v) {
          return quartimin_of_transform(a, Eigen::Map<const Matrix>(v.data(), 3, 3));
        },
        flat);
    EXPECT_LT(testkit::relative_error(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()), fd), 1e-6);
  }
}

TEST(Scree, KaiserCount) {
  const auto r = num::implied_correlation(num::block_loadings(3, 5, 0.7), num::SymMatrix::identity(3));
  const auto s = scree(r);
  EXPECT_EQ(s.kaiser_count, 3);
  EXPECT_EQ(s.eigenvalues.size(), 15u);
  EXPECT_NEAR(s.eigenvalues[0], 1 + 4 * 0.49, 1e-10);
  EXPECT_EQ(scree(num::SymMatrix::identity(4)).kaiser_count, 0);
}

TEST(Paf, RecoversOneFactorCommunalities) {
  Matrix l(6, 1);
  l << 0.8, 0.7, 0.6, 0.5, 0.75, 0.65;
  const auto r = num::implied_correlation(l, num::SymMatrix::identity(1));
  PafOptions opts;
  opts.tolerance = 1e-10;
  opts.max_iterations = 5000;
  const auto res = paf(r, 1, opts);
  EXPECT_TRUE(res.converged);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(res.loadings(i, 0), l(i, 0), 1e-4);
    EXPECT_NEAR(res.communalities(i), l(i, 0) * l(i, 0), 1e-4);
  }
  EXPECT_FALSE(res.heywood);
}

TEST(Paf, PreconditionsOnK) {
  const auto r = num::SymMatrix::identity(4);
  EXPECT_THROW(paf(r, 0, {}), PreconditionError);
  EXPECT_THROW(paf(r, 4, {}), PreconditionError);
}

TEST(Rotation, RecoversRotatedSimpleStructure) {
  Rng rng(31);
  const Matrix truth = num::block_loadings(3, 5, 0.7);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix q = random_orthogonal(rng, 3);
    const auto rot = rotate_oblique(truth * q);
    const auto c = congruence(rot.pattern, truth);
    ASSERT_EQ(c.matching.size(), 3u);
    for (const auto& m : c.matching) EXPECT_GT(m.coefficient, 0.999);
    EXPECT_LT(rot.criterion, 1e-6);
    EXPECT_LE(rot.criterion, rot.initial_criterion + 1e-12);
  }
}

TEST(Rotation, PhiAndStructureInvariants) {
  const auto r = num::implied_correlation(num::block_loadings(3, 4, 0.6), num::compound_symmetry(3, 0.3));
  const auto sol = run_efa(r, 3);
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(sol.phi(j, j), 1.0);
  EXPECT_LT((sol.structure - sol.pattern * sol.phi.matrix()).cwiseAbs().maxCoeff(), 1e-14);
  for (int j = 0; j < 3; ++j) EXPECT_GE(sol.pattern.col(j).sum(), 0.0);
  const Vector ss = sol.pattern.colwise().squaredNorm();
  EXPECT_GE(ss(0), ss(1));
  EXPECT_GE(ss(1), ss(2));
  // Oblique solution reproduces the reduced correlation matrix.
  const Matrix reproduced = sol.pattern * sol.phi.matrix() * sol.pattern.transpose();
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      if (i != j) EXPECT_NEAR(reproduced(i, j), r(i, j), 1e-3);
  // Generating factor correlations are recovered.
  EXPECT_NEAR(std::abs(sol.phi(0, 1)), 0.3, 0.01);
}

TEST(Rotation, DeterministicForSeed) {
  Rng rng(2);
  const Matrix a = testkit::random_normal(rng, 12, 3);
  const auto x = rotate_oblique(a);
  const auto y = rotate_oblique(a);
  EXPECT_EQ(x.pattern, y.pattern);
  EXPECT_EQ(x.start, y.start);
}

TEST(Congruence, SelfIsOneAndScaleInvariant) {
  Rng rng(5);
  const Matrix a = testkit::random_normal(rng, 10, 3);
  const auto c = congruence(a, a);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(c.coefficients(j, j), 1.0, 1e-12);
  EXPECT_NEAR(c.mean_matched_abs(), 1.0, 1e-12);
  Matrix scaled = a;
  scaled.col(1) *= 3.5;
  EXPECT_NEAR(congruence(a, scaled).coefficients(1, 1), 1.0, 1e-12);
  EXPECT_LE(c.coefficients.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
}

TEST(Congruence, PermutationRecoveredByMatching) {
  const Matrix t = num::block_loadings(3, 4, 0.7);
  Matrix p(12, 3);
  p.col(0) = t.col(2);
  p.col(1) = -t.col(0);
  p.col(2) = t.col(1);
  const auto c = congruence(p, t);
  ASSERT_EQ(c.matching.size(), 3u);
  EXPECT_EQ(c.matching[0].b, 2);
  EXPECT_EQ(c.matching[1].b, 0);
  EXPECT_NEAR(c.matching[1].coefficient, -1.0, 1e-12);
  EXPECT_EQ(c.matching[2].b, 1);
}

TEST(Congruence, ZeroColumnUndefined) {
  Matrix a = Matrix::Ones(4, 2);
  a.col(1).setZero();
  const auto c = congruence(a, Matrix::Ones(4, 1));
  EXPECT_TRUE(c.has_undefined);
  EXPECT_TRUE(std::isnan(c.coefficients(1, 0)));
  ASSERT_EQ(c.matching.size(), 1u);
  EXPECT_EQ(c.matching[0].a, 0);
}

TEST(FactorGraph, ThresholdAndIsolated) {
  FactorSolution s;
  s.structure = Matrix(3, 2);
  s.structure << 0.5, 0.1, -0.45, 0.39, 0.2, 0.3;
  const auto g = factor_graph(s, {"x", "y", "z"}, 0.4);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.edges[1].item, 1u);
  EXPECT_DOUBLE_EQ(g.edges[1].weight, -0.45);
  EXPECT_EQ(g.isolated, std::vector<std::string>{"z"});
}

TEST(Svg, GraphAndScreeRender) {
  const auto ins = inst::load_instrument(testkit::instrument_path("demo6.json"));
  const auto r = num::implied_correlation(theoretical_pattern(ins) * 0.7, num::SymMatrix::identity(2));
  const auto sol = run_efa(r, 2);
  const auto svg = factor_graph_svg(factor_graph(sol, ins.item_ids()), ins, "demo");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("e2_R"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const auto scree_plot = scree_svg(sol.eigenvalues, "demo");
  EXPECT_NE(scree_plot.find("<polyline"), std::string::npos);
}

TEST(TheoreticalPattern, BinaryAssignment) {
  const auto ins = inst::load_instrument(testkit::instrument_path("h60.json"));
  const Matrix p = theoretical_pattern(ins);
  EXPECT_EQ(p.rows(), 60);
  EXPECT_EQ(p.cols(), 6);
  EXPECT_DOUBLE_EQ(p.sum(), 60.0);
  EXPECT_TRUE((p.rowwise().sum().array() == 1.0).all());
  EXPECT_EQ(theoretical_graph(ins).edges.size(), 60u);
}
