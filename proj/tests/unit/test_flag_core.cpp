#include "oracles.hpp"

#include <flagifs/flag_core.hpp>
#include <flagifs/rng.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace flagifs;

namespace {

Mat random_invertible(CounterRng& rng, int d)
{
    while (true) {
        Mat L = random_gaussian(rng, d, d);
        if (std::abs(L.determinant()) > 1e-2) return L;
    }
}

Flag random_flag(CounterRng& rng, int d) { return Flag::from_orthonormal(random_orthogonal(rng, d)); }

Mat rotation(double t)
{
    Mat R(2, 2);
    R << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    return R;
}

}  // namespace

TEST(FlagCore, CanonicalSignConventionMakesLargestEntryPositive)
{
    CounterRng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Flag F = random_flag(rng, 4);
        for (int j = 0; j < 4; ++j) {
            Eigen::Index arg = 0;
            F.frame().col(j).cwiseAbs().maxCoeff(&arg);
            EXPECT_GT(F.frame()(arg, j), 0.0);
        }
        EXPECT_LT((F.frame().transpose() * F.frame() - Mat::Identity(4, 4)).norm(), 1e-12);
    }
}

TEST(FlagCore, SoFrameIndexFollowsCanonicalOrder)
{
    for (int d = 1; d <= 4; ++d) EXPECT_EQ(so_frame_index(d), oracle::canonical_pairs(d));
    const std::vector<std::pair<int, int>> d3{{2, 0}, {1, 0}, {2, 1}};
    EXPECT_EQ(so_frame_index(3), d3);
    EXPECT_EQ(pair_count(4), 6);
}

TEST(FlagCore, QrOfIdentityAtCanonicalFlag)
{
    const QrStep s = qr_of(Mat::Identity(3, 3), Flag::canonical(3));
    EXPECT_LT((s.image.frame() - Mat::Identity(3, 3)).norm(), 1e-15);
    EXPECT_LT((s.r.entries - Mat::Identity(3, 3)).norm(), 1e-15);
}

TEST(FlagCore, QrOfDiagonalFixesCanonicalFlag)
{
    Mat L = Mat::Zero(3, 3);
    L.diagonal() << 2.0, 1.0, 0.5;
    const QrStep s = qr_of(L, Flag::canonical(3));
    EXPECT_LT((s.image.frame() - Mat::Identity(3, 3)).norm(), 1e-15);
    EXPECT_LT((s.r.entries - L).norm(), 1e-15);
}

TEST(FlagCore, QrOfMatchesGramSchmidtOracle)
{
    CounterRng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 2 + trial % 3;
        const Mat L = random_invertible(rng, d);
        const Flag F = random_flag(rng, d);
        const QrStep s = qr_of(L, F);
        Mat Q, R;
        oracle::mgs(L * F.frame(), Q, R);
        EXPECT_LT((s.r.entries - R).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((s.raw - Q).cwiseAbs().maxCoeff(), 1e-10);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < i; ++j) EXPECT_EQ(s.r.entries(i, j), 0.0);
        EXPECT_LT((s.raw * s.signs.asDiagonal() - s.image.frame()).norm(), 1e-14);
    }
}

TEST(FlagCore, QrOfRejectsSingularMatrix)
{
    Mat L = Mat::Zero(2, 2);
    L(0, 0) = 1.0;
    try {
        qr_of(L, Flag::canonical(2));
        FAIL() << "expected SingularMatrix";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SingularMatrix);
    }
}

TEST(FlagCore, FlagMapIdentityAndQuarterTurn)
{
    CounterRng rng(5);
    const Flag F = random_flag(rng, 3);
    EXPECT_LT((flag_map(Mat::Identity(3, 3), F).frame() - F.frame()).norm(), 1e-14);

    const Flag G = flag_map(rotation(std::numbers::pi / 2), Flag::canonical(2));
    EXPECT_NEAR(G.frame()(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(G.frame()(1, 0), 1.0, 1e-15);
}

TEST(FlagCore, FlagMapImageSpansLinearImage)
{
    CounterRng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + trial % 3;
        const Mat L = random_invertible(rng, d);
        const Flag F = random_flag(rng, d);
        const Flag G = flag_map(L, F);
        const Mat image = L * F.frame();
        for (int i = 1; i <= d; ++i) {
            // the projection of the image columns onto span(G_1..G_i) loses nothing
            const Mat P = G.frame().leftCols(i) * G.frame().leftCols(i).transpose();
            const Mat cols = image.leftCols(i);
            EXPECT_LT(((P * cols) - cols).norm() / cols.norm(), 1e-10);
        }
    }
}

TEST(FlagCore, DiagonalMapAttractsToCanonicalFlag)
{
    Mat L = Mat::Zero(3, 3);
    L.diagonal() << 2.0, 1.0, 0.5;
    CounterRng rng(21);
    Flag F = random_flag(rng, 3);
    for (int k = 0; k < 50; ++k) F = flag_map(L, F);
    EXPECT_LT(flag_distance(F, Flag::canonical(3)), 1e-8);
}

TEST(FlagCore, DerivativeOfIdentityIsIdentity)
{
    for (int d = 1; d <= 4; ++d) {
        const FlagDerivative T = derivative_matrix(Mat::Identity(d, d), Flag::canonical(d));
        EXPECT_LT((T.matrix - PairMat::Identity(pair_count(d), pair_count(d))).norm(), 1e-15);
    }
}

TEST(FlagCore, DerivativeOfDiagonalMatchesQuotientsAndFiniteDifferences)
{
    Mat L = Mat::Zero(3, 3);
    L.diagonal() << 2.0, 1.0, 0.5;
    const FlagDerivative T = derivative_matrix(L, Flag::canonical(3));
    PairMat expected = PairMat::Zero(3, 3);
    expected.diagonal() << 0.25, 0.5, 0.5;
    EXPECT_LT((T.matrix - expected).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::MatrixXd fd = oracle::flag_map_jacobian(L, Mat::Identity(3, 3));
    EXPECT_LT((Eigen::MatrixXd(T.matrix) - fd).cwiseAbs().maxCoeff(), 1e-6);
}

// The zero pattern follows from the entry formula: row (i,j) against column
// (k,l) needs k >= i and l <= j. Groups are ordered by decreasing i - j, so
// the pattern is lower triangular in that order and upper triangular in the
// reversed one.
TEST(FlagCore, DerivativeIsTriangularWithQuotientDiagonal)
{
    CounterRng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + trial % 3;
        const Mat L = random_invertible(rng, d);
        const Flag F = random_flag(rng, d);
        const FlagDerivative T = derivative_matrix(L, F);
        const QrStep s = qr_of(L, F);
        const auto pairs = so_frame_index(d);
        const int D = static_cast<int>(T.matrix.rows());
        for (int a = 0; a < D; ++a) {
            for (int b = a + 1; b < D; ++b) EXPECT_LE(std::abs(T.matrix(a, b)), 1e-9);
            for (int b = 0; b < D; ++b) {
                const auto [i, j] = pairs[static_cast<std::size_t>(a)];
                const auto [k, l] = pairs[static_cast<std::size_t>(b)];
                if (!(k >= i && l <= j)) EXPECT_EQ(T.matrix(a, b), 0.0);
            }
            const auto [i, j] = pairs[static_cast<std::size_t>(a)];
            EXPECT_NEAR(T.matrix(a, a), s.r.entries(i, i) / s.r.entries(j, j), 1e-9);
        }
        const Eigen::MatrixXd fd = oracle::flag_map_jacobian(L, F.frame());
        EXPECT_LT((Eigen::MatrixXd(T.matrix) - fd).cwiseAbs().maxCoeff(), 1e-5 * (1.0 + T.matrix.norm()));
    }
}

TEST(FlagCore, SubdeterminantIdentity)
{
    CounterRng rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        const int d = 1 + trial % 4;
        const Mat L = random_invertible(rng, d);
        const Flag F = random_flag(rng, d);
        const UpperTriangular R = qr_of(L, F).r;
        double prod = 1.0;
        for (int i = 1; i <= d; ++i) {
            prod *= R.entries(i - 1, i - 1);
            const double vol = oracle::gram_volume(L * F.frame(), i);
            EXPECT_LE(std::abs(prod - vol) / vol, 1e-10);
        }
    }
}

TEST(FlagCore, TriangularCocycleLaw)
{
    CounterRng rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + trial % 3;
        const Mat L1 = random_invertible(rng, d);
        const Mat L2 = random_invertible(rng, d);
        const Flag F = random_flag(rng, d);
        const QrStep s1 = qr_of(L1, F);
        const QrStep s2 = qr_of(L2, s1.image);
        const QrStep s12 = qr_of(L2 * L1, F);
        // L2 L1 frame(F) = raw2 R2 S R1 with S the sign change of F1, and
        // S R2 S R1 is the positive-diagonal version of R2 S R1
        const Mat S = s1.signs.asDiagonal();
        const Mat composed = S * s2.r.entries * S * s1.r.entries;
        EXPECT_LT((composed - s12.r.entries).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + s12.r.entries.norm()));
        for (int i = 0; i < d; ++i)
            EXPECT_NEAR(std::log(s12.r.entries(i, i)),
                        std::log(s2.r.entries(i, i)) + std::log(s1.r.entries(i, i)), 1e-10);
    }
}

TEST(FlagCore, DerivativeChainRule)
{
    CounterRng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + trial % 3;
        const Mat L1 = random_invertible(rng, d);
        const Mat L2 = random_invertible(rng, d);
        const Flag F = random_flag(rng, d);
        const QrStep s1 = qr_of(L1, F);
        const PairMat P = sign_conjugation(s1.signs);
        const PairMat chained = P * derivative_matrix(L2, s1.image).matrix * P * derivative_matrix(L1, F).matrix;
        const PairMat direct = derivative_matrix(L2 * L1, F).matrix;
        EXPECT_LT((chained - direct).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + direct.norm()));
    }
}

TEST(FlagCore, StableFlagExamples)
{
    Mat A = Mat::Zero(3, 3);
    A.diagonal() << 2.0, 1.0, 0.5;
    EXPECT_LT((stable_flag(A).frame() - Mat::Identity(3, 3)).norm(), 1e-14);

    Mat B = Mat::Zero(2, 2);
    B.diagonal() << 0.5, 2.0;
    const Flag S = stable_flag(B);
    EXPECT_NEAR(S.frame()(1, 0), 1.0, 1e-14);
    EXPECT_NEAR(S.frame()(0, 0), 0.0, 1e-14);
}

TEST(FlagCore, StableFlagIsIterationLimitAndFixedPoint)
{
    Mat D = Mat::Zero(3, 3);
    D.diagonal() << 2.0, 1.0, 0.5;
    CounterRng rng(71);
    for (int trial = 0; trial < 30; ++trial) {
        const Mat P = random_invertible(rng, 3);
        const Mat A = P * D * P.inverse();
        const Flag S = stable_flag(A);
        EXPECT_LT(flag_distance(flag_map(A, S), S), 1e-9);
        Flag F = random_flag(rng, 3);
        for (int k = 0; k < 200; ++k) F = flag_map(A, F);
        EXPECT_LT(flag_distance(F, S), 1e-7);
    }
}

TEST(FlagCore, StableFlagRejectsCollisionsAndComplexPairs)
{
    Mat A = Mat::Identity(2, 2);
    A(1, 1) = -1.0;
    try {
        stable_flag(A);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ModuliCollision);
    }
    try {
        stable_flag(2.0 * rotation(0.7));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ComplexPair);
    }
}

TEST(FlagCore, QrEigenIterateExamples)
{
    Mat A = Mat::Zero(2, 2);
    A.diagonal() << 3.0, 1.0;
    for (int it : {0, 1, 10}) {
        const Vec v = qr_eigen_iterate(A, it);
        EXPECT_DOUBLE_EQ(v(0), 3.0);
        EXPECT_DOUBLE_EQ(v(1), 1.0);
    }
    Mat T(2, 2);
    T << 2.0, 1.0, 0.0, 0.5;
    const Vec v = qr_eigen_iterate(T, 200);
    EXPECT_NEAR(v(0), 2.0, 1e-6);
    EXPECT_NEAR(v(1), 0.5, 1e-6);
}

TEST(FlagCore, QrEigenIterateMatchesRootFinder)
{
    CounterRng rng(81);
    for (int trial = 0; trial < 30; ++trial) {
        Mat D = Mat::Zero(3, 3);
        D.diagonal() << 3.0 * (rng.uniform() < 0.5 ? -1 : 1), 1.5 * (rng.uniform() < 0.5 ? -1 : 1),
            0.5 * (rng.uniform() < 0.5 ? -1 : 1);
        const Mat P = random_invertible(rng, 3);
        const Mat A = P * D * P.inverse();
        const Vec v = qr_eigen_iterate(A, 500);
        const auto roots = oracle::char_poly_roots3(A);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(v(i), roots[static_cast<std::size_t>(i)], 1e-6);
    }
}

TEST(FlagCore, OperationsAreBitwiseDeterministic)
{
    CounterRng rng(91);
    const Mat L = random_invertible(rng, 4);
    const Flag F = random_flag(rng, 4);
    const QrStep a = qr_of(L, F);
    const QrStep b = qr_of(L, F);
    EXPECT_TRUE(a.r.entries == b.r.entries);
    EXPECT_TRUE(a.image.frame() == b.image.frame());
    EXPECT_TRUE(derivative_matrix(L, F).matrix == derivative_matrix(L, F).matrix);
}
