#include "oracles.hpp"

#include <flagifs/config.hpp>
#include <flagifs/maneuver.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace flagifs;

namespace {

Mat diag2(double a, double b)
{
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

Mat scalar(double a)
{
    Mat m(1, 1);
    m(0, 0) = a;
    return m;
}

Ifs linear_d2()
{
    return ifs_from_document(load_document(std::string(FLAGIFS_CONFIG_DIR) + "/linear_d2.toml"), "/ifs");
}

Ifs diagonal_signs()
{
    std::vector<GeneratorMap> gens;
    for (double t1 : {1.0, -1.0})
        for (double t2 : {1.0, -1.0}) gens.push_back(GeneratorMap::linear(diag2(std::exp(t1), std::exp(t2))));
    return Ifs(gens);
}

// Log of the Gram-Schmidt diagonal of L applied to the flag.
Vec mgs_log_diag(const Mat& L, const Flag& F)
{
    Mat Q, R;
    oracle::mgs(L * F.frame(), Q, R);
    return R.diagonal().array().log();
}

Flag angle_flag(double t)
{
    Mat q(2, 2);
    q << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    return Flag::from_orthonormal(q);
}

// Margin of a generator set at one flag: min over sign vectors of the best
// generator's worst coordinate.
double margin_at(const Ifs& ifs, const Flag& F)
{
    const int d = ifs.dim();
    double worst = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
        double best = -std::numeric_limits<double>::infinity();
        for (int s = 0; s < ifs.alphabet(); ++s) {
            const Vec l = mgs_log_diag(ifs.generator(s).matrix(), F);
            double m = std::numeric_limits<double>::infinity();
            for (int i = 0; i < d; ++i) m = std::min(m, sign_of_mask(mask, i) * l(i));
            best = std::max(best, m);
        }
        worst = std::min(worst, best);
    }
    return worst;
}

struct Replay {
    std::vector<Vec> lambdas;
    std::vector<Vec> deviations;
    Vec average;
};

Replay replay_prescribe(const Ifs& ifs, const Word& w, const BundlePoint& start, const Vec& chi)
{
    Replay r;
    BundlePoint p = start;
    Vec sum = Vec::Zero(ifs.dim());
    r.deviations.push_back(Vec::Zero(ifs.dim()));
    for (std::size_t n = 0; n < w.size(); ++n) {
        const Vec l = mgs_log_diag(ifs.generator(w[n]).jacobian(p.base), p.flag);
        r.lambdas.push_back(l);
        sum += l;
        r.deviations.push_back(static_cast<double>(n + 1) * chi - sum);
        p = oracle::step(ifs, w[n], p);
    }
    r.average = sum / static_cast<double>(w.size());
    return r;
}

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::InvalidArgument;
}

}  // namespace

// The four maps diag(e^{+-1}, e^{+-1}) look maneuverable at the canonical
// flag, but at the 45 degree flag each of them has log-diagonal (a, -a) or
// (+-1, +-1) with a = log cosh(2) / 2, so the sign vector (-, +) has no
// witness there.
TEST(Maneuver, DiagonalSignMapsFailAtTheDiagonalFlag)
{
    const Ifs ifs = diagonal_signs();
    EXPECT_LT(margin_at(ifs, angle_flag(std::numbers::pi / 4.0)), 0.0);
    EXPECT_NEAR(margin_at(ifs, Flag::canonical(2)), 1.0, 1e-14);
    try {
        certify_maneuverability(ifs, {1, 64, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotManeuverable);
        EXPECT_NE(std::string(e.what()).find("-+"), std::string::npos) << e.what();
    }
}

TEST(Maneuver, CertificateMatchesDenseResampling)
{
    const Ifs ifs = linear_d2();
    const ManeuverCertificate cert = certify_maneuverability(ifs, {1, 256, 1});
    EXPECT_GT(cert.c, 0.0);
    EXPECT_LE(cert.c, cert.C);

    // Exact recomputation on the certificate's own flags.
    double own = std::numeric_limits<double>::infinity();
    for (const Flag& F : cert.flags) own = std::min(own, margin_at(ifs, F));
    EXPECT_NEAR(cert.c, own, 1e-12);

    // A 4096-angle sweep of the flag circle stays close to the mesh value.
    double dense = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 4096; ++k) dense = std::min(dense, margin_at(ifs, angle_flag(std::numbers::pi * k / 4096.0)));
    EXPECT_GT(dense, 0.0);
    EXPECT_LE(dense, cert.c + 1e-12);
    EXPECT_LT(cert.c - dense, 0.01);
    EXPECT_NEAR(dense, 0.11208780105, 1e-4);
}

TEST(Maneuver, WitnessesRealizeTheirSignVectors)
{
    const Ifs ifs = linear_d2();
    const ManeuverCertificate cert = certify_maneuverability(ifs, {1, 32, 1});
    for (std::size_t cell = 0; cell < cert.cell_count(); ++cell) {
        const Flag& F = cert.flags[cell % cert.flags.size()];
        for (unsigned mask = 0; mask < cert.mask_count(); ++mask) {
            const Vec l = mgs_log_diag(ifs.generator(cert.witness_for(cell, mask)).matrix(), F);
            for (int i = 0; i < 2; ++i) EXPECT_GE(sign_of_mask(mask, i) * l(i), cert.c - 1e-12);
        }
    }
}

TEST(Maneuver, IsometriesAndSingleGeneratorsAreNotManeuverable)
{
    Mat R(2, 2);
    R << std::cos(1.0), -std::sin(1.0), std::sin(1.0), std::cos(1.0);
    const Ifs rotations({GeneratorMap::linear(R), GeneratorMap::linear(R * R)});
    EXPECT_EQ(code_of([&] { certify_maneuverability(rotations, {1, 32, 1}); }), ErrorCode::NotManeuverable);
    const Ifs single({GeneratorMap::linear(diag2(2.0, 0.5))});
    EXPECT_EQ(code_of([&] { certify_maneuverability(single, {1, 32, 1}); }), ErrorCode::NotManeuverable);
}

TEST(Maneuver, MarginIsMonotoneUnderAddingGenerators)
{
    std::vector<GeneratorMap> gens = linear_d2().generators();
    Mat S(2, 2);
    S << 1.5, 0.4, -0.3, 0.6;
    gens.push_back(GeneratorMap::linear(S));
    gens.push_back(GeneratorMap::linear(diag2(0.4, 2.5)));
    const Ifs bigger(gens);
    const ManeuverMesh mesh{1, 48, 3};
    const double c6 = certify_maneuverability(bigger, mesh, {0, 1, 2, 3, 4, 5}).c;
    const double c7 = certify_maneuverability(bigger, mesh, {0, 1, 2, 3, 4, 5, 6}).c;
    const double c8 = certify_maneuverability(bigger, mesh).c;
    EXPECT_LE(c6, c7);
    EXPECT_LE(c7, c8);
}

TEST(Maneuver, PrescribeZeroTargetReplays)
{
    const Ifs ifs = linear_d2();
    const ManeuverCertificate cert = certify_maneuverability(ifs, {1, 256, 1});
    const Vec chi = Vec::Zero(2);
    const double eta = 0.05;
    const BundlePoint start{Vec(0), angle_flag(0.3)};
    const PrescribeTrace t = prescribe_word(ifs, cert, start, chi, eta);
    EXPECT_EQ(t.q, static_cast<int>(std::ceil(ifs.C() / eta)));
    ASSERT_EQ(t.word.size(), static_cast<std::size_t>(t.q));
    const Replay r = replay_prescribe(ifs, t.word, start, chi);
    ASSERT_EQ(t.deviations.size(), r.deviations.size());
    for (std::size_t n = 0; n < r.deviations.size(); ++n) {
        EXPECT_LT((t.deviations[n] - r.deviations[n]).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE(r.deviations[n].cwiseAbs().maxCoeff(), ifs.C() + 1e-12);
    }
    EXPECT_LT((r.average - chi).cwiseAbs().maxCoeff(), eta);
}

TEST(Maneuver, PrescribeOneDimensionalCount)
{
    const Ifs ifs({GeneratorMap::linear(scalar(std::numbers::e)), GeneratorMap::linear(scalar(1.0 / std::numbers::e))});
    const ManeuverCertificate cert = certify_maneuverability(ifs, {1, 1, 1});
    EXPECT_NEAR(cert.c, 1.0, 1e-14);
    EXPECT_NEAR(ifs.C(), 1.0, 1e-14);
    Vec chi(1);
    chi(0) = 0.5;
    const PrescribeTrace t = prescribe_word(ifs, cert, {Vec(0), Flag::canonical(1)}, chi, 0.1);
    EXPECT_EQ(t.q, 10);
    const long plus = std::count(t.word.begin(), t.word.end(), 0);
    EXPECT_TRUE(plus == 7 || plus == 8) << format_word(t.word);
    EXPECT_LT(std::abs(t.average(0) - 0.5), 0.1 + 1e-12);
}

TEST(Maneuver, PrescribeAtTheMarginStaysInsideTheBound)
{
    const Ifs ifs = linear_d2();
    const ManeuverCertificate cert = certify_maneuverability(ifs, {1, 256, 1});
    Vec chi(2);
    chi << cert.c, cert.c;
    const BundlePoint start{Vec(0), Flag::canonical(2)};
    const PrescribeTrace t = prescribe_word(ifs, cert, start, chi, 0.1);
    const Replay r = replay_prescribe(ifs, t.word, start, chi);
    for (const Vec& dev : r.deviations) EXPECT_LE(dev.cwiseAbs().maxCoeff(), ifs.C() + 1e-12);
    EXPECT_LT((r.average - chi).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Maneuver, PrescribeRejectsTargetsBeyondTheMargin)
{
    const Ifs ifs = linear_d2();
    const ManeuverCertificate cert = certify_maneuverability(ifs, {1, 64, 1});
    Vec chi(2);
    chi << cert.c * 1.5, 0.0;
    EXPECT_EQ(code_of([&] { prescribe_word(ifs, cert, {Vec(0), Flag::canonical(2)}, chi, 0.1); }),
              ErrorCode::InvalidArgument);
}

// With generators of log-derivative +1 and -0.3 the literal rule picks +1 at
// the first step (sign of zero is +1) and lands at deviation -1.25, outside
// [-C, C]. The look-ahead rule keeps the bound.
TEST(Maneuver, LiteralSignRuleCanBreakThePrefixBound)
{
    const Ifs ifs({GeneratorMap::linear(scalar(std::exp(1.0))), GeneratorMap::linear(scalar(std::exp(-0.3)))});
    const ManeuverCertificate cert = certify_maneuverability(ifs, {1, 1, 1});
    EXPECT_NEAR(cert.c, 0.3, 1e-14);
    Vec chi(1);
    chi(0) = -0.25;
    const BundlePoint start{Vec(0), Flag::canonical(1)};
    const PrescribeTrace literal = prescribe_word(ifs, cert, start, chi, 0.1, SignRule::Deviation);
    double worst = 0.0;
    for (const Vec& dev : literal.deviations) worst = std::max(worst, dev.cwiseAbs().maxCoeff());
    EXPECT_GT(worst, ifs.C());
    EXPECT_NEAR(literal.deviations[1](0), -1.25, 1e-14);

    const PrescribeTrace ahead = prescribe_word(ifs, cert, start, chi, 0.1, SignRule::LookAhead);
    for (const Vec& dev : ahead.deviations) EXPECT_LE(dev.cwiseAbs().maxCoeff(), ifs.C() + 1e-12);
}

class ZeroOrbitTest : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        const Document doc = load_document(std::string(FLAGIFS_CONFIG_DIR) + "/bimaneuverable_d2.toml");
        ifs_ = new Ifs(ifs_from_document(doc, "/ifs"));
        const ManeuverMesh mesh{1, 256, 1};
        first_ = new ManeuverCertificate(certify_maneuverability(*ifs_, mesh, {0, 1, 2, 3, 4, 5}));
        second_ = new ManeuverCertificate(certify_maneuverability(*ifs_, mesh, {6, 7, 8, 9, 10, 11}));
    }
    static void TearDownTestSuite()
    {
        delete ifs_;
        delete first_;
        delete second_;
    }
    static Ifs* ifs_;
    static ManeuverCertificate* first_;
    static ManeuverCertificate* second_;
};

Ifs* ZeroOrbitTest::ifs_ = nullptr;
ManeuverCertificate* ZeroOrbitTest::first_ = nullptr;
ManeuverCertificate* ZeroOrbitTest::second_ = nullptr;

TEST_F(ZeroOrbitTest, SingleStepUsesTheRequestedHalf)
{
    for (int bit : {0, 1}) {
        const ZeroOrbit z = zero_exponent_orbit(*ifs_, *first_, *second_, {bit}, {Vec(0), Flag::canonical(2)});
        ASSERT_EQ(z.word.size(), 1u);
        EXPECT_EQ(z.word[0] >= 6 ? 1 : 0, bit);
        EXPECT_LE(z.max_running.maxCoeff(), ifs_->C() + 1e-12);
    }
}

TEST_F(ZeroOrbitTest, ReplayBoundsAndCoding)
{
    const std::size_t n = 20000;
    CounterRng rng(77);
    std::vector<int> theta(n);
    for (auto& b : theta) b = static_cast<int>(rng.below(2));
    const BundlePoint start{Vec(0), angle_flag(1.1)};
    const ZeroOrbit z = zero_exponent_orbit(*ifs_, *first_, *second_, theta, start);
    EXPECT_EQ(theta_of(z.word, ifs_->alphabet()), theta);

    // replay with the Gram-Schmidt oracle
    const double C = ifs_->C();
    BundlePoint p = start;
    Vec running = Vec::Zero(2);
    Vec lo = Vec::Zero(2), hi = Vec::Zero(2);
    double max_from_zero = 0.0, max_window = 0.0;
    for (int s : z.word) {
        running += mgs_log_diag(ifs_->generator(s).matrix(), p.flag);
        p = oracle::step(*ifs_, s, p);
        max_from_zero = std::max(max_from_zero, running.cwiseAbs().maxCoeff());
        // the largest window sum ending here is running minus the extreme earlier prefix
        max_window = std::max({max_window, (running - lo).maxCoeff(), (hi - running).maxCoeff()});
        lo = lo.cwiseMin(running);
        hi = hi.cwiseMax(running);
    }
    EXPECT_LE(max_from_zero, 2.0 * C);
    EXPECT_LE(max_window, 4.0 * C);
    EXPECT_LT((running - z.final_sum).cwiseAbs().maxCoeff(), 1e-8);

    SkewPoint sp;
    sp.base = Vec(0);
    sp.flag = start.flag;
    WordSource src(z.word, false);
    const FurstenbergRun run = furstenberg_estimate(*ifs_, &src, sp, n);
    EXPECT_LE(run.estimate.values.norm(), 2.0 * C * std::sqrt(2.0) / static_cast<double>(n));
}

TEST(Maneuver, BlockCoverageExamples)
{
    EXPECT_TRUE(entropy_block_coverage({{0, 1}}, 1).complete());
    EXPECT_EQ(entropy_block_coverage({{0, 0, 0}}, 1).seen, 1u);

    std::vector<std::vector<int>> all;
    for (int b = 0; b < 256; ++b) {
        std::vector<int> block;
        for (int i = 7; i >= 0; --i) block.push_back((b >> i) & 1);
        all.push_back(block);
    }
    const BlockCoverage full = entropy_block_coverage(all, 8);
    EXPECT_EQ(full.seen, 256u);
    EXPECT_EQ(full.total, 256u);
    EXPECT_TRUE(full.complete());
}

TEST(Maneuver, BlockCoverageMatchesCensus)
{
    CounterRng rng(99);
    std::vector<std::vector<int>> codings(100, std::vector<int>(64));
    std::set<std::vector<int>> census;
    for (auto& c : codings) {
        for (auto& b : c) b = static_cast<int>(rng.below(2));
        for (std::size_t i = 0; i + 8 <= c.size(); ++i) census.insert(std::vector<int>(c.begin() + i, c.begin() + i + 8));
    }
    const BlockCoverage cov = entropy_block_coverage(codings, 8);
    EXPECT_EQ(cov.seen, census.size());
    EXPECT_EQ(cov.total, 256u);
}
