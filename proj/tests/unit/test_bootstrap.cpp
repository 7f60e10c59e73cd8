#include "oracles.hpp"

#include <flagifs/bootstrap.hpp>
#include <flagifs/config.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace flagifs;

namespace {

Ifs load(const std::string& name)
{
    return ifs_from_document(load_document(std::string(FLAGIFS_CONFIG_DIR) + "/" + name), "/ifs");
}

const Ifs& linear_d2()
{
    static const Ifs ifs = load("linear_d2.toml");
    return ifs;
}

const ManeuverCertificate& linear_cert()
{
    static const ManeuverCertificate cert = certify_maneuverability(linear_d2(), {1, 256, 7});
    return cert;
}

const PeriodicOrbitRecord& seed_record()
{
    static const PeriodicOrbitRecord rec = lyapunov_vector_of_periodic(linear_d2(), {0}, true);
    return rec;
}

double brute(const Ifs& ifs, const Word& wf, const BundlePoint& sf, const Word& wl, const BundlePoint& sl, double eps)
{
    return oracle::shadow_brute_force(wf, oracle::orbit(ifs, wf, sf), wl, oracle::orbit(ifs, wl, sl), eps, oracle::skew_dist);
}

Word random_word(CounterRng& rng, int ell, long len)
{
    Word w(static_cast<std::size_t>(len));
    for (auto& s : w) s = static_cast<int>(rng.below(static_cast<std::uint64_t>(ell)));
    return w;
}

Word repeat(const Word& w, long n)
{
    Word out;
    for (long i = 0; i < n; ++i) out.insert(out.end(), w.begin(), w.end());
    return out;
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

TEST(Shadow, OrbitShadowsItself)
{
    const Ifs& ifs = linear_d2();
    const OrbitTrace t(ifs, {0, 5, 3, 1}, {Vec(), Flag::canonical(2)});
    const ShadowReport r = shadow_proportion(t, t, 0.1);
    EXPECT_EQ(r.proportion, 1.0);
    EXPECT_EQ(r.kappa, 0.0);
    EXPECT_EQ(r.shadowing, 4u);
}

TEST(Shadow, DisjointSymbolsNeverShadow)
{
    const Ifs& ifs = linear_d2();
    const BundlePoint p{Vec(), Flag::canonical(2)};
    const ShadowReport r = shadow_proportion(OrbitTrace(ifs, {1, 1, 2}, p), OrbitTrace(ifs, {0}, p), 0.5);
    EXPECT_EQ(r.proportion, 0.0);
    EXPECT_EQ(r.kappa, 1.0);
}

TEST(Shadow, MatchesDefinitionOnRandomPairs)
{
    const Ifs circle = load("circle.toml");
    CounterRng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const bool torus = trial % 2 == 0;
        const Ifs& ifs = torus ? circle : linear_d2();
        const int ell = ifs.alphabet();
        // a short root repeated gives orbits with real shadowing; plain random
        // words exercise the negative answers
        const Word root = random_word(rng, ell, 1 + static_cast<long>(rng.below(4)));
        const long lp = static_cast<long>(root.size()) * (1 + static_cast<long>(rng.below(6)));
        const Word leader = repeat(root, lp / static_cast<long>(root.size()));
        Word follower = repeat(root, 1 + static_cast<long>(rng.below(40)));
        const Word tail = random_word(rng, ell, static_cast<long>(rng.below(6)));
        follower.insert(follower.end(), tail.begin(), tail.end());
        if (trial % 5 == 4) follower = random_word(rng, ell, 1 + static_cast<long>(rng.below(200)));

        const BundlePoint sl = torus ? BundlePoint{Vec::Constant(1, rng.uniform()), Flag::canonical(1)}
                                     : BundlePoint{Vec(), Flag::from_orthonormal(random_orthogonal(rng, 2))};
        const BundlePoint sf = trial % 3 == 0 ? sl : torus ? BundlePoint{Vec::Constant(1, rng.uniform()), Flag::canonical(1)}
                                                            : BundlePoint{Vec(), Flag::from_orthonormal(random_orthogonal(rng, 2))};
        for (double eps : {0.3, 0.1, 0.02, 1.5}) {
            const ShadowReport r = shadow_proportion(OrbitTrace(ifs, follower, sf), OrbitTrace(ifs, leader, sl), eps);
            EXPECT_EQ(r.proportion, brute(ifs, follower, sf, leader, sl, eps))
                << "trial " << trial << " eps " << eps << " follower " << format_word(follower) << " leader "
                << format_word(leader);
            EXPECT_DOUBLE_EQ(r.kappa, 1.0 - r.proportion);
        }
    }
}

TEST(Shadow, PeriodicPrefixGivesTheProportionBound)
{
    const Ifs& ifs = linear_d2();
    const PeriodicOrbitRecord& z = seed_record();
    const BundlePoint start{z.x0, z.flag};
    const Word u{1, 2};  // diagonal letters keep the stable flag in place
    for (long n : {20L, 50L, 120L}) {
        Word follower = repeat(z.word, n);
        follower.insert(follower.end(), u.begin(), u.end());
        const double eps = 0.1;
        const ShadowReport r = shadow_proportion(OrbitTrace(ifs, follower, start), trace_of(ifs, z), eps);
        EXPECT_EQ(r.proportion, brute(ifs, follower, start, z.word, start, eps));
        const long p = z.period();
        const long n0 = r.symbolic_radius;
        ASSERT_EQ(n0, 3);
        const double bound = static_cast<double>(p * n - 2 * n0 - p) / static_cast<double>(p * n + 2);
        EXPECT_GE(r.proportion, bound) << "n = " << n;
    }
}

TEST(Shadow, RejectsMismatchedBundles)
{
    const Ifs circle = load("circle.toml");
    const OrbitTrace a(circle, {0}, {Vec::Constant(1, 0.2), Flag::canonical(1)});
    const OrbitTrace b(linear_d2(), {0}, {Vec(), Flag::canonical(2)});
    EXPECT_EQ(code_of([&] { shadow_proportion(a, b, 0.1); }), ErrorCode::DimensionMismatch);
}

TEST(EmpiricalMeasure, IdenticalOrbitsAreAtDistanceZero)
{
    const OrbitTrace t(linear_d2(), {0, 3, 5}, {Vec(), Flag::canonical(2)});
    EXPECT_EQ(empirical_measure_distance(t, t), 0.0);
}

TEST(EmpiricalMeasure, DisjointCylindersAreAtDistanceOne)
{
    const BundlePoint p{Vec(), Flag::canonical(2)};
    const OrbitTrace a(linear_d2(), {0}, p);
    const OrbitTrace b(linear_d2(), {1}, p);
    EXPECT_DOUBLE_EQ(empirical_measure_distance(a, b), 1.0);
    EXPECT_DOUBLE_EQ(empirical_measure_distance(a, b, {false, false, true}), 1.0);
}

TEST(Constants, TauIsProjective)
{
    CounterRng rng(99);
    for (int k = 0; k < 100; ++k) {
        Vec lam(3);
        lam(0) = -rng.uniform(0.05, 1.0);
        lam(1) = lam(0) - rng.uniform(0.05, 1.0);
        lam(2) = lam(1) - rng.uniform(0.05, 1.0);
        const double t = std::exp(rng.uniform(-4.0, 4.0));
        const double c = rng.uniform(0.01, 0.5);
        const double C = c + rng.uniform(0.5, 3.0);
        const Vec scaled = t * lam;
        EXPECT_NEAR(tau_of(scaled, c, C), tau_of(lam, c, C), 1e-15);
    }
}

TEST(Constants, SeedConstantsSatisfyTheirRanges)
{
    const PeriodicOrbitRecord& z = seed_record();
    const ImproveConstants k = improve_constants(linear_cert(), linear_d2().C(), z.lambda, 0.05);
    // by hand: lambda = (log 0.6, log 0.3), gamma = min(-log 0.6, log 2)
    EXPECT_NEAR(k.gamma, -std::log(0.6), 1e-12);
    EXPECT_NEAR(k.tau, 1.0 - (k.c / k.C) * k.gamma / std::abs(std::log(0.3)), 1e-12);
    EXPECT_GT(k.tau, 0.0);
    EXPECT_LT(k.tau, 1.0);
    EXPECT_GT(k.kappa0, 0.0);
    EXPECT_LT(k.kappa0, 0.5);
    EXPECT_GT(k.beta, 0.0);
    EXPECT_NEAR(k.chi(1), k.c, 1e-12);
    EXPECT_NEAR(k.chi(0), k.c * std::log(0.6) / std::log(0.3), 1e-12);
    EXPECT_EQ(k.q, static_cast<int>(std::ceil(k.C / 0.05)));
}

TEST(Improve, EmptyBudgetIsRefused)
{
    ImproveParams params;
    params.auto_budget = false;
    params.n = 0;
    params.m = 0;
    params.max_attempts = 1;
    const ErrorCode code = code_of([&] { improve_orbit(linear_d2(), linear_cert(), seed_record(), params); });
    EXPECT_TRUE(code == ErrorCode::ConeExit || code == ErrorCode::ContractionLost) << error_name(code);
}

TEST(Improve, RefusesSeedsOutsideTheCone)
{
    PeriodicOrbitRecord z = seed_record();
    z.lambda = Vec::Constant(2, 0.1);
    EXPECT_EQ(code_of([&] { improve_orbit(linear_d2(), linear_cert(), z, {}); }), ErrorCode::NotInCone);
}

TEST(Improve, OneStepMeetsItsContractAndReplays)
{
    const Ifs& ifs = linear_d2();
    const PeriodicOrbitRecord& z = seed_record();
    ImproveParams params;
    const ImproveResult r = improve_orbit(ifs, linear_cert(), z, params);
    ASSERT_TRUE(r.contracts_ok());

    const PeriodicOrbitRecord& nz = r.record;
    EXPECT_TRUE(in_cone(nz.lambda));
    EXPECT_LE(nz.lambda.norm() / z.lambda.norm(), r.constants.tau * params.slack);
    const double angle = std::acos(std::clamp(nz.lambda.dot(z.lambda) / (nz.lambda.norm() * z.lambda.norm()), -1.0, 1.0));
    EXPECT_LE(angle, params.theta);
    EXPECT_NEAR(angle, r.angle, 1e-12);
    EXPECT_GE(r.shadow.proportion, 1.0 - r.constants.kappa);
    EXPECT_TRUE(r.tour.dense);
    if (r.constants.gamma < z.lambda.norm()) EXPECT_TRUE(r.kappa_ok);
    // the replay below is only meaningful when rounding cannot be blown up
    // past the tolerance along the orbit
    ASSERT_LT(r.flag_expansion_log, 20.0);

    // exponents recomputed from the word and the stable flag, one step at a
    // time with Gram-Schmidt
    BundlePoint p{nz.x0, nz.flag};
    Vec logs = Vec::Zero(2);
    for (int s : nz.word) {
        Mat Q, R;
        oracle::mgs(ifs.generator(s).jacobian(p.base) * p.flag.frame(), Q, R);
        for (int i = 0; i < 2; ++i) logs(i) += std::log(std::abs(R(i, i)));
        p = oracle::step(ifs, s, p);
    }
    logs /= static_cast<double>(nz.word.size());
    std::sort(logs.data(), logs.data() + logs.size(), std::greater<>());
    EXPECT_NEAR(logs(0), nz.lambda(0), 1e-9);
    EXPECT_NEAR(logs(1), nz.lambda(1), 1e-9);
    EXPECT_LT(oracle::frame_dist(p.flag.frame(), nz.flag.frame()), 1e-8);
}

TEST(Bootstrap, ZeroStepsLogsOnlyTheSeed)
{
    const BootstrapLog log = run_bootstrap(linear_d2(), linear_cert(), seed_record(), {}, 0, {});
    ASSERT_EQ(log.steps.size(), 1u);
    EXPECT_TRUE(log.completed);
    EXPECT_EQ(log.steps[0].at("step").get<int>(), 0);
    EXPECT_NEAR(log.steps[0].at("lambda_norm").get<double>(), seed_record().lambda.norm(), 1e-15);
}

TEST(Bootstrap, ShortSchedulesAreRejected)
{
    const BootstrapSchedule sched{{0.2}, {0.1}, {0.3}};
    EXPECT_EQ(code_of([&] { run_bootstrap(linear_d2(), linear_cert(), seed_record(), sched, 2, {}); }),
              ErrorCode::InvalidArgument);
}
