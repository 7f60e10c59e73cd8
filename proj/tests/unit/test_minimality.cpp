#include "oracles.hpp"

#include <flagifs/config.hpp>
#include <flagifs/minimality.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace flagifs;

namespace {

Vec at(double x)
{
    Vec v(1);
    v(0) = x;
    return v;
}

Mat one()
{
    return Mat::Identity(1, 1);
}

BundlePoint circle_point(double x) { return {at(x), Flag::canonical(1)}; }

Ifs circle()
{
    return ifs_from_document(load_document(std::string(FLAGIFS_CONFIG_DIR) + "/circle.toml"), "/ifs");
}

// The circle system plus a quarter turn, for a three-letter alphabet.
Ifs circle3()
{
    std::vector<GeneratorMap> gens = circle().generators();
    gens.push_back(GeneratorMap::torus(one(), at(0.25), {}));
    return Ifs(gens);
}

Ifs rotations_only()
{
    return Ifs({GeneratorMap::torus(one(), at(0.618), {}), GeneratorMap::torus(one(), at(0.25), {})});
}

BundlePoint replay(const Ifs& ifs, const Word& w, BundlePoint p)
{
    for (int s : w) p = oracle::step(ifs, s, p);
    return p;
}

// First word in shortlex order, up to length kmax, that lands in the ball.
std::optional<Word> shortlex_search(const Ifs& ifs, const Ball& target, const BundlePoint& start, int kmax)
{
    const int ell = ifs.alphabet();
    for (int len = 0; len <= kmax; ++len) {
        Word w(static_cast<std::size_t>(len), 0);
        while (true) {
            if (oracle::bundle_dist(replay(ifs, w, start), target.center) < target.radius) return w;
            int i = len - 1;
            while (i >= 0 && w[static_cast<std::size_t>(i)] == ell - 1) w[static_cast<std::size_t>(i--)] = 0;
            if (i < 0) break;
            ++w[static_cast<std::size_t>(i)];
        }
    }
    return std::nullopt;
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

TEST(GoHome, StartInsideTargetNeedsNoWord)
{
    const Ifs ifs = circle();
    EXPECT_TRUE(go_home(ifs, {circle_point(0.25), 0.05}, circle_point(0.26), 8).empty());
}

TEST(GoHome, CircleWordReplaysIntoTarget)
{
    const Ifs ifs = circle();
    const Ball target{circle_point(0.25), 0.05};
    const Word w = go_home(ifs, target, circle_point(0.9), 16);
    ASSERT_FALSE(w.empty());
    EXPECT_LT(oracle::torus_dist(replay(ifs, w, circle_point(0.9)).base, at(0.25)), 0.05);
}

TEST(GoHome, IdentityNeverArrives)
{
    const Ifs ifs({GeneratorMap::torus(one(), at(0.0), {})});
    EXPECT_EQ(code_of([&] { go_home(ifs, {circle_point(0.5), 0.05}, circle_point(0.1), 6); }), ErrorCode::NotReached);
}

TEST(GoHome, ShortestInShortlexOrder)
{
    for (const Ifs& ifs : {circle(), circle3()}) {
        CounterRng rng(12);
        for (int trial = 0; trial < 20; ++trial) {
            const Ball target{circle_point(rng.uniform()), 0.03};
            const BundlePoint start = circle_point(rng.uniform());
            const int kmax = ifs.alphabet() == 2 ? 8 : 6;
            const std::optional<Word> expected = shortlex_search(ifs, target, start, kmax);
            if (!expected) {
                EXPECT_EQ(code_of([&] { go_home(ifs, target, start, kmax); }), ErrorCode::NotReached);
                continue;
            }
            EXPECT_EQ(go_home(ifs, target, start, kmax), *expected);
        }
    }
}

TEST(Tour, DeltaBeyondDiameterIsTriviallyDense)
{
    const Ifs ifs = circle();
    const double delta = skew_diameter(ifs) * 1.5;
    const Ball U{circle_point(0.25), 0.05};
    const TourReport r = tour_and_go_home(ifs, delta, U, circle_point(0.9), tour_depth(delta));
    EXPECT_TRUE(r.dense);
    EXPECT_TRUE(r.endpoint_in_target);
    EXPECT_EQ(r.word, go_home(ifs, U, circle_point(0.9), 12));
}

TEST(Tour, WitnessesReplayAndEndpointLandsInTarget)
{
    const Ifs ifs = circle();
    const double delta = 0.3;
    const int m = tour_depth(delta);
    EXPECT_EQ(m, 2);
    const Ball U{circle_point(0.25), 0.05};
    const BundlePoint start = circle_point(0.9);
    const TourReport r = tour_and_go_home(ifs, delta, U, start, m);
    EXPECT_TRUE(r.dense);
    EXPECT_FALSE(r.sampled);
    EXPECT_EQ(r.block_census, 32u);

    const BundlePoint end = replay(ifs, r.word, start);
    EXPECT_LT(oracle::bundle_dist(end, U.center), U.radius);
    EXPECT_TRUE(r.endpoint_in_target);

    std::vector<BundlePoint> orbit{start};
    for (int s : r.word) orbit.push_back(oracle::step(ifs, s, orbit.back()));
    const BundleMesh mesh = dense_mesh(ifs, delta / 2.0, 1);
    ASSERT_EQ(r.witnesses.size(), r.mesh_size * r.block_census);
    for (const MeshWitness& wit : r.witnesses) {
        ASSERT_GE(wit.orbit_index, m);
        ASSERT_LT(wit.orbit_index + m, static_cast<long>(r.word.size()));
        // the symbolic window lies inside the word, so every past completion
        // of the orbit sees the same block
        const Word window(r.word.begin() + (wit.orbit_index - m), r.word.begin() + (wit.orbit_index + m + 1));
        EXPECT_EQ(window, wit.block);
        const double dist = oracle::bundle_dist(orbit[static_cast<std::size_t>(wit.orbit_index)], mesh.point(wit.mesh_index));
        EXPECT_LE(dist, wit.distance + 1e-12);
        EXPECT_LT(mesh.spacing + std::max(dist, std::ldexp(1.0, -(m + 1))), delta + 1e-12);
    }
}

TEST(Tour, GroupTourCertifiesSampledBall)
{
    const Ifs ifs = circle();
    const double delta = 0.3;
    const Ball U{circle_point(0.25), 0.05};
    const Ball B{circle_point(0.9), 0.02};
    const GroupTourResult g = group_tour(ifs, delta, U, B);
    ASSERT_GT(g.rho, 0.0);
    EXPECT_LE(g.rho, B.radius);
    ASSERT_TRUE(g.tour.dense);
    EXPECT_LE(g.tour.delta_achieved, delta / 2.0);

    const int m = g.tour.depth;
    const BundleMesh mesh = dense_mesh(ifs, delta / 4.0, 1);
    std::vector<BundlePoint> center{B.center};
    for (int s : g.tour.word) center.push_back(oracle::step(ifs, s, center.back()));
    CounterRng rng(5);
    for (int k = 0; k < 100; ++k) {
        BundlePoint p = circle_point(B.center.base(0) + g.rho * rng.uniform(-1.0, 1.0) * 0.999);
        p.base(0) -= std::floor(p.base(0));
        std::vector<BundlePoint> orbit{p};
        for (int s : g.tour.word) orbit.push_back(oracle::step(ifs, s, orbit.back()));
        EXPECT_LT(oracle::bundle_dist(orbit.back(), U.center), U.radius);
        for (std::size_t t = 0; t < orbit.size(); ++t)
            ASSERT_LT(oracle::bundle_dist(orbit[t], center[t]), delta / 2.0) << "step " << t;
        // every mesh point is seen within delta by this orbit, through the
        // same symbolic window the center used
        for (const MeshWitness& wit : g.tour.witnesses) {
            const double dist =
                oracle::bundle_dist(orbit[static_cast<std::size_t>(wit.orbit_index)], mesh.point(wit.mesh_index));
            EXPECT_LT(mesh.spacing + std::max(dist, std::ldexp(1.0, -(m + 1))), delta);
        }
    }
}

TEST(Tour, PointBallReducesToPlainTour)
{
    const Ifs ifs = circle();
    const Ball U{circle_point(0.25), 0.05};
    const GroupTourResult g = group_tour(ifs, 0.3, U, {circle_point(0.9), 0.0});
    const TourReport plain = tour_and_go_home(ifs, 0.3, U, circle_point(0.9), tour_depth(0.3));
    EXPECT_EQ(g.tour.word, plain.word);
    EXPECT_EQ(g.rho, 0.0);
}

TEST(Criterion, CircleIsPositive)
{
    const Ifs ifs = circle();
    const CoverSpec cover = build_cover(ifs);
    ASSERT_FALSE(cover.elements.empty());
    EXPECT_GT(cover.lebesgue, 0.0);
    const MinimalityVerdict v = check_minimality_criterion(ifs, cover, 12);
    EXPECT_TRUE(v.positive()) << v.failing_clause;
    EXPECT_LT(v.alpha_max, 1.0);
}

TEST(Criterion, RotationsFailTheContractionClause)
{
    const Ifs ifs = rotations_only();
    const CoverSpec cover = build_cover(ifs);
    EXPECT_TRUE(cover.elements.empty());
    const MinimalityVerdict v = check_minimality_criterion(ifs, cover, 8);
    EXPECT_FALSE(v.positive());
    EXPECT_FALSE(v.contraction);
    EXPECT_EQ(v.failing_clause.rfind("contraction", 0), 0u) << v.failing_clause;
}

TEST(Criterion, IdentityFailsTheDensityClause)
{
    const Ifs ifs({GeneratorMap::torus(one(), at(0.0), {})});
    // a hand-made cover whose single element pretends to contract
    CoverSpec cover;
    cover.elements.push_back({{circle_point(0.5), 0.75}, {0}, 0.5});
    cover.lebesgue = 0.2;
    const MinimalityVerdict v = check_minimality_criterion(ifs, cover, 6);
    EXPECT_FALSE(v.density);
    ASSERT_TRUE(v.counterexample_start.has_value());
    ASSERT_TRUE(v.uncovered_point.has_value());
    EXPECT_GT(oracle::torus_dist(v.counterexample_start->base, v.uncovered_point->base), 0.0);
}

TEST(Criterion, LongerHorizonKeepsPositiveVerdict)
{
    const Ifs ifs = circle();
    const CoverSpec cover = build_cover(ifs);
    bool seen_positive = false;
    for (int horizon = 2; horizon <= 12; horizon += 2) {
        const bool positive = check_minimality_criterion(ifs, cover, horizon).positive();
        if (seen_positive) EXPECT_TRUE(positive) << "horizon " << horizon;
        seen_positive = seen_positive || positive;
    }
    EXPECT_TRUE(seen_positive);
}

TEST(Criterion, BallClaimOnSampledPairs)
{
    const Ifs ifs = circle();
    const CoverSpec cover = build_cover(ifs);
    CounterRng rng(8);
    int checked = 0;
    for (const CoverElement& e : cover.elements) {
        for (int k = 0; k < 100; ++k) {
            const double c = e.ball.center.base(0);
            const double off = e.ball.radius * rng.uniform(-1.0, 1.0) * 0.9;
            BundlePoint y = circle_point(c + off);
            y.base(0) -= std::floor(y.base(0));
            const double room = e.ball.radius - oracle::torus_dist(y.base, e.ball.center.base);
            const double r = room * rng.uniform(0.05, 0.95);
            const BundlePoint pre = preimage_word(ifs, e.h, y);
            EXPECT_LT(oracle::bundle_dist(replay(ifs, e.h, pre), y), 1e-10);
            for (int j = 0; j < 10; ++j) {
                BundlePoint z = circle_point(pre.base(0) + (r / e.alpha) * rng.uniform(-1.0, 1.0) * 0.999);
                z.base(0) -= std::floor(z.base(0));
                EXPECT_LT(oracle::bundle_dist(replay(ifs, e.h, z), y), r);
            }
            ++checked;
        }
    }
    EXPECT_GE(checked, 100);
}
