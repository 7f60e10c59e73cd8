#include "flagifs/minimality.hpp"

#include "flagifs/config.hpp"
#include "flagifs/maneuver.hpp"
#include "flagifs/parallel.hpp"
#include "flagifs/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <unordered_set>

namespace flagifs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec wrap01(Vec x)
{
    for (int i = 0; i < x.size(); ++i) x(i) -= std::floor(x(i));
    return x;
}

Vec wrapped_residual(Vec r)
{
    for (int i = 0; i < r.size(); ++i) r(i) -= std::round(r(i));
    return r;
}

// Preimage of y under a torus generator. The lift is a diffeomorphism of the
// torus, so Newton from the linear guess converges to the unique root.
Vec invert_torus(const GeneratorMap& g, const Vec& y)
{
    const Mat Ainv = g.matrix().inverse();
    Vec x = wrap01(Ainv * (y - g.translation()));
    for (int it = 0; it < 60; ++it) {
        const Vec r = wrapped_residual(g.apply_lifted(x) - y);
        if (r.cwiseAbs().maxCoeff() < 1e-15) break;
        x = wrap01(x - g.jacobian(x).partialPivLu().solve(r));
    }
    return x;
}

struct CellKey {
    std::array<std::int32_t, kMaxDim + kMaxDim * kMaxDim> v{};

    bool operator==(const CellKey& o) const { return v == o.v; }
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const
    {
        std::uint64_t h = 0x9E3779B97F4A7C15ull;
        for (auto e : k.v) h = splitmix64(h ^ static_cast<std::uint32_t>(e));
        return static_cast<std::size_t>(h);
    }
};

CellKey cell_of(const BundlePoint& p, double quantum)
{
    CellKey k;
    std::size_t n = 0;
    for (int i = 0; i < p.base.size(); ++i) k.v[n++] = static_cast<std::int32_t>(std::floor(p.base(i) / quantum));
    const Mat& f = p.flag.frame();
    for (int j = 0; j < f.cols(); ++j)
        for (int i = 0; i < f.rows(); ++i) k.v[n++] = static_cast<std::int32_t>(std::floor(f(i, j) / quantum));
    return k;
}

BundlePoint step_point(const Ifs& ifs, const BundlePoint& p, int s)
{
    const auto& g = ifs.generator(s);
    return {g.apply(p.base), flag_map(g.jacobian(p.base), p.flag)};
}

double flag_diameter(int d) { return d >= 2 ? std::sqrt(2.0 * d) : 0.0; }

double fiber_diameter(const Ifs& ifs)
{
    return std::max(ifs.mode() == Mode::Torus ? 0.5 : 0.0, flag_diameter(ifs.dim()));
}

// Cayley transform of a skew matrix: an orthogonal matrix close to I.
Mat cayley(const Mat& X)
{
    const Mat I = Mat::Identity(X.rows(), X.cols());
    return (I - 0.5 * X).partialPivLu().solve(I + 0.5 * X);
}

// Breadth-first orbit tree that prunes revisited quantized cells from the
// first level on. Calls visit(point) for every retained node, level by
// level, and stops early when visit returns true.
template <class Visit>
void explore_pruned(const Ifs& ifs, const BundlePoint& start, int horizon, double quantum, std::size_t budget,
                    Visit&& visit)
{
    std::unordered_set<CellKey, CellHash> seen;
    seen.insert(cell_of(start, quantum));
    if (visit(start)) return;
    std::vector<BundlePoint> frontier{start};
    std::size_t stored = 1;
    const int ell = ifs.alphabet();
    for (int k = 1; k <= horizon && !frontier.empty(); ++k) {
        std::vector<BundlePoint> next;
        for (const auto& p : frontier) {
            for (int s = 0; s < ell; ++s) {
                BundlePoint c = step_point(ifs, p, s);
                if (!seen.insert(cell_of(c, quantum)).second) continue;
                if (visit(c)) return;
                if (++stored > budget) return;
                next.push_back(std::move(c));
            }
        }
        frontier = std::move(next);
    }
}

}  // namespace

double skew_diameter(const Ifs& ifs) { return std::max(1.0, fiber_diameter(ifs)); }

BundlePoint apply_word(const Ifs& ifs, const Word& w, const BundlePoint& p)
{
    BundlePoint q = p;
    for (int s : w) q = step_point(ifs, q, s);
    return q;
}

BundlePoint preimage_word(const Ifs& ifs, const Word& w, const BundlePoint& p)
{
    BundlePoint q = p;
    for (auto it = w.rbegin(); it != w.rend(); ++it) {
        const auto& g = ifs.generator(*it);
        const Vec x = ifs.mode() == Mode::Torus ? invert_torus(g, q.base) : q.base;
        q.flag = flag_map(g.jacobian(x).inverse(), q.flag);
        q.base = x;
    }
    return q;
}

std::vector<BundlePoint> sample_ball(const Ifs& ifs, const Ball& ball, int count, std::uint64_t seed)
{
    std::vector<BundlePoint> out{ball.center};
    const int d = ifs.dim();
    const double r = ball.radius;
    CounterRng rng(seed, 0xBA11);
    while (static_cast<int>(out.size()) < count && r > 0.0) {
        BundlePoint p = ball.center;
        for (int i = 0; i < p.base.size(); ++i) {
            p.base(i) += rng.uniform(-r, r) * 0.999;
            p.base(i) -= std::floor(p.base(i));
        }
        if (d >= 2) {
            Mat X = Mat::Zero(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < i; ++j) {
                    X(i, j) = rng.normal();
                    X(j, i) = -X(i, j);
                }
            X *= rng.uniform() * r / std::max(X.norm(), 1e-300);
            for (int tries = 0; tries < 60; ++tries) {
                p.flag = Flag::from_orthonormal(ball.center.flag.frame() * cayley(X));
                if (flag_distance(p.flag, ball.center.flag) < r) break;
                X *= 0.5;
            }
        }
        if (ball.contains(p)) out.push_back(std::move(p));
    }
    return out;
}

BundleJacobian::BundleJacobian(const Ifs& ifs, const BundlePoint& start) : ifs_(&ifs), point_(start)
{
    const int d = ifs.dim();
    const int D = pair_count(d);
    base_ = ifs.mode() == Mode::Torus ? Mat(Mat::Identity(d, d)) : Mat(0, 0);
    flag_ = PairMat::Identity(D, D);
    signs_ = Vec::Ones(d);
}

void BundleJacobian::step(int symbol)
{
    const auto& g = ifs_->generator(symbol);
    const Mat J = g.jacobian(point_.base);
    const QrStep qs = qr_of(J, point_.flag);
    if (flag_.size() > 0) {
        PairMat T = derivative_of(qs).matrix;
        if (!first_) T = T * sign_conjugation(signs_);
        flag_ = T * flag_;
        const double n = flag_.norm();
        flag_ /= n;
        flag_log_ += std::log(n);
    }
    if (base_.size() > 0) {
        base_ = J * base_;
        const double n = base_.norm();
        base_ /= n;
        base_log_ += std::log(n);
    }
    signs_ = qs.signs;
    point_ = {g.apply(point_.base), qs.image};
    first_ = false;
}

double BundleJacobian::log_norm() const
{
    double out = -kInf;
    if (flag_.size() > 0) out = std::max(out, flag_log_ + std::log(flag_.norm()));
    if (base_.size() > 0) {
        // the surrogate metric takes a max over base and fibre coordinates
        out = std::max(out, base_log_ + std::log(base_.norm()));
        out += 0.5 * std::log(ifs_->dim() + 1.0);
    }
    return out;
}

Word go_home(const Ifs& ifs, const Ball& target, const BundlePoint& start, int kmax, const GoHomeOptions& opt)
{
    return go_home_to(ifs, [&](const BundlePoint& p) { return target.contains(p); }, target.radius / 4.0, start,
                      kmax, opt);
}

Word go_home_to(const Ifs& ifs, const BundlePredicate& target, double quantum, const BundlePoint& start, int kmax,
                const GoHomeOptions& opt)
{
    if (kmax < 1) fail(ErrorCode::InvalidArgument, "kmax must be at least 1");
    if (!(quantum > 0.0)) fail(ErrorCode::InvalidArgument, "pruning quantum must be positive");
    if (target(start)) return {};

    struct Node {
        std::size_t parent;
        int symbol;
    };
    const int ell = ifs.alphabet();
    std::vector<std::vector<Node>> levels{{Node{0, -1}}};
    std::vector<BundlePoint> frontier{start};
    std::unordered_set<CellKey, CellHash> seen;
    bool pruning = false;
    bool truncated = false;
    std::size_t stored = 1;

    for (int k = 1; k <= kmax && !frontier.empty(); ++k) {
        const std::size_t n = frontier.size() * static_cast<std::size_t>(ell);
        if (!pruning && n > opt.exact_level_cap) pruning = true;
        std::vector<BundlePoint> children(n);
        std::vector<char> hit(n, 0);
        parallel_for(frontier.size(), [&](std::size_t i) {
            for (int s = 0; s < ell; ++s) {
                const std::size_t idx = i * static_cast<std::size_t>(ell) + static_cast<std::size_t>(s);
                children[idx] = step_point(ifs, frontier[i], s);
                hit[idx] = target(children[idx]) ? 1 : 0;
            }
        });
        for (std::size_t idx = 0; idx < n; ++idx) {
            if (!hit[idx]) continue;
            Word w(static_cast<std::size_t>(k));
            w[static_cast<std::size_t>(k - 1)] = static_cast<int>(idx % static_cast<std::size_t>(ell));
            std::size_t parent = idx / static_cast<std::size_t>(ell);
            for (int lev = k - 1; lev >= 1; --lev) {
                const Node& node = levels[static_cast<std::size_t>(lev)][parent];
                w[static_cast<std::size_t>(lev - 1)] = node.symbol;
                parent = node.parent;
            }
            return w;
        }
        std::vector<Node> level;
        std::vector<BundlePoint> next;
        for (std::size_t idx = 0; idx < n; ++idx) {
            if (pruning && !seen.insert(cell_of(children[idx], quantum)).second) continue;
            if (stored >= opt.node_budget) {
                truncated = true;
                break;
            }
            level.push_back({idx / static_cast<std::size_t>(ell), static_cast<int>(idx % static_cast<std::size_t>(ell))});
            next.push_back(std::move(children[idx]));
            ++stored;
        }
        levels.push_back(std::move(level));
        frontier = std::move(next);
    }
    std::string why = "no word of length <= " + std::to_string(kmax) + " reaches the target";
    if (pruning) why += " (search pruned on quantized cells)";
    if (truncated) why += " (node budget exhausted)";
    fail(ErrorCode::NotReached, why);
}

std::size_t BundleMesh::nearest(const BundlePoint& p) const
{
    std::size_t base_idx = 0;
    if (p.base.size() > 0) {
        const int n = base_per_axis;
        std::size_t stride = 1;
        for (int i = 0; i < p.base.size(); ++i) {
            long k = std::lround(p.base(i) * n) % n;
            if (k < 0) k += n;
            base_idx += static_cast<std::size_t>(k) * stride;
            stride *= static_cast<std::size_t>(n);
        }
    }
    std::size_t flag_idx = 0;
    double best = kInf;
    for (std::size_t k = 0; k < flags.size(); ++k) {
        const double dist = flag_distance(flags[k], p.flag);
        if (dist < best) {
            best = dist;
            flag_idx = k;
        }
    }
    return base_idx * flags.size() + flag_idx;
}

BundleMesh dense_mesh(const Ifs& ifs, double spacing, std::uint64_t seed)
{
    if (!(spacing > 0.0)) fail(ErrorCode::InvalidArgument, "mesh spacing must be positive");
    BundleMesh mesh;
    mesh.spacing = spacing;
    const int d = ifs.dim();
    if (ifs.mode() == Mode::Torus) {
        const int n = std::max(1, static_cast<int>(std::ceil(1.0 / (2.0 * spacing))));
        mesh.base_per_axis = n;
        int total = 1;
        for (int i = 0; i < d; ++i) total *= n;
        for (int idx = 0; idx < total; ++idx) {
            Vec x(d);
            int rest = idx;
            for (int i = 0; i < d; ++i) {
                x(i) = static_cast<double>(rest % n) / n;
                rest /= n;
            }
            mesh.bases.push_back(x);
        }
    } else {
        mesh.bases.push_back(Vec::Zero(0));
    }
    if (d == 1) {
        mesh.flags = {Flag::canonical(1)};
    } else if (d == 2) {
        // neighbouring angles pi/n apart are 2 sqrt2 sin(pi/(4n)) from their midpoint
        int n = 1;
        if (spacing < 2.0) n = static_cast<int>(std::ceil(std::numbers::pi / (4.0 * std::asin(spacing / (2.0 * std::numbers::sqrt2)))));
        mesh.flags = flag_samples(2, n, seed);
    } else {
        const double want = std::pow(2.0 / spacing, pair_count(d));
        const int count = static_cast<int>(std::clamp(want, 1.0, 2048.0));
        mesh.flags = flag_samples(d, count, seed);
        mesh.sampled = true;
    }
    return mesh;
}

int tour_depth(double delta)
{
    if (!(delta > 0.0)) fail(ErrorCode::InvalidArgument, "density radius must be positive");
    int m = 0;
    while (std::ldexp(1.0, -m) > delta) ++m;
    return m;
}

void assess_density(const Ifs& ifs, const BundlePoint& start, const BundleMesh& mesh,
                    const std::vector<std::pair<std::size_t, Word>>& census, TourReport& report)
{
    const Word& w = report.word;
    const long L = static_cast<long>(w.size());
    const int m = report.depth;
    const double half = report.delta / 2.0;
    const double floor_sym = std::ldexp(1.0, -(m + 1));

    std::vector<BundlePoint> pts;
    pts.reserve(static_cast<std::size_t>(L) + 1);
    pts.push_back(start);
    for (int s : w) pts.push_back(step_point(ifs, pts.back(), s));

    std::map<Word, std::vector<long>> index;
    for (long t = m; t + m < L; ++t) index[Word(w.begin() + (t - m), w.begin() + (t + m + 1))].push_back(t);

    report.witnesses.assign(census.size(), {});
    parallel_for(census.size(), [&](std::size_t k) {
        const auto& [yi, block] = census[k];
        const BundlePoint y = mesh.point(yi);
        MeshWitness wit{yi, block, -1, kInf};
        if (auto it = index.find(block); it != index.end()) {
            for (long t : it->second) {
                const double dist = std::max(floor_sym, bundle_distance(pts[static_cast<std::size_t>(t)], y));
                if (dist < wit.distance) {
                    wit.distance = dist;
                    wit.orbit_index = t;
                }
                if (wit.distance < half) break;
            }
        }
        if (!(wit.distance < half)) {
            for (long t = m; t + m < L; ++t) {
                double sym = floor_sym;
                for (int r = 0; r <= m; ++r) {
                    const bool agree = w[static_cast<std::size_t>(t + r)] == block[static_cast<std::size_t>(m + r)] &&
                                       w[static_cast<std::size_t>(t - r)] == block[static_cast<std::size_t>(m - r)];
                    if (!agree) {
                        sym = std::ldexp(1.0, -r);
                        break;
                    }
                }
                const double dist = std::max(sym, bundle_distance(pts[static_cast<std::size_t>(t)], y));
                if (dist < wit.distance) {
                    wit.distance = dist;
                    wit.orbit_index = t;
                }
            }
        }
        report.witnesses[k] = std::move(wit);
    });

    double worst = 0.0;
    for (const auto& wit : report.witnesses) worst = std::max(worst, wit.distance);
    report.delta_achieved = mesh.spacing + worst;
    report.dense = !census.empty() && report.delta_achieved <= report.delta;
    report.end = pts.back();
}

TourReport tour_and_go_home(const Ifs& ifs, double delta, const Ball& U, const BundlePoint& start, int depth,
                            const TourOptions& opt)
{
    if (!(delta > 0.0)) fail(ErrorCode::InvalidArgument, "density radius must be positive");
    if (depth < 0 || std::ldexp(1.0, -depth) > delta)
        fail(ErrorCode::InvalidArgument, "block depth m must satisfy 2^-m <= delta");

    TourReport rep;
    rep.delta = delta;
    rep.depth = depth;
    if (delta > skew_diameter(ifs)) {
        rep.word = go_home(ifs, U, start, opt.kmax, opt.go_home);
        rep.end = apply_word(ifs, rep.word, start);
        rep.endpoint_in_target = U.contains(rep.end);
        rep.delta_achieved = skew_diameter(ifs);
        rep.dense = true;
        return rep;
    }

    const BundleMesh mesh = dense_mesh(ifs, delta / 2.0, opt.seed);
    rep.mesh_size = mesh.size();
    rep.sampled = mesh.sampled;

    const int ell = ifs.alphabet();
    const int len = 2 * depth + 1;
    CounterRng rng(opt.seed, 0x70u);
    std::vector<Word> blocks;
    const double full = std::pow(static_cast<double>(ell), len);
    if (full <= static_cast<double>(opt.block_cap)) {
        const auto total = static_cast<std::size_t>(full);
        for (std::size_t code = 0; code < total; ++code) {
            Word b(static_cast<std::size_t>(len));
            std::size_t rest = code;
            for (int i = len - 1; i >= 0; --i) {
                b[static_cast<std::size_t>(i)] = static_cast<int>(rest % static_cast<std::size_t>(ell));
                rest /= static_cast<std::size_t>(ell);
            }
            blocks.push_back(std::move(b));
        }
    } else {
        std::set<Word> chosen;
        while (chosen.size() < opt.block_cap) {
            Word b(static_cast<std::size_t>(len));
            for (auto& s : b) s = static_cast<int>(rng.below(static_cast<std::uint64_t>(ell)));
            chosen.insert(std::move(b));
        }
        blocks.assign(chosen.begin(), chosen.end());
        rep.sampled = true;
    }
    rep.block_census = blocks.size();

    std::vector<std::pair<std::size_t, Word>> census;
    const std::size_t pairs = blocks.size() * mesh.size();
    if (opt.pair_cap > 0 && pairs > opt.pair_cap) {
        std::set<std::size_t> picks;
        while (picks.size() < opt.pair_cap) picks.insert(static_cast<std::size_t>(rng.below(pairs)));
        for (std::size_t k : picks) census.emplace_back(k % mesh.size(), blocks[k / mesh.size()]);
        rep.sampled = true;
    } else {
        for (const auto& b : blocks)
            for (std::size_t y = 0; y < mesh.size(); ++y) census.emplace_back(y, b);
    }

    BundlePoint cur = start;
    for (const auto& [yi, block] : census) {
        const Word minus(block.begin(), block.begin() + depth);
        const Ball By{mesh.point(yi), delta / 2.0};
        const Word lead = go_home_to(
            ifs, [&](const BundlePoint& p) { return By.contains(apply_word(ifs, minus, p)); }, delta / 4.0, cur,
            opt.kmax, opt.go_home);
        rep.word.insert(rep.word.end(), lead.begin(), lead.end());
        rep.word.insert(rep.word.end(), block.begin(), block.end());
        cur = apply_word(ifs, block, apply_word(ifs, lead, cur));
    }
    const Word tail = go_home(ifs, U, cur, opt.kmax, opt.go_home);
    rep.word.insert(rep.word.end(), tail.begin(), tail.end());

    assess_density(ifs, start, mesh, census, rep);
    rep.endpoint_in_target = U.contains(rep.end);
    return rep;
}

GroupTourResult group_tour(const Ifs& ifs, double delta, const Ball& U, const Ball& B, const TourOptions& opt,
                           int samples)
{
    if (B.radius < 0.0) fail(ErrorCode::InvalidArgument, "ball radius must be nonnegative");
    GroupTourResult res;
    // The center orbit gets half the density budget. Every orbit of B stays
    // within delta/2 of it, which spends the other half.
    const double center_delta = B.radius == 0.0 ? delta : delta / 2.0;
    res.tour = tour_and_go_home(ifs, center_delta, U, B.center, tour_depth(center_delta), opt);
    res.rho_requested = B.radius;
    if (B.radius == 0.0) return res;

    const double slack = U.radius - bundle_distance(res.tour.end, U.center);
    if (!(slack > 0.0)) fail(ErrorCode::NotReached, "tour endpoint is not inside the target ball");
    const Word& w = res.tour.word;
    double rho = B.radius;
    for (int round = 0;; ++round) {
        const auto pts = sample_ball(ifs, {B.center, rho}, samples, opt.seed + static_cast<std::uint64_t>(round));
        std::vector<double> run(pts.size()), last(pts.size());
        parallel_for(pts.size(), [&](std::size_t i) {
            BundleJacobian J(ifs, pts[i]);
            double mx = J.log_norm();
            for (int s : w) {
                J.step(s);
                mx = std::max(mx, J.log_norm());
            }
            run[i] = mx;
            last[i] = J.log_norm();
        });
        const double log_safety = std::log(res.safety);
        const double L = *std::max_element(run.begin(), run.end()) + log_safety;
        const double L_end = *std::max_element(last.begin(), last.end()) + log_safety;
        const double log_rho_max = std::min(std::log(delta / 2.0) - L, std::log(slack) - L_end);
        res.log_lipschitz = L;
        if (std::log(rho) <= log_rho_max) {
            res.rho = rho;
            return res;
        }
        rho = 0.99 * std::exp(log_rho_max);
        ++res.shrink_rounds;
        if (rho < 1e-8)
            fail(ErrorCode::RadiusCollapse, "certified radius fell below 1e-8 (log Lipschitz " + std::to_string(L) + ")");
    }
}

namespace {

constexpr int kCriterionSamples = 32;
constexpr int kPushLength = 8;
constexpr std::size_t kPushCap = 512;
constexpr std::size_t kPushTries = 8;
constexpr std::size_t kCoverElementCap = 256;

// Largest sampled Lipschitz factor of h at preimages of points of the ball.
double sampled_alpha(const Ifs& ifs, const Ball& ball, const Word& h, int count, std::uint64_t seed)
{
    const auto ys = sample_ball(ifs, ball, count, seed);
    std::vector<double> alpha(ys.size());
    parallel_for(ys.size(), [&](std::size_t k) {
        BundleJacobian J(ifs, preimage_word(ifs, h, ys[k]));
        for (int s : h) J.step(s);
        alpha[k] = std::exp(J.log_norm());
    });
    return *std::max_element(alpha.begin(), alpha.end());
}

}  // namespace

CoverSpec build_cover(const Ifs& ifs, std::uint64_t seed)
{
    const int ell = ifs.alphabet();
    std::vector<Word> words;
    for (int a = 0; a < ell; ++a) words.push_back({a});
    for (int a = 0; a < ell; ++a)
        for (int b = 0; b < ell; ++b)
            if (a != b) words.push_back({a, b});

    CoverSpec cover;
    for (const Word& h : words) {
        PeriodicOrbitRecord rec;
        try {
            rec = lyapunov_vector_of_periodic(ifs, h);
        } catch (const Error&) {
            continue;
        }
        if (!rec.attracting) continue;
        const BundlePoint center{rec.x0, rec.flag};
        double radius = fiber_diameter(ifs);
        if (radius <= 0.0) radius = 1.0;
        double alpha = kInf;
        for (int k = 0; k < 80; ++k, radius *= 0.85) {
            alpha = sampled_alpha(ifs, {center, radius}, h, 24, seed + static_cast<std::uint64_t>(k));
            if (alpha < 1.0) break;
        }
        if (!(alpha < 1.0)) continue;
        bool merged = false;
        for (auto& e : cover.elements) {
            if (bundle_distance(e.ball.center, center) < 1e-6) {
                if (radius > e.ball.radius) e = {{center, radius}, h, alpha};
                merged = true;
                break;
            }
        }
        if (!merged) cover.elements.push_back({{center, radius}, h, alpha});
    }

    // Re-check every element on the sample set the criterion will use and
    // shrink it until that set contracts too.
    std::vector<CoverElement> kept;
    for (auto& e : cover.elements) {
        for (int k = 0; k < 80 && !(e.alpha < 1.0 && sampled_alpha(ifs, e.ball, e.h, kCriterionSamples,
                                                                    seed + kept.size()) < 1.0);
             ++k) {
            e.ball.radius *= 0.85;
            e.alpha = sampled_alpha(ifs, e.ball, e.h, 24, seed + static_cast<std::uint64_t>(k));
        }
        e.alpha = std::max(e.alpha, sampled_alpha(ifs, e.ball, e.h, kCriterionSamples, seed + kept.size()));
        if (e.alpha < 1.0) kept.push_back(e);
    }
    cover.elements = std::move(kept);
    if (cover.elements.empty()) return cover;

    const double fine = 0.02;
    const BundleMesh mesh = dense_mesh(ifs, fine, seed);
    const auto depth_at = [&](const BundlePoint& y) {
        double best = -kInf;
        for (const auto& e : cover.elements) best = std::max(best, e.ball.radius - bundle_distance(y, e.ball.center));
        return best;
    };

    // Greedy completion. A contracting element E with word u pushed forward
    // by a word v gives the candidate word u then v around the image of E's
    // center. A mesh point too close to every boundary becomes the center of
    // a new ball built from the nearest such images.
    struct Pushed {
        BundlePoint point;
        Word word;
    };
    std::vector<Pushed> pushed;
    const std::size_t basins = cover.elements.size();
    for (std::size_t e = 0; e < basins; ++e) {
        std::vector<Pushed> level{{cover.elements[e].ball.center, cover.elements[e].h}};
        for (int len = 1; len <= kPushLength && !level.empty(); ++len) {
            std::vector<Pushed> next;
            for (const Pushed& p : level)
                for (int s = 0; s < ell && pushed.size() + next.size() < kPushCap * (e + 1); ++s) {
                    Pushed q{step_point(ifs, p.point, s), p.word};
                    q.word.push_back(s);
                    next.push_back(std::move(q));
                }
            pushed.insert(pushed.end(), next.begin(), next.end());
            level = std::move(next);
        }
    }

    const double wanted = 3.0 * fine;
    for (std::size_t i = 0; i < mesh.size() && cover.elements.size() < kCoverElementCap; ++i) {
        const BundlePoint y = mesh.point(i);
        if (depth_at(y) >= wanted || pushed.empty()) continue;
        std::vector<std::size_t> order(pushed.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        const std::size_t tries = std::min<std::size_t>(kPushTries, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(tries), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              return bundle_distance(pushed[a].point, y) < bundle_distance(pushed[b].point, y);
                          });
        std::vector<CoverElement> best(tries);
        parallel_for(tries, [&](std::size_t k) {
            const Word& h = pushed[order[k]].word;
            double radius = fiber_diameter(ifs) > 0.0 ? fiber_diameter(ifs) : 1.0;
            for (; radius >= wanted; radius *= 0.85) {
                const double alpha = sampled_alpha(ifs, {y, radius}, h, kCriterionSamples, seed + 1000 + i);
                if (alpha < 1.0) {
                    best[k] = {{y, radius}, h, alpha};
                    return;
                }
            }
        });
        const auto top = std::max_element(best.begin(), best.end(), [](const CoverElement& a, const CoverElement& b) {
            return a.ball.radius < b.ball.radius;
        });
        if (top->ball.radius >= wanted) cover.elements.push_back(*top);
    }

    // The criterion resamples each element with its own seed, so every
    // element is shrunk until that exact sample set contracts.
    for (std::size_t i = 0; i < cover.elements.size(); ++i) {
        auto& e = cover.elements[i];
        for (int k = 0; k < 40; ++k) {
            e.alpha = sampled_alpha(ifs, e.ball, e.h, kCriterionSamples, seed + i);
            if (e.alpha < 1.0) break;
            e.ball.radius *= 0.9;
        }
    }
    std::erase_if(cover.elements, [](const CoverElement& e) { return !(e.alpha < 1.0); });

    std::vector<double> depth(mesh.size());
    parallel_for(mesh.size(), [&](std::size_t i) { depth[i] = depth_at(mesh.point(i)); });
    cover.lebesgue = std::max(0.0, *std::min_element(depth.begin(), depth.end()) - fine);
    return cover;
}

MinimalityVerdict check_minimality_criterion(const Ifs& ifs, const CoverSpec& cover, int horizon, std::uint64_t seed)
{
    if (horizon < 0) fail(ErrorCode::InvalidArgument, "horizon must be nonnegative");
    MinimalityVerdict v;
    v.horizon = horizon;
    std::vector<std::string> failures;

    v.alpha_max = cover.elements.empty() ? kInf : 0.0;
    for (std::size_t i = 0; i < cover.elements.size(); ++i) {
        const auto& e = cover.elements[i];
        v.alpha_max = std::max(v.alpha_max, sampled_alpha(ifs, e.ball, e.h, kCriterionSamples, seed + i));
    }
    v.contraction = !cover.elements.empty() && v.alpha_max < 1.0;
    if (cover.elements.empty()) failures.push_back("contraction: no cover element with a contracting word");
    else if (!v.contraction) failures.push_back("contraction: sampled expansion factor " + std::to_string(v.alpha_max) + " >= 1");

    const double delta = cover.lebesgue;
    if (!(delta > 0.0)) {
        failures.push_back("lebesgue: no positive Lebesgue number candidate");
        failures.push_back("density: not evaluated without a Lebesgue number");
        v.failing_clause = failures.front();
        return v;
    }

    const BundleMesh mesh = dense_mesh(ifs, delta / 2.0, seed);
    v.mesh_size = mesh.size();
    v.mesh_sampled = mesh.sampled;

    std::vector<char> inside(mesh.size(), 0);
    parallel_for(mesh.size(), [&](std::size_t i) {
        const BundlePoint y = mesh.point(i);
        for (const auto& e : cover.elements)
            if (bundle_distance(y, e.ball.center) + delta < e.ball.radius) {
                inside[i] = 1;
                break;
            }
    });
    v.lebesgue = std::all_of(inside.begin(), inside.end(), [](char c) { return c != 0; });
    if (!v.lebesgue) failures.push_back("lebesgue: some mesh point's delta-ball lies in no cover element");

    std::vector<long> uncovered(mesh.size(), -1);
    parallel_for(mesh.size(), [&](std::size_t i) {
        std::vector<char> hit(mesh.size(), 0);
        std::size_t count = 0;
        explore_pruned(ifs, mesh.point(i), horizon, delta / 4.0, 1'000'000, [&](const BundlePoint& p) {
            const std::size_t j = mesh.nearest(p);
            if (!hit[j]) {
                hit[j] = 1;
                ++count;
            }
            return count == mesh.size();
        });
        if (count < mesh.size())
            uncovered[i] = static_cast<long>(std::find(hit.begin(), hit.end(), 0) - hit.begin());
    });
    v.density = true;
    for (std::size_t i = 0; i < mesh.size(); ++i) {
        if (uncovered[i] < 0) continue;
        v.density = false;
        v.counterexample_start = mesh.point(i);
        v.uncovered_point = mesh.point(static_cast<std::size_t>(uncovered[i]));
        failures.push_back("density: orbit tree of mesh point " + std::to_string(i) + " misses mesh point " +
                           std::to_string(uncovered[i]) + " within horizon " + std::to_string(horizon));
        break;
    }
    if (!failures.empty()) v.failing_clause = failures.front();
    return v;
}

nlohmann::json to_json(const BundlePoint& p)
{
    return {{"base", vector_to_json(p.base)}, {"frame", matrix_to_json(p.flag.frame())}};
}

nlohmann::json to_json(const TourReport& r)
{
    nlohmann::json wit = nlohmann::json::array();
    for (const auto& w : r.witnesses)
        wit.push_back({{"mesh_index", w.mesh_index},
                       {"block", format_word(w.block)},
                       {"orbit_index", w.orbit_index},
                       {"distance", w.distance}});
    return {{"word", format_word(r.word)},
            {"length", r.word.size()},
            {"delta", r.delta},
            {"delta_achieved", r.delta_achieved},
            {"depth", r.depth},
            {"dense", r.dense},
            {"evidence", r.sampled ? "sampled" : "certified"},
            {"endpoint_in_target", r.endpoint_in_target},
            {"mesh_size", r.mesh_size},
            {"block_census", r.block_census},
            {"witnesses", wit}};
}

nlohmann::json to_json(const MinimalityVerdict& v)
{
    nlohmann::json j{{"contraction", v.contraction},
                     {"lebesgue", v.lebesgue},
                     {"density", v.density},
                     {"positive", v.positive()},
                     {"alpha_max", std::isfinite(v.alpha_max) ? nlohmann::json(v.alpha_max) : nlohmann::json(nullptr)},
                     {"horizon", v.horizon},
                     {"mesh_size", v.mesh_size},
                     {"mesh_sampled", v.mesh_sampled},
                     {"failing_clause", v.failing_clause}};
    if (v.counterexample_start) j["counterexample_start"] = to_json(*v.counterexample_start);
    if (v.uncovered_point) j["uncovered_point"] = to_json(*v.uncovered_point);
    return j;
}

}  // namespace flagifs
