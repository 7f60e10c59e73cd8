#include "flagifs/bootstrap.hpp"

#include "flagifs/config.hpp"
#include "flagifs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace flagifs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t mod(long a, std::size_t n)
{
    const long r = a % static_cast<long>(n);
    return static_cast<std::size_t>(r < 0 ? r + static_cast<long>(n) : r);
}

// Length of the primitive root of w (w = root^(|w|/len)).
std::size_t primitive_period(const Word& w)
{
    const std::size_t n = w.size();
    std::vector<std::size_t> pi(n, 0);
    for (std::size_t i = 1; i < n; ++i) {
        std::size_t k = pi[i - 1];
        while (k > 0 && w[i] != w[k]) k = pi[k - 1];
        if (w[i] == w[k]) ++k;
        pi[i] = k;
    }
    const std::size_t cand = n - pi[n - 1];
    return n % cand == 0 ? cand : n;
}

// Polynomial hashing modulo the Mersenne prime 2^61 - 1.
constexpr std::uint64_t kMod = (std::uint64_t{1} << 61) - 1;
constexpr std::uint64_t kBase = 1'000'003;

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b)
{
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    std::uint64_t r = static_cast<std::uint64_t>(p & kMod) + static_cast<std::uint64_t>(p >> 61);
    if (r >= kMod) r -= kMod;
    return r;
}

std::uint64_t addmod(std::uint64_t a, std::uint64_t b)
{
    const std::uint64_t r = a + b;
    return r >= kMod ? r - kMod : r;
}

std::uint64_t submod(std::uint64_t a, std::uint64_t b) { return a >= b ? a - b : a + kMod - b; }

ShadowReport shadow_brute(const OrbitTrace& f, const OrbitTrace& l, double eps)
{
    ShadowReport rep;
    rep.epsilon = eps;
    rep.total = f.period();
    const std::size_t pf = f.period();
    const std::size_t p = l.period();
    std::vector<char> ok(pf, 0);
    parallel_for(pf, [&](std::size_t t) {
        for (std::size_t s = 0; s < p && !ok[t]; ++s) {
            bool all = true;
            for (std::size_t i = 0; i < p && all; ++i) all = f.fiber_distance((t + i) % pf, l, (s + i) % p) < eps;
            ok[t] = all ? 1 : 0;
        }
    });
    rep.shadowing = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
    return rep;
}

double angle_between(const Vec& a, const Vec& b)
{
    const double c = a.dot(b) / (a.norm() * b.norm());
    return std::acos(std::clamp(c, -1.0, 1.0));
}

Word repeat(const Word& w, long n)
{
    Word out;
    out.reserve(w.size() * static_cast<std::size_t>(std::max(n, 0L)));
    for (long i = 0; i < n; ++i) out.insert(out.end(), w.begin(), w.end());
    return out;
}

// Largest total flag expansion over any stretch of the orbit of p under w,
// taken over all pairs i > j of log-diagonal differences. Rounding errors
// along the orbit grow by up to this factor before anything contracts them.
double flag_expansion_log(const Ifs& ifs, const Word& w, BundlePoint p)
{
    const int d = ifs.dim();
    std::vector<double> run(static_cast<std::size_t>(d * d), 0.0);
    double best = 0.0;
    for (int s : w) {
        const auto& g = ifs.generator(s);
        const QrStep step = qr_of(g.jacobian(p.base), p.flag);
        const Vec ld = step.r.log_diagonal();
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < i; ++j) {
                double& r = run[static_cast<std::size_t>(i * d + j)];
                r = std::max(0.0, r) + ld(i) - ld(j);
                best = std::max(best, r);
            }
        p = {g.apply(p.base), step.image};
    }
    return best;
}

// Number of runs for the interleaved layout. Enough that each correcting
// stretch expands the flag by about kRunExpansion at most, but few enough
// that the broken shadowing windows, p + 2K per run, cost at most a quarter
// of kappa0 of the contraction phase.
constexpr double kRunExpansion = 12.0;

long interleave_runs(const ImproveConstants& k, long p, long n, long m, int K)
{
    if (m <= 0 || n <= 0) return 1;
    double gap = 0.0;
    for (int i = 0; i < k.chi.size(); ++i)
        for (int j = 0; j < i; ++j) gap = std::max(gap, k.chi(i) - k.chi(j));
    const double wanted = std::ceil(static_cast<double>(k.q) * static_cast<double>(m) * gap / kRunExpansion);
    const double affordable = std::floor(0.25 * k.kappa0 * static_cast<double>(p * n) / static_cast<double>(p + 2 * K));
    const double runs = std::min({wanted, affordable, static_cast<double>(m), static_cast<double>(n)});
    return std::max(1L, static_cast<long>(runs));
}

double max_final_log_norm(const Ifs& ifs, const Word& w, const std::vector<BundlePoint>& pts)
{
    std::vector<double> out(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) {
        BundleJacobian J(ifs, pts[i]);
        for (int s : w) J.step(s);
        out[i] = J.log_norm();
    });
    return *std::max_element(out.begin(), out.end());
}

double max_prefix_log_norm(const Ifs& ifs, const Word& w, const std::vector<BundlePoint>& pts)
{
    std::vector<double> out(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) {
        BundleJacobian J(ifs, pts[i]);
        double mx = J.log_norm();
        for (int s : w) {
            J.step(s);
            mx = std::max(mx, J.log_norm());
        }
        out[i] = mx;
    });
    return *std::max_element(out.begin(), out.end());
}

// Smallest n such that every sample satisfies
// log |D h_[w^j]| <= (-gamma + 3 eta) p j for all n <= j <= 2n.
long estimate_n1(const Ifs& ifs, const Word& w, const std::vector<BundlePoint>& pts, double gamma, double eta,
                 long cap)
{
    const double p = static_cast<double>(w.size());
    std::vector<BundleJacobian> jac;
    for (const auto& x : pts) jac.emplace_back(ifs, x);
    long n1 = -1;
    for (long j = 1; j <= cap; ++j) {
        bool all = true;
        for (auto& J : jac) {
            for (int s : w) J.step(s);
            all = all && J.log_norm() <= (-gamma + 3.0 * eta) * p * static_cast<double>(j);
        }
        if (!all) n1 = -1;
        else if (n1 < 0) n1 = j;
        if (n1 > 0 && j >= 2 * n1) return n1;
    }
    return n1 > 0 ? n1 : cap;
}

}  // namespace

OrbitTrace::OrbitTrace(const Ifs& ifs, const Word& w, const BundlePoint& start)
    : word_(w), base_dim_(ifs.base_dim()), dim_(ifs.dim())
{
    if (w.empty()) fail(ErrorCode::InvalidArgument, "orbit word must be nonempty");
    check_word(w, ifs.alphabet());
    data_.reserve(w.size() * stride());
    Vec x = start.base;
    Flag F = start.flag;
    for (int s : w) {
        for (int i = 0; i < base_dim_; ++i) data_.push_back(x(i));
        const Mat& fr = F.frame();
        for (int j = 0; j < dim_; ++j)
            for (int i = 0; i < dim_; ++i) data_.push_back(fr(i, j));
        const auto& g = ifs.generator(s);
        F = flag_map(g.jacobian(x), F);
        x = g.apply(x);
    }
}

BundlePoint OrbitTrace::point(std::size_t t) const
{
    const double* a = at(t);
    Vec x(base_dim_);
    for (int i = 0; i < base_dim_; ++i) x(i) = a[i];
    Mat fr(dim_, dim_);
    for (int j = 0; j < dim_; ++j)
        for (int i = 0; i < dim_; ++i) fr(i, j) = a[base_dim_ + j * dim_ + i];
    return {x, Flag::from_orthonormal(fr)};
}

double OrbitTrace::fiber_distance(std::size_t t, const OrbitTrace& other, std::size_t s) const
{
    const double* a = at(t);
    const double* b = other.at(s);
    double tor = 0.0;
    for (int i = 0; i < base_dim_; ++i) {
        double u = std::abs(a[i] - b[i]);
        u -= std::floor(u);
        tor = std::max(tor, std::min(u, 1.0 - u));
    }
    double sum = 0.0;
    for (int j = 0; j < dim_; ++j) {
        double minus = 0.0, plus = 0.0;
        for (int i = 0; i < dim_; ++i) {
            const double x = a[base_dim_ + j * dim_ + i];
            const double y = b[base_dim_ + j * dim_ + i];
            minus += (x - y) * (x - y);
            plus += (x + y) * (x + y);
        }
        sum += std::min(minus, plus);
    }
    return std::max(tor, std::sqrt(sum));
}

OrbitTrace trace_of(const Ifs& ifs, const PeriodicOrbitRecord& rec)
{
    return OrbitTrace(ifs, rec.word, {rec.x0, rec.flag});
}

ShadowReport shadow_proportion(const OrbitTrace& follower, const OrbitTrace& leader, double epsilon)
{
    if (follower.dim() != leader.dim() || follower.base_dim() != leader.base_dim())
        fail(ErrorCode::DimensionMismatch, "orbits live in different bundles");
    if (follower.period() == 0 || leader.period() == 0) fail(ErrorCode::InvalidArgument, "empty orbit");
    ShadowReport rep;
    rep.epsilon = epsilon;
    rep.total = follower.period();
    if (!(epsilon > 0.0)) {
        rep.kappa = 1.0;
        return rep;
    }
    if (epsilon > 1.0) {
        // the symbolic part (at most 1) never obstructs
        rep = shadow_brute(follower, leader, epsilon);
        rep.proportion = static_cast<double>(rep.shadowing) / static_cast<double>(rep.total);
        rep.kappa = 1.0 - rep.proportion;
        return rep;
    }

    // Symbols at |n| <= K around each of the p compared times must agree.
    int K = 0;
    while (std::ldexp(1.0, -(K + 1)) >= epsilon) ++K;
    rep.symbolic_radius = K;

    const Word& a = follower.word();
    const Word& b = leader.word();
    const std::size_t pf = a.size();
    const std::size_t p = b.size();
    const std::size_t p0 = primitive_period(b);
    const long L = static_cast<long>(p) + 2L * K;
    const long lo = -K;
    const long hi = static_cast<long>(pf) - 1 - K + (L - static_cast<long>(p0));  // last window start checked
    const std::size_t nU = static_cast<std::size_t>(hi - lo + 1);
    auto T = [&](long u) { return a[mod(u, pf)]; };

    // rot[u - lo] = r when a[u .. u+p0) equals the rotation of the root by r.
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> rotations;
    {
        std::uint64_t h = 0, power = 1;
        for (std::size_t i = 0; i < p0; ++i) {
            h = addmod(mulmod(h, kBase), static_cast<std::uint64_t>(b[i] + 1));
            power = mulmod(power, kBase);
        }
        for (std::size_t r = 0; r < p0; ++r) {
            rotations[h].push_back(r);
            const auto first = static_cast<std::uint64_t>(b[r] + 1);
            h = addmod(submod(mulmod(h, kBase), mulmod(first, power)), first);
        }
    }
    std::uint64_t power = 1;
    for (std::size_t i = 0; i < p0; ++i) power = mulmod(power, kBase);

    std::vector<long> rot(nU, -1);
    std::uint64_t h = 0;
    for (std::size_t i = 0; i < p0; ++i) h = addmod(mulmod(h, kBase), static_cast<std::uint64_t>(T(lo + static_cast<long>(i)) + 1));
    for (std::size_t k = 0; k < nU; ++k) {
        const long u = lo + static_cast<long>(k);
        if (k > 0) {
            const auto out = static_cast<std::uint64_t>(T(u - 1) + 1);
            const auto in = static_cast<std::uint64_t>(T(u + static_cast<long>(p0) - 1) + 1);
            h = addmod(submod(mulmod(h, kBase), mulmod(out, power)), in);
        }
        if (k > 0 && rot[k - 1] >= 0) {
            // a primitive root admits exactly one continuation of a rotation
            const auto prev = static_cast<std::size_t>(rot[k - 1]);
            if (T(u + static_cast<long>(p0) - 1) == b[prev]) rot[k] = static_cast<long>((prev + 1) % p0);
            continue;
        }
        const auto it = rotations.find(h);
        if (it == rotations.end()) continue;
        for (std::size_t r : it->second) {
            bool same = true;
            for (std::size_t i = 0; i < p0 && same; ++i) same = T(u + static_cast<long>(i)) == b[(r + i) % p0];
            if (same) {
                rot[k] = static_cast<long>(r);
                break;
            }
        }
    }
    std::vector<std::size_t> missing(nU + 1, 0);
    for (std::size_t k = 0; k < nU; ++k) missing[k + 1] = missing[k] + (rot[k] < 0 ? 1 : 0);

    const std::size_t copies = p / p0;
    struct Slide {
        bool valid = false;
        long t = 0;
        std::size_t diag = 0;
        std::size_t bad = 0;
    };
    std::vector<Slide> slides(copies);
    auto is_bad = [&](long u, std::size_t diag) {
        return !(follower.fiber_distance(mod(u, pf), leader, mod(u - static_cast<long>(diag), p)) < epsilon);
    };

    std::size_t count = 0;
    for (long t = 0; t < static_cast<long>(pf); ++t) {
        const std::size_t k0 = static_cast<std::size_t>(t - K - lo);
        const std::size_t k1 = k0 + static_cast<std::size_t>(L - static_cast<long>(p0)) + 1;
        if (missing[k1] != missing[k0]) continue;
        const std::size_t phase = (static_cast<std::size_t>(rot[k0]) + static_cast<std::size_t>(K)) % p0;
        bool found = false;
        for (std::size_t j = 0; j < copies; ++j) {
            const std::size_t s = phase + j * p0;
            const std::size_t diag = mod(t - static_cast<long>(s), p);
            Slide& sl = slides[j];
            if (sl.valid && sl.t == t - 1 && sl.diag == diag) {
                if (is_bad(t - 1, diag)) --sl.bad;
                if (is_bad(t + static_cast<long>(p) - 1, diag)) ++sl.bad;
            } else {
                sl.bad = 0;
                for (std::size_t i = 0; i < p; ++i) sl.bad += is_bad(t + static_cast<long>(i), diag) ? 1 : 0;
            }
            sl.valid = true;
            sl.t = t;
            sl.diag = diag;
            found = found || sl.bad == 0;
        }
        if (found) ++count;
    }
    rep.shadowing = count;
    rep.proportion = static_cast<double>(count) / static_cast<double>(pf);
    rep.kappa = 1.0 - rep.proportion;
    return rep;
}

double empirical_measure_distance(const OrbitTrace& a, const OrbitTrace& b, const TestFamily& tests)
{
    if (a.dim() != b.dim() || a.base_dim() != b.base_dim())
        fail(ErrorCode::DimensionMismatch, "orbits live in different bundles");
    const int bd = a.base_dim();
    const int d = a.dim();

    std::vector<std::function<double(const BundlePoint&)>> fns;
    if (tests.fourier && bd > 0) {
        int total = 1;
        for (int i = 0; i < bd; ++i) total *= 5;
        for (int code = 0; code < total; ++code) {
            std::vector<int> m(static_cast<std::size_t>(bd));
            int rest = code;
            for (auto& e : m) {
                e = rest % 5 - 2;
                rest /= 5;
            }
            // one representative of each pair {m, -m}
            const auto nz = std::find_if(m.begin(), m.end(), [](int e) { return e != 0; });
            if (nz == m.end() || *nz < 0) continue;
            auto phase = [m](const BundlePoint& pt) {
                double s = 0.0;
                for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * pt.base(static_cast<int>(i));
                return 2.0 * std::numbers::pi * s;
            };
            fns.push_back([phase](const BundlePoint& pt) { return std::cos(phase(pt)); });
            fns.push_back([phase](const BundlePoint& pt) { return std::sin(phase(pt)); });
        }
    }
    if (tests.frame) {
        for (int j = 0; j < d; ++j)
            for (int r = 0; r < d; ++r)
                for (int s = r; s < d; ++s)
                    fns.push_back([j, r, s](const BundlePoint& pt) {
                        return pt.flag.frame()(r, j) * pt.flag.frame()(s, j);
                    });
    }

    auto means = [&](const OrbitTrace& o) {
        std::vector<double> sums(fns.size(), 0.0);
        for (std::size_t t = 0; t < o.period(); ++t) {
            const BundlePoint pt = o.point(t);
            for (std::size_t k = 0; k < fns.size(); ++k) sums[k] += fns[k](pt);
        }
        for (auto& s : sums) s /= static_cast<double>(o.period());
        return sums;
    };
    double out = 0.0;
    if (!fns.empty()) {
        const auto ma = means(a);
        const auto mb = means(b);
        for (std::size_t k = 0; k < fns.size(); ++k) out = std::max(out, std::abs(ma[k] - mb[k]));
    }

    if (tests.cylinders) {
        for (std::size_t depth = 1; depth <= 4; ++depth) {
            auto histogram = [depth](const Word& w) {
                std::map<Word, double> h;
                const std::size_t n = w.size();
                for (std::size_t t = 0; t < n; ++t) {
                    Word c(depth);
                    for (std::size_t i = 0; i < depth; ++i) c[i] = w[(t + i) % n];
                    h[c] += 1.0 / static_cast<double>(n);
                }
                return h;
            };
            const auto ha = histogram(a.word());
            const auto hb = histogram(b.word());
            for (const auto& [c, v] : ha) {
                const auto it = hb.find(c);
                out = std::max(out, std::abs(v - (it == hb.end() ? 0.0 : it->second)));
            }
            for (const auto& [c, v] : hb)
                if (!ha.count(c)) out = std::max(out, v);
        }
    }
    return out;
}

double tau_of(const Vec& lambda, double c, double C)
{
    return 1.0 - (c / C) * least_gap(lambda) / std::abs(lambda(lambda.size() - 1));
}

ImproveConstants improve_constants(const ManeuverCertificate& cert, double C, const Vec& lambda, double eta)
{
    if (!(eta > 0.0)) fail(ErrorCode::InvalidArgument, "eta must be positive");
    ImproveConstants k;
    k.c = cert.c;
    k.C = C;
    k.gamma = least_gap(lambda);
    k.kappa0 = k.gamma / (2.0 * C);
    k.kappa = 2.0 * k.kappa0;
    k.beta = (1.0 - (k.gamma + k.c) / (2.0 * C)) * k.gamma;
    k.tau = tau_of(lambda, k.c, C);
    const double last = std::abs(lambda(lambda.size() - 1));
    k.chi = (k.c / last) * lambda.cwiseAbs();
    k.q = static_cast<int>(std::ceil(C / eta));
    return k;
}

ImproveResult improve_orbit(const Ifs& ifs, const ManeuverCertificate& cert, const PeriodicOrbitRecord& z,
                            const ImproveParams& params)
{
    const Vec& lam = z.lambda;
    if (!(lam.norm() >= 1e-10)) fail(ErrorCode::InvalidArgument, "refusing a Lyapunov vector with norm below 1e-10");
    if (!in_cone(lam)) fail(ErrorCode::NotInCone, "seed exponents are not in the cone");
    if (!(params.theta > 0.0 && params.epsilon > 0.0 && params.delta > 0.0))
        fail(ErrorCode::InvalidArgument, "theta, epsilon and delta must be positive");

    ImproveResult res;
    ImproveConstants k = improve_constants(cert, ifs.C(), lam, params.eta);
    const Word& w = z.word;
    const long p = static_cast<long>(w.size());
    const BundlePoint xi0{z.x0, z.flag};

    // Home ball: images under one period stay within epsilon/2 of the orbit.
    const auto probe = sample_ball(ifs, {xi0, params.epsilon / 2.0}, params.samples, params.seed);
    const double grow = max_prefix_log_norm(ifs, w, probe) + std::log(2.0);
    k.home_radius = params.epsilon / 2.0 * std::min(1.0, std::exp(-grow));
    const Ball home{xi0, k.home_radius};
    const auto home_pts = sample_ball(ifs, home, params.samples, params.seed + 1);
    k.n1 = estimate_n1(ifs, w, home_pts, k.gamma, params.eta, std::max(64L, 2'000'000 / p));

    int K = 0;
    while (std::ldexp(1.0, -(K + 1)) >= params.epsilon) ++K;

    double k_est = 0.0;
    long n_floor = 0;
    std::optional<ImproveResult> last;
    ErrorCode last_code = ErrorCode::ContractionLost;
    std::string last_msg = "no attempt completed";
    auto note = [&](const std::string& s) { res.log.push_back(s); };

    for (int attempt = 1; attempt <= params.max_attempts; ++attempt) {
        res.attempts = attempt;
        long n = params.n;
        long m = params.m;
        if (params.auto_budget) {
            const double share = (1.0 - k.kappa0) / k.kappa0;
            const double P = std::max({static_cast<double>(p * k.n1),
                                       2.0 * share * (static_cast<double>(p + 2 * K) + k_est),
                                       (1.0 - k.kappa0) * k_est / params.eta});
            n = std::max({static_cast<long>(std::ceil(P / static_cast<double>(p))), k.n1, params.n, n_floor});
            const double pn = static_cast<double>(p * n);
            m = static_cast<long>(std::floor(k.kappa0 * pn / ((1.0 - k.kappa0) * k.q)));
            while (m > 0 && k.q * m / (pn + k.q * m) >= k.kappa0) --m;
            if (k.q * m / (pn + k.q * m) <= k.kappa0 - params.eta)
                note("proportion below kappa0 - eta at n=" + std::to_string(n));
        }
        k.n = n;
        k.m = m;
        if (!params.auto_budget && n < k.n1) {
            // a fixed budget is taken as given, so a contraction phase
            // shorter than the certified n1 cannot be repaired here
            last_code = ErrorCode::ContractionLost;
            last_msg = "contraction phase n=" + std::to_string(n) + " is shorter than the certified n1=" +
                       std::to_string(k.n1);
            note(last_msg);
            break;
        }
        if (p * n + static_cast<long>(k.q) * m > params.max_period) {
            note("period cap " + std::to_string(params.max_period) + " reached");
            break;
        }

        // Contraction and correction, split into runs of copies of w each
        // followed by a share of the correcting blocks.
        const long runs = params.interleave ? interleave_runs(k, p, n, m, K) : 1L;
        Word body;
        BundlePoint cur = xi0;
        for (long j = 0; j < runs; ++j) {
            const Word chunk = repeat(w, (j + 1) * n / runs - j * n / runs);
            cur = apply_word(ifs, chunk, cur);
            body.insert(body.end(), chunk.begin(), chunk.end());
            const long blocks = (j + 1) * m / runs - j * m / runs;
            for (long b = 0; b < blocks; ++b) {
                const PrescribeTrace tr = prescribe_word(ifs, cert, cur, k.chi, params.eta);
                body.insert(body.end(), tr.word.begin(), tr.word.end());
                cur = tr.end;
            }
        }
        TourOptions topt = params.tour;
        topt.seed = params.seed;
        const GroupTourResult gt = group_tour(ifs, params.delta, home, {cur, k.home_radius}, topt);
        const double klen = static_cast<double>(gt.tour.word.size());
        const double total = static_cast<double>(p * n + k.q * m) + klen;
        if (params.auto_budget && klen > k_est && klen / total > params.eta) {
            k_est = 1.5 * klen;
            note("attempt " + std::to_string(attempt) + ": tour length " + std::to_string(gt.tour.word.size()) +
                 " too long for n=" + std::to_string(n) + ", re-budgeting");
            continue;
        }

        Word wt = std::move(body);
        wt.insert(wt.end(), gt.tour.word.begin(), gt.tour.word.end());
        if (wt.empty()) {
            last_code = ErrorCode::ContractionLost;
            last_msg = "empty improved word";
            if (!params.auto_budget) break;
            n_floor = std::max(1L, 2 * n);
            continue;
        }

        const double Lc = max_final_log_norm(ifs, wt, home_pts) + std::log(2.0);
        if (!(Lc < 0.0)) {
            last_code = ErrorCode::ContractionLost;
            last_msg = "composed map not certified contracting (sampled log Lipschitz " + std::to_string(Lc) + ")";
            note("attempt " + std::to_string(attempt) + ": " + last_msg);
            if (!params.auto_budget) break;
            n_floor = 2 * n;
            continue;
        }

        BundlePoint xi = xi0;
        int iters = 0;
        for (; iters < 10'000; ++iters) {
            const BundlePoint nxt = apply_word(ifs, wt, xi);
            const double disp = bundle_distance(nxt, xi);
            xi = nxt;
            if (disp < 1e-12) break;
        }
        if (!(bundle_distance(xi, xi0) < k.home_radius)) {
            last_code = ErrorCode::ContractionLost;
            last_msg = "fixed point left the home ball";
            note("attempt " + std::to_string(attempt) + ": " + last_msg);
            if (!params.auto_budget) break;
            n_floor = 2 * n;
            continue;
        }
        PeriodicOrbitRecord rec = periodic_record_at(ifs, wt, xi.base, xi.flag);
        if (!in_cone(rec.lambda)) {
            last_code = ErrorCode::ConeExit;
            last_msg = "improved exponents left the cone";
            note("attempt " + std::to_string(attempt) + ": " + last_msg);
            if (!params.auto_budget) break;
            n_floor = 2 * n;
            continue;
        }

        ImproveResult out = res;
        out.constants = k;
        out.record = std::move(rec);
        out.tour = gt.tour;
        out.tour_radius = gt.rho;
        out.contraction_log = Lc;
        out.fixed_point_iterations = iters + 1;
        out.norm_ratio = out.record.lambda.norm() / lam.norm();
        out.angle = angle_between(out.record.lambda, lam);
        out.norm_ok = out.norm_ratio <= k.tau * params.slack;
        out.angle_ok = out.angle <= params.theta;
        out.shadow = shadow_proportion(OrbitTrace(ifs, wt, xi), trace_of(ifs, z), params.epsilon);
        out.shadow_ok = out.shadow.proportion >= 1.0 - k.kappa;
        out.kappa_ok = k.kappa < std::min(1.0, lam.norm());
        out.dense_ok = gt.tour.dense;
        out.flag_expansion_log = flag_expansion_log(ifs, wt, xi);
        out.runs = runs;
        if (out.contracts_ok() || !params.auto_budget) return out;

        std::string which;
        if (!out.norm_ok) which += " norm";
        if (!out.angle_ok) which += " angle";
        if (!out.shadow_ok) which += " shadow";
        if (!out.dense_ok) which += " density";
        note("attempt " + std::to_string(attempt) + ": contract failure (" + which + " ) at n=" + std::to_string(n));
        out.log = res.log;
        last = std::move(out);
        n_floor = 2 * n;
    }
    if (last) {
        last->log = res.log;
        last->attempts = res.attempts;
        return *last;
    }
    fail(last_code, last_msg);
}

BootstrapLog run_bootstrap(const Ifs& ifs, const ManeuverCertificate& cert, const PeriodicOrbitRecord& seed,
                           const BootstrapSchedule& schedule, int steps, const ImproveParams& base)
{
    if (steps < 0) fail(ErrorCode::InvalidArgument, "number of steps must be nonnegative");
    const auto n = static_cast<std::size_t>(steps);
    if (schedule.theta.size() < n || schedule.epsilon.size() < n || schedule.delta.size() < n)
        fail(ErrorCode::InvalidArgument, "schedules are shorter than the number of steps");
    for (std::size_t i = 0; i < n; ++i)
        if (!(schedule.theta[i] > 0.0 && schedule.epsilon[i] > 0.0 && schedule.delta[i] > 0.0))
            fail(ErrorCode::InvalidArgument, "schedule entries must be positive");

    BootstrapLog log;
    log.orbits.push_back(seed);
    const double norm0 = seed.lambda.norm();
    log.steps.push_back({{"step", 0},
                         {"orbit", to_json(seed)},
                         {"lambda_norm", norm0},
                         {"sum_epsilon", 0.0},
                         {"prod_one_minus_kappa", 1.0}});

    OrbitTrace prev = trace_of(ifs, seed);
    double sum_eps = 0.0;
    double prod = 1.0;
    double tau_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ImproveParams params = base;
        params.theta = schedule.theta[i];
        params.epsilon = schedule.epsilon[i];
        params.delta = schedule.delta[i];
        params.seed = base.seed + i;
        ImproveResult r;
        try {
            r = improve_orbit(ifs, cert, log.orbits.back(), params);
        } catch (const Error& e) {
            log.error = e.what();
            return log;
        }
        sum_eps += params.epsilon;
        prod *= 1.0 - r.constants.kappa;
        tau_max = std::max(tau_max, r.constants.tau);
        const double norm = r.record.lambda.norm();
        const double bound = std::pow(tau_max * params.slack, static_cast<double>(i + 1)) * norm0;
        const bool trend = norm <= bound;
        log.trend_ok = log.trend_ok && trend;

        OrbitTrace now = trace_of(ifs, r.record);
        const double emd = empirical_measure_distance(now, prev);
        prev = std::move(now);

        nlohmann::json j{{"step", i + 1},
                         {"orbit", to_json(r.record)},
                         {"lambda_norm", norm},
                         {"norm_ratio", r.norm_ratio},
                         {"tau", r.constants.tau},
                         {"tau_slack", params.slack},
                         {"norm_ok", r.norm_ok},
                         {"angle", r.angle},
                         {"theta", params.theta},
                         {"angle_ok", r.angle_ok},
                         {"gamma", r.constants.gamma},
                         {"kappa", r.constants.kappa},
                         {"kappa0", r.constants.kappa0},
                         {"kappa_below_min_one_norm", r.kappa_ok},
                         {"beta", r.constants.beta},
                         {"chi", vector_to_json(r.constants.chi)},
                         {"n", r.constants.n},
                         {"m", r.constants.m},
                         {"q", r.constants.q},
                         {"n1", r.constants.n1},
                         {"home_radius", r.constants.home_radius},
                         {"tour_radius", r.tour_radius},
                         {"contraction_log_lipschitz", r.contraction_log},
                         {"fixed_point_iterations", r.fixed_point_iterations},
                         {"epsilon", params.epsilon},
                         {"shadow", to_json(r.shadow)},
                         {"shadow_ok", r.shadow_ok},
                         {"delta", params.delta},
                         {"tour_delta_achieved", r.tour.delta_achieved},
                         {"tour_dense", r.tour.dense},
                         {"tour_evidence", r.tour.sampled ? "sampled" : "certified"},
                         {"tour_length", r.tour.word.size()},
                         {"runs", r.runs},
                         {"flag_expansion_log", r.flag_expansion_log},
                         {"sum_epsilon", sum_eps},
                         {"prod_one_minus_kappa", prod},
                         {"trend_bound", bound},
                         {"trend_ok", trend},
                         {"measure_distance_to_previous", emd},
                         {"attempts", r.attempts},
                         {"budget_log", r.log}};
        log.steps.push_back(std::move(j));
        log.orbits.push_back(std::move(r.record));
    }
    log.completed = true;
    return log;
}

std::string bootstrap_csv(const BootstrapLog& log)
{
    std::ostringstream out;
    out.precision(17);
    out << "step,period,lambda_norm,norm_ratio,tau,angle,kappa,shadow_proportion,tour_delta_achieved,sum_epsilon,"
           "prod_one_minus_kappa\n";
    for (const auto& j : log.steps) {
        auto num = [&](const char* key) {
            std::ostringstream s;
            s.precision(17);
            if (j.contains(key)) s << j.at(key).get<double>();
            return s.str();
        };
        out << j.at("step").get<int>() << ',' << j.at("orbit").at("period").get<long>() << ',' << num("lambda_norm")
            << ',' << num("norm_ratio") << ',' << num("tau") << ',' << num("angle") << ',' << num("kappa") << ','
            << (j.contains("shadow") ? std::to_string(j.at("shadow").at("proportion").get<double>()) : "") << ','
            << num("tour_delta_achieved") << ',' << num("sum_epsilon") << ',' << num("prod_one_minus_kappa")
            << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const PeriodicOrbitRecord& rec)
{
    return {{"word", format_word(rec.word)},
            {"period", rec.period()},
            {"x0", vector_to_json(rec.x0)},
            {"frame", matrix_to_json(rec.flag.frame())},
            {"lambda", vector_to_json(rec.lambda)},
            {"gamma", rec.gamma},
            {"residual", rec.residual},
            {"flag_residual", rec.flag_residual},
            {"log_radius_base", rec.log_radius_base},
            {"log_radius_flag", rec.log_radius_flag},
            {"attracting", rec.attracting}};
}

nlohmann::json to_json(const ShadowReport& s)
{
    return {{"epsilon", s.epsilon},
            {"proportion", s.proportion},
            {"kappa", s.kappa},
            {"shadowing", s.shadowing},
            {"total", s.total},
            {"symbolic_radius", s.symbolic_radius}};
}

}  // namespace flagifs
