#include "flagifs/cocycle.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace flagifs {

std::optional<int> WordSource::next()
{
    if (word_.empty()) return std::nullopt;
    if (pos_ >= word_.size()) {
        if (!cyclic_) return std::nullopt;
        pos_ = 0;
    }
    return word_[pos_++];
}

std::optional<int> RandomSource::next()
{
    return static_cast<int>(rng_.below(static_cast<std::uint64_t>(alphabet_)));
}

FurstenbergRun furstenberg_estimate(const Ifs& ifs, SymbolSource* source, const SkewPoint& start,
                                    std::size_t n, std::size_t record_every)
{
    if (n == 0) fail(ErrorCode::InvalidArgument, "furstenberg_estimate needs n >= 1");
    if (start.flag.dim() != ifs.dim() || start.base.size() != ifs.base_dim())
        fail(ErrorCode::DimensionMismatch, "start point does not match the IFS");

    FurstenbergRun run;
    run.final_point = start;
    SkewPoint& p = run.final_point;
    Vec sum = Vec::Zero(ifs.dim());
    for (std::size_t t = 0; t < n; ++t) {
        if (p.future.empty()) {
            const auto s = source ? source->next() : std::nullopt;
            if (!s) fail(ErrorCode::ExhaustedFuture, "symbol source exhausted after " + std::to_string(t) + " steps");
            p.future.push_back(*s);
        }
        const int s = p.future.front();
        if (s < 0 || s >= ifs.alphabet()) fail(ErrorCode::InvalidArgument, "symbol outside the alphabet");
        const auto& g = ifs.generator(s);
        const QrStep step = qr_of(g.jacobian(p.base), p.flag);
        sum += step.r.log_diagonal();
        p.flag = step.image;
        p.base = g.apply(p.base);
        p.future.pop_front();
        p.past.push_back(s);
        if (record_every != 0 && ((t + 1) % record_every == 0 || t + 1 == n))
            run.running.emplace_back(t + 1, sum / static_cast<double>(t + 1));
    }
    run.estimate.values = sum / static_cast<double>(n);
    run.estimate.sample_count = n;
    return run;
}

PairVec flag_cocycle_exponents(const Vec& lambda)
{
    const int d = static_cast<int>(lambda.size());
    const auto pairs = so_frame_index(d);
    PairVec out(static_cast<int>(pairs.size()));
    for (std::size_t k = 0; k < pairs.size(); ++k)
        out(static_cast<int>(k)) = lambda(pairs[k].first) - lambda(pairs[k].second);
    return out;
}

Vec triangular_exponents(const std::vector<UpperTriangular>& rs)
{
    if (rs.empty()) fail(ErrorCode::InvalidArgument, "triangular_exponents needs a nonempty sequence");
    const int d = rs.front().dim();
    Vec sum = Vec::Zero(d);
    for (const auto& r : rs) {
        if (r.dim() != d) fail(ErrorCode::DimensionMismatch, "triangular matrices of mixed size");
        sum += r.entries.diagonal().cwiseAbs().array().log().matrix();
    }
    return sum / static_cast<double>(rs.size());
}

long offdiag_bound_N(int d, double C, double lambda, double eta)
{
    (void)lambda;  // the rate cancels on both sides of the inequality
    if (d < 1) fail(ErrorCode::InvalidArgument, "dimension must be positive");
    if (!(eta > 0.0)) fail(ErrorCode::InvalidArgument, "eta must be positive");
    if (!(C > 0.0)) fail(ErrorCode::InvalidArgument, "C must be positive");
    const int k = d - 1;
    const double constant = 2.0 * std::log(static_cast<double>(d)) + 2.0 * k * std::log(C);

    // Largest binomial coefficient binom(n, i) over i <= d-1; for n >= 2(d-1)
    // this is binom(n, d-1) itself.
    auto log_binom = [&](long n) {
        double best = 0.0;
        for (int i = 0; i <= k && i <= n; ++i) {
            const double v = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
            best = std::max(best, v);
        }
        return best;
    };
    auto holds = [&](long n) { return constant + log_binom(n) <= eta * static_cast<double>(n); };

    // Past this point the binomial grows by a factor below e^eta per step,
    // so once the inequality holds it keeps holding.
    long monotone_from = 2L * k;
    if (k > 0) {
        const double ratio_bound = static_cast<double>(k) * std::exp(eta) / std::expm1(eta);
        monotone_from = std::max(monotone_from, static_cast<long>(std::ceil(ratio_bound)));
    }
    long last_fail = 0;
    for (long n = 1;; ++n) {
        if (!holds(n)) last_fail = n;
        else if (n >= monotone_from) break;
        if (n > 1000000000L) fail(ErrorCode::InvalidArgument, "offdiag_bound_N scan did not terminate");
    }
    return last_fail + 1;
}

bool in_cone(const Vec& lambda)
{
    if (lambda.size() == 0 || !(lambda(0) < 0.0)) return false;
    for (int i = 0; i + 1 < lambda.size(); ++i)
        if (!(lambda(i) > lambda(i + 1))) return false;
    return true;
}

double least_gap(const Vec& lambda)
{
    double g = -lambda(0);
    for (int i = 0; i + 1 < lambda.size(); ++i) g = std::min(g, lambda(i) - lambda(i + 1));
    return g;
}

namespace {

struct Composite {
    Vec image;
    Mat jacobian;
};

Composite compose(const Ifs& ifs, const Word& w, const Vec& x)
{
    Composite c{x, Mat::Identity(ifs.dim(), ifs.dim())};
    for (int s : w) {
        const auto& g = ifs.generator(s);
        c.jacobian = g.jacobian(c.image) * c.jacobian;
        c.image = g.apply(c.image);
    }
    return c;
}

Vec wrapped_difference(const Vec& a, const Vec& b)
{
    Vec r = a - b;
    for (int i = 0; i < r.size(); ++i) r(i) -= std::round(r(i));
    return r;
}

double spectral_radius(const Mat& m)
{
    Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(m), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct Root {
    Vec x;
    double residual;
    double radius;
};

std::vector<Root> newton_roots(const Ifs& ifs, const Word& w)
{
    const int d = ifs.dim();
    std::vector<Root> roots;
    for (const Vec& seed : verification_mesh(Mode::Torus, d)) {
        Vec x = seed;
        Composite c = compose(ifs, w, x);
        Vec r = wrapped_difference(c.image, x);
        double res = r.cwiseAbs().maxCoeff();
        for (int it = 0; it < 60 && res >= 1e-12; ++it) {
            const Mat J = c.jacobian - Mat::Identity(d, d);
            if (std::abs(J.determinant()) < 1e-14) break;
            const Vec step = J.partialPivLu().solve(r);
            double t = 1.0;
            bool moved = false;
            while (t > 1e-4) {
                Vec trial = (x - t * step).unaryExpr([](double v) { return v - std::floor(v); });
                Composite ct = compose(ifs, w, trial);
                Vec rt = wrapped_difference(ct.image, trial);
                const double rest = rt.cwiseAbs().maxCoeff();
                if (rest < res) {
                    x = trial;
                    c = ct;
                    r = rt;
                    res = rest;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if (!moved) break;
        }
        if (!(res < 1e-12)) continue;
        bool duplicate = false;
        for (auto& known : roots) {
            if (torus_distance(known.x, x) < 1e-9) {
                if (res < known.residual) known = Root{x, res, known.radius};
                duplicate = true;
                break;
            }
        }
        if (!duplicate) roots.push_back(Root{x, res, spectral_radius(c.jacobian)});
    }
    return roots;
}

// Deterministic start frame in general position with respect to coordinate
// flags, so that forward iteration is attracted to the stable flag.
Flag generic_flag(int d, int variant)
{
    Mat m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            m(i, j) = std::sin(1.7 * (i + 1) + 0.61 * (j + 1) * (j + 2) + 0.37 * variant) + (i == j ? 1.5 : 0.0);
    return Flag::from_columns(m);
}

Mat normalized_product(const Ifs& ifs, const Word& w, const Vec& x0)
{
    const int d = ifs.dim();
    Mat P = Mat::Identity(d, d);
    Vec x = x0;
    for (int s : w) {
        const auto& g = ifs.generator(s);
        P = g.jacobian(x) * P;
        P /= P.norm();
        x = g.apply(x);
    }
    return P;
}

bool strictly_decreasing(const Vec& lambda, int p)
{
    for (int i = 0; i + 1 < lambda.size(); ++i) {
        // relative modulus gap e^{p (l_i - l_{i+1})} - 1 must reach 1e-6
        if (!(std::expm1(p * (lambda(i) - lambda(i + 1))) >= 1e-6)) return false;
    }
    return true;
}

Flag iterate_to_stable(const Ifs& ifs, const Word& w, const Vec& x0, const Flag& start, bool& converged)
{
    const int p = static_cast<int>(w.size());
    const long max_iter = std::max<long>(200, 200000 / std::max(p, 1));
    Flag F = start;
    converged = false;
    double best = std::numeric_limits<double>::infinity();
    long stalled = 0;
    for (long it = 0; it < max_iter; ++it) {
        const Flag next = derivative_along(ifs, w, x0, F).flag;
        const double move = flag_distance(next, F);
        F = next;
        if (move < 1e-14) {
            converged = true;
            break;
        }
        if (move < best * 0.999) {
            best = move;
            stalled = 0;
        } else if (++stalled > 50 && best < 1e-11) {
            converged = true;  // rounding floor reached
            break;
        }
    }
    return F;
}

}  // namespace

PeriodicOrbitRecord periodic_record_at(const Ifs& ifs, const Word& w, const Vec& x0, const Flag& F0)
{
    if (w.empty()) fail(ErrorCode::InvalidArgument, "periodic word must be nonempty");
    const int p = static_cast<int>(w.size());
    PeriodicOrbitRecord rec;
    rec.word = w;
    rec.x0 = x0;
    rec.flag = F0;
    const DerivativeAlong da = derivative_along(ifs, w, x0, F0);
    rec.lambda = da.log_diagonal / static_cast<double>(p);
    rec.residual = torus_distance(da.base, x0);
    rec.flag_residual = flag_distance(da.flag, F0);
    rec.gamma = least_gap(rec.lambda);
    rec.log_radius_base = p * rec.lambda.maxCoeff();
    const int d = ifs.dim();
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < i; ++j) worst = std::max(worst, rec.lambda(i) - rec.lambda(j));
    rec.log_radius_flag = p * worst;
    const bool flag_ok = d == 1 || rec.log_radius_flag < 0.0;
    const bool base_ok = ifs.mode() == Mode::Linear || rec.log_radius_base < 0.0;
    rec.attracting = flag_ok && base_ok;
    return rec;
}

PeriodicOrbitRecord lyapunov_vector_of_periodic(const Ifs& ifs, const Word& w, bool require_cone)
{
    if (w.empty()) fail(ErrorCode::InvalidArgument, "periodic word must be nonempty");
    check_word(w, ifs.alphabet());
    const int d = ifs.dim();
    const int p = static_cast<int>(w.size());

    Vec x0 = Vec::Zero(0);
    if (ifs.mode() == Mode::Torus) {
        const auto roots = newton_roots(ifs, w);
        if (roots.empty()) fail(ErrorCode::NoFixedPoint, "Newton failed from every mesh seed");
        const Root* pick = nullptr;
        for (const auto& r : roots) {
            if (r.radius >= 1.0) continue;
            if (!pick || r.residual < pick->residual) pick = &r;
        }
        if (!pick) {
            for (const auto& r : roots)
                if (!pick || r.residual < pick->residual) pick = &r;
        }
        x0 = pick->x;
    }

    Flag F0;
    bool have_flag = false;
    if (d == 1) {
        F0 = Flag::canonical(1);
        have_flag = true;
    } else if (p <= 64) {
        // Short words: eigenvectors of the (rescaled) product are accurate,
        // and their failure modes carry the precise error.
        F0 = stable_flag(normalized_product(ifs, w, x0));
        bool converged = false;
        F0 = iterate_to_stable(ifs, w, x0, F0, converged);
        have_flag = true;
    } else {
        for (int variant = 0; variant < 3 && !have_flag; ++variant) {
            bool converged = false;
            Flag F = iterate_to_stable(ifs, w, x0, generic_flag(d, variant), converged);
            if (!converged) continue;
            const Vec lam = derivative_along(ifs, w, x0, F).log_diagonal / static_cast<double>(p);
            if (!strictly_decreasing(lam, p)) continue;
            F0 = F;
            have_flag = true;
        }
        if (!have_flag) {
            const Mat P = normalized_product(ifs, w, x0);
            stable_flag(P);  // throws the precise ComplexPair / ModuliCollision
            fail(ErrorCode::ModuliCollision, "flag iteration did not settle on a stable flag");
        }
    }

    PeriodicOrbitRecord rec = periodic_record_at(ifs, w, x0, F0);
    if (!strictly_decreasing(rec.lambda, p))
        fail(ErrorCode::ModuliCollision, "exponents are not simple at the resolution 1e-6");
    if (require_cone && !in_cone(rec.lambda))
        fail(ErrorCode::NotInCone, "some exponent is non-negative");
    return rec;
}

}  // namespace flagifs
