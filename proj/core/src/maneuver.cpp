#include "flagifs/maneuver.hpp"

#include "flagifs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace flagifs {

namespace {

Vec one_step_log_diagonal(const Ifs& ifs, int s, const Vec& x, const Flag& F)
{
    return qr_of(ifs.generator(s).jacobian(x), F).r.log_diagonal();
}

double pattern_margin(const Vec& logd, unsigned mask)
{
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < logd.size(); ++i) m = std::min(m, sign_of_mask(mask, i) * logd(i));
    return m;
}

std::vector<Vec> base_grid(const Ifs& ifs, int per_axis)
{
    if (ifs.mode() == Mode::Linear) return {Vec::Zero(0)};
    const int d = ifs.dim();
    int total = 1;
    for (int i = 0; i < d; ++i) total *= per_axis;
    std::vector<Vec> pts;
    for (int idx = 0; idx < total; ++idx) {
        Vec x(d);
        int rest = idx;
        for (int i = 0; i < d; ++i) {
            x(i) = static_cast<double>(rest % per_axis) / per_axis;
            rest /= per_axis;
        }
        pts.push_back(x);
    }
    return pts;
}

struct Choice {
    int generator = -1;
    Vec logd;
    bool rescued = false;
};

// Re-verifies the cached witness at the true point and falls back to a
// search over the allowed generators. Preference order: a generator whose
// signs match with |lambda_i| >= floor_i, then any strict sign match.
Choice choose(const Ifs& ifs, const ManeuverCertificate& cert, const Vec& x, const Flag& F, unsigned mask,
              const Vec& floor)
{
    auto score = [&](const Vec& logd) {
        double m = std::numeric_limits<double>::infinity();
        for (int i = 0; i < logd.size(); ++i) m = std::min(m, sign_of_mask(mask, i) * logd(i) - floor(i));
        return m;
    };
    const int witness = cert.witness_for(cert.nearest_cell(x, F), mask);
    Vec logd = one_step_log_diagonal(ifs, witness, x, F);
    if (score(logd) >= 0.0) return {witness, logd, false};

    Choice best;
    double best_score = -std::numeric_limits<double>::infinity();
    double best_margin = -std::numeric_limits<double>::infinity();
    Choice fallback;
    for (int g : cert.generators) {
        Vec ld = one_step_log_diagonal(ifs, g, x, F);
        const double s = score(ld);
        if (s > best_score) {
            best_score = s;
            best = {g, ld, true};
        }
        const double m = pattern_margin(ld, mask);
        if (m > best_margin) {
            best_margin = m;
            fallback = {g, ld, true};
        }
    }
    if (best_score >= 0.0) return best;
    if (best_margin > 0.0) return fallback;
    fail(ErrorCode::WitnessMiss, "no generator realizes the required sign vector at the orbit point");
}

}  // namespace

std::vector<Flag> flag_samples(int d, int count, std::uint64_t seed)
{
    std::vector<Flag> out;
    if (d == 1) return {Flag::canonical(1)};
    if (d == 2) {
        for (int k = 0; k < count; ++k) {
            const double a = std::numbers::pi * k / count;
            Mat m(2, 2);
            m << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
            out.push_back(Flag::from_orthonormal(m));
        }
        return out;
    }
    std::vector<int> perm(static_cast<std::size_t>(d));
    std::iota(perm.begin(), perm.end(), 0);
    do {
        Mat m = Mat::Zero(d, d);
        for (int j = 0; j < d; ++j) m(perm[static_cast<std::size_t>(j)], j) = 1.0;
        out.push_back(Flag::from_orthonormal(m));
    } while (std::next_permutation(perm.begin(), perm.end()));
    CounterRng rng(seed, 0xF1A6);
    while (static_cast<int>(out.size()) < count) out.push_back(Flag::from_orthonormal(random_orthogonal(rng, d)));
    return out;
}

std::size_t ManeuverCertificate::nearest_cell(const Vec& x, const Flag& F) const
{
    std::size_t base_idx = 0;
    if (x.size() > 0) {
        const int n = mesh.base_per_axis;
        std::size_t stride = 1;
        for (int i = 0; i < x.size(); ++i) {
            long k = std::lround(x(i) * n) % n;
            if (k < 0) k += n;
            base_idx += static_cast<std::size_t>(k) * stride;
            stride *= static_cast<std::size_t>(n);
        }
    }
    std::size_t flag_idx = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < flags.size(); ++k) {
        const double dist = flag_distance(flags[k], F);
        if (dist < best) {
            best = dist;
            flag_idx = k;
        }
    }
    return base_idx * flags.size() + flag_idx;
}

ManeuverCertificate certify_maneuverability(const Ifs& ifs, const ManeuverMesh& mesh, const std::vector<int>& subset)
{
    if (mesh.base_per_axis < 1 || mesh.flag_samples < 1)
        fail(ErrorCode::InvalidArgument, "maneuverability mesh must be nonempty");
    ManeuverCertificate cert;
    cert.C = ifs.C();
    cert.mesh = mesh;
    cert.dim = ifs.dim();
    cert.generators = subset;
    if (cert.generators.empty()) {
        cert.generators.resize(static_cast<std::size_t>(ifs.alphabet()));
        std::iota(cert.generators.begin(), cert.generators.end(), 0);
    }
    for (int g : cert.generators)
        if (g < 0 || g >= ifs.alphabet()) fail(ErrorCode::InvalidArgument, "generator subset outside the alphabet");
    cert.base_points = base_grid(ifs, mesh.base_per_axis);
    cert.flags = flag_samples(ifs.dim(), mesh.flag_samples, mesh.seed);

    const std::size_t cells = cert.cell_count();
    const unsigned masks = cert.mask_count();
    cert.witness.assign(cells * masks, -1);
    cert.margin.assign(cells * masks, -std::numeric_limits<double>::infinity());
    parallel_for(cells, [&](std::size_t cell) {
        const Vec& x = cert.base_points[cell / cert.flags.size()];
        const Flag& F = cert.flags[cell % cert.flags.size()];
        for (int g : cert.generators) {
            const Vec logd = one_step_log_diagonal(ifs, g, x, F);
            for (unsigned mask = 0; mask < masks; ++mask) {
                const double m = pattern_margin(logd, mask);
                const std::size_t slot = cell * masks + mask;
                if (m > cert.margin[slot]) {
                    cert.margin[slot] = m;
                    cert.witness[slot] = g;
                }
            }
        }
    });

    std::size_t worst = 0;
    for (std::size_t slot = 1; slot < cert.margin.size(); ++slot)
        if (cert.margin[slot] < cert.margin[worst]) worst = slot;
    cert.c = cert.margin[worst];
    if (!(cert.c > 0.0)) {
        const std::size_t cell = worst / masks;
        std::string t;
        for (int i = 0; i < cert.dim; ++i) t += sign_of_mask(static_cast<unsigned>(worst % masks), i) > 0 ? '+' : '-';
        fail(ErrorCode::NotManeuverable, "margin " + std::to_string(cert.c) + " at cell " + std::to_string(cell) +
                                             " (base " + std::to_string(cell / cert.flags.size()) + ", flag " +
                                             std::to_string(cell % cert.flags.size()) + ") for sign vector " + t);
    }
    return cert;
}

PrescribeTrace prescribe_word(const Ifs& ifs, const ManeuverCertificate& cert, const BundlePoint& start,
                              const Vec& chi, double eta, SignRule rule)
{
    const int d = ifs.dim();
    if (chi.size() != d) fail(ErrorCode::DimensionMismatch, "target vector has wrong length");
    if (!(eta > 0.0)) fail(ErrorCode::InvalidArgument, "precision eta must be positive");
    for (int i = 0; i < d; ++i)
        if (std::abs(chi(i)) > cert.c * (1.0 + 1e-12))
            fail(ErrorCode::InvalidArgument, "target outside [-c, c] with c = " + std::to_string(cert.c));

    PrescribeTrace tr;
    tr.chi = chi;
    tr.eta = eta;
    tr.q = static_cast<int>(std::ceil(ifs.C() / eta));
    Vec delta = Vec::Zero(d);
    Vec sum = Vec::Zero(d);
    tr.deviations.push_back(delta);
    Vec x = start.base;
    Flag F = start.flag;
    const Vec floor = chi.cwiseAbs();
    for (int n = 0; n < tr.q; ++n) {
        const Vec u = rule == SignRule::LookAhead ? Vec(delta + chi) : delta;
        unsigned mask = 0;
        for (int i = 0; i < d; ++i)
            if (u(i) < 0.0) mask |= 1u << i;
        const Choice c = choose(ifs, cert, x, F, mask, floor);
        if (c.rescued) ++tr.witness_misses;
        const auto& g = ifs.generator(c.generator);
        F = flag_map(g.jacobian(x), F);
        x = g.apply(x);
        sum += c.logd;
        delta = static_cast<double>(n + 1) * chi - sum;
        tr.word.push_back(c.generator);
        tr.log_diagonals.push_back(c.logd);
        tr.deviations.push_back(delta);
    }
    tr.average = sum / static_cast<double>(tr.q);
    tr.end = {x, F};
    return tr;
}

ZeroOrbit zero_exponent_orbit(const Ifs& ifs, const ManeuverCertificate& first_half,
                              const ManeuverCertificate& second_half, const std::vector<int>& theta,
                              const BundlePoint& start)
{
    const int ell = ifs.alphabet();
    if (ell % 2 != 0) fail(ErrorCode::InvalidArgument, "bi-maneuverability needs an even number of generators");
    auto inside = [](const ManeuverCertificate& c, int lo, int hi) {
        return std::all_of(c.generators.begin(), c.generators.end(), [&](int g) { return g >= lo && g < hi; });
    };
    if (!inside(first_half, 0, ell / 2) || !inside(second_half, ell / 2, ell))
        fail(ErrorCode::InvalidArgument, "certificates must cover the first and second half of the alphabet");

    const int d = ifs.dim();
    ZeroOrbit out;
    out.theta = theta;
    out.max_running = Vec::Zero(d);
    Vec running = Vec::Zero(d);
    Vec x = start.base;
    Flag F = start.flag;
    const Vec no_floor = Vec::Zero(d);
    out.word.reserve(theta.size());
    for (int bit : theta) {
        if (bit != 0 && bit != 1) fail(ErrorCode::InvalidArgument, "theta must be a binary sequence");
        // negative step where the running sum is positive, positive otherwise
        unsigned mask = 0;
        for (int i = 0; i < d; ++i)
            if (running(i) > 0.0) mask |= 1u << i;
        const Choice c = choose(ifs, bit == 0 ? first_half : second_half, x, F, mask, no_floor);
        if (c.rescued) ++out.witness_misses;
        const auto& g = ifs.generator(c.generator);
        F = flag_map(g.jacobian(x), F);
        x = g.apply(x);
        running += c.logd;
        out.max_running = out.max_running.cwiseMax(running.cwiseAbs());
        out.word.push_back(c.generator);
    }
    out.final_sum = running;
    out.average = theta.empty() ? Vec(Vec::Zero(d)) : Vec(running / static_cast<double>(theta.size()));
    out.end = {x, F};
    return out;
}

std::vector<int> theta_of(const Word& w, int alphabet)
{
    std::vector<int> out;
    out.reserve(w.size());
    for (int s : w) out.push_back(s < alphabet / 2 ? 0 : 1);
    return out;
}

BlockCoverage entropy_block_coverage(const std::vector<std::vector<int>>& codings, int k)
{
    if (k < 1 || k > 12) fail(ErrorCode::InvalidArgument, "block length must lie in [1, 12]");
    BlockCoverage cov;
    cov.k = k;
    cov.total = std::size_t{1} << k;
    std::vector<char> seen(cov.total, 0);
    const unsigned mask = static_cast<unsigned>(cov.total - 1);
    for (const auto& c : codings) {
        unsigned code = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            code = ((code << 1) | static_cast<unsigned>(c[i] & 1)) & mask;
            if (i + 1 >= static_cast<std::size_t>(k)) seen[code] = 1;
        }
    }
    cov.seen = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
    return cov;
}

}  // namespace flagifs
