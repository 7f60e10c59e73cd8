#include "flagifs/torus_ifs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flagifs {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_unit(double v)
{
    double r = v - std::floor(v);
    if (r >= 1.0) r = 0.0;  // floor rounding for values just below an integer
    return r;
}

double phase_of(const SineTerm& t, const Vec& x)
{
    double s = t.phase;
    for (int i = 0; i < x.size(); ++i)
        s += t.frequency[static_cast<std::size_t>(i)] * x(i);
    return kTwoPi * s;
}

double int_norm(const std::vector<int>& m)
{
    double s = 0.0;
    for (int v : m) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

struct SingularRange {
    double hi;
    double lo;
};

SingularRange singular_range(const Mat& M)
{
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& s = svd.singularValues();
    return {s(0), s(s.size() - 1)};
}

}  // namespace

const char* mode_name(Mode mode)
{
    return mode == Mode::Linear ? "linear" : "torus";
}

GeneratorMap GeneratorMap::linear(const Mat& A)
{
    if (A.rows() != A.cols() || A.rows() < 1 || A.rows() > kMaxDim)
        fail(ErrorCode::InvalidArgument, "linear generator must be a square matrix of size 1..4");
    if (!(std::abs(A.determinant()) > 1e-12))
        fail(ErrorCode::SingularMatrix, "linear generator has |det A| <= 1e-12");
    GeneratorMap g;
    g.mode_ = Mode::Linear;
    g.A_ = A;
    g.b_ = Vec::Zero(0);
    return g;
}

GeneratorMap GeneratorMap::torus(const Mat& A, const Vec& b, std::vector<SineTerm> terms)
{
    const int d = static_cast<int>(A.rows());
    if (A.cols() != d || d < 1 || d > 3)
        fail(ErrorCode::InvalidArgument, "torus generator must be square of size 1..3");
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (A(i, j) != std::round(A(i, j)))
                fail(ErrorCode::InvalidArgument, "torus lattice matrix must have integer entries");
    if (std::abs(std::abs(A.determinant()) - 1.0) > 1e-9)
        fail(ErrorCode::InvalidArgument, "torus lattice matrix must have det +-1");
    if (b.size() != d)
        fail(ErrorCode::DimensionMismatch, "translation has wrong length");
    for (const auto& t : terms) {
        if (static_cast<int>(t.frequency.size()) != d || t.direction.size() != d)
            fail(ErrorCode::DimensionMismatch, "perturbation term has wrong length");
        if (std::abs(t.direction.norm() - 1.0) > 1e-9)
            fail(ErrorCode::InvalidArgument, "perturbation direction must be a unit vector");
    }

    GeneratorMap g;
    g.mode_ = Mode::Torus;
    g.A_ = A;
    g.b_ = b.unaryExpr([](double v) { return wrap_unit(v); });
    g.terms_ = std::move(terms);

    // g is a diffeomorphism of T^d as soon as A + P(x) stays invertible
    // along the straight homotopy, i.e. sup ||Dg - A|| < 1/||A^-1||.
    const double sigma_min = singular_range(A).lo;
    double sup = 0.0;
    for (const Vec& x : verification_mesh(Mode::Torus, d))
        sup = std::max(sup, singular_range(g.jacobian(x) - A).hi);
    const double half_cell = 0.5 * verification_spacing(d) * std::sqrt(static_cast<double>(d));
    const double certified = std::min(sup + g.jacobian_lipschitz() * half_cell, g.perturbation_bound());
    if (!(certified < sigma_min))
        fail(ErrorCode::InvalidArgument,
             "perturbation too large: sup ||Dg - A|| bound " + std::to_string(certified) +
                 " is not below 1/||A^-1|| = " + std::to_string(sigma_min));
    return g;
}

Vec GeneratorMap::apply_lifted(const Vec& x) const
{
    if (mode_ == Mode::Linear) return x;
    Vec y = A_ * x + b_;
    for (const auto& t : terms_)
        y += t.amplitude * std::sin(phase_of(t, x)) * t.direction;
    return y;
}

Vec GeneratorMap::apply(const Vec& x) const
{
    if (mode_ == Mode::Linear) return x;
    return apply_lifted(x).unaryExpr([](double v) { return wrap_unit(v); });
}

Mat GeneratorMap::jacobian(const Vec& x) const
{
    Mat J = A_;
    if (mode_ == Mode::Linear) return J;
    const int d = dim();
    for (const auto& t : terms_) {
        const double c = kTwoPi * t.amplitude * std::cos(phase_of(t, x));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                J(i, j) += c * t.direction(i) * t.frequency[static_cast<std::size_t>(j)];
    }
    return J;
}

double GeneratorMap::perturbation_bound() const
{
    double s = 0.0;
    for (const auto& t : terms_)
        s += kTwoPi * std::abs(t.amplitude) * t.direction.norm() * int_norm(t.frequency);
    return s;
}

double GeneratorMap::jacobian_lipschitz() const
{
    double s = 0.0;
    for (const auto& t : terms_) {
        const double m = int_norm(t.frequency);
        s += kTwoPi * kTwoPi * std::abs(t.amplitude) * t.direction.norm() * m * m;
    }
    return s;
}

double verification_spacing(int d)
{
    switch (d) {
    case 1: return 1.0 / 1024.0;
    case 2: return 1.0 / 64.0;
    default: return 1.0 / 32.0;
    }
}

std::vector<Vec> verification_mesh(Mode mode, int d)
{
    if (mode == Mode::Linear) return {Vec::Zero(0)};
    const double h = verification_spacing(d);
    const int n = static_cast<int>(std::lround(1.0 / h));
    std::vector<Vec> pts;
    int total = 1;
    for (int i = 0; i < d; ++i) total *= n;
    pts.reserve(static_cast<std::size_t>(total));
    for (int idx = 0; idx < total; ++idx) {
        Vec x(d);
        int rest = idx;
        for (int i = 0; i < d; ++i) {
            x(i) = (rest % n) * h;
            rest /= n;
        }
        pts.push_back(x);
    }
    return pts;
}

Ifs::Ifs(std::vector<GeneratorMap> generators) : gens_(std::move(generators))
{
    if (gens_.empty())
        fail(ErrorCode::InvalidArgument, "an IFS needs at least one generator");
    if (gens_.size() > 36)
        fail(ErrorCode::InvalidArgument, "at most 36 generators are supported");
    mode_ = gens_.front().mode();
    dim_ = gens_.front().dim();
    for (const auto& g : gens_) {
        if (g.mode() != mode_ || g.dim() != dim_)
            fail(ErrorCode::DimensionMismatch, "generators must share mode and dimension");
    }

    double C = 0.0;
    for (const auto& g : gens_) {
        if (mode_ == Mode::Linear) {
            const auto r = singular_range(g.matrix());
            C = std::max({C, std::log(r.hi), -std::log(r.lo)});
            continue;
        }
        // Mesh maximum plus a Lipschitz slack for log of singular values,
        // capped by the closed-form bound from the perturbation amplitudes.
        const auto base = singular_range(g.matrix());
        const double P = g.perturbation_bound();
        const double analytic = std::max(std::log(base.hi + P), -std::log(base.lo - P));
        double mesh = 0.0;
        for (const Vec& x : verification_mesh(mode_, dim_)) {
            const auto r = singular_range(g.jacobian(x));
            mesh = std::max({mesh, std::log(r.hi), -std::log(r.lo)});
        }
        const double half_cell = 0.5 * verification_spacing(dim_) * std::sqrt(static_cast<double>(dim_));
        const double slack = g.jacobian_lipschitz() * half_cell / (base.lo - P);
        C = std::max(C, std::min(mesh + slack, analytic));
    }
    // Isometries give C = 0; keep C strictly positive so that step counts
    // such as ceil(C / eta) stay meaningful.
    C_ = std::max(C, 1e-12);
}

std::string format_word(const Word& w)
{
    static const char* digits = "0123456789abcdefghijklmnopqrstuvwxyz";
    std::string s;
    s.reserve(w.size());
    for (int c : w) s.push_back(digits[c]);
    return s;
}

Word parse_word(const std::string& text, int alphabet)
{
    Word w;
    w.reserve(text.size());
    for (char ch : text) {
        int v = -1;
        if (ch >= '0' && ch <= '9') v = ch - '0';
        else if (ch >= 'a' && ch <= 'z') v = ch - 'a' + 10;
        if (v < 0 || v >= alphabet)
            fail(ErrorCode::InvalidArgument, std::string("symbol '") + ch + "' outside the alphabet");
        w.push_back(v);
    }
    return w;
}

void check_word(const Word& w, int alphabet)
{
    for (int s : w)
        if (s < 0 || s >= alphabet)
            fail(ErrorCode::InvalidArgument, "word symbol outside the alphabet");
}

double torus_distance(const Vec& a, const Vec& b)
{
    if (a.size() != b.size())
        fail(ErrorCode::DimensionMismatch, "base points of different dimension");
    double m = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        double t = std::abs(a(i) - b(i));
        t -= std::floor(t);
        m = std::max(m, std::min(t, 1.0 - t));
    }
    return m;
}

double bundle_distance(const BundlePoint& a, const BundlePoint& b)
{
    return std::max(torus_distance(a.base, b.base), flag_distance(a.flag, b.flag));
}

Vec eval_word(const Ifs& ifs, const Word& w, const Vec& x)
{
    check_word(w, ifs.alphabet());
    Vec y = x;
    for (int s : w) y = ifs.generator(s).apply(y);
    return y;
}

DerivativeAlong derivative_along(const Ifs& ifs, const Word& w, const Vec& x, const Flag& F)
{
    check_word(w, ifs.alphabet());
    const int d = ifs.dim();
    if (F.dim() != d)
        fail(ErrorCode::DimensionMismatch, "flag dimension differs from the IFS");
    DerivativeAlong out;
    out.flag = F;
    out.base = x;
    out.product.entries = Mat::Identity(d, d);
    out.log_diagonal = Vec::Zero(d);
    // The composite reads Q_k P_k with P_k the positive-diagonal factor and
    // Q_k = frame(F_k) diag(t_k). One more step gives
    // P_{k+1} = diag(t_k) R diag(t_k) P_k and t_{k+1} = s_{k+1} t_k.
    Vec orient = Vec::Ones(d);
    for (int s : w) {
        const auto& g = ifs.generator(s);
        const QrStep step = qr_of(g.jacobian(out.base), out.flag);
        out.product.entries = orient.asDiagonal() * step.r.entries * orient.asDiagonal() * out.product.entries;
        out.log_diagonal += step.r.log_diagonal();
        orient = step.signs.cwiseProduct(orient);
        out.flag = step.image;
        out.base = g.apply(out.base);
    }
    return out;
}

void skew_step_inplace(const Ifs& ifs, SkewPoint& p)
{
    if (p.future.empty())
        fail(ErrorCode::ExhaustedFuture, "skew_step needs at least one future symbol");
    const int s = p.future.front();
    if (s < 0 || s >= ifs.alphabet())
        fail(ErrorCode::InvalidArgument, "future symbol outside the alphabet");
    const auto& g = ifs.generator(s);
    p.flag = flag_map(g.jacobian(p.base), p.flag);
    p.base = g.apply(p.base);
    p.future.pop_front();
    p.past.push_back(s);
}

SkewPoint skew_step(const Ifs& ifs, const SkewPoint& p)
{
    SkewPoint q = p;
    skew_step_inplace(ifs, q);
    return q;
}

double symbolic_distance(const SkewPoint& p, const SkewPoint& q)
{
    if (p.past.size() != q.past.size() || p.future.size() != q.future.size())
        fail(ErrorCode::DimensionMismatch, "symbol windows of different depth");
    const long depth = std::min(static_cast<long>(p.past.size()), static_cast<long>(p.future.size()) - 1);
    const std::size_t r = p.past.size();
    for (long n = 0; n <= depth; ++n) {
        if (p.future[static_cast<std::size_t>(n)] != q.future[static_cast<std::size_t>(n)])
            return std::ldexp(1.0, static_cast<int>(-n));
        if (n >= 1 && p.past[r - static_cast<std::size_t>(n)] != q.past[r - static_cast<std::size_t>(n)])
            return std::ldexp(1.0, static_cast<int>(-n));
    }
    return std::ldexp(1.0, static_cast<int>(-(depth + 1)));
}

double skew_distance(const SkewPoint& p, const SkewPoint& q)
{
    if (p.base.size() != q.base.size() || p.flag.dim() != q.flag.dim())
        fail(ErrorCode::DimensionMismatch, "skew points of different dimension");
    return std::max({symbolic_distance(p, q), torus_distance(p.base, q.base), flag_distance(p.flag, q.flag)});
}

}  // namespace flagifs
