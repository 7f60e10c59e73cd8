#include "flagifs/flag_core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

namespace flagifs {

namespace {

constexpr double kSingularDet = 1e-12;
constexpr double kModuliGap = 1e-6;

void check_dim(int d)
{
    if (d < 1 || d > kMaxDim)
        fail(ErrorCode::InvalidArgument, "flag dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
}

// A = Q R with diag(R) > 0. Requires A square and nonsingular.
void positive_qr(const Mat& A, Mat& Q, Mat& R)
{
    const int d = static_cast<int>(A.rows());
    Eigen::HouseholderQR<Mat> qr(A);
    Q = qr.householderQ() * Mat::Identity(d, d);
    R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < d; ++i) {
        if (R(i, i) < 0.0) {
            R.row(i) *= -1.0;
            Q.col(i) *= -1.0;
        }
    }
}

double canonical_sign(const Eigen::Ref<const Eigen::VectorXd>& col)
{
    Eigen::Index best = 0;
    double mag = -1.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
        if (std::abs(col(i)) > mag) {
            mag = std::abs(col(i));
            best = i;
        }
    }
    return col(best) < 0.0 ? -1.0 : 1.0;
}

}  // namespace

Flag Flag::canonical(int d)
{
    check_dim(d);
    Flag f;
    f.frame_ = Mat::Identity(d, d);
    return f;
}

Flag Flag::from_columns(const Mat& m)
{
    check_dim(static_cast<int>(m.rows()));
    if (m.rows() != m.cols())
        fail(ErrorCode::DimensionMismatch, "flag frame must be square");
    if (std::abs(m.determinant()) <= kSingularDet)
        fail(ErrorCode::InvalidArgument, "flag columns are linearly dependent");
    Mat q, r;
    positive_qr(m, q, r);
    return from_orthonormal(q);
}

Flag Flag::from_orthonormal(const Mat& q, Vec* signs)
{
    const int d = static_cast<int>(q.rows());
    check_dim(d);
    Flag f;
    f.frame_ = q;
    if (signs) signs->resize(d);
    for (int j = 0; j < d; ++j) {
        const double s = canonical_sign(q.col(j));
        f.frame_.col(j) *= s;
        if (signs) (*signs)(j) = s;
    }
    return f;
}

Vec UpperTriangular::log_diagonal() const
{
    return entries.diagonal().array().log().matrix();
}

std::vector<std::pair<int, int>> so_frame_index(int d)
{
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(pair_count(d)));
    for (int gap = d - 1; gap >= 1; --gap)
        for (int j = 0; j + gap < d; ++j)
            pairs.emplace_back(j + gap, j);
    return pairs;
}

QrStep qr_of(const Mat& L, const Flag& F)
{
    const int d = F.dim();
    if (L.rows() != d || L.cols() != d)
        fail(ErrorCode::DimensionMismatch, "matrix and flag dimensions differ");
    if (!(std::abs(L.determinant()) > kSingularDet))
        fail(ErrorCode::SingularMatrix, "|det L| <= 1e-12");

    QrStep out;
    Mat R;
    positive_qr(L * F.frame(), out.raw, R);
    out.r.entries = R;
    out.image = Flag::from_orthonormal(out.raw, &out.signs);
    return out;
}

Flag flag_map(const Mat& L, const Flag& F)
{
    return qr_of(L, F).image;
}

FlagDerivative derivative_matrix(const Mat& L, const Flag& F)
{
    return derivative_of(qr_of(L, F));
}

FlagDerivative derivative_of(const QrStep& step)
{
    const Mat& R = step.r.entries;
    const int d = step.r.dim();
    const Mat S = R.triangularView<Eigen::Upper>().solve(Mat::Identity(d, d));
    const auto pairs = so_frame_index(d);
    const int D = pair_count(d);

    FlagDerivative T;
    T.d = d;
    T.matrix = PairMat::Zero(D, D);
    // Column (k,l) is the image of the basis element X_kl: the below-diagonal
    // part of R X_kl R^-1 has entry r_ik * s_lj at (i,j).
    for (int col = 0; col < D; ++col) {
        const auto [k, l] = pairs[col];
        for (int row = 0; row < D; ++row) {
            const auto [i, j] = pairs[row];
            T.matrix(row, col) = R(i, k) * S(l, j);
        }
    }
    return T;
}

PairMat sign_conjugation(const Vec& signs)
{
    const int d = static_cast<int>(signs.size());
    const auto pairs = so_frame_index(d);
    PairMat m = PairMat::Zero(pair_count(d), pair_count(d));
    for (std::size_t p = 0; p < pairs.size(); ++p)
        m(p, p) = signs(pairs[p].first) * signs(pairs[p].second);
    return m;
}

Flag stable_flag(const Mat& L)
{
    const int d = static_cast<int>(L.rows());
    check_dim(d);
    if (!(std::abs(L.determinant()) > kSingularDet))
        fail(ErrorCode::SingularMatrix, "|det L| <= 1e-12");

    Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(L), true);
    if (es.info() != Eigen::Success)
        fail(ErrorCode::ComplexPair, "eigen decomposition did not converge");
    const auto values = es.eigenvalues();
    const auto vectors = es.eigenvectors();

    for (int i = 0; i < d; ++i) {
        if (std::abs(values(i).imag()) > 1e-10 * std::max(1.0, std::abs(values(i))))
            fail(ErrorCode::ComplexPair, "spectrum contains a complex conjugate pair");
    }

    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(values(a)) > std::abs(values(b)); });
    for (int i = 0; i + 1 < d; ++i) {
        const double hi = std::abs(values(order[i]));
        const double lo = std::abs(values(order[i + 1]));
        if ((hi - lo) / hi < kModuliGap)
            fail(ErrorCode::ModuliCollision, "eigenvalue moduli closer than relative gap 1e-6");
    }

    Mat V(d, d);
    for (int i = 0; i < d; ++i)
        V.col(i) = vectors.col(order[i]).real();
    return Flag::from_columns(V);
}

Vec qr_eigen_iterate(const Mat& A, int iters)
{
    if (A.rows() != A.cols())
        fail(ErrorCode::DimensionMismatch, "QR iteration needs a square matrix");
    if (!(std::abs(A.determinant()) > kSingularDet))
        fail(ErrorCode::SingularMatrix, "|det A| <= 1e-12");
    Mat current = A;
    Mat Q, R;
    for (int n = 0; n < iters; ++n) {
        positive_qr(current, Q, R);
        current = R * Q;
    }
    return current.diagonal();
}

double flag_distance(const Flag& a, const Flag& b)
{
    if (a.dim() != b.dim())
        fail(ErrorCode::DimensionMismatch, "flags of different dimension");
    double sum = 0.0;
    for (int j = 0; j < a.dim(); ++j) {
        const double minus = (a.frame().col(j) - b.frame().col(j)).squaredNorm();
        const double plus = (a.frame().col(j) + b.frame().col(j)).squaredNorm();
        sum += std::min(minus, plus);
    }
    return std::sqrt(sum);
}

}  // namespace flagifs
