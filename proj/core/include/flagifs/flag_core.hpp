#pragma once

#include "flagifs/types.hpp"

#include <utility>
#include <vector>

namespace flagifs {

/// A complete flag of R^d stored as an orthonormal frame. Column i together
/// with the columns before it spans the i-th subspace. Frames are kept in a
/// canonical sign convention: the largest-magnitude entry of every column is
/// positive (lowest row index on ties), which picks one representative of the
/// up-to-sign class of a non-oriented flag.
class Flag {
public:
    Flag() = default;

    /// The flag spanned by the standard basis e_1, ..., e_d.
    static Flag canonical(int d);

    /// Flag whose i-th subspace is spanned by the first i columns of `m`.
    /// Columns are re-orthonormalized before the sign convention is applied.
    static Flag from_columns(const Mat& m);

    /// Adopt an already orthonormal frame, only fixing column signs. When
    /// `signs` is given it receives s with canonical = q * diag(s).
    static Flag from_orthonormal(const Mat& q, Vec* signs = nullptr);

    int dim() const { return static_cast<int>(frame_.rows()); }
    const Mat& frame() const { return frame_; }

private:
    Mat frame_;
};

/// Upper-triangular matrix with positive diagonal. Produced by qr_of, where it
/// is the matrix of L with respect to the frames of F and of its image.
struct UpperTriangular {
    Mat entries;

    int dim() const { return static_cast<int>(entries.rows()); }
    Vec diagonal() const { return entries.diagonal(); }
    Vec log_diagonal() const;
};

/// Index pairs (i, j), zero-based with j < i, in the canonical so(d) order:
/// pairs with i - j = d - 1 first, then d - 2, and so on; increasing j
/// within each group. For d = 3 this is (2,0); (1,0), (2,1).
std::vector<std::pair<int, int>> so_frame_index(int d);

inline int pair_count(int d) { return d * (d - 1) / 2; }

/// Matrix of the derivative of the induced flag map in canonical so(d)
/// frames, indexed by so_frame_index on both axes. The entry at row (i,j),
/// column (k,l) vanishes unless k >= i > j >= l, so with the group order of
/// so_frame_index every nonzero entry sits on or below the diagonal.
struct FlagDerivative {
    int d = 0;
    PairMat matrix;
};

struct QrStep {
    Flag image;          ///< image flag, canonical signs
    UpperTriangular r;   ///< L * frame(F) = raw * r, positive diagonal
    Mat raw;             ///< orthonormal factor before sign canonicalization
    Vec signs;           ///< image.frame() = raw * diag(signs)
};

/// Householder QR of L * frame(F) with positive diagonal.
/// Throws SingularMatrix when |det L| <= 1e-12.
QrStep qr_of(const Mat& L, const Flag& F);

Flag flag_map(const Mat& L, const Flag& F);

/// T(L, F). The input side uses the canonical frame of F; the output side
/// uses the oriented image of that frame, so the diagonal entry at (i, j)
/// is exactly r_ii / r_jj and the entry ((i,j),(k,l)) is r_ik * (R^-1)_lj.
FlagDerivative derivative_matrix(const Mat& L, const Flag& F);
/// Same matrix from an already computed factorization.
FlagDerivative derivative_of(const QrStep& step);

/// Change of output frame from the oriented image to the canonical one:
/// diagonal matrix with entry s_i * s_j at pair (i, j). Chaining two steps
/// reads T(L2 L1, F) = P * T(L2, F1) * P * T(L1, F) with
/// P = sign_conjugation(s1), since the oriented image of L2 L1 differs from
/// that of L2 at F1 by the same signs.
PairMat sign_conjugation(const Vec& signs);

/// Flag of eigenvectors ordered by decreasing eigenvalue modulus.
/// Throws ComplexPair for non-real spectra and ModuliCollision when two
/// consecutive moduli are within relative gap 1e-6.
Flag stable_flag(const Mat& L);

/// Unshifted QR algorithm: A_{n+1} = R_n Q_n. Returns the diagonal of A_iters.
Vec qr_eigen_iterate(const Mat& A, int iters);

/// Frobenius distance between frames minimized over column signs.
double flag_distance(const Flag& a, const Flag& b);

}  // namespace flagifs
