#pragma once

#include "flagifs/flag_core.hpp"

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace flagifs {

enum class Mode { Linear, Torus };

const char* mode_name(Mode mode);

/// One perturbation term eps * sin(2 pi (<m, x> + phase)) * v of a torus map.
struct SineTerm {
    double amplitude = 0.0;
    std::vector<int> frequency;
    double phase = 0.0;
    Vec direction;
};

/// A single IFS generator. In linear mode the generator is the constant
/// matrix A acting on the fibre over one abstract base point, whose
/// coordinate vector is empty. In torus mode
///   g(x) = A x + b + sum_k eps_k sin(2 pi (<m_k, x> + phi_k)) v_k  (mod 1)
/// with A integral and unimodular.
class GeneratorMap {
public:
    static GeneratorMap linear(const Mat& A);
    static GeneratorMap torus(const Mat& A, const Vec& b, std::vector<SineTerm> terms);

    Mode mode() const { return mode_; }
    int dim() const { return static_cast<int>(A_.rows()); }
    const Mat& matrix() const { return A_; }
    const Vec& translation() const { return b_; }
    const std::vector<SineTerm>& terms() const { return terms_; }

    /// Image of a base point, reduced into [0,1)^d. Identity in linear mode.
    Vec apply(const Vec& x) const;
    /// Image without the reduction mod 1 (lifted map R^d -> R^d).
    Vec apply_lifted(const Vec& x) const;
    Mat jacobian(const Vec& x) const;

    /// Global bound on ||Dg(x) - A|| from the perturbation amplitudes.
    double perturbation_bound() const;
    /// Global Lipschitz constant of x -> Dg(x) in the operator norm.
    double jacobian_lipschitz() const;

private:
    Mode mode_ = Mode::Linear;
    Mat A_;
    Vec b_;
    std::vector<SineTerm> terms_;
};

/// Grid of base points used for certification and Newton seeds:
/// 1024 points on the circle, 64^2 on T^2, 32^3 on T^3, and the single
/// abstract point (an empty vector) in linear mode.
std::vector<Vec> verification_mesh(Mode mode, int d);

/// Grid spacing of verification_mesh along one axis.
double verification_spacing(int d);

class Ifs {
public:
    /// Validates the generators and computes the derivative bound C.
    explicit Ifs(std::vector<GeneratorMap> generators);

    Mode mode() const { return mode_; }
    int dim() const { return dim_; }
    int alphabet() const { return static_cast<int>(gens_.size()); }
    const GeneratorMap& generator(int s) const { return gens_.at(static_cast<std::size_t>(s)); }
    const std::vector<GeneratorMap>& generators() const { return gens_; }
    /// e^{-C} <= ||Dg^{-1}||^{-1} <= ||Dg|| <= e^{C} for every generator.
    double C() const { return C_; }
    /// Dimension of base coordinates: 0 in linear mode, d on the torus.
    int base_dim() const { return mode_ == Mode::Torus ? dim_ : 0; }

    Vec base_origin() const { return Vec::Zero(base_dim()); }

private:
    Mode mode_;
    int dim_;
    std::vector<GeneratorMap> gens_;
    double C_ = 0.0;
};

using Word = std::vector<int>;

/// Digits 0-9 then a-z; alphabets beyond 36 symbols are rejected.
std::string format_word(const Word& w);
Word parse_word(const std::string& text, int alphabet);
void check_word(const Word& w, int alphabet);

struct BundlePoint {
    Vec base;
    Flag flag;
};

/// Max-coordinate distance on the circle or torus (0 for empty vectors).
double torus_distance(const Vec& a, const Vec& b);
/// Surrogate flag-bundle metric: max of torus distance and flag distance.
double bundle_distance(const BundlePoint& a, const BundlePoint& b);

/// Point of l^Z x FM truncated to finitely many symbols. past.back() is the
/// symbol at time -1 and future.front() the symbol at time 0.
struct SkewPoint {
    std::vector<int> past;
    std::deque<int> future;
    Vec base;
    Flag flag;
};

/// g_{s_m} o ... o g_{s_1}(x) for w = s_1 ... s_m.
Vec eval_word(const Ifs& ifs, const Word& w, const Vec& x);

struct DerivativeAlong {
    Flag flag;
    UpperTriangular product;
    Vec log_diagonal;
    Vec base;
};

/// Composes qr_of along the word. The product is the triangular matrix of
/// Dg_[w](x) with respect to F; log_diagonal accumulates exactly and stays
/// finite even when the product itself over- or underflows.
DerivativeAlong derivative_along(const Ifs& ifs, const Word& w, const Vec& x, const Flag& F);

/// One step of the 1-step skew product lifted to the flag bundle.
SkewPoint skew_step(const Ifs& ifs, const SkewPoint& p);
void skew_step_inplace(const Ifs& ifs, SkewPoint& p);

/// Symbolic distance over the stored windows. Only indices |n| <= D with
/// D = min(past depth, future depth - 1) are compared; full agreement
/// gives the resolution floor 2^{-(D+1)}.
double symbolic_distance(const SkewPoint& p, const SkewPoint& q);
double skew_distance(const SkewPoint& p, const SkewPoint& q);

}  // namespace flagifs
