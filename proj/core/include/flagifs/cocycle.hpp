#pragma once

#include "flagifs/rng.hpp"
#include "flagifs/torus_ifs.hpp"

#include <optional>
#include <vector>

namespace flagifs {

/// Supplies the symbols consumed once a skew point runs out of future.
class SymbolSource {
public:
    virtual ~SymbolSource() = default;
    virtual std::optional<int> next() = 0;
};

/// Replays a word once, or forever when `cyclic`.
class WordSource : public SymbolSource {
public:
    WordSource(Word w, bool cyclic) : word_(std::move(w)), cyclic_(cyclic) {}
    std::optional<int> next() override;

private:
    Word word_;
    bool cyclic_;
    std::size_t pos_ = 0;
};

/// Independent uniform symbols from a seeded generator.
class RandomSource : public SymbolSource {
public:
    RandomSource(int alphabet, CounterRng rng) : alphabet_(alphabet), rng_(rng) {}
    std::optional<int> next() override;

private:
    int alphabet_;
    CounterRng rng_;
};

struct FurstenbergVector {
    Vec values;
    std::size_t sample_count = 0;
};

struct FurstenbergRun {
    FurstenbergVector estimate;
    SkewPoint final_point;
    /// Running averages (step, averages) every `record_every` steps.
    std::vector<std::pair<std::size_t, Vec>> running;
};

/// Birkhoff average of the one-step log-diagonal along the skew orbit.
/// Symbols come from start.future first, then from `source`.
FurstenbergRun furstenberg_estimate(const Ifs& ifs, SymbolSource* source, const SkewPoint& start,
                                    std::size_t n, std::size_t record_every = 0);

/// Lambda_i - Lambda_j for every pair (i, j), i > j, in so_frame_index order.
PairVec flag_cocycle_exponents(const Vec& lambda);

/// Entrywise average of the log diagonals.
Vec triangular_exponents(const std::vector<UpperTriangular>& rs);

/// Smallest n0 such that for every n >= n0
///   d^2 C^{2(d-1)} binom(n, d-1) e^{lambda n} <= e^{(lambda + eta) n}.
long offdiag_bound_N(int d, double C, double lambda, double eta);

struct PeriodicOrbitRecord {
    Word word;
    Vec x0;                     ///< fixed point of g_[w]; empty in linear mode
    Flag flag;                  ///< stable flag at x0
    Vec lambda;                 ///< lambda_1 >= ... >= lambda_d
    double gamma = 0.0;         ///< min(-lambda_1, lambda_1 - lambda_2, ...)
    double residual = 0.0;      ///< fixed-point residual of the base point
    double flag_residual = 0.0; ///< distance between F0 and its image
    double log_radius_base = 0.0;  ///< log spectral radius of Dg_[w](x0)
    double log_radius_flag = 0.0;  ///< log spectral radius of T along w at F0
    bool attracting = false;       ///< both radii below one

    int period() const { return static_cast<int>(word.size()); }
};

bool in_cone(const Vec& lambda);
double least_gap(const Vec& lambda);

/// Periodic record of the word w: fixed point by damped Newton from the
/// verification mesh, stable flag, exponents and contraction certificate.
/// Errors: NoFixedPoint, ModuliCollision, ComplexPair, NotInCone (only when
/// require_cone is set).
PeriodicOrbitRecord lyapunov_vector_of_periodic(const Ifs& ifs, const Word& w, bool require_cone = false);

/// Record for a known fixed point and flag (used after orbit improvement).
/// Recomputes the exponents from the word without any search.
PeriodicOrbitRecord periodic_record_at(const Ifs& ifs, const Word& w, const Vec& x0, const Flag& F0);

}  // namespace flagifs
