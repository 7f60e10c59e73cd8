#pragma once

#include "flagifs/cocycle.hpp"

#include <cstdint>
#include <vector>

namespace flagifs {

/// Sampling of base x flag space used by the maneuverability certificate.
/// Base points come from a regular grid with `base_per_axis` points per
/// coordinate. Flags are an angle grid for d = 2 and seeded Haar samples
/// (plus all coordinate flags) for d >= 3.
struct ManeuverMesh {
    int base_per_axis = 8;
    int flag_samples = 64;
    std::uint64_t seed = 1;
};

/// Sample flags for the mesh (deterministic for a given seed).
std::vector<Flag> flag_samples(int d, int count, std::uint64_t seed);

/// Sign vectors are bit masks: bit i set means t_i = -1.
inline double sign_of_mask(unsigned mask, int i) { return (mask >> i) & 1u ? -1.0 : 1.0; }

struct ManeuverCertificate {
    double c = 0.0;
    double C = 0.0;
    ManeuverMesh mesh;
    int dim = 0;
    std::vector<int> generators;  ///< generator subset this certificate covers
    std::vector<Vec> base_points;
    std::vector<Flag> flags;
    /// witness[cell * 2^d + mask] = generator index (into the IFS)
    std::vector<int> witness;
    /// margin[cell * 2^d + mask] = min_i t_i log M_ii for that witness
    std::vector<double> margin;

    std::size_t cell_count() const { return base_points.size() * flags.size(); }
    unsigned mask_count() const { return 1u << dim; }
    /// Nearest mesh cell to (x, F) under the surrogate metric.
    std::size_t nearest_cell(const Vec& x, const Flag& F) const;
    int witness_for(std::size_t cell, unsigned mask) const { return witness[cell * mask_count() + mask]; }
};

/// c = min over cells and sign vectors t of max over generators of
/// min_i t_i log M_ii. Throws NotManeuverable naming the worst (cell, t) when
/// c <= 0. `subset` restricts the generators (empty = all).
ManeuverCertificate certify_maneuverability(const Ifs& ifs, const ManeuverMesh& mesh,
                                            const std::vector<int>& subset = {});

/// Rule for the sign vector at step n of the greedy synthesizer.
enum class SignRule {
    /// sign(delta^(n) + chi): the sign of the deviation the step must cancel.
    /// Keeps every prefix deviation within C.
    LookAhead,
    /// sign(delta^(n)) with sign(0) = +1, taken literally.
    Deviation,
};

struct PrescribeTrace {
    Word word;
    std::vector<Vec> deviations;     ///< delta^(n) for n = 0..q
    std::vector<Vec> log_diagonals;  ///< lambda^(n) for n = 0..q-1
    Vec average;
    Vec chi;
    double eta = 0.0;
    int q = 0;
    int witness_misses = 0;  ///< steps rescued by the local search
    BundlePoint end;
};

/// Greedy word of length q = ceil(C / eta) whose averaged log-diagonals
/// approach chi. Throws InvalidArgument when |chi_i| > c and WitnessMiss when
/// no generator realizes the required sign vector at an orbit point.
PrescribeTrace prescribe_word(const Ifs& ifs, const ManeuverCertificate& cert, const BundlePoint& start,
                              const Vec& chi, double eta, SignRule rule = SignRule::LookAhead);

struct ZeroOrbit {
    Word word;
    std::vector<int> theta;
    Vec max_running;     ///< max_n |sum_{j<=n} log M_ii| per coordinate
    Vec final_sum;       ///< sum over the whole orbit
    Vec average;         ///< final_sum / n
    int witness_misses = 0;
    BundlePoint end;
};

/// Forward zero-exponent orbit driven by a binary coding theta: symbol n is
/// drawn from the first half of the alphabet when theta_n = 0 and from the
/// second half otherwise, with every coordinate stepping against the sign of
/// its running sum. `record` receives (step, symbol, log-diagonal, running).
ZeroOrbit zero_exponent_orbit(const Ifs& ifs, const ManeuverCertificate& first_half,
                              const ManeuverCertificate& second_half, const std::vector<int>& theta,
                              const BundlePoint& start);

/// theta coding of a word: 0 for symbols below ell/2, 1 otherwise.
std::vector<int> theta_of(const Word& w, int alphabet);

struct BlockCoverage {
    int k = 0;
    std::size_t seen = 0;
    std::size_t total = 0;
    bool complete() const { return seen == total; }
};

/// Census of binary k-blocks (k <= 12) occurring in the given codings.
BlockCoverage entropy_block_coverage(const std::vector<std::vector<int>>& codings, int k);

}  // namespace flagifs
