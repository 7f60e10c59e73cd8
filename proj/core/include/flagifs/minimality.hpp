#pragma once

#include "flagifs/cocycle.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flagifs {

/// Open ball in the flag bundle under the surrogate metric.
struct Ball {
    BundlePoint center;
    double radius = 0.0;

    bool contains(const BundlePoint& p) const { return bundle_distance(center, p) < radius; }
};

/// Upper bound on the surrogate diameter of l^Z x FM (symbolic part included).
double skew_diameter(const Ifs& ifs);

/// Image of a bundle point under the word.
BundlePoint apply_word(const Ifs& ifs, const Word& w, const BundlePoint& p);

/// Preimage of a bundle point under the word. Torus generators are inverted
/// by Newton's method on the lift.
BundlePoint preimage_word(const Ifs& ifs, const Word& w, const BundlePoint& p);

/// Uniform-ish sample of a ball: the center first, then seeded perturbations
/// whose surrogate distance to the center is below the radius.
std::vector<BundlePoint> sample_ball(const Ifs& ifs, const Ball& ball, int count, std::uint64_t seed);

/// Derivative of the lifted bundle map h_[prefix] along a word, kept as
/// normalized matrices plus log scales so long words neither overflow nor
/// underflow. Norms are Frobenius norms, an upper bound for operator norms.
class BundleJacobian {
public:
    BundleJacobian(const Ifs& ifs, const BundlePoint& start);

    void step(int symbol);
    /// Log of the surrogate Lipschitz factor of the prefix map at the start.
    double log_norm() const;
    const BundlePoint& point() const { return point_; }

private:
    const Ifs* ifs_;
    BundlePoint point_;
    Mat base_;
    double base_log_ = 0.0;
    PairMat flag_;
    double flag_log_ = 0.0;
    Vec signs_;
    bool first_ = true;
};

struct GoHomeOptions {
    /// Levels are enumerated exhaustively while they hold at most this many
    /// words; past that, children falling into an already visited quantized
    /// cell are pruned.
    std::size_t exact_level_cap = std::size_t{1} << 17;
    /// Hard cap on stored nodes across all levels.
    std::size_t node_budget = 4'000'000;
};

using BundlePredicate = std::function<bool(const BundlePoint&)>;

/// Shortest word (shortlex among words of length <= kmax while the search is
/// exhaustive) driving `start` into the target ball. Throws NotReached.
Word go_home(const Ifs& ifs, const Ball& target, const BundlePoint& start, int kmax, const GoHomeOptions& opt = {});

/// Same search for an arbitrary target set; `quantum` is the pruning cell size.
Word go_home_to(const Ifs& ifs, const BundlePredicate& target, double quantum, const BundlePoint& start, int kmax,
                const GoHomeOptions& opt = {});

/// Product mesh of the flag bundle such that every point lies within
/// `spacing` of a mesh point. Flags are sampled (not gridded) for d >= 3.
struct BundleMesh {
    std::vector<Vec> bases;
    std::vector<Flag> flags;
    double spacing = 0.0;
    bool sampled = false;
    int base_per_axis = 1;

    std::size_t size() const { return bases.size() * flags.size(); }
    BundlePoint point(std::size_t i) const { return {bases[i / flags.size()], flags[i % flags.size()]}; }
    /// Index of the mesh point nearest to p (always within `spacing` when
    /// the mesh is not sampled).
    std::size_t nearest(const BundlePoint& p) const;
};

BundleMesh dense_mesh(const Ifs& ifs, double spacing, std::uint64_t seed = 1);

/// Smallest m with 2^{-m} <= delta.
int tour_depth(double delta);

struct MeshWitness {
    std::size_t mesh_index = 0;
    Word block;
    long orbit_index = -1;
    double distance = 0.0;
};

struct TourReport {
    Word word;
    double delta = 0.0;
    double delta_achieved = 0.0;  ///< certified upper bound over the census
    int depth = 0;
    bool dense = false;
    bool sampled = false;  ///< census or mesh was subsampled
    bool endpoint_in_target = false;
    std::size_t mesh_size = 0;
    std::size_t block_census = 0;  ///< blocks enumerated (of l^{2m+1})
    std::vector<MeshWitness> witnesses;
    BundlePoint end;
};

struct TourOptions {
    std::size_t block_cap = 4096;
    std::size_t pair_cap = 0;  ///< 0 means every (mesh point, block) pair
    int kmax = 12;
    std::uint64_t seed = 1;
    GoHomeOptions go_home;
};

/// Word visiting every (mesh point, block) pair of the census and ending in U.
TourReport tour_and_go_home(const Ifs& ifs, double delta, const Ball& U, const BundlePoint& start, int depth,
                            const TourOptions& opt = {});

/// Recomputes the density verdict of a word from scratch. The symbolic
/// window of time t must lie inside the word, so any past completion gives
/// the same answer.
void assess_density(const Ifs& ifs, const BundlePoint& start, const BundleMesh& mesh,
                    const std::vector<std::pair<std::size_t, Word>>& census, TourReport& report);

struct GroupTourResult {
    TourReport tour;
    double rho_requested = 0.0;
    double rho = 0.0;  ///< certified radius
    double safety = 2.0;
    double log_lipschitz = 0.0;  ///< max over prefixes and samples, safety included
    int shrink_rounds = 0;
};

/// Tours from the center of B at density delta/2 and shrinks the radius until
/// every orbit of B stays within delta/2 of the center orbit and ends in U.
/// A zero radius is the plain tour at density delta.
GroupTourResult group_tour(const Ifs& ifs, double delta, const Ball& U, const Ball& B, const TourOptions& opt = {},
                           int samples = 32);

struct CoverElement {
    Ball ball;
    Word h;
    double alpha = 0.0;  ///< sampled contraction factor on the preimage
};

struct CoverSpec {
    std::vector<CoverElement> elements;
    double lebesgue = 0.0;
};

/// Cover by basins of attracting periodic points of words up to length 2,
/// each ball sized so its word contracts on the sampled preimage. Mesh
/// points left near the boundary get their own ball, centered on them, whose
/// word is a basin word followed by at most 8 more symbols.
CoverSpec build_cover(const Ifs& ifs, std::uint64_t seed = 1);

struct MinimalityVerdict {
    bool contraction = false;
    bool lebesgue = false;
    bool density = false;
    double alpha_max = 0.0;
    int horizon = 0;
    std::size_t mesh_size = 0;
    bool mesh_sampled = false;
    std::string failing_clause;  ///< empty when all clauses hold
    std::optional<BundlePoint> counterexample_start;
    std::optional<BundlePoint> uncovered_point;

    bool positive() const { return contraction && lebesgue && density; }
};

MinimalityVerdict check_minimality_criterion(const Ifs& ifs, const CoverSpec& cover, int horizon,
                                             std::uint64_t seed = 1);

nlohmann::json to_json(const BundlePoint& p);
nlohmann::json to_json(const TourReport& r);
nlohmann::json to_json(const MinimalityVerdict& v);

}  // namespace flagifs
