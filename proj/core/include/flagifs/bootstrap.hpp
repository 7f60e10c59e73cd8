#pragma once

#include "flagifs/maneuver.hpp"
#include "flagifs/minimality.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flagifs {

/// A periodic orbit of the skew product on l^Z x FM, fully enumerated.
/// Fibre points are packed as (base coordinates, frame column-major) per
/// time step to keep multi-million step orbits affordable.
class OrbitTrace {
public:
    OrbitTrace() = default;
    /// Orbit of (w^infinity, start) over one period.
    OrbitTrace(const Ifs& ifs, const Word& w, const BundlePoint& start);

    const Word& word() const { return word_; }
    std::size_t period() const { return word_.size(); }
    int base_dim() const { return base_dim_; }
    int dim() const { return dim_; }
    BundlePoint point(std::size_t t) const;
    /// Surrogate fibre distance between time t here and time s of `other`.
    double fiber_distance(std::size_t t, const OrbitTrace& other, std::size_t s) const;

private:
    Word word_;
    int base_dim_ = 0;
    int dim_ = 0;
    std::vector<double> data_;
    const double* at(std::size_t t) const { return data_.data() + t * stride(); }
    std::size_t stride() const { return static_cast<std::size_t>(base_dim_ + dim_ * dim_); }
};

OrbitTrace trace_of(const Ifs& ifs, const PeriodicOrbitRecord& rec);

struct ShadowReport {
    double epsilon = 0.0;
    double proportion = 0.0;
    double kappa = 0.0;  ///< 1 - proportion
    std::size_t shadowing = 0;
    std::size_t total = 0;
    int symbolic_radius = -1;  ///< symbols |n| <= K must agree; -1 when eps > 1
};

/// Fraction of points x' of `follower` for which some x of `leader` stays
/// eps-close in the skew metric over one period of the leader.
ShadowReport shadow_proportion(const OrbitTrace& follower, const OrbitTrace& leader, double epsilon);

struct TestFamily {
    bool fourier = true;  ///< e^{2 pi i <m,x>}, 0 < |m|_inf <= 2 (torus mode only)
    bool frame = true;    ///< sign-invariant products O_ai O_bi of frame entries
    bool cylinders = true;  ///< indicators of cylinders of depth 1..4
};

/// Max over the test catalogue of |mean over A - mean over B|.
double empirical_measure_distance(const OrbitTrace& a, const OrbitTrace& b, const TestFamily& tests = {});

struct ImproveParams {
    double theta = 0.2;
    double epsilon = 0.1;
    double delta = 0.3;
    double eta = 0.05;
    /// With auto_budget the phase lengths are chosen from the proportion
    /// rule and doubled on contract failure; otherwise n and m are used as is.
    bool auto_budget = true;
    long n = 0;
    long m = 0;
    double slack = 1.1;
    long max_period = 40'000'000;
    int max_attempts = 6;
    int samples = 8;
    /// Split w^n into runs with the correcting blocks spread between them,
    /// so expanding stretches of the flag orbit stay short enough for
    /// double precision where the shadowing budget allows.
    bool interleave = true;
    TourOptions tour{4096, 48, 12, 1, {}};
    std::uint64_t seed = 1;
};

struct ImproveConstants {
    double c = 0.0;
    double C = 0.0;
    double gamma = 0.0;
    double kappa0 = 0.0;
    double kappa = 0.0;
    double beta = 0.0;
    double tau = 0.0;
    Vec chi;
    int q = 0;
    long n1 = 0;
    long n = 0;
    long m = 0;
    double home_radius = 0.0;
};

/// tau(lambda) = 1 - (c / C) gamma(lambda) / |lambda_d|.
double tau_of(const Vec& lambda, double c, double C);
ImproveConstants improve_constants(const ManeuverCertificate& cert, double C, const Vec& lambda, double eta);

struct ImproveResult {
    PeriodicOrbitRecord record;
    ShadowReport shadow;
    TourReport tour;
    ImproveConstants constants;
    double tour_radius = 0.0;
    double norm_ratio = 0.0;
    double angle = 0.0;
    double contraction_log = 0.0;  ///< sampled log Lipschitz of the composed map, safety included
    int fixed_point_iterations = 0;
    /// Log of the largest flag expansion over a stretch of the new orbit.
    /// Above about 30 the double-precision orbit no longer pins down lambda.
    double flag_expansion_log = 0.0;
    long runs = 1;  ///< runs of copies of w in the interleaved layout
    bool norm_ok = false;
    bool angle_ok = false;
    bool shadow_ok = false;
    bool kappa_ok = false;  ///< kappa < min(1, |lambda|)
    bool dense_ok = false;
    int attempts = 0;
    std::vector<std::string> log;

    bool contracts_ok() const { return norm_ok && angle_ok && shadow_ok && dense_ok; }
};

/// One orbit-improvement step: w^n, then m prescribed correcting blocks
/// (interleaved with the copies of w by default), then a group tour back
/// into the home ball; the new periodic point is the
/// Banach fixed point of the composed map on that ball.
ImproveResult improve_orbit(const Ifs& ifs, const ManeuverCertificate& cert, const PeriodicOrbitRecord& z,
                            const ImproveParams& params);

struct BootstrapSchedule {
    std::vector<double> theta;
    std::vector<double> epsilon;
    std::vector<double> delta;
};

struct BootstrapLog {
    std::vector<nlohmann::json> steps;  ///< one record per step, seed first
    std::vector<PeriodicOrbitRecord> orbits;
    bool completed = false;
    std::string error;
    bool trend_ok = true;
};

BootstrapLog run_bootstrap(const Ifs& ifs, const ManeuverCertificate& cert, const PeriodicOrbitRecord& seed,
                           const BootstrapSchedule& schedule, int steps, const ImproveParams& base);

/// Plot-ready summary, one row per logged step.
std::string bootstrap_csv(const BootstrapLog& log);

nlohmann::json to_json(const PeriodicOrbitRecord& rec);
nlohmann::json to_json(const ShadowReport& s);

}  // namespace flagifs
