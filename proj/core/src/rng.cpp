#include "flagifs/rng.hpp"

#include <cmath>
#include <numbers>

namespace flagifs {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(splitmix64(seed ^ splitmix64(stream * kGolden + 0x1234567ULL)))
{
}

std::uint64_t CounterRng::next_u64()
{
    ++counter_;
    return splitmix64(key_ + counter_ * kGolden);
}

double CounterRng::uniform()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t n)
{
    if (n <= 1) return 0;
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double CounterRng::normal()
{
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CounterRng CounterRng::split(std::uint64_t substream) const
{
    CounterRng child(seed_);
    child.key_ = splitmix64(key_ ^ splitmix64(substream + 0xA5A5A5A5ULL));
    return child;
}

Mat random_gaussian(CounterRng& rng, int rows, int cols)
{
    Mat m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i)
            m(i, j) = rng.normal();
    return m;
}

Mat random_orthogonal(CounterRng& rng, int d)
{
    const Mat g = random_gaussian(rng, d, d);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(d, d);
    const Mat r = qr.matrixQR();
    for (int i = 0; i < d; ++i)
        if (r(i, i) < 0.0) q.col(i) *= -1.0;
    return q;
}

}  // namespace flagifs
