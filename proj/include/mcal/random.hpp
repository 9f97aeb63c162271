#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mcal {

/// Seeded random engine with explicit, implementation-independent draws.
/// std::distribution objects are not bit-stable across standard libraries,
/// so uniform doubles are derived from raw 64-bit words directly; everything
/// downstream (outcome sampling, generators, noise) is then reproducible
/// from the seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return next_unit() < p; }

    /// Uniform integer in [0, n); n must be positive.
    std::int64_t next_below(std::int64_t n) {
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;  // rejection: no modulo bias
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return static_cast<std::int64_t>(v % un);
    }

    /// Laplace(0, scale) variate.
    double laplace(double scale) {
        const double u = next_unit() - 0.5;
        const double sign = (u < 0.0) ? -1.0 : 1.0;
        double a = 1.0 - 2.0 * std::abs(u);
        if (a < 1e-300) a = 1e-300;
        return -sign * scale * std::log(a);
    }

    /// Exact Binomial(n, p) draw. Waiting-time method for small n*p,
    /// Hormann's transformed rejection (BTRS) with the exact log-pmf in the
    /// acceptance test for large n*p, so the distribution is exact either way.
    std::int64_t binomial(std::int64_t n, double p) {
        if (n <= 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        if (p > 0.5) return n - binomial(n, 1.0 - p);
        if (static_cast<double>(n) * p < 10.0) return binomial_inversion(n, p);
        return binomial_btrs(n, p);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(next_below(static_cast<std::int64_t>(i)))]);
        }
    }

private:
    std::int64_t binomial_inversion(std::int64_t n, double p) {
        // counts successes via geometric gaps between them:
        // G = 1 + floor(log(1-U)/log(1-p)) has P(G > k) = (1-p)^k
        const double log_q = std::log1p(-p);
        std::int64_t count = 0;
        std::int64_t trials = 0;
        while (true) {
            double u = next_unit();
            if (u >= 1.0) u = std::nextafter(1.0, 0.0);
            trials += 1 + static_cast<std::int64_t>(std::floor(std::log1p(-u) / log_q));
            if (trials > n) return count;
            ++count;
        }
    }

    std::int64_t binomial_btrs(std::int64_t n, double p) {
        // Hormann (1993), transformed rejection; requires p <= 0.5, n*p >= 10.
        const double nd = static_cast<double>(n);
        const double spq = std::sqrt(nd * p * (1.0 - p));
        const double b = 1.15 + 2.53 * spq;
        const double a = -0.0873 + 0.0248 * b + 0.01 * p;
        const double c = nd * p + 0.5;
        const double v_r = 0.92 - 4.2 / b;
        const double alpha = (2.83 + 5.1 / b) * spq;
        const double m = std::floor((nd + 1.0) * p);
        const double log_pmf_m = log_pmf(nd, p, m);
        while (true) {
            const double u = next_unit() - 0.5;
            double v = next_unit();
            const double us = 0.5 - std::abs(u);
            const double k = std::floor((2.0 * a / us + b) * u + c);
            if (k < 0.0 || k > nd) continue;
            if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(k);
            v = std::log(v * alpha / (a / (us * us) + b));
            if (v <= log_pmf(nd, p, k) - log_pmf_m) return static_cast<std::int64_t>(k);
        }
    }

    static double log_pmf(double n, double p, double k) {
        return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
               k * std::log(p) + (n - k) * std::log1p(-p);
    }

    std::mt19937_64 engine_;
};

}  // namespace mcal
