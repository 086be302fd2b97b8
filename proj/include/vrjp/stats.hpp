#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace vrjp::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased sample variance (0 for fewer than two values).
inline double variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

/// Effective sample size of a single chain using Geyer's initial monotone
/// sequence estimator of the integrated autocorrelation time.
inline double effective_sample_size(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 4) return static_cast<double>(n);
    const double m = mean(xs);
    std::vector<double> c(xs.size());
    for (std::size_t i = 0; i < n; ++i) c[i] = xs[i] - m;
    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
        return s / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (c0 <= 0.0) return static_cast<double>(n);

    double tau = -1.0;  // tau = -1 + 2 * sum of paired autocorrelations
    double previous_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if (pair <= 0.0) break;
        pair = std::min(pair, previous_pair);
        previous_pair = pair;
        tau += 2.0 * pair;
    }
    tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n) + 10.0));
    return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

/// Summed ESS over independent chains.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains) {
    double total = 0.0;
    for (const auto& c : chains) total += effective_sample_size(c);
    return total;
}

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    double ess = 0.0;
};

/// Mean with an autocorrelation-adjusted standard error, chains kept separate
/// for the ESS computation.
inline MeanEstimate correlated_mean(const std::vector<std::vector<double>>& chains) {
    MeanEstimate out;
    std::vector<double> all;
    for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
    out.n = all.size();
    if (all.empty()) return out;
    out.mean = mean(all);
    out.ess = effective_sample_size(chains);
    out.std_error = out.ess > 0.0 ? std::sqrt(variance(all) / out.ess) : 0.0;
    return out;
}

/// Split-Rhat (Gelman et al., 3rd ed.): each chain is halved, then the usual
/// between/within variance ratio is taken over the 2m half-chains.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
    std::vector<std::span<const double>> halves;
    for (const auto& c : chains) {
        const std::size_t h = c.size() / 2;
        if (h < 2) continue;
        halves.emplace_back(c.data(), h);
        halves.emplace_back(c.data() + (c.size() - h), h);
    }
    if (halves.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = std::min_element(halves.begin(), halves.end(), [](auto a, auto b) {
                              return a.size() < b.size();
                          })->size();
    std::vector<double> means, vars;
    for (auto h : halves) {
        auto s = h.first(n);
        means.push_back(mean(s));
        vars.push_back(variance(s));
    }
    const double w = mean(vars);
    const double b = static_cast<double>(n) * variance(means);
    if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b / static_cast<double>(n);
    return std::sqrt(var_plus / w);
}

/// Mean over non-overlapping batches; returns the per-batch means.
inline std::vector<double> batch_means(std::span<const double> xs, std::size_t n_batches) {
    std::vector<double> out;
    if (n_batches == 0 || xs.size() < n_batches) return out;
    const std::size_t size = xs.size() / n_batches;
    for (std::size_t b = 0; b < n_batches; ++b) out.push_back(mean(xs.subspan(b * size, size)));
    return out;
}

/// Survival function of the Kolmogorov distribution, P(K > lambda).
inline double kolmogorov_survival(double lambda) {
    if (lambda < 1e-3) return 1.0;
    if (lambda < 1.18) {
        // Small-argument series for the CDF.
        const double pi2 = std::numbers::pi * std::numbers::pi;
        const double factor = std::sqrt(2.0 * std::numbers::pi) / lambda;
        double cdf = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double t = (2.0 * k - 1.0);
            cdf += std::exp(-t * t * pi2 / (8.0 * lambda * lambda));
        }
        return std::clamp(1.0 - factor * cdf, 0.0, 1.0);
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("KS test needs nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

/// One-sample sup-distance between the empirical CDF and `cdf`.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

inline KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf) {
    const double n = static_cast<double>(xs.size());
    const double d = ks_statistic(std::move(xs), cdf);
    const double sn = std::sqrt(n);
    return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width: P(sup|F_n - F| > eps) <= alpha.
inline double dkw_epsilon(std::size_t n, double alpha) {
    return std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(n)));
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_std_error = 0.0;
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear fit needs >= 2 paired points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        sse += r * r;
    }
    f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    if (x.size() > 2) f.slope_std_error = std::sqrt(sse / static_cast<double>(x.size() - 2) / sxx);
    return f;
}

inline double student_t_quantile(double p, double dof) {
    boost::math::students_t dist(dof);
    return boost::math::quantile(dist, p);
}

/// Binomial proportion with its plain standard error.
struct Proportion {
    double p = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

inline Proportion proportion(std::size_t hits, std::size_t n) {
    Proportion out;
    out.n = n;
    if (n == 0) return out;
    out.p = static_cast<double>(hits) / static_cast<double>(n);
    out.std_error = std::sqrt(out.p * (1.0 - out.p) / static_cast<double>(n));
    return out;
}

}  // namespace vrjp::stats
