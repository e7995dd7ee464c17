#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "lab/types.hpp"

namespace lab::test {

/// Central finite-difference gradient, step 1e-5.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double step = 1e-5) {
    Vector g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        Vector hi = x, lo = x;
        hi(i) += step;
        lo(i) -= step;
        g(i) = (f(hi) - f(lo)) / (2.0 * step);
    }
    return g;
}

/// Composite Simpson rule; n must be even.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Tensor-product Simpson over [a,b]^2.
inline double simpson2d(const std::function<double(double, double)>& f, double a, double b,
                        int n) {
    return simpson(
        [&](double x) {
            return simpson([&, x](double y) { return f(x, y); }, a, b, n);
        },
        a, b, n);
}

inline Matrix random_spd(int d, std::mt19937_64& rng, double jitter = 0.5) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = nd(rng);
    return a * a.transpose() / d + jitter * Matrix::Identity(d, d);
}

inline Vector random_vector(int d, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = nd(rng);
    return v;
}

/// Sample mean and covariance of rows.
inline void sample_moments(const Matrix& rows, Vector& mean, Matrix& cov) {
    const long n = rows.rows();
    mean = rows.colwise().mean().transpose();
    Matrix centered = rows.rowwise() - mean.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);
}

} // namespace lab::test
