#include "lab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_det_cholesky(const Matrix& spd, const char* what) {
    Eigen::LLT<Matrix> llt(spd);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument(std::string(what) + " is not positive definite");
    Matrix l = llt.matrixL();
    double ld = 0.0;
    for (int i = 0; i < l.rows(); ++i) ld += 2.0 * std::log(l(i, i));
    return ld;
}

// Affine form A x + b of a Gaussian target's score.
AffineScore gaussian_score_affine(const GaussianSpec& g) {
    Matrix prec = g.cov.llt().solve(Matrix::Identity(g.dim(), g.dim()));
    return {-prec, prec * g.mean};
}

// Moments of the score difference D x + c under the target.
GaussianMoments difference_moments(const AffineScore& est, const GaussianSpec& target) {
    AffineScore truth = gaussian_score_affine(target);
    Matrix diff_a = est.A - truth.A;
    Vector diff_b = est.b - truth.b;
    GaussianMoments m;
    m.mean = diff_a * target.mean + diff_b;
    m.cov = diff_a * target.cov * diff_a.transpose();
    m.resymmetrize();
    return m;
}

double digamma_int(long m) {
    // psi(m) = -gamma + sum_{j<m} 1/j for integer m >= 1
    double v = -0.57721566490153286;
    for (long j = 1; j < m; ++j) v += 1.0 / j;
    return v;
}

} // namespace

MonteCarloStat l2_error_mc(const ScoreEstimator& est, const TargetModel& ref_target,
                           long n, std::uint64_t seed) {
    if (n < 100) throw std::invalid_argument("need at least 100 Monte Carlo draws");
    auto rng = chain_rng(seed, 0);
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < n; ++i) {
        Vector x = ref_target.sample(rng);
        double v = (est.eval(x) - ref_target.score(x)).squaredNorm();
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    return {mean, 1.96 * std::sqrt(var / n), n, seed};
}

MgfStat mgf_error_mc(const ScoreEstimator& est, const TargetModel& ref_target,
                     double r, long n, std::uint64_t seed) {
    if (r <= 0.0) throw std::invalid_argument("MGF order r must be positive");
    if (n < 100) throw std::invalid_argument("need at least 100 Monte Carlo draws");
    auto rng = chain_rng(seed, 0);
    std::vector<double> a(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        Vector x = ref_target.sample(rng);
        a[static_cast<size_t>(i)] = r * (est.eval(x) - ref_target.score(x)).squaredNorm();
    }
    const double mx = *std::max_element(a.begin(), a.end());
    double sum = 0.0, sum_sq = 0.0;
    for (double ai : a) {
        double e = std::exp(ai - mx);
        sum += e;
        sum_sq += e * e;
    }
    MgfStat out;
    out.n = n;
    out.seed = seed;
    out.max_share = 1.0 / sum; // exp(0) over the max-subtracted total
    out.tail_dominated = out.max_share > 0.5;
    const double mean = sum / n;
    out.value = (mx + std::log(mean)) / r;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    out.ci_halfwidth = 1.96 * std::sqrt(var / n) / mean / r;
    return out;
}

double mgf_error_analytic_gaussian(double alpha, double alpha_hat, int d, double r) {
    if (alpha <= 0.0 || alpha_hat <= 0.0) throw std::invalid_argument("precisions must be positive");
    if (r <= 0.0) throw std::invalid_argument("MGF order r must be positive");
    const double delta_sq = (alpha_hat - alpha) * (alpha_hat - alpha);
    if (delta_sq == 0.0) return 0.0;
    if (r >= alpha / (2.0 * delta_sq)) return kInf;
    return (d / (2.0 * r)) * std::log(alpha / (alpha - 2.0 * r * delta_sq));
}

double l2_error_analytic_affine(const AffineScore& est, const GaussianSpec& target) {
    GaussianMoments m = difference_moments(est, target);
    return m.mean.squaredNorm() + m.cov.trace();
}

double mgf_error_analytic_affine(const AffineScore& est, const GaussianSpec& target, double r) {
    if (r <= 0.0) throw std::invalid_argument("MGF order r must be positive");
    // For y ~ N(mu, S): E exp(r|y|^2) = det(I-2rS)^{-1/2} exp(r mu'(I-2rS)^{-1} mu)
    GaussianMoments m = difference_moments(est, target);
    const int d = m.dim();
    Matrix gram = Matrix::Identity(d, d) - 2.0 * r * m.cov;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) return kInf;
    Matrix l = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < d; ++i) {
        if (!(l(i, i) > 0.0)) return kInf;
        log_det += 2.0 * std::log(l(i, i));
    }
    const double quad = m.mean.dot(llt.solve(m.mean));
    return (-0.5 * log_det + r * quad) / r;
}

LinfEstimate linf_error(const ScoreEstimator& est, const TargetModel& ref_target,
                        double box_radius, int grid_n) {
    if (grid_n <= 0) throw std::invalid_argument("grid_n must be positive");
    if (est.is_affine() && ref_target.is_gaussian()) {
        AffineScore truth = gaussian_score_affine(ref_target.gaussian());
        Matrix diff_a = est.affine->A - truth.A;
        Vector diff_b = est.affine->b - truth.b;
        const double scale = std::max(1.0, truth.A.cwiseAbs().maxCoeff());
        if (diff_a.cwiseAbs().maxCoeff() <= 1e-13 * scale)
            return {diff_b.norm(), true};
        return {kInf, true}; // unequal linear parts: sup over R^d diverges
    }
    const int d = ref_target.dim;
    if (d > 3) throw std::invalid_argument("grid sup only supported for d <= 3");
    double best = 0.0;
    std::vector<int> idx(static_cast<size_t>(d), 0);
    Vector x(d);
    const long total = static_cast<long>(std::pow(static_cast<double>(grid_n), d));
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        for (int k = 0; k < d; ++k) {
            int i = static_cast<int>(rem % grid_n);
            rem /= grid_n;
            x(k) = grid_n == 1 ? 0.0 : -box_radius + 2.0 * box_radius * i / (grid_n - 1.0);
        }
        best = std::max(best, (est.eval(x) - ref_target.score(x)).norm());
    }
    return {best, false};
}

double kl_gaussian(const GaussianMoments& p, const GaussianMoments& q) {
    const int d = p.dim();
    if (q.dim() != d) throw std::invalid_argument("dimension mismatch");
    Eigen::LLT<Matrix> llt_q(q.cov);
    if (llt_q.info() != Eigen::Success)
        throw std::invalid_argument("q covariance is not positive definite");
    const double log_det_q = [&] {
        Matrix l = llt_q.matrixL();
        double v = 0.0;
        for (int i = 0; i < d; ++i) v += 2.0 * std::log(l(i, i));
        return v;
    }();
    const double log_det_p = log_det_cholesky(p.cov, "p covariance");
    const Vector dm = q.mean - p.mean;
    const double value = 0.5 * (llt_q.solve(p.cov).trace() + dm.dot(llt_q.solve(dm)) -
                                d + log_det_q - log_det_p);
    return std::max(0.0, value);
}

double renyi_gaussian(double q_order, const GaussianMoments& p, const GaussianMoments& nu) {
    if (q_order <= 1.0) throw std::invalid_argument("Renyi order must exceed 1");
    const int d = p.dim();
    const Matrix mixed = q_order * nu.cov + (1.0 - q_order) * p.cov;
    Eigen::LLT<Matrix> llt(mixed);
    if (llt.info() != Eigen::Success) return kInf;
    Matrix l = llt.matrixL();
    double log_det_mixed = 0.0;
    for (int i = 0; i < d; ++i) {
        if (!(l(i, i) > 0.0)) return kInf;
        log_det_mixed += 2.0 * std::log(l(i, i));
    }
    const double log_det_p = log_det_cholesky(p.cov, "p covariance");
    const double log_det_nu = log_det_cholesky(nu.cov, "nu covariance");
    const Vector dm = p.mean - nu.mean;
    const double value = 0.5 * q_order * dm.dot(llt.solve(dm)) -
                         (log_det_mixed - (1.0 - q_order) * log_det_p - q_order * log_det_nu) /
                             (2.0 * (q_order - 1.0));
    return std::max(0.0, value);
}

double fisher_gaussian(const GaussianMoments& p, const GaussianMoments& nu) {
    const int d = p.dim();
    Matrix prec_p = p.cov.llt().solve(Matrix::Identity(d, d));
    Matrix prec_nu = nu.cov.llt().solve(Matrix::Identity(d, d));
    Matrix m = prec_nu - prec_p;
    const Vector shift = prec_nu * (p.mean - nu.mean);
    return (m * p.cov * m).trace() + shift.squaredNorm();
}

double kl_knn_estimate(const SampleBank& samples_p, const TargetModel& nu, int k) {
    const int n = samples_p.n();
    const int d = samples_p.dim();
    if (k < 1) throw std::invalid_argument("k must be positive");
    if (n < 10 * k) throw std::invalid_argument("need at least 10k samples");

    std::vector<double> knn_dist(static_cast<size_t>(n));
    if (d == 1) {
        std::vector<double> xs(samples_p.points.col(0).data(),
                               samples_p.points.col(0).data() + n);
        std::vector<double> sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < n; ++i) {
            auto it = std::lower_bound(sorted.begin(), sorted.end(), xs[static_cast<size_t>(i)]);
            long pos = it - sorted.begin();
            // walk outward k times, skipping the point itself
            long lo = pos - 1, hi = pos;
            if (hi < n && sorted[static_cast<size_t>(hi)] == xs[static_cast<size_t>(i)]) ++hi;
            double dist = 0.0;
            for (int taken = 0; taken < k; ++taken) {
                double dl = lo >= 0 ? xs[static_cast<size_t>(i)] - sorted[static_cast<size_t>(lo)] : kInf;
                double dh = hi < n ? sorted[static_cast<size_t>(hi)] - xs[static_cast<size_t>(i)] : kInf;
                if (dl <= dh) { dist = dl; --lo; } else { dist = dh; ++hi; }
            }
            knn_dist[static_cast<size_t>(i)] = dist;
        }
    } else {
        if (n > 20000)
            throw std::invalid_argument("brute-force kNN limited to N <= 20000 for d > 1");
        std::vector<double> row(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            Vector xi = samples_p.points.row(i).transpose();
            for (int j = 0; j < n; ++j)
                row[static_cast<size_t>(j)] =
                    (samples_p.points.row(j).transpose() - xi).norm();
            row[static_cast<size_t>(i)] = kInf;
            std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
            knn_dist[static_cast<size_t>(i)] = row[static_cast<size_t>(k - 1)];
        }
    }
    for (double r : knn_dist)
        if (!(r > 0.0))
            throw std::runtime_error("degenerate duplicated samples in kNN KL estimate");

    const double log_vd = 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d + 1.0);
    double mean_log_p = digamma_int(k) - digamma_int(n) - log_vd;
    double mean_log_nu = 0.0;
    for (int i = 0; i < n; ++i) {
        mean_log_p -= d * std::log(knn_dist[static_cast<size_t>(i)]) / n;
        mean_log_nu += nu.log_density(samples_p.points.row(i).transpose()) / n;
    }
    return mean_log_p - mean_log_nu;
}

ErrorReport measure_errors(const ScoreEstimator& est, const TargetModel& target,
                           double r, long mc_n, std::uint64_t seed,
                           double linf_box_radius, int linf_grid_n) {
    ErrorReport rep;
    rep.mgf_order_r = r;
    rep.seed = seed;
    LinfEstimate linf = linf_error(est, target, linf_box_radius, linf_grid_n);
    rep.eps_inf = linf.value;
    rep.eps_inf_certified = linf.certified;
    if (est.is_affine() && target.is_gaussian()) {
        rep.method = "analytic";
        rep.eps2_sq = l2_error_analytic_affine(*est.affine, target.gaussian());
        rep.eps_mgf_sq = mgf_error_analytic_affine(*est.affine, target.gaussian(), r);
        rep.mgf_flagged_infinite = std::isinf(rep.eps_mgf_sq);
    } else {
        rep.method = "monte_carlo";
        rep.mc_n = mc_n;
        auto l2 = l2_error_mc(est, target, mc_n, seed);
        rep.eps2_sq = l2.value;
        rep.eps2_ci = l2.ci_halfwidth;
        auto mgf = mgf_error_mc(est, target, r, mc_n, seed + 1);
        rep.eps_mgf_sq = mgf.value;
        rep.mgf_ci = mgf.ci_halfwidth;
        rep.mgf_flagged_infinite = mgf.tail_dominated;
    }
    return rep;
}

} // namespace lab
