#pragma once

#include <cstdint>
#include <string>

#include "lab/estimators.hpp"
#include "lab/targets.hpp"
#include "lab/types.hpp"

namespace lab {

struct MonteCarloStat {
    double value = 0.0;
    double ci_halfwidth = 0.0; // 1.96 * stderr
    long n = 0;
    std::uint64_t seed = 0;
};

struct MgfStat {
    double value = 0.0;        // (1/r) log-mean-exp of r|s - s_nu|^2
    double ci_halfwidth = 0.0; // delta-method CI on the log scale
    bool tail_dominated = false; // single draw carries >50% of the exp mass
    double max_share = 0.0;
    long n = 0;
    std::uint64_t seed = 0;
};

/// E_nu |s - s_nu|^2 by Monte Carlo over exact target draws.
MonteCarloStat l2_error_mc(const ScoreEstimator& est, const TargetModel& ref_target,
                           long n, std::uint64_t seed);

/// (1/r) log E_nu exp(r |s - s_nu|^2), max-subtracted. The tail_dominated flag
/// is the heavy-tail diagnostic: the empirical MGF is untrustworthy (likely
/// infinite) when one draw dominates.
MgfStat mgf_error_mc(const ScoreEstimator& est, const TargetModel& ref_target,
                     double r, long n, std::uint64_t seed);

/// Closed form for s_nu(x) = -alpha x estimated by -alpha_hat x under
/// N(0, alpha^{-1} I_d): (d/2r) log(alpha / (alpha - 2r(alpha_hat-alpha)^2)),
/// infinite for r >= alpha / (2 (alpha_hat-alpha)^2).
double mgf_error_analytic_gaussian(double alpha, double alpha_hat, int d, double r);

// Exact errors of an affine estimator against a Gaussian target (the score
// difference D x + c is Gaussian, so both moments are closed-form).
double l2_error_analytic_affine(const AffineScore& est, const GaussianSpec& target);
double mgf_error_analytic_affine(const AffineScore& est, const GaussianSpec& target, double r);

struct LinfEstimate {
    double value = 0.0;
    bool certified = false;
};

/// sup_x |s_nu(x) - s(x)|. Affine-vs-affine pairs are resolved exactly
/// (finite iff the linear parts agree); otherwise a grid lower bound over
/// [-box_radius, box_radius]^d is returned with certified=false.
LinfEstimate linf_error(const ScoreEstimator& est, const TargetModel& ref_target,
                        double box_radius, int grid_n);

// Divergences between Gaussians, via Cholesky.
double kl_gaussian(const GaussianMoments& p, const GaussianMoments& q);
/// Renyi divergence of order q_order > 1; +infinity when the mixed covariance
/// q C_nu + (1-q) C_p is not positive definite.
double renyi_gaussian(double q_order, const GaussianMoments& p, const GaussianMoments& nu);
double fisher_gaussian(const GaussianMoments& p, const GaussianMoments& nu);

/// k-th nearest neighbor KL estimate of samples_p against an evaluable
/// density. Biased; diagnostic use only.
double kl_knn_estimate(const SampleBank& samples_p, const TargetModel& nu, int k);

/// Bundle of the three score-error metrics for one estimator/target pair.
struct ErrorReport {
    double eps_inf = 0.0;
    bool eps_inf_certified = false;
    double eps2_sq = 0.0;
    double eps2_ci = 0.0;
    double mgf_order_r = 0.0;
    double eps_mgf_sq = 0.0;
    double mgf_ci = 0.0;
    bool mgf_flagged_infinite = false;
    std::string method; // "analytic" or "monte_carlo"
    long mc_n = 0;
    std::uint64_t seed = 0;
};

/// Analytic when the estimator is affine and the target Gaussian, else Monte
/// Carlo with the given sample budget.
ErrorReport measure_errors(const ScoreEstimator& est, const TargetModel& target,
                           double r, long mc_n, std::uint64_t seed,
                           double linf_box_radius = 8.0, int linf_grid_n = 2001);

} // namespace lab
