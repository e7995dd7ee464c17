#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lab/estimators.hpp"
#include "lab/targets.hpp"
#include "lab/types.hpp"

namespace lab {

struct LangevinParams {
    double step_h = 0.0;
    long num_steps_k = 0;
    int substeps_per_step = 1; // >1 emulates the continuous-time dynamics
    int chains = 1;
    std::uint64_t seed = 0;
};

struct DdpmParams {
    double alpha = 0.0; // forward rate; also the prior precision, gamma = N(0, alpha^{-1} I)
    double step_h = 0.0;
    long num_steps_K = 0; // total time T = step_h * num_steps_K
    int chains = 1;
    std::uint64_t seed = 0;
};

struct DivergenceValue {
    std::string kind; // kl | renyi(q) | fisher
    double value = 0.0;
    std::string method; // analytic | monte_carlo | knn
};

struct TrajectoryRecord {
    long step_index = 0;
    Vector mean;                 // empirical, over live chains
    Matrix cov;
    long censored = 0;           // chains gone non-finite by this step
    std::vector<DivergenceValue> divergences;            // filled by the harness
    std::vector<std::pair<std::string, double>> bound_values; // (bound_name, rhs)
    bool preconditions_ok = true;
    double wallclock = 0.0; // excluded from determinism comparisons and CSV
};

struct RunResult {
    std::vector<TrajectoryRecord> records;
    SampleBank final_bank; // live chains only
    long censored_chains = 0;
    int chains = 0;
};

using InitSampler = std::function<Vector(std::mt19937_64&)>;

/// Exact sampler for N(mean, cov) via Cholesky.
InitSampler moments_sampler(const GaussianMoments& init);

/// x + h s(x) + sqrt(2h) z.
Vector ila_step(const Vector& x, const ScoreEstimator& est, double h, const Vector& noise);

/// `chains` independent trajectories with one RNG stream per chain.
/// substeps_per_step > 1 runs Euler-Maruyama substeps of size h/m per step
/// with the same estimator, so step k always sits at time h*k.
/// Non-finite chains are censored (frozen and counted), not dropped.
/// Records are written at step 0, every record_every steps, and the last step.
RunResult run_ila(const InitSampler& init, const ScoreEstimator& est,
                  const LangevinParams& params, long record_every, int workers = 1);

/// Exact law of the update when s(x) = Ax + b: m <- (I+hA)m + hb,
/// C <- (I+hA)C(I+hA)^T + 2hI. Returns k+1 moments including the initial.
/// Throws when ||I + hA||_2 >= 1 (covariance recursion loses its contraction).
std::vector<GaussianMoments> gaussian_ila_propagate(const GaussianMoments& init,
                                                    const Matrix& A, const Vector& b,
                                                    double h, long k);

/// Exact law of the continuous-time dynamics dX = (AX+b)dt + sqrt(2)dW at
/// times t = h, 2h, ..., kh; the zero-discretization-error reference for the
/// substepped runs. Requires A symmetric negative definite.
std::vector<GaussianMoments> gaussian_ild_law(const GaussianMoments& init,
                                              const Matrix& A, const Vector& b,
                                              double h, long k);

/// e^{ah} y + (2(e^{ah}-1)/a) s(y) + sqrt((e^{2ah}-1)/a) z, a = alpha.
Vector ddpm_step(const Vector& y, const ScoreEstimator& score_hat,
                 double alpha, double h, const Vector& noise);

/// Reverse-time score table: entry j-1 approximates the score of the forward
/// marginal at time h*j, j = 1..K. Step k of the reverse run uses entry for
/// time h(K-k); step 0 uses the time-T = hK entry.
struct DdpmScoreSource {
    std::vector<ScoreEstimator> table;
};

/// Exact forward scores via the closed-form OU marginals of a
/// Gaussian/mixture target.
DdpmScoreSource exact_forward_table(const TargetModel& target, const DdpmParams& params);

/// Reverse sampler started at gamma = N(0, alpha^{-1} I_d).
RunResult run_ddpm(int dim, const DdpmScoreSource& scores, const DdpmParams& params,
                   long record_every, int workers = 1);

/// Exact reverse-run law when every table entry is affine:
/// m <- (aI + b A_t)m + b u_t, C <- (aI + b A_t)C(.)^T + c^2 I with
/// a = e^{alpha h}, b = 2(e^{alpha h}-1)/alpha, c^2 = (e^{2 alpha h}-1)/alpha.
/// Starts at gamma; returns K+1 moments.
std::vector<GaussianMoments> gaussian_ddpm_propagate(const std::vector<AffineScore>& table,
                                                     const DdpmParams& params);

/// Affine scores of the forward OU marginals of a Gaussian target at times
/// h*j, j = 1..K (entry j-1).
std::vector<AffineScore> exact_forward_affine_table(const GaussianSpec& target,
                                                    const DdpmParams& params);

} // namespace lab
