#pragma once

#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lab/types.hpp"

namespace lab {

struct GaussianSpec {
    Vector mean;
    Matrix cov;

    int dim() const { return static_cast<int>(mean.size()); }

    /// Throws std::invalid_argument on asymmetric or non-SPD covariance.
    void validate() const;
};

struct MixtureSpec {
    Vector weights;
    std::vector<GaussianSpec> components;

    int dim() const;
    void validate() const;
};

/// A distribution with evaluable log-density, score, exact sampler and
/// (where known) analytic constants. Immutable after construction; samplers
/// take an explicit per-call RNG state.
struct TargetModel {
    int dim = 0;
    std::function<double(const Vector&)> log_density;
    std::function<Vector(const Vector&)> score;
    std::function<Vector(std::mt19937_64&)> sample;

    // Unknown constants are absent, never zero.
    std::optional<double> lsi_alpha;
    std::optional<double> smoothness_L;
    std::optional<double> subgaussian_sigma;
    bool smoothness_is_numerical = false;

    // Closed-form family data when the target is a (mixture of) Gaussian(s);
    // a single component means plain Gaussian. Enables convolution, OU
    // marginals and analytic Hessians.
    std::optional<MixtureSpec> family;

    bool is_gaussian() const { return family && family->components.size() == 1; }
    const GaussianSpec& gaussian() const;
};

TargetModel make_gaussian_target(const GaussianSpec& spec);
TargetModel make_mixture_target(const MixtureSpec& spec);

/// Law of X + N(0, eta I) for a Gaussian/mixture target: each component
/// covariance gains eta*I.
TargetModel convolve_gaussian(const TargetModel& target, double eta);

/// Marginal law at time t of dX = -alpha X dt + sqrt(2) dW started at the
/// target: means scale by e^{-alpha t}, covariances map to
/// e^{-2 alpha t} S + (1 - e^{-2 alpha t})/alpha I.
TargetModel ou_marginal(const TargetModel& target, double t, double alpha);

/// LSI constant of the OU marginal at time t: alpha*beta/(alpha + (beta-alpha)e^{-2 beta t}).
double lsi_along_ou(double alpha, double beta, double t);

struct HessianEnvelope {
    double min_eig;
    double max_eig;
    double lower_env; // -L/(1 - tL)
    double upper_env; //  L/(1 + tL)
};

/// Eigenvalue range of -Hess log(rho * N(0, t I)) at each point, with the
/// heat-flow envelope values. Requires certified smoothness and 0 < t <= 1/(2L).
std::vector<HessianEnvelope> heat_flow_hessian_envelope(const TargetModel& target,
                                                        double t,
                                                        const std::vector<Vector>& points);

/// Analytic -Hess log density of a Gaussian mixture at x.
Matrix neg_log_density_hessian(const MixtureSpec& spec, const Vector& x);

// JSON round trip: {"family":"gaussian","mean":[...],"cov":[[...]]} or
// {"family":"mixture","weights":[...],"components":[...]}.
nlohmann::json target_spec_to_json(const MixtureSpec& spec);
MixtureSpec target_spec_from_json(const nlohmann::json& j);
TargetModel make_target(const MixtureSpec& spec);

} // namespace lab
