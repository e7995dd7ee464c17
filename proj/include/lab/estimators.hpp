#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "lab/targets.hpp"
#include "lab/types.hpp"

namespace lab {

/// Exact linear structure of a score estimator: eval(x) = A x + b.
struct AffineScore {
    Matrix A;
    Vector b;
};

/// A vector field approximating a score, with Lipschitz metadata. Immutable;
/// eval is reentrant.
struct ScoreEstimator {
    int dim = 0;
    std::function<Vector(const Vector&)> eval;
    std::optional<double> lipschitz_Ls; // absent means unknown, never zero
    std::optional<AffineScore> affine;  // present iff the estimator is exactly affine
    std::string kind;                   // exact | perturbed | offset | kde_pop | kde_emp

    bool is_affine() const { return affine.has_value(); }
};

/// i.i.d. draws X_1..X_N stored row-wise.
struct SampleBank {
    Matrix points; // N x d
    std::uint64_t source_seed = 0;

    int n() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
};

SampleBank draw_bank(const TargetModel& target, int n, std::uint64_t seed);

// Binary format: uint32 N, uint32 d, then N*d little-endian float64, row major.
void save_bank(const SampleBank& bank, const std::filesystem::path& path);
SampleBank load_bank(const std::filesystem::path& path);

/// Pass-through of the target's own score; affine (with exact A, b) for
/// Gaussian targets.
ScoreEstimator exact_estimator(const TargetModel& target);

/// s(x) = -alpha_hat x, the misestimated-variance Gaussian score.
ScoreEstimator perturbed_gaussian_estimator(double alpha_hat, int dim);

/// s(x) = target score + b; the canonical finite-sup-error fixture.
ScoreEstimator offset_estimator(const TargetModel& target, const Vector& b);

/// Score of target * N(0, eta I); the infinite-sample KDE score.
ScoreEstimator kde_population_estimator(const TargetModel& target, double eta);

/// Gaussian-kernel KDE score from samples, softmax-weighted with
/// max-subtracted exponentials. Lipschitz constant unknown.
ScoreEstimator kde_empirical_estimator(const SampleBank& bank, double eta);

} // namespace lab
