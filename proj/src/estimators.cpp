#include "lab/estimators.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "lab/rng.hpp"

namespace lab {

namespace {

double spectral_norm(const Matrix& a) {
    return a.jacobiSvd().singularValues()(0);
}

} // namespace

SampleBank draw_bank(const TargetModel& target, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample bank needs at least one draw");
    SampleBank bank;
    bank.points.resize(n, target.dim);
    bank.source_seed = seed;
    auto rng = chain_rng(seed, 0);
    for (int i = 0; i < n; ++i) bank.points.row(i) = target.sample(rng).transpose();
    if (!bank.points.allFinite()) throw std::runtime_error("sampler produced non-finite draw");
    return bank;
}

void save_bank(const SampleBank& bank, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "bank format is little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::uint32_t n = static_cast<std::uint32_t>(bank.n());
    const std::uint32_t d = static_cast<std::uint32_t>(bank.dim());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    for (int i = 0; i < bank.n(); ++i)
        for (int j = 0; j < bank.dim(); ++j) {
            double v = bank.points(i, j);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
    if (!out) throw std::runtime_error("short write to " + path.string());
}

SampleBank load_bank(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::uint32_t n = 0, d = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    if (!in || n < 1 || d < 1) throw std::runtime_error("corrupt bank header in " + path.string());
    SampleBank bank;
    bank.points.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), 8);
            bank.points(i, j) = v;
        }
    if (!in) throw std::runtime_error("truncated bank data in " + path.string());
    return bank;
}

ScoreEstimator exact_estimator(const TargetModel& target) {
    ScoreEstimator est;
    est.dim = target.dim;
    est.kind = "exact";
    est.lipschitz_Ls = target.smoothness_L;
    if (target.is_gaussian()) {
        const auto& g = target.gaussian();
        Matrix prec = g.cov.llt().solve(Matrix::Identity(g.dim(), g.dim()));
        AffineScore aff{-prec, prec * g.mean};
        est.eval = [aff](const Vector& x) -> Vector { return aff.A * x + aff.b; };
        est.affine = std::move(aff);
        est.lipschitz_Ls = spectral_norm(est.affine->A);
    } else {
        auto score = target.score;
        est.eval = [score](const Vector& x) { return score(x); };
    }
    return est;
}

ScoreEstimator perturbed_gaussian_estimator(double alpha_hat, int dim) {
    if (alpha_hat <= 0.0) throw std::invalid_argument("alpha_hat must be positive");
    ScoreEstimator est;
    est.dim = dim;
    est.kind = "perturbed";
    est.affine = AffineScore{-alpha_hat * Matrix::Identity(dim, dim), Vector::Zero(dim)};
    est.lipschitz_Ls = alpha_hat;
    const double a = alpha_hat;
    est.eval = [a](const Vector& x) -> Vector { return -a * x; };
    return est;
}

ScoreEstimator offset_estimator(const TargetModel& target, const Vector& b) {
    if (b.size() != target.dim) throw std::invalid_argument("offset dimension mismatch");
    ScoreEstimator est = exact_estimator(target);
    est.kind = "offset";
    if (est.affine) {
        est.affine->b += b;
        const AffineScore aff = *est.affine;
        est.eval = [aff](const Vector& x) -> Vector { return aff.A * x + aff.b; };
    } else {
        auto base = target.score;
        Vector off = b;
        est.eval = [base, off](const Vector& x) -> Vector { return base(x) + off; };
    }
    return est;
}

ScoreEstimator kde_population_estimator(const TargetModel& target, double eta) {
    TargetModel smoothed = convolve_gaussian(target, eta);
    ScoreEstimator est = exact_estimator(smoothed);
    est.kind = "kde_pop";
    return est;
}

ScoreEstimator kde_empirical_estimator(const SampleBank& bank, double eta) {
    if (eta <= 0.0) throw std::invalid_argument("KDE bandwidth eta must be positive");
    if (bank.n() < 1) throw std::invalid_argument("empty sample bank");
    auto points = std::make_shared<Matrix>(bank.points);
    ScoreEstimator est;
    est.dim = bank.dim();
    est.kind = "kde_emp";
    est.lipschitz_Ls = std::nullopt;
    est.eval = [points, eta](const Vector& y) -> Vector {
        // softmax weights w_i ~ exp(-|y - X_i|^2 / (2 eta)), max-subtracted
        const Matrix& xs = *points;
        Eigen::VectorXd sq = (xs.rowwise() - y.transpose()).rowwise().squaredNorm();
        Eigen::ArrayXd logits = -sq.array() / (2.0 * eta);
        double mx = logits.maxCoeff();
        Eigen::ArrayXd w = (logits - mx).exp();
        w /= w.sum();
        Vector mean = xs.transpose() * w.matrix();
        return (mean - y) / eta;
    };
    return est;
}

} // namespace lab
