#include "lab/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include <json.hpp>

#include "lab/rng.hpp"

namespace lab {

namespace {

constexpr double kSymTol = 1e-12;

struct Component {
    Vector mean;
    Matrix cov;
    Matrix precision;
    Matrix chol;     // lower factor of cov, for sampling
    double log_norm; // normalization constant of the Gaussian pdf

    explicit Component(const GaussianSpec& g) : mean(g.mean), cov(g.cov) {
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("covariance is not positive definite");
        chol = llt.matrixL();
        precision = llt.solve(Matrix::Identity(g.dim(), g.dim()));
        double log_det = 0.0;
        for (int i = 0; i < g.dim(); ++i) log_det += 2.0 * std::log(chol(i, i));
        log_norm = -0.5 * (g.dim() * std::log(2.0 * std::numbers::pi) + log_det);
    }

    double log_pdf(const Vector& x) const {
        Vector c = x - mean;
        return log_norm - 0.5 * c.dot(precision * c);
    }

    Vector score(const Vector& x) const { return -(precision * (x - mean)); }
};

std::vector<Component> build_components(const MixtureSpec& spec) {
    std::vector<Component> comps;
    comps.reserve(spec.components.size());
    for (const auto& g : spec.components) comps.emplace_back(g);
    return comps;
}

// Posterior responsibilities at x, via max-subtracted exponentials.
Vector responsibilities(const std::vector<Component>& comps, const Vector& w, const Vector& x) {
    const int m = static_cast<int>(comps.size());
    Vector logits(m);
    for (int i = 0; i < m; ++i) logits(i) = std::log(w(i)) + comps[i].log_pdf(x);
    double mx = logits.maxCoeff();
    Vector r = (logits.array() - mx).exp();
    return r / r.sum();
}

double mixture_log_pdf(const std::vector<Component>& comps, const Vector& w, const Vector& x) {
    const int m = static_cast<int>(comps.size());
    double mx = -std::numeric_limits<double>::infinity();
    Vector logits(m);
    for (int i = 0; i < m; ++i) {
        logits(i) = std::log(w(i)) + comps[i].log_pdf(x);
        mx = std::max(mx, logits(i));
    }
    return mx + std::log((logits.array() - mx).exp().sum());
}

Matrix neg_hessian(const std::vector<Component>& comps, const Vector& w, const Vector& x) {
    const int m = static_cast<int>(comps.size());
    const int d = static_cast<int>(x.size());
    Vector r = responsibilities(comps, w, x);
    Vector s = Vector::Zero(d);
    Matrix h = Matrix::Zero(d, d);
    std::vector<Vector> si(m);
    for (int i = 0; i < m; ++i) {
        si[i] = comps[i].score(x);
        s += r(i) * si[i];
    }
    for (int i = 0; i < m; ++i) h += r(i) * (comps[i].precision - si[i] * si[i].transpose());
    return h + s * s.transpose();
}

// Certified upper bound on the spectral norm of -Hess log density, by grid
// search over a box of +-6 component standard deviations. Only feasible for
// d <= 2 at this resolution.
std::optional<double> certify_smoothness(const MixtureSpec& spec,
                                         const std::vector<Component>& comps) {
    const int d = spec.dim();
    if (d > 2) return std::nullopt;
    const int n_per_dim = 1000;
    Vector lo = Vector::Constant(d, std::numeric_limits<double>::infinity());
    Vector hi = Vector::Constant(d, -std::numeric_limits<double>::infinity());
    for (const auto& g : spec.components) {
        for (int k = 0; k < d; ++k) {
            double sd = std::sqrt(g.cov(k, k));
            lo(k) = std::min(lo(k), g.mean(k) - 6.0 * sd);
            hi(k) = std::max(hi(k), g.mean(k) + 6.0 * sd);
        }
    }
    double best = 0.0;
    Vector x(d);
    auto spectral = [&](const Vector& p) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(neg_hessian(comps, spec.weights, p));
        return es.eigenvalues().cwiseAbs().maxCoeff();
    };
    if (d == 1) {
        for (int i = 0; i < n_per_dim; ++i) {
            x(0) = lo(0) + (hi(0) - lo(0)) * i / (n_per_dim - 1.0);
            best = std::max(best, spectral(x));
        }
    } else {
        for (int i = 0; i < n_per_dim; ++i) {
            x(0) = lo(0) + (hi(0) - lo(0)) * i / (n_per_dim - 1.0);
            for (int j = 0; j < n_per_dim; ++j) {
                x(1) = lo(1) + (hi(1) - lo(1)) * j / (n_per_dim - 1.0);
                best = std::max(best, spectral(x));
            }
        }
    }
    return best;
}

} // namespace

void GaussianSpec::validate() const {
    if (mean.size() == 0) throw std::invalid_argument("empty mean vector");
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw std::invalid_argument("covariance shape does not match mean");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > kSymTol)
        throw std::invalid_argument("covariance is not symmetric");
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("covariance is not positive definite");
    Matrix l = llt.matrixL();
    for (int i = 0; i < dim(); ++i)
        if (!(l(i, i) > 0.0))
            throw std::invalid_argument("covariance has non-positive Cholesky pivot");
}

int MixtureSpec::dim() const {
    return components.empty() ? 0 : components.front().dim();
}

void MixtureSpec::validate() const {
    if (components.empty()) throw std::invalid_argument("mixture has no components");
    if (weights.size() != static_cast<Eigen::Index>(components.size()))
        throw std::invalid_argument("weight count does not match component count");
    if (weights.minCoeff() < 0.0) throw std::invalid_argument("negative mixture weight");
    if (std::abs(weights.sum() - 1.0) > kSymTol)
        throw std::invalid_argument("mixture weights do not sum to 1");
    const int d = dim();
    for (const auto& g : components) {
        g.validate();
        if (g.dim() != d) throw std::invalid_argument("mixture components disagree on dimension");
    }
}

const GaussianSpec& TargetModel::gaussian() const {
    if (!is_gaussian()) throw std::logic_error("target is not Gaussian");
    return family->components.front();
}

TargetModel make_gaussian_target(const GaussianSpec& spec) {
    spec.validate();
    auto comp = std::make_shared<Component>(spec);

    TargetModel t;
    t.dim = spec.dim();
    t.log_density = [comp](const Vector& x) { return comp->log_pdf(x); };
    t.score = [comp](const Vector& x) { return comp->score(x); };
    t.sample = [comp](std::mt19937_64& rng) -> Vector {
        return comp->mean + comp->chol * standard_normal(static_cast<int>(comp->mean.size()), rng);
    };

    Eigen::SelfAdjointEigenSolver<Matrix> es(comp->precision);
    t.lsi_alpha = es.eigenvalues().minCoeff();
    t.smoothness_L = es.eigenvalues().maxCoeff();
    t.subgaussian_sigma = std::sqrt(1.0 / es.eigenvalues().minCoeff());

    MixtureSpec fam;
    fam.weights = Vector::Ones(1);
    fam.components = {spec};
    t.family = std::move(fam);
    return t;
}

TargetModel make_mixture_target(const MixtureSpec& spec) {
    spec.validate();
    if (spec.components.size() == 1) {
        TargetModel t = make_gaussian_target(spec.components.front());
        return t;
    }
    auto comps = std::make_shared<std::vector<Component>>(build_components(spec));
    auto w = std::make_shared<Vector>(spec.weights);

    TargetModel t;
    t.dim = spec.dim();
    t.log_density = [comps, w](const Vector& x) { return mixture_log_pdf(*comps, *w, x); };
    t.score = [comps, w](const Vector& x) -> Vector {
        Vector r = responsibilities(*comps, *w, x);
        Vector s = Vector::Zero(x.size());
        for (size_t i = 0; i < comps->size(); ++i) s += r(i) * (*comps)[i].score(x);
        return s;
    };
    t.sample = [comps, w](std::mt19937_64& rng) -> Vector {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double p = u(rng);
        size_t idx = 0;
        double acc = 0.0;
        for (size_t i = 0; i < comps->size(); ++i) {
            acc += (*w)(i);
            if (p <= acc) { idx = i; break; }
            idx = i;
        }
        const auto& c = (*comps)[idx];
        return c.mean + c.chol * standard_normal(static_cast<int>(c.mean.size()), rng);
    };

    t.lsi_alpha = std::nullopt; // no closed form for non-log-concave mixtures
    t.smoothness_L = certify_smoothness(spec, *comps);
    t.smoothness_is_numerical = t.smoothness_L.has_value();
    t.subgaussian_sigma = std::nullopt;
    t.family = spec;
    return t;
}

TargetModel make_target(const MixtureSpec& spec) {
    return make_mixture_target(spec);
}

TargetModel convolve_gaussian(const TargetModel& target, double eta) {
    if (!target.family)
        throw std::invalid_argument("convolution requires a Gaussian or mixture target");
    if (eta < 0.0) throw std::invalid_argument("bandwidth eta must be nonnegative");
    MixtureSpec out = *target.family;
    for (auto& g : out.components)
        g.cov += eta * Matrix::Identity(g.dim(), g.dim());
    return make_mixture_target(out);
}

TargetModel ou_marginal(const TargetModel& target, double t, double alpha) {
    if (!target.family)
        throw std::invalid_argument("OU marginal requires a Gaussian or mixture target");
    if (t < 0.0) throw std::invalid_argument("time t must be nonnegative");
    if (alpha <= 0.0) throw std::invalid_argument("OU rate alpha must be positive");
    const double decay = std::exp(-alpha * t);
    const double var_in = (1.0 - decay * decay) / alpha;
    MixtureSpec out = *target.family;
    for (auto& g : out.components) {
        g.mean *= decay;
        g.cov = decay * decay * g.cov + var_in * Matrix::Identity(g.dim(), g.dim());
    }
    TargetModel result = make_mixture_target(out);
    if (result.is_gaussian() && target.lsi_alpha)
        result.lsi_alpha = lsi_along_ou(*target.lsi_alpha, alpha, t);
    return result;
}

double lsi_along_ou(double alpha, double beta, double t) {
    if (alpha <= 0.0 || beta <= 0.0)
        throw std::invalid_argument("LSI constants must be positive");
    if (alpha == beta) return alpha;
    return alpha * beta / (alpha + (beta - alpha) * std::exp(-2.0 * beta * t));
}

Matrix neg_log_density_hessian(const MixtureSpec& spec, const Vector& x) {
    spec.validate();
    auto comps = build_components(spec);
    return neg_hessian(comps, spec.weights, x);
}

std::vector<HessianEnvelope> heat_flow_hessian_envelope(const TargetModel& target,
                                                        double t,
                                                        const std::vector<Vector>& points) {
    if (!target.family)
        throw std::invalid_argument("heat-flow envelope requires a Gaussian or mixture target");
    if (!target.smoothness_L)
        throw std::invalid_argument("heat-flow envelope requires a known smoothness constant");
    const double L = *target.smoothness_L;
    if (!(t > 0.0) || t > 0.5 / L)
        throw std::invalid_argument("time t must lie in (0, 1/(2L)]");

    MixtureSpec conv = *target.family;
    for (auto& g : conv.components)
        g.cov += t * Matrix::Identity(g.dim(), g.dim());
    auto comps = build_components(conv);

    std::vector<HessianEnvelope> out;
    out.reserve(points.size());
    const double lower = -L / (1.0 - t * L);
    const double upper = L / (1.0 + t * L);
    for (const auto& p : points) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(neg_hessian(comps, conv.weights, p));
        out.push_back({es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff(), lower, upper});
    }
    return out;
}

nlohmann::json target_spec_to_json(const MixtureSpec& spec) {
    auto gauss_json = [](const GaussianSpec& g) {
        nlohmann::json jg;
        jg["mean"] = std::vector<double>(g.mean.data(), g.mean.data() + g.mean.size());
        std::vector<std::vector<double>> cov(g.dim());
        for (int i = 0; i < g.dim(); ++i) {
            cov[i].resize(g.dim());
            for (int j = 0; j < g.dim(); ++j) cov[i][j] = g.cov(i, j);
        }
        jg["cov"] = cov;
        return jg;
    };
    nlohmann::json j;
    if (spec.components.size() == 1) {
        j = gauss_json(spec.components.front());
        j["family"] = "gaussian";
    } else {
        j["family"] = "mixture";
        j["weights"] = std::vector<double>(spec.weights.data(), spec.weights.data() + spec.weights.size());
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& g : spec.components) comps.push_back(gauss_json(g));
        j["components"] = comps;
    }
    return j;
}

MixtureSpec target_spec_from_json(const nlohmann::json& j) {
    auto gauss_from = [](const nlohmann::json& jg) {
        GaussianSpec g;
        auto mean = jg.at("mean").get<std::vector<double>>();
        g.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        auto cov = jg.at("cov").get<std::vector<std::vector<double>>>();
        const int d = static_cast<int>(mean.size());
        g.cov.resize(d, d);
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < d; ++k) g.cov(i, k) = cov.at(i).at(k);
        return g;
    };
    MixtureSpec spec;
    const std::string family = j.at("family").get<std::string>();
    if (family == "gaussian") {
        spec.weights = Vector::Ones(1);
        spec.components = {gauss_from(j)};
    } else if (family == "mixture") {
        auto w = j.at("weights").get<std::vector<double>>();
        spec.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        for (const auto& jc : j.at("components")) spec.components.push_back(gauss_from(jc));
    } else {
        throw std::invalid_argument("unknown target family: " + family);
    }
    spec.validate();
    return spec;
}

} // namespace lab
