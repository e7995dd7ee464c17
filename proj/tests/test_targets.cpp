#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lab/rng.hpp"
#include "lab/targets.hpp"
#include "test_util.hpp"

#include <json.hpp>

using namespace lab;
using test::fd_gradient;
using test::simpson;

namespace {

GaussianSpec gauss(std::initializer_list<double> mean, const Matrix& cov) {
    GaussianSpec g;
    g.mean = Vector(static_cast<long>(mean.size()));
    int i = 0;
    for (double m : mean) g.mean(i++) = m;
    g.cov = cov;
    return g;
}

MixtureSpec symmetric_pair(double sep, double var, double w0 = 0.5) {
    MixtureSpec spec;
    spec.weights = Vector(2);
    spec.weights << w0, 1.0 - w0;
    spec.components = {gauss({-sep}, Matrix::Constant(1, 1, var)),
                       gauss({sep}, Matrix::Constant(1, 1, var))};
    return spec;
}

} // namespace

TEST_CASE("gaussian score closed forms") {
    auto t1 = make_gaussian_target(gauss({0.0}, Matrix::Identity(1, 1)));
    CHECK(t1.score(Vector::Zero(1))(0) == doctest::Approx(0.0));

    // isotropic precision alpha = 2: score(x) = -2x
    auto t2 = make_gaussian_target(gauss({0.0, 0.0}, 0.5 * Matrix::Identity(2, 2)));
    Vector x(2);
    x << 1.0, 0.0;
    Vector s = t2.score(x);
    CHECK(s(0) == doctest::Approx(-2.0));
    CHECK(s(1) == doctest::Approx(0.0));

    Matrix cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    auto t3 = make_gaussian_target(gauss({1.0, -1.0}, cov));
    Vector z = Vector::Zero(2);
    Vector fd = fd_gradient(t3.log_density, z);
    CHECK((t3.score(z) - fd).norm() < 1e-6 * (1.0 + t3.score(z).norm()));
}

TEST_CASE("gaussian constants are precision eigenvalue extremes") {
    Matrix cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    auto t = make_gaussian_target(gauss({0.0, 0.0}, cov));
    Matrix prec = cov.inverse();
    Eigen::SelfAdjointEigenSolver<Matrix> es(prec);
    CHECK(*t.lsi_alpha == doctest::Approx(es.eigenvalues().minCoeff()));
    CHECK(*t.smoothness_L == doctest::Approx(es.eigenvalues().maxCoeff()));
    Eigen::SelfAdjointEigenSolver<Matrix> es_cov(cov);
    CHECK(*t.subgaussian_sigma == doctest::Approx(std::sqrt(es_cov.eigenvalues().maxCoeff())));
}

TEST_CASE("gaussian sampler matches analytic moments") {
    Matrix cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    auto t = make_gaussian_target(gauss({1.0, -1.0}, cov));
    const int n = 100000;
    Matrix draws(n, 2);
    auto rng = chain_rng(11, 0);
    for (int i = 0; i < n; ++i) draws.row(i) = t.sample(rng).transpose();
    Vector mean;
    Matrix c;
    test::sample_moments(draws, mean, c);
    for (int i = 0; i < 2; ++i) {
        const double se = std::sqrt(cov(i, i) / n);
        CHECK(std::abs(mean(i) - t.gaussian().mean(i)) < 5.0 * se);
        for (int j = 0; j < 2; ++j) {
            const double se_c = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
            CHECK(std::abs(c(i, j) - cov(i, j)) < 5.0 * se_c);
        }
    }
}

TEST_CASE("invalid covariance is rejected") {
    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0; // indefinite
    CHECK_THROWS_AS(make_gaussian_target(gauss({0.0, 0.0}, bad)), std::invalid_argument);
    Matrix asym(2, 2);
    asym << 1.0, 0.1, 0.0, 1.0;
    CHECK_THROWS_AS(gauss({0.0, 0.0}, asym).validate(), std::invalid_argument);
}

TEST_CASE("single-component mixture degenerates to the gaussian target") {
    Matrix cov(2, 2);
    cov << 1.5, 0.2, 0.2, 0.8;
    GaussianSpec g = gauss({0.3, -0.7}, cov);
    MixtureSpec m;
    m.weights = Vector::Ones(1);
    m.components = {g};
    auto tg = make_gaussian_target(g);
    auto tm = make_mixture_target(m);
    auto rng = chain_rng(3, 0);
    for (int i = 0; i < 100; ++i) {
        Vector x = test::random_vector(2, rng, 2.0);
        CHECK((tg.score(x) - tm.score(x)).norm() < 1e-12);
        CHECK(tg.log_density(x) == doctest::Approx(tm.log_density(x)).epsilon(1e-12));
    }
}

TEST_CASE("mixture score: symmetry and finite differences") {
    auto t = make_mixture_target(symmetric_pair(2.0, 1.0));
    CHECK(std::abs(t.score(Vector::Zero(1))(0)) < 1e-12);

    Vector x = Vector::Constant(1, 1.0);
    Vector fd = fd_gradient(t.log_density, x);
    CHECK(std::abs(t.score(x)(0) - fd(0)) < 1e-6 * (1.0 + std::abs(t.score(x)(0))));

    CHECK_THROWS_AS(make_mixture_target(MixtureSpec{}), std::invalid_argument);
}

TEST_CASE("mixture smoothness certificate bounds the analytic hessian") {
    MixtureSpec spec = symmetric_pair(2.0, 1.0);
    auto t = make_mixture_target(spec);
    REQUIRE(t.smoothness_L.has_value());
    CHECK(t.smoothness_is_numerical);
    auto rng = chain_rng(5, 0);
    for (int i = 0; i < 50; ++i) {
        Vector x = t.sample(rng);
        Matrix h = neg_log_density_hessian(spec, x);
        Eigen::SelfAdjointEigenSolver<Matrix> es(h);
        CHECK(es.eigenvalues().cwiseAbs().maxCoeff() <= *t.smoothness_L * (1.0 + 1e-9));
    }
}

TEST_CASE("gaussian convolution") {
    auto t = make_gaussian_target(gauss({0.0}, Matrix::Identity(1, 1)));

    SUBCASE("zero bandwidth is the identity") {
        auto c = convolve_gaussian(t, 0.0);
        auto rng = chain_rng(1, 0);
        for (int i = 0; i < 20; ++i) {
            Vector x = test::random_vector(1, rng, 2.0);
            CHECK((t.score(x) - c.score(x)).norm() < 1e-12);
        }
    }
    SUBCASE("gaussian + gaussian") {
        auto c = convolve_gaussian(t, 1.0);
        CHECK(c.gaussian().cov(0, 0) == doctest::Approx(2.0));
        CHECK(c.score(Vector::Constant(1, 1.0))(0) == doctest::Approx(-0.5));
    }
    SUBCASE("negative bandwidth rejected") {
        CHECK_THROWS_AS(convolve_gaussian(t, -0.1), std::invalid_argument);
    }
}

TEST_CASE("mixture convolution matches a quadrature oracle") {
    MixtureSpec spec = symmetric_pair(1.5, 0.5);
    auto t = make_mixture_target(spec);
    const double eta = 0.25;
    auto c = convolve_gaussian(t, eta);

    auto density = [&](double x) {
        Vector v = Vector::Constant(1, x);
        return std::exp(t.log_density(v));
    };
    auto conv_density = [&](double y) {
        return simpson(
            [&](double x) {
                return density(x) * std::exp(-(y - x) * (y - x) / (2.0 * eta)) /
                       std::sqrt(2.0 * std::numbers::pi * eta);
            },
            -12.0, 12.0, 4000);
    };
    const double test_points[] = {-2.0, -0.7, 0.0, 0.9, 2.3};
    for (double y : test_points) {
        const double delta = 1e-4;
        const double oracle =
            (std::log(conv_density(y + delta)) - std::log(conv_density(y - delta))) /
            (2.0 * delta);
        CHECK(c.score(Vector::Constant(1, y))(0) ==
              doctest::Approx(oracle).epsilon(1e-5));
    }
}

TEST_CASE("convolution semigroup") {
    MixtureSpec spec = symmetric_pair(1.0, 0.7);
    auto t = make_mixture_target(spec);
    auto ab = convolve_gaussian(convolve_gaussian(t, 0.3), 0.2);
    auto once = convolve_gaussian(t, 0.5);
    for (size_t i = 0; i < ab.family->components.size(); ++i) {
        CHECK((ab.family->components[i].cov - once.family->components[i].cov)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        CHECK((ab.family->components[i].mean - once.family->components[i].mean)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

TEST_CASE("forward noising marginals") {
    auto t = make_gaussian_target(gauss({0.0}, Matrix::Identity(1, 1)));

    SUBCASE("t = 0 identity") {
        auto m = ou_marginal(t, 0.0, 2.0);
        CHECK(m.gaussian().cov(0, 0) == doctest::Approx(1.0));
    }
    SUBCASE("long-time limit is the stationary gaussian") {
        auto m = ou_marginal(t, 25.0, 2.0);
        CHECK(std::abs(m.gaussian().cov(0, 0) - 0.5) < 1e-10);
        CHECK(std::abs(m.gaussian().mean(0)) < 1e-10);
    }
    SUBCASE("closed-form variance map") {
        auto m = ou_marginal(t, 0.5, 2.0);
        const double expect = std::exp(-2.0) * 1.0 + (1.0 - std::exp(-2.0)) / 2.0;
        CHECK(m.gaussian().cov(0, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("invalid arguments rejected") {
        CHECK_THROWS_AS(ou_marginal(t, -1.0, 2.0), std::invalid_argument);
        CHECK_THROWS_AS(ou_marginal(t, 1.0, 0.0), std::invalid_argument);
    }
}

TEST_CASE("forward marginal cross-checked by euler-maruyama") {
    // dX = -alpha X dt + sqrt(2) dW, X_0 ~ N(0,1), alpha = 2, t = 0.5
    const double alpha = 2.0, t_end = 0.5;
    const int paths = 50000, steps = 250;
    const double dt = t_end / steps;
    auto rng = chain_rng(21, 0);
    std::normal_distribution<double> nd(0.0, 1.0);
    double sum = 0.0, sum_sq = 0.0;
    for (int p = 0; p < paths; ++p) {
        double x = nd(rng);
        for (int s = 0; s < steps; ++s)
            x += -alpha * x * dt + std::sqrt(2.0 * dt) * nd(rng);
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / paths;
    const double var = sum_sq / paths - mean * mean;
    auto base = make_gaussian_target(gauss({0.0}, Matrix::Identity(1, 1)));
    const double expect = ou_marginal(base, t_end, alpha).gaussian().cov(0, 0);
    // 5 standard errors of the variance estimate plus O(dt) discretization slack
    const double tol = 5.0 * expect * std::sqrt(2.0 / paths) + 4.0 * dt;
    CHECK(std::abs(var - expect) < tol);
    CHECK(std::abs(mean) < 5.0 * std::sqrt(expect / paths));
}

TEST_CASE("log-sobolev constant along the forward flow") {
    CHECK(lsi_along_ou(3.0, 3.0, 0.7) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(lsi_along_ou(1.0, 4.0, 0.0) == doctest::Approx(1.0));
    {
        const double v = lsi_along_ou(1.0, 4.0, 0.3);
        CHECK(v > 1.0);
        CHECK(v < 4.0);
        auto base = make_gaussian_target(gauss({0.0, 0.0}, Matrix::Identity(2, 2)));
        auto m = ou_marginal(base, 0.3, 4.0);
        Eigen::SelfAdjointEigenSolver<Matrix> es(m.gaussian().cov.inverse());
        CHECK(std::abs(v - es.eigenvalues().minCoeff()) < 1e-10);
    }
    SUBCASE("monotone range") {
        // strict interior holds for all t > 0; past t ~ 5 the gap is below
        // double precision, so the grid stops at 2
        for (double t : {0.01, 0.1, 0.5, 1.0, 2.0}) {
            const double v = lsi_along_ou(0.5, 2.0, t);
            CHECK(v > 0.5);
            CHECK(v < 2.0);
            const double w = lsi_along_ou(2.0, 0.5, t);
            CHECK(w > 0.5);
            CHECK(w < 2.0);
        }
    }
    CHECK_THROWS_AS(lsi_along_ou(-1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("heat-flow hessian envelope") {
    SUBCASE("gaussian saturates the upper envelope") {
        const double L = 2.0;
        auto t = make_gaussian_target(gauss({0.0, 0.0}, Matrix::Identity(2, 2) / L));
        const double tt = 0.2; // within (0, 1/(2L)]
        auto envs = heat_flow_hessian_envelope(t, tt, {Vector::Zero(2)});
        REQUIRE(envs.size() == 1);
        CHECK(std::abs(envs[0].max_eig - envs[0].upper_env) < 1e-10);
        CHECK(envs[0].max_eig == doctest::Approx(1.0 / (1.0 / L + tt)).epsilon(1e-12));
    }
    SUBCASE("mixture eigenvalues stay inside the envelope") {
        auto t = make_mixture_target(symmetric_pair(1.0, 1.0));
        REQUIRE(t.smoothness_L.has_value());
        const double L = *t.smoothness_L;
        const double tt = 0.25 / L;
        auto rng = chain_rng(8, 0);
        std::vector<Vector> pts;
        pts.push_back(Vector::Zero(1));
        for (int i = 0; i < 49; ++i) pts.push_back(t.sample(rng));
        auto envs = heat_flow_hessian_envelope(t, tt, pts);
        for (const auto& e : envs) {
            CHECK(e.min_eig >= e.lower_env - 1e-9 * (1.0 + std::abs(e.lower_env)));
            CHECK(e.max_eig <= e.upper_env + 1e-9 * (1.0 + std::abs(e.upper_env)));
            CHECK(std::max(std::abs(e.min_eig), std::abs(e.max_eig)) <= 2.0 * L * (1.0 + 1e-9));
        }
    }
    SUBCASE("small time degenerates to +-L") {
        auto t = make_gaussian_target(gauss({0.0}, Matrix::Identity(1, 1)));
        auto envs = heat_flow_hessian_envelope(t, 1e-9, {Vector::Constant(1, 0.4)});
        CHECK(envs[0].lower_env == doctest::Approx(-1.0).epsilon(1e-6));
        CHECK(envs[0].upper_env == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(envs[0].max_eig >= envs[0].lower_env);
        CHECK(envs[0].max_eig <= envs[0].upper_env + 1e-9);
    }
    SUBCASE("time window enforced") {
        auto t = make_gaussian_target(gauss({0.0}, Matrix::Identity(1, 1)));
        CHECK_THROWS_AS(heat_flow_hessian_envelope(t, 0.0, {Vector::Zero(1)}),
                        std::invalid_argument);
        CHECK_THROWS_AS(heat_flow_hessian_envelope(t, 0.51, {Vector::Zero(1)}),
                        std::invalid_argument);
    }
}

TEST_CASE("score is the gradient of the log-density everywhere") {
    Matrix cov(2, 2);
    cov << 1.2, -0.3, -0.3, 0.9;
    auto tg = make_gaussian_target(gauss({0.5, -0.2}, cov));
    auto tm = make_mixture_target(symmetric_pair(1.5, 0.8, 0.3));
    auto rng = chain_rng(13, 0);
    for (int i = 0; i < 100; ++i) {
        Vector x2 = test::random_vector(2, rng, 2.0);
        Vector fd2 = fd_gradient(tg.log_density, x2);
        CHECK((fd2 - tg.score(x2)).norm() <= 1e-4 * (1.0 + tg.score(x2).norm()));
        Vector x1 = test::random_vector(1, rng, 2.0);
        Vector fd1 = fd_gradient(tm.log_density, x1);
        CHECK((fd1 - tm.score(x1)).norm() <= 1e-4 * (1.0 + tm.score(x1).norm()));
    }
}

TEST_CASE("forward flow composes") {
    auto t = make_mixture_target(symmetric_pair(1.0, 0.6));
    const double alpha = 1.3;
    auto two = ou_marginal(ou_marginal(t, 0.2, alpha), 0.5, alpha);
    auto once = ou_marginal(t, 0.7, alpha);
    for (size_t i = 0; i < two.family->components.size(); ++i) {
        CHECK((two.family->components[i].cov - once.family->components[i].cov)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        CHECK((two.family->components[i].mean - once.family->components[i].mean)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

TEST_CASE("target specs round-trip through json") {
    MixtureSpec spec = symmetric_pair(2.0, 1.0, 0.4);
    nlohmann::json j = target_spec_to_json(spec);
    MixtureSpec back = target_spec_from_json(j);
    CHECK((back.weights - spec.weights).cwiseAbs().maxCoeff() < 1e-15);
    for (size_t i = 0; i < spec.components.size(); ++i) {
        CHECK((back.components[i].mean - spec.components[i].mean).cwiseAbs().maxCoeff() <
              1e-15);
        CHECK((back.components[i].cov - spec.components[i].cov).cwiseAbs().maxCoeff() < 1e-15);
    }
    // single component serializes as the plain gaussian form
    MixtureSpec single;
    single.weights = Vector::Ones(1);
    single.components = {gauss({1.0, 2.0}, Matrix::Identity(2, 2))};
    nlohmann::json js = target_spec_to_json(single);
    CHECK(js.at("family") == "gaussian");
    MixtureSpec back2 = target_spec_from_json(js);
    CHECK(back2.components.size() == 1);
    CHECK_THROWS_AS(target_spec_from_json(nlohmann::json{{"family", "cauchy"}}),
                    std::invalid_argument);
}
