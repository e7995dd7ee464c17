#include "lab/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>

#include "lab/rng.hpp"

namespace lab {

namespace {

struct ChainState {
    Vector x;
    std::mt19937_64 rng;
    bool alive = true;
};

TrajectoryRecord aggregate(long step, const std::vector<ChainState>& chains, int dim,
                           std::chrono::steady_clock::time_point t0) {
    TrajectoryRecord rec;
    rec.step_index = step;
    rec.mean = Vector::Zero(dim);
    rec.cov = Matrix::Zero(dim, dim);
    long live = 0;
    for (const auto& c : chains) {
        if (!c.alive) continue;
        rec.mean += c.x;
        ++live;
    }
    rec.censored = static_cast<long>(chains.size()) - live;
    if (live > 0) {
        rec.mean /= static_cast<double>(live);
        for (const auto& c : chains) {
            if (!c.alive) continue;
            Vector d = c.x - rec.mean;
            rec.cov += d * d.transpose();
        }
        rec.cov /= std::max<long>(1, live - 1);
    }
    rec.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

/// Advances chains [begin, end) through `steps` calls of `advance`. Chains own
/// their RNG streams, so the split across workers never changes the draws.
template <typename Advance>
void advance_range(std::vector<ChainState>& chains, int begin, int end, long steps,
                   const Advance& advance) {
    for (int c = begin; c < end; ++c) {
        auto& st = chains[static_cast<size_t>(c)];
        for (long s = 0; s < steps && st.alive; ++s) {
            st.x = advance(st.x, st.rng);
            if (!st.x.allFinite()) st.alive = false;
        }
    }
}

template <typename Advance>
void advance_all(std::vector<ChainState>& chains, long steps, const Advance& advance,
                 int workers) {
    const int n = static_cast<int>(chains.size());
    if (workers <= 1 || n < 2) {
        advance_range(chains, 0, n, steps, advance);
        return;
    }
    const int w = std::min(workers, n);
    std::vector<std::future<void>> futs;
    for (int i = 0; i < w; ++i) {
        int begin = static_cast<int>(static_cast<long>(n) * i / w);
        int end = static_cast<int>(static_cast<long>(n) * (i + 1) / w);
        futs.push_back(std::async(std::launch::async, [&chains, begin, end, steps, &advance] {
            advance_range(chains, begin, end, steps, advance);
        }));
    }
    for (auto& f : futs) f.get();
}

template <typename Advance>
RunResult run_chains(int dim, int num_chains, std::uint64_t seed, long num_steps,
                     long record_every, int workers, const InitSampler& init,
                     const Advance& advance) {
    if (num_chains < 1) throw std::invalid_argument("need at least one chain");
    if (record_every < 1) record_every = 1;
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<ChainState> chains(static_cast<size_t>(num_chains));
    for (int c = 0; c < num_chains; ++c) {
        chains[static_cast<size_t>(c)].rng = chain_rng(seed, static_cast<std::uint64_t>(c));
        chains[static_cast<size_t>(c)].x = init(chains[static_cast<size_t>(c)].rng);
        if (!chains[static_cast<size_t>(c)].x.allFinite())
            chains[static_cast<size_t>(c)].alive = false;
    }

    RunResult out;
    out.chains = num_chains;
    out.records.push_back(aggregate(0, chains, dim, t0));
    long done = 0;
    while (done < num_steps) {
        long chunk = std::min(record_every, num_steps - done);
        advance_all(chains, chunk, advance, workers);
        done += chunk;
        out.records.push_back(aggregate(done, chains, dim, t0));
    }

    long live = 0;
    for (const auto& c : chains) live += c.alive ? 1 : 0;
    out.censored_chains = num_chains - live;
    out.final_bank.points.resize(live, dim);
    out.final_bank.source_seed = seed;
    long row = 0;
    for (const auto& c : chains)
        if (c.alive) out.final_bank.points.row(row++) = c.x.transpose();
    return out;
}

double spectral_norm(const Matrix& a) { return a.jacobiSvd().singularValues()(0); }

} // namespace

InitSampler moments_sampler(const GaussianMoments& init) {
    Eigen::LLT<Matrix> llt(init.cov);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("initial covariance is not positive definite");
    Matrix chol = llt.matrixL();
    Vector mean = init.mean;
    const int d = init.dim();
    return [mean, chol, d](std::mt19937_64& rng) -> Vector {
        return mean + chol * standard_normal(d, rng);
    };
}

Vector ila_step(const Vector& x, const ScoreEstimator& est, double h, const Vector& noise) {
    if (h <= 0.0) throw std::invalid_argument("step size must be positive");
    return x + h * est.eval(x) + std::sqrt(2.0 * h) * noise;
}

RunResult run_ila(const InitSampler& init, const ScoreEstimator& est,
                  const LangevinParams& params, long record_every, int workers) {
    if (params.step_h <= 0.0) throw std::invalid_argument("step size must be positive");
    if (params.substeps_per_step < 1) throw std::invalid_argument("substeps must be >= 1");
    const int m = params.substeps_per_step;
    const double h_sub = params.step_h / m;
    const int dim = est.dim;
    auto advance = [&est, m, h_sub, dim](const Vector& x, std::mt19937_64& rng) -> Vector {
        Vector y = x;
        for (int s = 0; s < m; ++s) {
            y = ila_step(y, est, h_sub, standard_normal(dim, rng));
            if (!y.allFinite()) break;
        }
        return y;
    };
    return run_chains(dim, params.chains, params.seed, params.num_steps_k, record_every,
                      workers, init, advance);
}

std::vector<GaussianMoments> gaussian_ila_propagate(const GaussianMoments& init,
                                                    const Matrix& A, const Vector& b,
                                                    double h, long k) {
    if (h <= 0.0) throw std::invalid_argument("step size must be positive");
    const int d = init.dim();
    Matrix m_step = Matrix::Identity(d, d) + h * A;
    const double gain = spectral_norm(m_step);
    if (gain >= 1.0)
        throw std::invalid_argument(
            "covariance recursion is not contractive: ||I + h*A||_2 = " + std::to_string(gain) +
            " >= 1; need h < 2/||A||_2 (h < 2/alpha for A = -alpha*I)");
    std::vector<GaussianMoments> out;
    out.reserve(static_cast<size_t>(k) + 1);
    out.push_back(init);
    GaussianMoments cur = init;
    for (long i = 0; i < k; ++i) {
        cur.mean = m_step * cur.mean + h * b;
        cur.cov = m_step * cur.cov * m_step.transpose() + 2.0 * h * Matrix::Identity(d, d);
        cur.resymmetrize();
        out.push_back(cur);
    }
    return out;
}

std::vector<GaussianMoments> gaussian_ild_law(const GaussianMoments& init,
                                              const Matrix& A, const Vector& b,
                                              double h, long k) {
    if (h <= 0.0) throw std::invalid_argument("step size must be positive");
    const int d = init.dim();
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("closed-form law needs a symmetric drift matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
    if (eig.eigenvalues().maxCoeff() >= 0.0)
        throw std::invalid_argument("drift matrix must be negative definite");
    const Matrix& u = eig.eigenvectors();
    const Vector& lam = eig.eigenvalues();
    Vector m_star = -A.ldlt().solve(b); // stationary mean

    std::vector<GaussianMoments> out;
    out.reserve(static_cast<size_t>(k) + 1);
    out.push_back(init);
    for (long i = 1; i <= k; ++i) {
        const double t = h * i;
        Vector e_lam = (lam.array() * t).exp();
        Matrix e_at = u * e_lam.asDiagonal() * u.transpose();
        // S_t = int_0^t e^{As} 2I e^{As} ds = A^{-1}(e^{2At} - I), per eigenvalue
        Vector s_diag(d);
        for (int j = 0; j < d; ++j)
            s_diag(j) = (std::exp(2.0 * lam(j) * t) - 1.0) / lam(j);
        GaussianMoments g;
        g.mean = e_at * (init.mean - m_star) + m_star;
        g.cov = e_at * init.cov * e_at + u * s_diag.asDiagonal() * u.transpose();
        g.resymmetrize();
        out.push_back(g);
    }
    return out;
}

Vector ddpm_step(const Vector& y, const ScoreEstimator& score_hat,
                 double alpha, double h, const Vector& noise) {
    if (h <= 0.0 || alpha <= 0.0) throw std::invalid_argument("need h > 0 and alpha > 0");
    const double a = std::exp(alpha * h);
    const double drift = 2.0 * (a - 1.0) / alpha;
    const double noise_sd = std::sqrt((a * a - 1.0) / alpha);
    return a * y + drift * score_hat.eval(y) + noise_sd * noise;
}

DdpmScoreSource exact_forward_table(const TargetModel& target, const DdpmParams& params) {
    if (!target.family)
        throw std::invalid_argument("exact forward scores need a Gaussian/mixture target");
    DdpmScoreSource src;
    src.table.reserve(static_cast<size_t>(params.num_steps_K));
    for (long j = 1; j <= params.num_steps_K; ++j)
        src.table.push_back(
            exact_estimator(ou_marginal(target, params.step_h * j, params.alpha)));
    return src;
}

RunResult run_ddpm(int dim, const DdpmScoreSource& scores, const DdpmParams& params,
                   long record_every, int workers) {
    if (params.alpha <= 0.0 || params.step_h <= 0.0)
        throw std::invalid_argument("need alpha > 0 and h > 0");
    if (static_cast<long>(scores.table.size()) != params.num_steps_K)
        throw std::invalid_argument("score table must have one entry per step (K entries)");
    const double init_sd = 1.0 / std::sqrt(params.alpha);
    InitSampler init = [dim, init_sd](std::mt19937_64& rng) -> Vector {
        return init_sd * standard_normal(dim, rng);
    };
    // The time-varying score table needs the global step index, which the
    // shared chain runner does not expose; chains advance in lockstep between
    // records, so the loop is unrolled here with explicit indices.
    const double alpha = params.alpha;
    const double h = params.step_h;
    const long big_k = params.num_steps_K;
    if (record_every < 1) record_every = 1;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ChainState> chains(static_cast<size_t>(params.chains));
    for (int c = 0; c < params.chains; ++c) {
        auto& st = chains[static_cast<size_t>(c)];
        st.rng = chain_rng(params.seed, static_cast<std::uint64_t>(c));
        st.x = init(st.rng);
    }
    RunResult out;
    out.chains = params.chains;
    out.records.push_back(aggregate(0, chains, dim, t0));
    for (long k = 0; k < big_k;) {
        long chunk = std::min(record_every, big_k - k);
        const long k0 = k;
        auto advance_chunk = [&](int begin, int end) {
            for (int c = begin; c < end; ++c) {
                auto& st = chains[static_cast<size_t>(c)];
                for (long s = 0; s < chunk && st.alive; ++s) {
                    const long step = k0 + s;
                    // step k uses the score at forward time h(K-k): table entry K-k-1
                    const ScoreEstimator& sc = scores.table[static_cast<size_t>(big_k - step - 1)];
                    st.x = ddpm_step(st.x, sc, alpha, h, standard_normal(dim, st.rng));
                    if (!st.x.allFinite()) st.alive = false;
                }
            }
        };
        const int n = params.chains;
        if (workers <= 1 || n < 2) {
            advance_chunk(0, n);
        } else {
            const int w = std::min(workers, n);
            std::vector<std::future<void>> futs;
            for (int i = 0; i < w; ++i) {
                int begin = static_cast<int>(static_cast<long>(n) * i / w);
                int end = static_cast<int>(static_cast<long>(n) * (i + 1) / w);
                futs.push_back(std::async(std::launch::async,
                                          [&advance_chunk, begin, end] { advance_chunk(begin, end); }));
            }
            for (auto& f : futs) f.get();
        }
        k += chunk;
        out.records.push_back(aggregate(k, chains, dim, t0));
    }
    long live = 0;
    for (const auto& c : chains) live += c.alive ? 1 : 0;
    out.censored_chains = params.chains - live;
    out.final_bank.points.resize(live, dim);
    out.final_bank.source_seed = params.seed;
    long row = 0;
    for (const auto& c : chains)
        if (c.alive) out.final_bank.points.row(row++) = c.x.transpose();
    return out;
}

std::vector<GaussianMoments> gaussian_ddpm_propagate(const std::vector<AffineScore>& table,
                                                     const DdpmParams& params) {
    if (params.alpha <= 0.0 || params.step_h <= 0.0)
        throw std::invalid_argument("need alpha > 0 and h > 0");
    if (static_cast<long>(table.size()) != params.num_steps_K)
        throw std::invalid_argument("affine table must have K entries");
    if (table.empty()) {
        GaussianMoments g;
        return {g};
    }
    const int d = static_cast<int>(table.front().b.size());
    const double a = std::exp(params.alpha * params.step_h);
    const double bc = 2.0 * (a - 1.0) / params.alpha;
    const double c_sq = (a * a - 1.0) / params.alpha;

    GaussianMoments cur;
    cur.mean = Vector::Zero(d);
    cur.cov = Matrix::Identity(d, d) / params.alpha;
    std::vector<GaussianMoments> out;
    out.reserve(static_cast<size_t>(params.num_steps_K) + 1);
    out.push_back(cur);
    for (long k = 0; k < params.num_steps_K; ++k) {
        const AffineScore& sc = table[static_cast<size_t>(params.num_steps_K - k - 1)];
        Matrix m_step = a * Matrix::Identity(d, d) + bc * sc.A;
        cur.mean = m_step * cur.mean + bc * sc.b;
        cur.cov = m_step * cur.cov * m_step.transpose() + c_sq * Matrix::Identity(d, d);
        cur.resymmetrize();
        if (cur.cov.llt().info() != Eigen::Success)
            throw std::runtime_error("reverse-run covariance lost positive definiteness at step " +
                                     std::to_string(k + 1));
        out.push_back(cur);
    }
    return out;
}

std::vector<AffineScore> exact_forward_affine_table(const GaussianSpec& target,
                                                    const DdpmParams& params) {
    std::vector<AffineScore> table;
    table.reserve(static_cast<size_t>(params.num_steps_K));
    const int d = target.dim();
    for (long j = 1; j <= params.num_steps_K; ++j) {
        const double t = params.step_h * j;
        const double decay = std::exp(-params.alpha * t);
        Matrix cov_t = decay * decay * target.cov +
                       ((1.0 - decay * decay) / params.alpha) * Matrix::Identity(d, d);
        Vector mean_t = decay * target.mean;
        Matrix prec = cov_t.llt().solve(Matrix::Identity(d, d));
        table.push_back({-prec, prec * mean_t});
    }
    return table;
}

} // namespace lab
