#include "lab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "lab/metrics.hpp"
#include "lab/rng.hpp"

namespace lab {

namespace {

constexpr const char* kCodeVersion = "1.0.0";
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvRow {
    long run_id;
    long step;
    std::string metric;
    double value;
};

void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows) {
    std::ofstream out(path, std::ios::binary); // binary: byte-identical across platforms
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "run_id,step,metric,value\n";
    for (const auto& r : rows)
        out << r.run_id << ',' << r.step << ',' << r.metric << ',' << fmt_double(r.value)
            << '\n';
    if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string iso_timestamp() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

GaussianMoments to_moments(const GaussianSpec& g) { return {g.mean, g.cov}; }

GaussianSpec default_init(int dim) {
    GaussianSpec g;
    g.mean = Vector::Zero(dim);
    g.cov = Matrix::Identity(dim, dim);
    return g;
}

const std::vector<std::string> kEstimatorKinds = {"exact", "perturbed", "offset", "kde_pop",
                                                  "kde_emp"};
const std::vector<std::string> kAlgorithms = {"ila", "ild", "ula", "ddpm"};
const std::vector<std::string> kSweepParams = {"step_h", "num_steps", "substeps",
                                               "chains", "alpha", "alpha_hat", "eta"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

ScoreEstimator build_estimator(const ExperimentConfig& c, const TargetModel& target) {
    const auto& spec = c.estimator_spec;
    const std::string kind = spec.value("kind", "exact");
    if (kind == "exact") return exact_estimator(target);
    if (kind == "perturbed")
        return perturbed_gaussian_estimator(spec.at("alpha_hat").get<double>(), target.dim);
    if (kind == "offset") {
        auto bvec = spec.at("b").get<std::vector<double>>();
        Vector b = Eigen::Map<const Vector>(bvec.data(), static_cast<long>(bvec.size()));
        return offset_estimator(target, b);
    }
    if (kind == "kde_pop") return kde_population_estimator(target, spec.at("eta").get<double>());
    if (kind == "kde_emp") {
        const int n = spec.value("bank_n", 1000);
        const std::uint64_t bank_seed = spec.value("bank_seed", c.seed + 1);
        SampleBank bank = draw_bank(target, n, bank_seed);
        return kde_empirical_estimator(bank, spec.at("eta").get<double>());
    }
    throw std::invalid_argument("unknown estimator kind '" + kind + "'");
}

/// Canonical MGF order of each KL bound's score-error measurement.
std::optional<double> canonical_r(BoundName name, double alpha) {
    switch (name) {
        case BoundName::thm1_ild_kl: return 1.0 / alpha;
        case BoundName::thm2_ila_kl: return 9.0 / alpha;
        case BoundName::thm4_ddpm_kl: return 65.0 / (6.0 * alpha);
        default: return std::nullopt;
    }
}

struct DerivedBound {
    BoundSpec spec;
    std::vector<Diagnostic> diags;
    std::string lhs_kind = "kl"; // kl | renyi
};

/// Fills the bound's constants from target/estimator/config; explicit
/// bound_constants entries always win. Score errors are measured lazily (only
/// when not overridden), analytic where possible.
DerivedBound derive_bound(const ExperimentConfig& c, const TargetModel& target,
                          const ScoreEstimator& est, const std::string& name_str,
                          bool measure) {
    DerivedBound out;
    try {
        out.spec.name = bound_name_from_string(name_str);
    } catch (const std::exception& e) {
        out.diags.push_back({"error", e.what()});
        return out;
    }
    auto& k = out.spec.constants;
    auto overrides_it = c.bound_constants.find(name_str);
    if (overrides_it != c.bound_constants.end()) k = overrides_it->second;
    auto need = [&](const std::string& key) { return k.find(key) == k.end(); };
    auto miss = [&](const std::string& key, const std::string& why) {
        out.diags.push_back({"error", "bound " + name_str + ": constant '" + key +
                                          "' unavailable (" + why + ")"});
    };

    const bool is_ddpm = c.algorithm == "ddpm";
    if (need("d")) k["d"] = target.dim;
    if (need("h")) k["h"] = c.step_h;
    if (need("alpha")) {
        if (is_ddpm)
            k["alpha"] = c.alpha;
        else if (target.lsi_alpha)
            k["alpha"] = *target.lsi_alpha;
        else
            miss("alpha", "target log-Sobolev constant unknown");
    }
    const BoundName name = out.spec.name;
    const bool needs_L = name == BoundName::thm2_ila_kl || name == BoundName::thm3_ila_renyi ||
                         name == BoundName::thm4_ddpm_kl || name == BoundName::fact3_ula_kl ||
                         name == BoundName::prop6_ila_renyi;
    if (needs_L && need("L")) {
        if (target.smoothness_L)
            k["L"] = *target.smoothness_L;
        else
            miss("L", "target smoothness unknown");
    }
    const bool needs_Ls = name == BoundName::thm2_ila_kl || name == BoundName::thm3_ila_renyi ||
                          name == BoundName::thm4_ddpm_kl;
    if (needs_Ls && need("Ls")) {
        if (est.lipschitz_Ls)
            k["Ls"] = *est.lipschitz_Ls;
        else
            miss("Ls", "estimator Lipschitz constant unknown");
    }
    const bool needs_q = name == BoundName::thm3_ila_renyi || name == BoundName::prop5_ild_renyi ||
                         name == BoundName::prop6_ila_renyi;
    if (needs_q) {
        if (need("q")) miss("q", "supply via bound_constants");
        else out.lhs_kind = "renyi";
    }
    if ((name == BoundName::prop5_ild_renyi || name == BoundName::prop6_ila_renyi) &&
        need("renyi_2qm1"))
        miss("renyi_2qm1", "order-(2q-1) divergence of the approximating law; supply via bound_constants");

    // initial divergence
    const std::string init_key = name == BoundName::thm3_ila_renyi ||
                                         name == BoundName::prop5_ild_renyi ||
                                         name == BoundName::prop6_ila_renyi
                                     ? "R0"
                                     : "H0";
    if (need(init_key)) {
        if (!target.is_gaussian()) {
            miss(init_key, "analytic initial divergence needs a Gaussian target");
        } else {
            GaussianSpec init = is_ddpm ? [&] {
                GaussianSpec g;
                g.mean = Vector::Zero(target.dim);
                g.cov = Matrix::Identity(target.dim, target.dim) / c.alpha;
                return g;
            }()
                                        : c.init.value_or(default_init(target.dim));
            if (init_key == "H0")
                k["H0"] = kl_gaussian(to_moments(init), to_moments(target.gaussian()));
            else if (!need("q"))
                k["R0"] = renyi_gaussian(k["q"], to_moments(init), to_moments(target.gaussian()));
        }
    }

    // score error
    const bool needs_mgf = name == BoundName::thm1_ild_kl || name == BoundName::thm2_ila_kl ||
                           name == BoundName::thm4_ddpm_kl;
    if (needs_mgf && need("eps_mgf_sq")) {
        if (!need("alpha") && measure) {
            const double r = *canonical_r(name, k["alpha"]);
            ErrorReport rep = measure_errors(est, target, r, c.mc_error_n, c.seed + 17);
            k["eps_mgf_sq"] = rep.mgf_flagged_infinite
                                  ? std::numeric_limits<double>::infinity()
                                  : rep.eps_mgf_sq;
        } else if (!measure) {
            k["eps_mgf_sq"] = 0.0; // placeholder during structural validation
        }
    }
    if (name == BoundName::thm3_ila_renyi && need("eps_inf_sq")) {
        if (measure) {
            LinfEstimate linf = linf_error(est, target, 8.0, 2001);
            k["eps_inf_sq"] = linf.value * linf.value;
        } else {
            k["eps_inf_sq"] = 0.0;
        }
    }
    return out;
}

double series_lhs(const TrajectoryRecord& rec, const TargetModel& target,
                  const std::string& kind, double q) {
    if (!target.is_gaussian()) return kNan;
    if (rec.mean.size() == 0 || rec.cov.llt().info() != Eigen::Success) return kNan;
    GaussianMoments emp{rec.mean, rec.cov};
    if (kind == "renyi") return renyi_gaussian(q, emp, to_moments(target.gaussian()));
    return kl_gaussian(emp, to_moments(target.gaussian()));
}

void remove_outputs(const std::vector<std::filesystem::path>& files) {
    std::error_code ec;
    for (const auto& f : files) std::filesystem::remove(f, ec);
}

} // namespace

int worker_count() {
    if (const char* env = std::getenv("LAB_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(4u, std::max(1u, hw)));
}

ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig c;
    c.target_spec = target_spec_from_json(j.at("target"));
    c.estimator_spec = j.value("estimator", nlohmann::json{{"kind", "exact"}});
    c.algorithm = j.value("algorithm", "ila");
    if (j.contains("params")) {
        const auto& p = j.at("params");
        c.step_h = p.value("step_h", c.step_h);
        c.num_steps = p.value("num_steps", c.num_steps);
        c.substeps = p.value("substeps", c.substeps);
        c.chains = p.value("chains", c.chains);
        c.alpha = p.value("alpha", c.alpha);
    }
    c.record_every = j.value("record_every", c.record_every);
    if (j.contains("init")) {
        GaussianSpec g;
        auto mean = j.at("init").at("mean").get<std::vector<double>>();
        g.mean = Eigen::Map<const Vector>(mean.data(), static_cast<long>(mean.size()));
        auto cov = j.at("init").at("cov").get<std::vector<std::vector<double>>>();
        g.cov.resize(static_cast<long>(cov.size()), static_cast<long>(cov.size()));
        for (size_t r = 0; r < cov.size(); ++r)
            for (size_t cc = 0; cc < cov[r].size(); ++cc)
                g.cov(static_cast<long>(r), static_cast<long>(cc)) = cov[r][cc];
        c.init = g;
    }
    c.metrics = j.value("metrics", std::vector<std::string>{});
    c.bounds = j.value("bounds", std::vector<std::string>{});
    if (j.contains("bound_constants"))
        c.bound_constants =
            j.at("bound_constants").get<std::map<std::string, std::map<std::string, double>>>();
    if (j.contains("mgf_order_r")) c.mgf_order_r = j.at("mgf_order_r").get<double>();
    if (j.contains("sweep")) {
        SweepAxis ax;
        ax.param = j.at("sweep").at("param").get<std::string>();
        ax.values = j.at("sweep").at("values").get<std::vector<double>>();
        c.sweep = ax;
    }
    if (j.contains("kde_sweep")) {
        KdeSweepSpec ks;
        ks.etas = j.at("kde_sweep").at("etas").get<std::vector<double>>();
        ks.r = j.at("kde_sweep").value("r", 1.0);
        ks.mc_n = j.at("kde_sweep").value("mc_n", 100000L);
        c.kde_sweep = ks;
    }
    c.output_prefix = j.value("output", "");
    c.seed = j.value("seed", 0ULL);
    c.mc_error_n = j.value("mc_error_n", 100000L);
    return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["target"] = target_spec_to_json(c.target_spec);
    j["estimator"] = c.estimator_spec;
    j["algorithm"] = c.algorithm;
    j["params"] = {{"step_h", c.step_h},
                   {"num_steps", c.num_steps},
                   {"substeps", c.substeps},
                   {"chains", c.chains},
                   {"alpha", c.alpha}};
    j["record_every"] = c.record_every;
    if (c.init) {
        std::vector<double> mean(c.init->mean.data(), c.init->mean.data() + c.init->dim());
        std::vector<std::vector<double>> cov;
        for (int r = 0; r < c.init->dim(); ++r)
            cov.emplace_back(c.init->cov.row(r).data(),
                             c.init->cov.row(r).data() + c.init->dim());
        j["init"] = {{"mean", mean}, {"cov", cov}};
    }
    j["metrics"] = c.metrics;
    j["bounds"] = c.bounds;
    j["bound_constants"] = c.bound_constants;
    if (c.mgf_order_r) j["mgf_order_r"] = *c.mgf_order_r;
    if (c.sweep) j["sweep"] = {{"param", c.sweep->param}, {"values", c.sweep->values}};
    if (c.kde_sweep)
        j["kde_sweep"] = {{"etas", c.kde_sweep->etas},
                          {"r", c.kde_sweep->r},
                          {"mc_n", c.kde_sweep->mc_n}};
    j["output"] = c.output_prefix;
    j["seed"] = c.seed;
    j["mc_error_n"] = c.mc_error_n;
    return j;
}

std::string config_hash(const ExperimentConfig& c) {
    const std::string canon = config_to_json(c).dump(); // object keys are sorted
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<Diagnostic> validate_json(const nlohmann::json& j) {
    try {
        return validate(parse_config(j));
    } catch (const std::exception& e) {
        return {{"error", std::string("config does not parse: ") + e.what()}};
    }
}

std::vector<Diagnostic> validate(const ExperimentConfig& c) {
    std::vector<Diagnostic> diags;
    auto err = [&](const std::string& m) { diags.push_back({"error", m}); };
    auto warn = [&](const std::string& m) { diags.push_back({"warning", m}); };

    std::optional<TargetModel> target;
    try {
        c.target_spec.validate();
        target = make_target(c.target_spec);
    } catch (const std::exception& e) {
        err(std::string("target: ") + e.what());
    }

    const std::string kind = c.estimator_spec.value("kind", "exact");
    if (!contains(kEstimatorKinds, kind)) err("unknown estimator kind '" + kind + "'");
    if (kind == "perturbed" && !c.estimator_spec.contains("alpha_hat"))
        err("perturbed estimator needs 'alpha_hat'");
    if (kind == "offset" && !c.estimator_spec.contains("b"))
        err("offset estimator needs 'b'");
    if ((kind == "kde_pop" || kind == "kde_emp") && !c.estimator_spec.contains("eta"))
        err(kind + " estimator needs 'eta'");

    if (!contains(kAlgorithms, c.algorithm)) err("unknown algorithm '" + c.algorithm + "'");
    if (c.step_h <= 0.0) err("step_h must be positive");
    if (c.num_steps < 0) err("num_steps must be nonnegative");
    if (c.substeps < 1) err("substeps must be >= 1");
    if (c.chains < 1) err("chains must be >= 1");
    if (c.record_every < 1) err("record_every must be >= 1");
    if (c.algorithm == "ddpm" && c.alpha <= 0.0) err("ddpm needs alpha > 0");
    if (c.algorithm == "ild" && c.substeps < 2)
        warn("ild with substeps=1 is identical to ila; increase substeps for a finer "
             "time discretization");
    if (c.output_prefix.empty()) err("output prefix must not be empty");
    if (c.init) {
        try {
            c.init->validate();
        } catch (const std::exception& e) {
            err(std::string("init: ") + e.what());
        }
        if (target && c.init->dim() != target->dim) err("init dimension mismatch");
    }

    if (c.sweep) {
        if (!contains(kSweepParams, c.sweep->param))
            err("sweep parameter '" + c.sweep->param + "' is not a known parameter");
        if (c.sweep->values.empty()) err("sweep values must not be empty");
        if (c.sweep->param == "alpha_hat" && kind != "perturbed")
            err("sweep over alpha_hat needs the perturbed estimator");
        if (c.sweep->param == "eta" && kind != "kde_pop" && kind != "kde_emp")
            err("sweep over eta needs a kde estimator");
    }
    if (c.kde_sweep) {
        if (c.kde_sweep->etas.empty()) err("kde_sweep needs a nonempty eta list");
        for (double e : c.kde_sweep->etas)
            if (e < 0.0) err("kde_sweep eta values must be nonnegative");
        if (c.kde_sweep->r <= 0.0) err("kde_sweep MGF order r must be positive");
    }

    if (target) {
        std::optional<ScoreEstimator> est;
        try {
            est = build_estimator(c, *target);
        } catch (const std::exception& e) {
            err(std::string("estimator: ") + e.what());
        }
        if (est) {
            for (const auto& name : c.bounds) {
                DerivedBound db = derive_bound(c, *target, *est, name, /*measure=*/false);
                for (auto& d : db.diags) diags.push_back(d);
                if (!db.diags.empty()) continue;
                try {
                    bound_rhs_at(db.spec, static_cast<double>(std::max(c.num_steps, 1L)));
                } catch (const WindowViolation& e) {
                    err("bound " + name + ": " + e.what());
                } catch (const std::exception& e) {
                    err("bound " + name + ": " + e.what());
                }
            }
        }
    }

    if (c.algorithm == "ddpm" && c.mgf_order_r && c.alpha > 0.0) {
        const double want = 65.0 / (6.0 * c.alpha);
        if (std::abs(*c.mgf_order_r - want) > 1e-12 * want)
            warn("reverse-diffusion KL audits measure the MGF error at r = 65/(6*alpha) = " +
                 fmt_double(want) + "; configured r = " + fmt_double(*c.mgf_order_r));
    }
    return diags;
}

bool all_chains_diverged(const RunManifest& m) {
    if (m.censoring_fraction.empty()) return false;
    for (const auto& [run, frac] : m.censoring_fraction)
        if (frac >= 1.0) return true;
    return false;
}

RunManifest run(const ExperimentConfig& c) {
    {
        auto diags = validate(c);
        std::string errors;
        for (const auto& d : diags)
            if (d.severity == "error") errors += (errors.empty() ? "" : "; ") + d.message;
        if (!errors.empty()) throw std::invalid_argument("config invalid: " + errors);
    }
    if (c.kde_sweep) {
        sweep_kde_bandwidth(c);
        RunManifest m;
        m.config_hash = config_hash(c);
        m.code_version = kCodeVersion;
        m.timestamp = iso_timestamp();
        m.outputs = {c.output_prefix + ".csv", c.output_prefix + ".json",
                     c.output_prefix + ".manifest.json"};
        return m;
    }

    const std::filesystem::path csv_path = c.output_prefix + ".csv";
    const std::filesystem::path json_path = c.output_prefix + ".json";
    const std::filesystem::path manifest_path = c.output_prefix + ".manifest.json";
    const std::vector<std::filesystem::path> outputs = {csv_path, json_path, manifest_path};

    try {
        std::vector<double> sweep_values = c.sweep ? c.sweep->values : std::vector<double>{0.0};
        const long n_runs = static_cast<long>(sweep_values.size());
        const int workers = worker_count();

        std::vector<CsvRow> rows;
        nlohmann::json doc;
        doc["config"] = config_to_json(c);
        doc["runs"] = nlohmann::json::array();
        RunManifest manifest;

        for (long run_id = 0; run_id < n_runs; ++run_id) {
            ExperimentConfig rc = c;
            if (c.sweep) {
                const double v = sweep_values[static_cast<size_t>(run_id)];
                const std::string& p = c.sweep->param;
                if (p == "step_h") rc.step_h = v;
                else if (p == "num_steps") rc.num_steps = static_cast<long>(v);
                else if (p == "substeps") rc.substeps = static_cast<int>(v);
                else if (p == "chains") rc.chains = static_cast<int>(v);
                else if (p == "alpha") rc.alpha = v;
                else if (p == "alpha_hat") rc.estimator_spec["alpha_hat"] = v;
                else if (p == "eta") rc.estimator_spec["eta"] = v;
            }

            TargetModel target = make_target(rc.target_spec);
            ScoreEstimator est = rc.algorithm == "ula" ? exact_estimator(target)
                                                       : build_estimator(rc, target);

            RunResult rr;
            if (rc.algorithm == "ddpm") {
                DdpmParams dp{rc.alpha, rc.step_h, rc.num_steps, rc.chains, rc.seed};
                DdpmScoreSource src = exact_forward_table(target, dp);
                rr = run_ddpm(target.dim, src, dp, rc.record_every, workers);
            } else {
                LangevinParams lp{rc.step_h, rc.num_steps,
                                  rc.algorithm == "ild" ? rc.substeps : 1, rc.chains, rc.seed};
                GaussianSpec init = rc.init.value_or(default_init(target.dim));
                rr = run_ila(moments_sampler(to_moments(init)), est, lp, rc.record_every,
                             workers);
            }

            std::vector<std::string> metrics = rc.metrics;
            if (metrics.empty()) {
                metrics = {"mean_norm", "cov_trace", "censored"};
                if (target.is_gaussian()) metrics.push_back("kl");
            }
            nlohmann::json run_doc;
            run_doc["run_id"] = run_id;
            if (c.sweep) {
                run_doc["sweep_param"] = c.sweep->param;
                run_doc["sweep_value"] = sweep_values[static_cast<size_t>(run_id)];
            }
            run_doc["records"] = nlohmann::json::array();
            for (const auto& rec : rr.records) {
                nlohmann::json rj;
                rj["step"] = rec.step_index;
                for (const auto& m : metrics) {
                    double v = kNan;
                    if (m == "mean_norm") v = rec.mean.size() ? rec.mean.norm() : kNan;
                    else if (m == "cov_trace") v = rec.cov.size() ? rec.cov.trace() : kNan;
                    else if (m == "censored") v = static_cast<double>(rec.censored);
                    else if (m == "kl") v = series_lhs(rec, target, "kl", 0.0);
                    rows.push_back({run_id, rec.step_index, m, v});
                    rj[m] = v;
                }
                run_doc["records"].push_back(rj);
            }

            run_doc["bounds"] = nlohmann::json::array();
            for (const auto& name : rc.bounds) {
                DerivedBound db = derive_bound(rc, target, est, name, /*measure=*/true);
                const double q = db.spec.constants.count("q") ? db.spec.constants.at("q") : 0.0;
                std::vector<std::pair<long, double>> lhs_series;
                for (const auto& rec : rr.records) {
                    const double lhs = series_lhs(rec, target, db.lhs_kind, q);
                    lhs_series.push_back({rec.step_index, lhs});
                    double rhs = kNan;
                    try {
                        rhs = bound_rhs_at(db.spec, static_cast<double>(rec.step_index));
                    } catch (const WindowViolation&) {
                    }
                    rows.push_back({run_id, rec.step_index, "lhs_" + name, lhs});
                    rows.push_back({run_id, rec.step_index, "rhs_" + name, rhs});
                }
                nlohmann::json bj;
                bj["name"] = name;
                bj["constants"] = db.spec.constants; // no silent substitution
                bj["lhs_kind"] = db.lhs_kind;
                bool has_nan = false;
                for (auto& [s, l] : lhs_series) has_nan = has_nan || std::isnan(l);
                if (!has_nan) {
                    AuditResult audit = audit_run(lhs_series, db.spec);
                    bj["all_satisfied"] = audit.all_satisfied;
                    bj["stable"] = audit.stable;
                    bj["tail_max_lhs"] = audit.tail_max_lhs;
                    bj["asymptote_rhs"] = audit.asymptote_rhs;
                }
                run_doc["bounds"].push_back(bj);
            }

            const double frac = rc.chains > 0
                                    ? static_cast<double>(rr.censored_chains) / rc.chains
                                    : 0.0;
            run_doc["censored_chains"] = rr.censored_chains;
            run_doc["chains"] = rr.chains;
            doc["runs"].push_back(run_doc);
            manifest.censoring_fraction["run" + std::to_string(run_id)] = frac;
        }

        write_csv(csv_path, rows);
        manifest.config_hash = config_hash(c);
        manifest.code_version = kCodeVersion;
        manifest.timestamp = iso_timestamp();
        for (const auto& p : outputs) manifest.outputs.push_back(p.string());

        doc["manifest"] = {{"config_hash", manifest.config_hash},
                           {"code_version", manifest.code_version}};
        {
            std::ofstream out(json_path, std::ios::binary);
            out << doc.dump(2) << '\n';
            if (!out) throw std::runtime_error("short write to " + json_path.string());
        }
        {
            nlohmann::json mj;
            mj["config_hash"] = manifest.config_hash;
            mj["code_version"] = manifest.code_version;
            mj["timestamp"] = manifest.timestamp;
            mj["outputs"] = manifest.outputs;
            mj["censoring_fraction"] = manifest.censoring_fraction;
            std::ofstream out(manifest_path, std::ios::binary);
            out << mj.dump(2) << '\n';
            if (!out) throw std::runtime_error("short write to " + manifest_path.string());
        }
        return manifest;
    } catch (...) {
        remove_outputs(outputs);
        throw;
    }
}

KdeSweepTable sweep_kde_bandwidth(const ExperimentConfig& c) {
    if (!c.kde_sweep) throw std::invalid_argument("config has no kde_sweep section");
    TargetModel target = make_target(c.target_spec);
    const double r = c.kde_sweep->r;

    KdeSweepTable table;
    for (double eta : c.kde_sweep->etas) {
        KdeSweepRow row;
        row.eta = eta;
        if (eta == 0.0) {
            row.eps_mgf_sq = 0.0;
            row.method = "exact";
        } else {
            ScoreEstimator est = kde_population_estimator(target, eta);
            if (est.is_affine() && target.is_gaussian()) {
                row.eps_mgf_sq = mgf_error_analytic_affine(*est.affine, target.gaussian(), r);
                row.method = "analytic";
            } else {
                MgfStat st = mgf_error_mc(est, target, r, c.kde_sweep->mc_n, c.seed + 29);
                row.eps_mgf_sq = st.value;
                row.ci_halfwidth = st.ci_halfwidth;
                row.method = "monte_carlo";
            }
        }
        if (target.smoothness_L && target.subgaussian_sigma) {
            const double s0_sq = target.score(Vector::Zero(target.dim)).squaredNorm();
            Lem7Result l7 = rhs_lem7(eta, *target.smoothness_L, *target.subgaussian_sigma,
                                     target.dim, r, s0_sq);
            row.lem7_value = l7.value;
            row.in_window = l7.in_window;
        } else {
            row.lem7_value = kNan;
            row.in_window = false;
        }
        table.rows.push_back(row);
    }

    // least-squares slope of log(eps) vs log(eta) over usable rows
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long n = 0;
    for (const auto& row : table.rows) {
        if (row.eta <= 0.0 || !(row.eps_mgf_sq > 0.0) || std::isinf(row.eps_mgf_sq)) continue;
        const double x = std::log(row.eta), y = std::log(row.eps_mgf_sq);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    table.slope_log_log = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : kNan;

    if (!c.output_prefix.empty()) {
        std::vector<CsvRow> rows;
        long id = 0;
        for (const auto& row : table.rows) {
            rows.push_back({id, 0, "eta", row.eta});
            rows.push_back({id, 0, "eps_mgf_sq", row.eps_mgf_sq});
            rows.push_back({id, 0, "ci_halfwidth", row.ci_halfwidth});
            rows.push_back({id, 0, "lem7_value", row.lem7_value});
            rows.push_back({id, 0, "in_window", row.in_window ? 1.0 : 0.0});
            ++id;
        }
        write_csv(c.output_prefix + ".csv", rows);
        nlohmann::json doc;
        doc["config"] = config_to_json(c);
        doc["slope_log_log"] = table.slope_log_log;
        doc["rows"] = nlohmann::json::array();
        for (const auto& row : table.rows)
            doc["rows"].push_back({{"eta", row.eta},
                                   {"eps_mgf_sq", row.eps_mgf_sq},
                                   {"ci_halfwidth", row.ci_halfwidth},
                                   {"lem7_value", row.lem7_value},
                                   {"in_window", row.in_window},
                                   {"method", row.method}});
        std::ofstream out(c.output_prefix + ".json", std::ios::binary);
        out << doc.dump(2) << '\n';
        nlohmann::json mj;
        mj["config_hash"] = config_hash(c);
        mj["code_version"] = kCodeVersion;
        mj["timestamp"] = iso_timestamp();
        mj["outputs"] = {c.output_prefix + ".csv", c.output_prefix + ".json",
                         c.output_prefix + ".manifest.json"};
        std::ofstream mout(c.output_prefix + ".manifest.json", std::ios::binary);
        mout << mj.dump(2) << '\n';
    }
    return table;
}

} // namespace lab
