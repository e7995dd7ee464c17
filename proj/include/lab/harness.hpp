#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lab/bounds.hpp"
#include "lab/estimators.hpp"
#include "lab/samplers.hpp"
#include "lab/targets.hpp"

namespace lab {

struct SweepAxis {
    std::string param; // step_h | num_steps | substeps | chains | alpha | alpha_hat | eta
    std::vector<double> values;
};

struct KdeSweepSpec {
    std::vector<double> etas;
    double r = 1.0;
    long mc_n = 100000;
};

struct ExperimentConfig {
    MixtureSpec target_spec;
    nlohmann::json estimator_spec; // {"kind": "exact"|"perturbed"|"offset"|"kde_pop"|"kde_emp", ...}
    std::string algorithm = "ila"; // ila | ild | ula | ddpm
    double step_h = 0.01;
    long num_steps = 100;
    int substeps = 1;
    int chains = 1;
    double alpha = 1.0; // forward rate / prior precision (ddpm only)
    long record_every = 1;
    std::optional<GaussianSpec> init; // Langevin initial law; default N(0, I)
    std::vector<std::string> metrics; // mean_norm | cov_trace | kl | censored
    std::vector<std::string> bounds;  // bound names to audit
    std::map<std::string, std::map<std::string, double>> bound_constants; // per-bound overrides
    std::optional<double> mgf_order_r; // score-error MGF order used for measurement
    std::optional<SweepAxis> sweep;
    std::optional<KdeSweepSpec> kde_sweep;
    std::string output_prefix;
    std::uint64_t seed = 0;
    long mc_error_n = 100000; // Monte-Carlo budget for non-analytic score errors
};

struct Diagnostic {
    std::string severity; // "error" | "warning"
    std::string message;
};

struct RunManifest {
    std::string config_hash;
    std::string code_version;
    std::string timestamp;
    std::vector<std::string> outputs;
    std::map<std::string, double> censoring_fraction; // per run_id
};

ExperimentConfig parse_config(const nlohmann::json& j);
/// Canonical (sorted-key) serialization; parse(serialize(c)) is idempotent.
nlohmann::json config_to_json(const ExperimentConfig& c);

/// FNV-1a 64 over the canonical serialization; stable under key reordering.
std::string config_hash(const ExperimentConfig& c);

/// Exhaustive precondition report; never throws, never stops at the first
/// failure. Empty result means fully valid (no warnings either).
std::vector<Diagnostic> validate(const ExperimentConfig& c);
std::vector<Diagnostic> validate_json(const nlohmann::json& j);

/// Executes the experiment (honoring `sweep` if present) and writes
/// <prefix>.csv, <prefix>.json, <prefix>.manifest.json. Deterministic given
/// the seed; partial outputs are removed on failure.
/// Throws std::invalid_argument when validation fails; the message lists all
/// diagnostics at once.
RunManifest run(const ExperimentConfig& c);

/// True when the last completed run left no live chain in some run point.
bool all_chains_diverged(const RunManifest& m);

struct KdeSweepRow {
    double eta = 0.0;
    double eps_mgf_sq = 0.0;
    double ci_halfwidth = 0.0; // zero for analytic rows
    double lem7_value = 0.0;
    bool in_window = true;
    std::string method;
};

struct KdeSweepTable {
    std::vector<KdeSweepRow> rows;
    double slope_log_log = 0.0; // of log(eps_mgf_sq) vs log(eta), eta > 0 rows
};

/// Bandwidth sweep of the population KDE estimator; also written to the
/// config's output files when output_prefix is set.
KdeSweepTable sweep_kde_bandwidth(const ExperimentConfig& c);

/// Worker pool size: LAB_WORKERS env var, else min(hardware, 4), at least 1.
int worker_count();

} // namespace lab
