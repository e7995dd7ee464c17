#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lab {

/// Raised when a bound's step-size / time window is violated; the message
/// names the violated inequality.
struct WindowViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class BoundName {
    thm1_ild_kl,
    thm2_ila_kl,
    thm3_ila_renyi,
    thm4_ddpm_kl,
    fact3_ula_kl,
    prop5_ild_renyi,
    prop6_ila_renyi,
    lem2_ou_init,
    lem7_kde_mgf,
    cor2_complexity,
    cor3_complexity,
};

std::string to_string(BoundName name);
BoundName bound_name_from_string(const std::string& s);

/// KL along the continuous-time dynamics with MGF score error at order
/// r = 1/alpha: e^{-alpha t/2} H0 + (2/alpha)(1 - e^{-alpha t/2}) eps_mgf_sq.
double rhs_thm1(double H0, double alpha, double eps_mgf_sq, double t);

/// KL after k discrete steps with MGF error at order r = 9/alpha.
/// Window: h < min(alpha/(12 Ls L), 1/(2 alpha)), strict.
double rhs_thm2(double H0, double alpha, double L, double Ls, int d, double h,
                double eps_mgf_sq, double k);

/// Renyi of order q >= 1 with sup error.
/// Window: h < min(alpha/(12 L Ls q), q/(4 alpha)), strict.
double rhs_thm3(double R0, double alpha, double L, double Ls, int d, double h,
                double eps_inf_sq, double q, double k);

/// KL of the reverse diffusion after K steps, r = 65/(6 alpha).
/// Window: h <= alpha/(96 Ls L).
double rhs_thm4(double H_gamma, double alpha, double L, double Ls, int d, double h,
                double eps_mgf_sq, double K);

/// Exact-score baseline: e^{-alpha h k} H0 + c * d h L^2 / alpha. The paper
/// states only the rate; the absolute constant c defaults to 1 and the value
/// is used for shape checks, never hard inequalities.
/// Window: h <= alpha/(4 L^2).
double rhs_fact3(double H0, double alpha, double L, int d, double h, double k,
                 double rate_constant = 1.0);

/// Initialization error of the reverse diffusion: e^{-2 alpha T} * H_nu_gamma.
double rhs_lem2(double H_nu_gamma, double alpha, double T);

struct Lem7Result {
    double value = 0.0; // eta L^2 (d + sigma^2 eta L^2); scaling only
    bool in_window = true;
    std::string window_note; // which inequality failed, when out of window
};

/// Bandwidth window: eta <= min(d/|s(0)|^2, 1/(2 sqrt(2) sigma sqrt(r) L^2)).
/// Out-of-window rows are flagged but still evaluated.
Lem7Result rhs_lem7(double eta, double L, double sigma, int d, double r,
                    double score_at_zero_sq);

/// Continuous-time Renyi bound through an approximating distribution:
/// ((q-1/2)/(q-1)) e^{-alpha(t-t0)/q} R2_hat0 + renyi_2qm1, with
/// t0 = (1/(2 alpha)) log(2q-1). Requires q > 1 and t >= t0.
double rhs_prop5(double R2_hat0, double q, double alpha, double t, double renyi_2qm1);

/// Discrete-time counterpart: q >= 3, h < alpha/(192 q^2 L^2),
/// k > K0 = (2/(alpha h)) log((q-1)/2); adds a bias term
/// polylog_constant * d h q L^2 / alpha whose polylog factor is not pinned
/// down, so this value is shape-check only.
double rhs_prop6(double R2_hat0, double q, double alpha, double L, int d, double h,
                 double k, double renyi_2qm1, double polylog_constant = 1.0);

struct ComplexityChoice {
    double h = 0.0;
    double K = 0.0;
};

/// Rate-only step-size/iteration choices with unit constants:
/// h = eps*alpha/(d*Lip^2), K = (d*Lip^2/(eps*alpha^2)) log(H0/eps).
ComplexityChoice complexity_cor2(double eps, double alpha, double Ls, int d, double H0);
ComplexityChoice complexity_cor3(double eps, double alpha, double L, int d, double H0);

/// Constants for one bound audit. Keys (per bound): H0/R0, alpha, L, Ls, d,
/// h, q, eps_mgf_sq, eps_inf_sq, renyi_2qm1, rate_constant. Step index k (or
/// t = h*k for the continuous bounds) comes from the trajectory.
struct BoundSpec {
    BoundName name = BoundName::thm2_ila_kl;
    std::map<std::string, double> constants;
    std::optional<double> rhs_override; // audit-logic self-tests only
};

/// rhs of `spec` at step k (continuous bounds use t = h*k).
double bound_rhs_at(const BoundSpec& spec, double k);
/// Asymptote (k -> infinity) of the bound.
double bound_asymptote(const BoundSpec& spec);

struct StepVerdict {
    long step = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool satisfied = false;
};

struct AuditResult {
    BoundName name = BoundName::thm2_ila_kl;
    std::vector<StepVerdict> steps;
    bool all_satisfied = false;
    double tail_max_lhs = 0.0; // max lhs over the last half of the steps
    double asymptote_rhs = 0.0;
    bool stable = false; // tail_max_lhs <= asymptote * 1.05
};

/// Audits an analytic lhs series (step index, divergence value) against the
/// bound; comparisons carry 1e-9 relative slack.
AuditResult audit_run(const std::vector<std::pair<long, double>>& lhs_series,
                      const BoundSpec& spec);

} // namespace lab
