#include "lab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace lab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void window_fail(const std::string& inequality) {
    throw WindowViolation("step-size window violated: " + inequality);
}

double require(const std::map<std::string, double>& m, const std::string& key,
               BoundName name) {
    auto it = m.find(key);
    if (it == m.end())
        throw std::invalid_argument("bound " + to_string(name) + " is missing constant '" +
                                    key + "'");
    if (!std::isfinite(it->second) && key != "eps_inf_sq" && key != "eps_mgf_sq")
        throw std::invalid_argument("bound " + to_string(name) + " constant '" + key +
                                    "' is not finite");
    return it->second;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

std::string to_string(BoundName name) {
    switch (name) {
        case BoundName::thm1_ild_kl: return "thm1_ild_kl";
        case BoundName::thm2_ila_kl: return "thm2_ila_kl";
        case BoundName::thm3_ila_renyi: return "thm3_ila_renyi";
        case BoundName::thm4_ddpm_kl: return "thm4_ddpm_kl";
        case BoundName::fact3_ula_kl: return "fact3_ula_kl";
        case BoundName::prop5_ild_renyi: return "prop5_ild_renyi";
        case BoundName::prop6_ila_renyi: return "prop6_ila_renyi";
        case BoundName::lem2_ou_init: return "lem2_ou_init";
        case BoundName::lem7_kde_mgf: return "lem7_kde_mgf";
        case BoundName::cor2_complexity: return "cor2_complexity";
        case BoundName::cor3_complexity: return "cor3_complexity";
    }
    throw std::logic_error("unknown bound name");
}

BoundName bound_name_from_string(const std::string& s) {
    static const std::map<std::string, BoundName> names = {
        {"thm1_ild_kl", BoundName::thm1_ild_kl},
        {"thm2_ila_kl", BoundName::thm2_ila_kl},
        {"thm3_ila_renyi", BoundName::thm3_ila_renyi},
        {"thm4_ddpm_kl", BoundName::thm4_ddpm_kl},
        {"fact3_ula_kl", BoundName::fact3_ula_kl},
        {"prop5_ild_renyi", BoundName::prop5_ild_renyi},
        {"prop6_ila_renyi", BoundName::prop6_ila_renyi},
        {"lem2_ou_init", BoundName::lem2_ou_init},
        {"lem7_kde_mgf", BoundName::lem7_kde_mgf},
        {"cor2_complexity", BoundName::cor2_complexity},
        {"cor3_complexity", BoundName::cor3_complexity},
    };
    auto it = names.find(s);
    if (it == names.end()) throw std::invalid_argument("unknown bound name '" + s + "'");
    return it->second;
}

double rhs_thm1(double H0, double alpha, double eps_mgf_sq, double t) {
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be positive");
    if (t < 0.0) throw std::invalid_argument("time must be nonnegative");
    const double decay = std::exp(-0.5 * alpha * t);
    return decay * H0 + (2.0 / alpha) * (1.0 - decay) * eps_mgf_sq;
}

double rhs_thm2(double H0, double alpha, double L, double Ls, int d, double h,
                double eps_mgf_sq, double k) {
    if (alpha <= 0.0 || L <= 0.0 || Ls <= 0.0 || h <= 0.0)
        throw std::invalid_argument("alpha, L, Ls, h must be positive");
    if (h >= alpha / (12.0 * Ls * L))
        window_fail("h >= alpha/(12*Ls*L) = " + fmt(alpha / (12.0 * Ls * L)));
    if (h >= 1.0 / (2.0 * alpha))
        window_fail("h >= 1/(2*alpha) = " + fmt(1.0 / (2.0 * alpha)));
    const double c1 = 128.0 * Ls * (Ls + L) / alpha;
    const double c2 = 8.0 / (3.0 * alpha);
    return std::exp(-alpha * h * k / 4.0) * H0 + c1 * d * h + c2 * eps_mgf_sq;
}

double rhs_thm3(double R0, double alpha, double L, double Ls, int d, double h,
                double eps_inf_sq, double q, double k) {
    if (alpha <= 0.0 || L <= 0.0 || Ls <= 0.0 || h <= 0.0)
        throw std::invalid_argument("alpha, L, Ls, h must be positive");
    if (q < 1.0) throw std::invalid_argument("Renyi order q must be >= 1");
    if (h >= alpha / (12.0 * L * Ls * q))
        window_fail("h >= alpha/(12*L*Ls*q) = " + fmt(alpha / (12.0 * L * Ls * q)));
    if (h >= q / (4.0 * alpha))
        window_fail("h >= q/(4*alpha) = " + fmt(q / (4.0 * alpha)));
    const double c1 = (16.0 * Ls * q / alpha) * (L + 2.0 * Ls * q);
    const double c2 = 96.0 * Ls * Ls * q * q / alpha;
    const double c3 = 16.0 * q * q / (3.0 * alpha);
    return std::exp(-alpha * h * k / q) * R0 + c1 * d * h + (c2 * h * h + c3) * eps_inf_sq;
}

double rhs_thm4(double H_gamma, double alpha, double L, double Ls, int d, double h,
                double eps_mgf_sq, double K) {
    if (alpha <= 0.0 || L <= 0.0 || Ls <= 0.0 || h <= 0.0)
        throw std::invalid_argument("alpha, L, Ls, h must be positive");
    if (h > alpha / (96.0 * Ls * L))
        window_fail("h > alpha/(96*Ls*L) = " + fmt(alpha / (96.0 * Ls * L)));
    return std::exp(-9.0 * alpha * h * K / 4.0) * H_gamma + (11.0 / alpha) * eps_mgf_sq +
           96.0 * Ls * (32.0 * Ls / alpha + 3.0) * d * h;
}

double rhs_fact3(double H0, double alpha, double L, int d, double h, double k,
                 double rate_constant) {
    if (alpha <= 0.0 || L <= 0.0 || h <= 0.0)
        throw std::invalid_argument("alpha, L, h must be positive");
    if (h > alpha / (4.0 * L * L))
        window_fail("h > alpha/(4*L^2) = " + fmt(alpha / (4.0 * L * L)));
    return std::exp(-alpha * h * k) * H0 + rate_constant * d * h * L * L / alpha;
}

double rhs_lem2(double H_nu_gamma, double alpha, double T) {
    if (alpha <= 0.0 || T < 0.0) throw std::invalid_argument("need alpha > 0 and T >= 0");
    return std::exp(-2.0 * alpha * T) * H_nu_gamma;
}

Lem7Result rhs_lem7(double eta, double L, double sigma, int d, double r,
                    double score_at_zero_sq) {
    if (eta < 0.0 || L <= 0.0 || sigma <= 0.0 || r <= 0.0)
        throw std::invalid_argument("need eta >= 0, L > 0, sigma > 0, r > 0");
    Lem7Result out;
    out.value = eta * L * L * (d + sigma * sigma * eta * L * L);
    const double cap1 = score_at_zero_sq > 0.0 ? d / score_at_zero_sq : kInf;
    const double cap2 = 1.0 / (2.0 * std::sqrt(2.0) * sigma * std::sqrt(r) * L * L);
    if (eta > cap1) {
        out.in_window = false;
        out.window_note = "eta > d/|s(0)|^2 = " + fmt(cap1);
    } else if (eta > cap2) {
        out.in_window = false;
        out.window_note = "eta > 1/(2*sqrt(2)*sigma*sqrt(r)*L^2) = " + fmt(cap2);
    }
    return out;
}

double rhs_prop5(double R2_hat0, double q, double alpha, double t, double renyi_2qm1) {
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be positive");
    if (q <= 1.0) throw std::invalid_argument("Renyi order q must exceed 1");
    const double t0 = std::log(2.0 * q - 1.0) / (2.0 * alpha);
    if (t < t0) window_fail("t < t0 = (1/(2*alpha))*log(2q-1) = " + fmt(t0));
    return ((q - 0.5) / (q - 1.0)) * std::exp(-alpha * (t - t0) / q) * R2_hat0 + renyi_2qm1;
}

double rhs_prop6(double R2_hat0, double q, double alpha, double L, int d, double h,
                 double k, double renyi_2qm1, double polylog_constant) {
    if (alpha <= 0.0 || L <= 0.0 || h <= 0.0)
        throw std::invalid_argument("alpha, L, h must be positive");
    if (q < 3.0) throw std::invalid_argument("requires Renyi order q >= 3");
    if (h >= alpha / (192.0 * q * q * L * L))
        window_fail("h >= alpha/(192*q^2*L^2) = " + fmt(alpha / (192.0 * q * q * L * L)));
    const double k0 = (2.0 / (alpha * h)) * std::log((q - 1.0) / 2.0);
    if (k <= k0) window_fail("k <= K0 = (2/(alpha*h))*log((q-1)/2) = " + fmt(k0));
    return ((q - 0.5) / (q - 1.0)) * std::exp(-alpha * h * (k - k0) / 4.0) * R2_hat0 +
           renyi_2qm1 + polylog_constant * d * h * q * L * L / alpha;
}

ComplexityChoice complexity_cor2(double eps, double alpha, double Ls, int d, double H0) {
    if (eps <= 0.0 || alpha <= 0.0 || Ls <= 0.0 || H0 <= 0.0)
        throw std::invalid_argument("eps, alpha, Ls, H0 must be positive");
    ComplexityChoice c;
    c.h = eps * alpha / (d * Ls * Ls);
    c.K = (d * Ls * Ls / (eps * alpha * alpha)) * std::log(std::max(H0 / eps, std::exp(1.0)));
    return c;
}

ComplexityChoice complexity_cor3(double eps, double alpha, double L, int d, double H0) {
    return complexity_cor2(eps, alpha, L, d, H0);
}

double bound_rhs_at(const BoundSpec& spec, double k) {
    if (spec.rhs_override) return *spec.rhs_override;
    const auto& c = spec.constants;
    switch (spec.name) {
        case BoundName::thm1_ild_kl:
            return rhs_thm1(require(c, "H0", spec.name), require(c, "alpha", spec.name),
                            require(c, "eps_mgf_sq", spec.name),
                            require(c, "h", spec.name) * k);
        case BoundName::thm2_ila_kl:
            return rhs_thm2(require(c, "H0", spec.name), require(c, "alpha", spec.name),
                            require(c, "L", spec.name), require(c, "Ls", spec.name),
                            static_cast<int>(require(c, "d", spec.name)),
                            require(c, "h", spec.name), require(c, "eps_mgf_sq", spec.name), k);
        case BoundName::thm3_ila_renyi:
            return rhs_thm3(require(c, "R0", spec.name), require(c, "alpha", spec.name),
                            require(c, "L", spec.name), require(c, "Ls", spec.name),
                            static_cast<int>(require(c, "d", spec.name)),
                            require(c, "h", spec.name), require(c, "eps_inf_sq", spec.name),
                            require(c, "q", spec.name), k);
        case BoundName::thm4_ddpm_kl:
            return rhs_thm4(require(c, "H0", spec.name), require(c, "alpha", spec.name),
                            require(c, "L", spec.name), require(c, "Ls", spec.name),
                            static_cast<int>(require(c, "d", spec.name)),
                            require(c, "h", spec.name), require(c, "eps_mgf_sq", spec.name), k);
        case BoundName::fact3_ula_kl: {
            double rc = c.count("rate_constant") ? c.at("rate_constant") : 1.0;
            return rhs_fact3(require(c, "H0", spec.name), require(c, "alpha", spec.name),
                             require(c, "L", spec.name),
                             static_cast<int>(require(c, "d", spec.name)),
                             require(c, "h", spec.name), k, rc);
        }
        case BoundName::prop5_ild_renyi:
            return rhs_prop5(require(c, "R0", spec.name), require(c, "q", spec.name),
                             require(c, "alpha", spec.name), require(c, "h", spec.name) * k,
                             require(c, "renyi_2qm1", spec.name));
        case BoundName::prop6_ila_renyi: {
            double pc = c.count("polylog_constant") ? c.at("polylog_constant") : 1.0;
            return rhs_prop6(require(c, "R0", spec.name), require(c, "q", spec.name),
                             require(c, "alpha", spec.name), require(c, "L", spec.name),
                             static_cast<int>(require(c, "d", spec.name)),
                             require(c, "h", spec.name), k,
                             require(c, "renyi_2qm1", spec.name), pc);
        }
        case BoundName::lem2_ou_init:
            return rhs_lem2(require(c, "H0", spec.name), require(c, "alpha", spec.name),
                            require(c, "h", spec.name) * k);
        case BoundName::lem7_kde_mgf:
        case BoundName::cor2_complexity:
        case BoundName::cor3_complexity:
            throw std::invalid_argument("bound " + to_string(spec.name) +
                                        " is not a per-step trajectory bound");
    }
    throw std::logic_error("unknown bound name");
}

double bound_asymptote(const BoundSpec& spec) {
    if (spec.rhs_override) return *spec.rhs_override;
    switch (spec.name) {
        case BoundName::lem2_ou_init:
            return 0.0;
        case BoundName::prop5_ild_renyi:
        case BoundName::prop6_ila_renyi: {
            // decay term vanishes; avoid the t0/K0 gate by evaluating directly
            const auto& c = spec.constants;
            double tail = require(c, "renyi_2qm1", spec.name);
            if (spec.name == BoundName::prop6_ila_renyi) {
                double pc = c.count("polylog_constant") ? c.at("polylog_constant") : 1.0;
                tail += pc * require(c, "d", spec.name) * require(c, "h", spec.name) *
                        require(c, "q", spec.name) * require(c, "L", spec.name) *
                        require(c, "L", spec.name) / require(c, "alpha", spec.name);
            }
            return tail;
        }
        default:
            return bound_rhs_at(spec, 1e18);
    }
}

AuditResult audit_run(const std::vector<std::pair<long, double>>& lhs_series,
                      const BoundSpec& spec) {
    if (lhs_series.empty()) throw std::invalid_argument("empty trajectory");
    AuditResult out;
    out.name = spec.name;
    out.all_satisfied = true;
    out.steps.reserve(lhs_series.size());
    for (const auto& [step, lhs] : lhs_series) {
        StepVerdict v;
        v.step = step;
        v.lhs = lhs;
        v.rhs = bound_rhs_at(spec, static_cast<double>(step));
        v.satisfied = lhs <= v.rhs * (1.0 + 1e-9) + 1e-300;
        out.all_satisfied = out.all_satisfied && v.satisfied;
        out.steps.push_back(v);
    }
    const size_t half = lhs_series.size() / 2;
    out.tail_max_lhs = 0.0;
    for (size_t i = half; i < lhs_series.size(); ++i)
        out.tail_max_lhs = std::max(out.tail_max_lhs, lhs_series[i].second);
    out.asymptote_rhs = bound_asymptote(spec);
    out.stable = out.tail_max_lhs <= out.asymptote_rhs * 1.05 + 1e-300;
    return out;
}

} // namespace lab
