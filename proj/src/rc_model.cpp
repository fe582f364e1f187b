#include "rcassoc/rc_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

namespace rcassoc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// --- deterministic perturbation stream for restarts ---
std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// --- softmax cell parameterization: p = exp(u)/sum, last cell pinned at 0 ---
// flat index k = i*c + j

Eigen::MatrixXd table_from_logits(const Eigen::VectorXd& u, int r, int c) {
    const double shift = u.maxCoeff();
    Eigen::MatrixXd p(r, c);
    double total = 0.0;
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(u(i * c + j) - shift);
            p(i, j) = e;
            total += e;
        }
    }
    p /= total;
    return p;
}

// Joint coordinate map zeta(p) = [row margin log-contrasts; column margin
// log-contrasts; vec(H) row-major] -- a bijection between the open simplex
// and its range for the interaction family.
struct ZetaMap {
    int r, c;
    InteractionSpec spec;
    std::vector<EventRanges> row_events;  // per cut a = 1..r-1
    std::vector<EventRanges> col_events;

    ZetaMap(int r_, int c_, const InteractionSpec& s) : r(r_), c(c_), spec(s) {
        for (int a = 1; a <= r - 1; ++a) row_events.push_back(logit_event_ranges(r, a, s.row_type));
        for (int b = 1; b <= c - 1; ++b) col_events.push_back(logit_event_ranges(c, b, s.col_type));
    }

    int n_margin() const { return r - 1 + c - 1; }
    int dim() const { return r * c - 1; }

    Eigen::VectorXd eval(const Eigen::MatrixXd& p) const {
        Eigen::VectorXd z(dim());
        const Eigen::VectorXd rho = p.rowwise().sum();
        const Eigen::VectorXd gam = p.colwise().sum().transpose();
        for (int i = 0; i < r - 1; ++i) z(i) = std::log(rho(i) / rho(r - 1));
        for (int j = 0; j < c - 1; ++j) z(r - 1 + j) = std::log(gam(j) / gam(c - 1));
        const Eigen::MatrixXd h = interaction_values(p, spec);
        for (int a = 0; a < r - 1; ++a) {
            for (int b = 0; b < c - 1; ++b) z(n_margin() + a * (c - 1) + b) = h(a, b);
        }
        return z;
    }

    // zeta and its Jacobian with respect to the free cell logits.
    void eval_with_jacobian(const Eigen::MatrixXd& p, Eigen::VectorXd& z, Eigen::MatrixXd& J) const {
        const int d = dim();
        const int nm = n_margin();
        const Eigen::VectorXd rho = p.rowwise().sum();
        const Eigen::VectorXd gam = p.colwise().sum().transpose();
        z.resize(d);
        // G = d zeta / d p over all r*c cells
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d, r * c);

        for (int i = 0; i < r - 1; ++i) {
            z(i) = std::log(rho(i) / rho(r - 1));
            for (int j = 0; j < c; ++j) {
                G(i, i * c + j) += 1.0 / rho(i);
                G(i, (r - 1) * c + j) -= 1.0 / rho(r - 1);
            }
        }
        for (int j = 0; j < c - 1; ++j) {
            z(r - 1 + j) = std::log(gam(j) / gam(c - 1));
            for (int i = 0; i < r; ++i) {
                G(r - 1 + j, i * c + j) += 1.0 / gam(j);
                G(r - 1 + j, i * c + (c - 1)) -= 1.0 / gam(c - 1);
            }
        }

        auto range_sum = [](const Eigen::VectorXd& v, int lo, int hi) {
            return v.segment(lo, hi - lo + 1).sum();
        };
        const double lam = spec.lambda;
        for (int a = 0; a < r - 1; ++a) {
            const EventRanges& re = row_events[a];
            const double pr[2] = {range_sum(rho, re.lo1, re.hi1), range_sum(rho, re.lo2, re.hi2)};
            for (int b = 0; b < c - 1; ++b) {
                const EventRanges& ce = col_events[b];
                const double gc[2] = {range_sum(gam, ce.lo1, ce.hi1),
                                      range_sum(gam, ce.lo2, ce.hi2)};
                const int row = nm + a * (c - 1) + b;
                double hab = 0.0;
                for (int u = 0; u < 2; ++u) {
                    const int rlo = (u == 0) ? re.lo1 : re.lo2;
                    const int rhi = (u == 0) ? re.hi1 : re.hi2;
                    for (int v = 0; v < 2; ++v) {
                        const int clo = (v == 0) ? ce.lo1 : ce.lo2;
                        const int chi = (v == 0) ? ce.hi1 : ce.hi2;
                        const double sign = (u == v) ? 1.0 : -1.0;
                        const double q = p.block(rlo, clo, rhi - rlo + 1, chi - clo + 1).sum();
                        const double s = q / (pr[u] * gc[v]);
                        hab += sign * f_lambda(s, lam);
                        // d f(s)/dp: s' = s * (1_in_block/q - 1_in_rowevent/P - 1_in_colevent/G)
                        const double w = sign * std::exp((lam - 1.0) * std::log(s)) * s;
                        const double in_block = w / q;
                        const double in_rev = -w / pr[u];
                        const double in_cev = -w / gc[v];
                        for (int i = rlo; i <= rhi; ++i) {
                            for (int j = clo; j <= chi; ++j) G(row, i * c + j) += in_block;
                        }
                        for (int i = rlo; i <= rhi; ++i) {
                            for (int j = 0; j < c; ++j) G(row, i * c + j) += in_rev;
                        }
                        for (int i = 0; i < r; ++i) {
                            for (int j = clo; j <= chi; ++j) G(row, i * c + j) += in_cev;
                        }
                    }
                }
                z(row) = hab;
            }
        }

        // chain through the softmax: dz/du_k = p_k (G_k - G p), free cells only
        Eigen::VectorXd pflat(r * c);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) pflat(i * c + j) = p(i, j);
        }
        const Eigen::VectorXd Gp = G * pflat;
        J.resize(d, d);
        for (int k = 0; k < d; ++k) {
            J.col(k) = pflat(k) * (G.col(k) - Gp);
        }
    }
};

// Damped Newton inversion of the zeta map with a homotopy fallback.
struct ZetaSolver {
    const ZetaMap& map;
    double tol;
    int max_iter;

    bool newton(const Eigen::VectorXd& target, Eigen::VectorXd& u) const {
        const int d = map.dim();
        Eigen::MatrixXd p = table_from_logits(u, map.r, map.c);
        Eigen::VectorXd z;
        Eigen::MatrixXd J;
        map.eval_with_jacobian(p, z, J);
        Eigen::VectorXd res = z - target;
        double res_norm = res.cwiseAbs().maxCoeff();
        for (int it = 0; it < max_iter; ++it) {
            if (res_norm <= tol) return true;
            Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
            if (!lu.isInvertible()) return false;
            const Eigen::VectorXd step = lu.solve(res);
            if (!step.allFinite()) return false;
            double alpha = 1.0;
            bool accepted = false;
            for (int h = 0; h < 60; ++h) {
                Eigen::VectorXd u_try = u;
                u_try.head(d) -= alpha * step;
                const Eigen::MatrixXd p_try = table_from_logits(u_try, map.r, map.c);
                if (p_try.minCoeff() < 1e-300) {
                    alpha *= 0.5;
                    continue;
                }
                const Eigen::VectorXd z_try = map.eval(p_try);
                if (!z_try.allFinite()) {
                    alpha *= 0.5;
                    continue;
                }
                const double n_try = (z_try - target).cwiseAbs().maxCoeff();
                if (n_try < res_norm) {
                    u = u_try;
                    res_norm = n_try;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) return false;
            p = table_from_logits(u, map.r, map.c);
            map.eval_with_jacobian(p, z, J);
            res = z - target;
            res_norm = res.cwiseAbs().maxCoeff();
        }
        return res_norm <= tol;
    }

    bool solve(const Eigen::VectorXd& target, Eigen::VectorXd& u,
               std::initializer_list<int> ladder = {1, 8, 32, 128}) const {
        const Eigen::VectorXd z0 = map.eval(table_from_logits(u, map.r, map.c));
        if (!z0.allFinite()) return false;
        for (int nsteps : ladder) {
            Eigen::VectorXd u_try = u;
            bool ok = true;
            for (int s = 1; s <= nsteps && ok; ++s) {
                const Eigen::VectorXd zt =
                    z0 + (target - z0) * (static_cast<double>(s) / nsteps);
                ok = newton(zt, u_try);
            }
            if (ok) {
                u = u_try;
                return true;
            }
        }
        return false;
    }
};

Eigen::VectorXd logits_from_table(const Eigen::MatrixXd& p) {
    const int r = static_cast<int>(p.rows());
    const int c = static_cast<int>(p.cols());
    Eigen::VectorXd u(r * c);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) u(i * c + j) = std::log(p(i, j));
    }
    u.array() -= u(r * c - 1);
    return u;
}

// --- identification: project raw bilinear factors onto the constraints ---

Eigen::MatrixXd cumulate_scores(const Eigen::MatrixXd& increments) {
    Eigen::MatrixXd m(increments.rows() + 1, increments.cols());
    m.row(0).setZero();
    for (Eigen::Index a = 0; a < increments.rows(); ++a) m.row(a + 1) = m.row(a) + increments.row(a);
    // uniform-weight centering
    m.rowwise() -= m.colwise().mean();
    return m;
}

struct IdentifiedScores {
    Eigen::MatrixXd mu, nu;
    Eigen::VectorXd phi;
};

// Given H = A B^T, produce weight-orthonormal scores with descending phi and
// the positive-first-increment sign convention; Dmu diag(phi) Dnu^T == A B^T.
IdentifiedScores identify_scores(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const int r = static_cast<int>(A.rows()) + 1;
    const int c = static_cast<int>(B.rows()) + 1;
    const int K = static_cast<int>(A.cols());
    const Eigen::MatrixXd M = cumulate_scores(A);
    const Eigen::MatrixXd N = cumulate_scores(B);

    // weight-orthonormal bases: M = Mt * RM with Mt' W Mt = I, W = I/r
    Eigen::JacobiSVD<Eigen::MatrixXd> svd_m(M / std::sqrt(double(r)),
                                            Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd_n(N / std::sqrt(double(c)),
                                            Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd Mt = std::sqrt(double(r)) * svd_m.matrixU();
    const Eigen::MatrixXd Nt = std::sqrt(double(c)) * svd_n.matrixU();
    const Eigen::MatrixXd RM =
        svd_m.singularValues().asDiagonal() * svd_m.matrixV().transpose();
    const Eigen::MatrixXd RN =
        svd_n.singularValues().asDiagonal() * svd_n.matrixV().transpose();

    Eigen::JacobiSVD<Eigen::MatrixXd> core(RM * RN.transpose(),
                                           Eigen::ComputeFullU | Eigen::ComputeFullV);
    IdentifiedScores out;
    out.mu = Mt * core.matrixU();
    out.nu = Nt * core.matrixV();
    out.phi = core.singularValues();

    for (int k = 0; k < K; ++k) {
        for (int a = 0; a < r - 1; ++a) {
            const double d = out.mu(a + 1, k) - out.mu(a, k);
            if (std::abs(d) > 1e-12) {
                if (d < 0) {
                    out.mu.col(k) = -out.mu.col(k);
                    out.nu.col(k) = -out.nu.col(k);
                }
                break;
            }
        }
    }
    return out;
}

void check_params(const RCParams& params, double tol = 1e-8) {
    const int r = static_cast<int>(params.mu.rows());
    const int c = static_cast<int>(params.nu.rows());
    const int K = static_cast<int>(params.phi.size());
    if (params.mu.cols() != K || params.nu.cols() != K) {
        throw Error(ErrorCode::invariant_violation, "score matrices do not match phi length");
    }
    auto check_side = [&](const Eigen::MatrixXd& m, int n, const char* side) {
        const Eigen::MatrixXd gram = m.transpose() * m / double(n);
        for (int k = 0; k < K; ++k) {
            if (std::abs(m.col(k).mean()) > tol) {
                throw Error(ErrorCode::invariant_violation,
                            std::string(side) + " scores are not centered");
            }
            if (std::abs(gram(k, k) - 1.0) > tol) {
                throw Error(ErrorCode::invariant_violation,
                            std::string(side) + " scores are not normalized");
            }
            for (int l = 0; l < k; ++l) {
                if (std::abs(gram(k, l)) > tol) {
                    throw Error(ErrorCode::invariant_violation,
                                std::string(side) + " scores are not orthogonal");
                }
            }
        }
    };
    check_side(params.mu, r, "row");
    check_side(params.nu, c, "column");
    for (int k = 0; k < K; ++k) {
        if (params.phi(k) < -1e-12 || (k > 0 && params.phi(k) > params.phi(k - 1) + tol)) {
            throw Error(ErrorCode::invariant_violation,
                        "phi must be descending and nonnegative");
        }
    }
}

Eigen::MatrixXd bilinear_interaction(const RCParams& params) {
    const Eigen::Index r = params.mu.rows();
    const Eigen::Index c = params.nu.rows();
    const Eigen::MatrixXd dmu = params.mu.bottomRows(r - 1) - params.mu.topRows(r - 1);
    const Eigen::MatrixXd dnu = params.nu.bottomRows(c - 1) - params.nu.topRows(c - 1);
    return dmu * params.phi.asDiagonal() * dnu.transpose();
}

std::vector<std::string> index_labels(const char* prefix, int n) {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

}  // namespace

int dof(int r, int c, int K) {
    if (K < 1 || K > std::min(r, c) - 1) {
        std::ostringstream os;
        os << "rank K=" << K << " outside 1..min(r,c)-1 for a " << r << "x" << c << " table";
        throw Error(ErrorCode::rank_out_of_range, os.str());
    }
    return (r - 1 - K) * (c - 1 - K);
}

void validate_model_spec(const ModelSpec& spec, int r, int c) {
    dof(r, c, spec.K);
    validate_interaction_spec(spec.interaction);
}

Margins margins_from_coords(const Eigen::VectorXd& row_coord, const Eigen::VectorXd& col_coord) {
    auto expand = [](const Eigen::VectorXd& coord) {
        Eigen::VectorXd m(coord.size() + 1);
        m.head(coord.size()) = coord.array().exp();
        m(coord.size()) = 1.0;
        return Eigen::VectorXd(m / m.sum());
    };
    return Margins{expand(row_coord), expand(col_coord)};
}

Eigen::VectorXd coords_from_margin(const Eigen::VectorXd& margin) {
    const Eigen::Index n = margin.size();
    if ((margin.array() <= 0.0).any()) {
        throw Error(ErrorCode::zero_margin, "margin coordinates need strictly positive margins");
    }
    return (margin.head(n - 1).array() / margin(n - 1)).log();
}

InteractionMatrix interaction_from_scores(const RCParams& params, const ModelSpec& spec) {
    check_params(params);
    const int r = static_cast<int>(params.mu.rows());
    const int c = static_cast<int>(params.nu.rows());
    validate_model_spec(spec, r, c);
    InteractionMatrix out;
    out.spec = spec.interaction;
    out.values = bilinear_interaction(params);
    const auto rl = index_labels("r", r);
    const auto cl = index_labels("c", c);
    for (int a = 1; a <= r - 1; ++a) out.row_cut_labels.push_back(rl[a - 1] + "|" + rl[a]);
    for (int b = 1; b <= c - 1; ++b) out.col_cut_labels.push_back(cl[b - 1] + "|" + cl[b]);
    return out;
}

double log_likelihood(const ContingencyTable& t, const ProbabilityTable& p) {
    if (t.rows() != p.rows() || t.cols() != p.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "table and probabilities differ in shape");
    }
    return (t.counts.array() * p.p.array().log()).sum();
}

double deviance(const ContingencyTable& t, const ProbabilityTable& fitted) {
    if (t.rows() != fitted.rows() || t.cols() != fitted.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "table and fitted differ in shape");
    }
    const double n_total = t.total();
    double g2 = 0.0;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
            const double n = t.counts(i, j);
            if (n > 0.0) g2 += n * std::log(n / (n_total * fitted.p(i, j)));
        }
    }
    g2 *= 2.0;
    if (g2 < 0.0 && g2 > -1e-9) g2 = 0.0;  // saturated fits round below zero
    return g2;
}

ProbabilityTable table_from_params(const RCParams& params, const ModelSpec& spec,
                                   const Margins& m, double tol, int max_iter) {
    check_params(params);
    const int r = static_cast<int>(params.mu.rows());
    const int c = static_cast<int>(params.nu.rows());
    validate_model_spec(spec, r, c);
    if (m.row.size() != r || m.col.size() != c) {
        throw Error(ErrorCode::dimension_mismatch, "margins do not match score dimensions");
    }
    if ((m.row.array() <= 0.0).any() || (m.col.array() <= 0.0).any()) {
        throw Error(ErrorCode::zero_margin, "target margins must be strictly positive");
    }
    const Eigen::MatrixXd h = bilinear_interaction(params);
    const auto row_labels = index_labels("r", r);
    const auto col_labels = index_labels("c", c);

    if (spec.interaction.row_type == LogitType::L && spec.interaction.col_type == LogitType::L &&
        spec.interaction.lambda == 0.0) {
        // log-linear route: double-cumulated interactions give a table whose
        // local log-odds ratios equal h exactly; IPF moves the margins.
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(r, c);
        for (int i = 1; i < r; ++i) {
            for (int j = 1; j < c; ++j) x(i, j) = x(i - 1, j) + x(i, j - 1) - x(i - 1, j - 1) + h(i - 1, j - 1);
        }
        Eigen::MatrixXd seed = (x.array() - x.maxCoeff()).exp();
        seed /= seed.sum();
        return ipf_adjust(ProbabilityTable{row_labels, col_labels, seed}, m,
                          std::min(tol, 1e-10), 10000);
    }

    ZetaMap map(r, c, spec.interaction);
    Eigen::VectorXd target(map.dim());
    target.head(r - 1) = coords_from_margin(m.row);
    target.segment(r - 1, c - 1) = coords_from_margin(m.col);
    for (int a = 0; a < r - 1; ++a) {
        for (int b = 0; b < c - 1; ++b) target(map.n_margin() + a * (c - 1) + b) = h(a, b);
    }
    const ProbabilityTable indep = independence_table(m, row_labels, col_labels);
    Eigen::VectorXd u = logits_from_table(indep.p);
    ZetaSolver solver{map, tol, max_iter};
    if (!solver.solve(target, u)) {
        const Eigen::MatrixXd p = table_from_logits(u, r, c);
        if (p.minCoeff() < 1e-12) {
            throw Error(ErrorCode::simplex_escape,
                        "no strictly positive table reaches the requested interactions");
        }
        throw Error(ErrorCode::non_convergence,
                    "coordinate inversion did not converge; the parameter/lambda "
                    "combination may be infeasible");
    }
    return ProbabilityTable{row_labels, col_labels, table_from_logits(u, r, c)};
}

ProbabilityTable table_from_params(const RCParams& params, const ModelSpec& spec,
                                   double tol, int max_iter) {
    return table_from_params(params, spec,
                             margins_from_coords(params.row_coord, params.col_coord), tol,
                             max_iter);
}

// ---------------------------------------------------------------------------
// Outer objective
// ---------------------------------------------------------------------------

struct FitObjective::Impl {
    int r, c, K;
    Eigen::MatrixXd counts;
    double n_total;
    ZetaMap map;
    double inner_tol;
    int inner_max_iter;
    bool pin_margins;
    Eigen::VectorXd pinned_coords;  // margin block when pin_margins is set
    Eigen::VectorXd theta0;

    Eigen::VectorXd u_warm;
    bool warm_valid = false;

    Impl(const ContingencyTable& t, const ModelSpec& spec, const FitOptions& opt)
        : r(static_cast<int>(t.rows())),
          c(static_cast<int>(t.cols())),
          K(spec.K),
          counts(t.counts),
          n_total(t.total()),
          map(r, c, spec.interaction),
          inner_tol(opt.inner_tol),
          inner_max_iter(opt.inner_max_iter),
          pin_margins(opt.pin_margins) {
        validate_model_spec(spec, r, c);
        const ProbabilityTable p_obs = to_probability(t, opt.smoothing);
        const Margins m = margins(p_obs);
        Eigen::VectorXd coords(r - 1 + c - 1);
        coords.head(r - 1) = coords_from_margin(m.row);
        coords.tail(c - 1) = coords_from_margin(m.col);

        const Eigen::MatrixXd h0 = interaction_values(p_obs.p, spec.interaction);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(h0, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd sv = svd.singularValues();
        Eigen::MatrixXd A0(r - 1, K), B0(c - 1, K);
        for (int k = 0; k < K; ++k) {
            const double s = std::sqrt(std::max(sv(k), 0.0));
            A0.col(k) = svd.matrixU().col(k) * s;
            B0.col(k) = svd.matrixV().col(k) * s;
        }

        const int nm = pin_margins ? 0 : (r - 1 + c - 1);
        theta0.resize(nm + (r - 1) * K + (c - 1) * K);
        if (!pin_margins) {
            theta0.head(r - 1 + c - 1) = coords;
        } else {
            pinned_coords = coords;
        }
        Eigen::Map<Eigen::MatrixXd>(theta0.data() + nm, r - 1, K) = A0;
        Eigen::Map<Eigen::MatrixXd>(theta0.data() + nm + (r - 1) * K, c - 1, K) = B0;
    }

    int margin_block() const { return pin_margins ? 0 : (r - 1 + c - 1); }

    Decoded decode(const Eigen::VectorXd& theta) const {
        Decoded d;
        const int nm = margin_block();
        Eigen::VectorXd coords =
            pin_margins ? pinned_coords : Eigen::VectorXd(theta.head(r - 1 + c - 1));
        d.row_coord = coords.head(r - 1);
        d.col_coord = coords.tail(c - 1);
        d.score_a = Eigen::Map<const Eigen::MatrixXd>(theta.data() + nm, r - 1, K);
        d.score_b = Eigen::Map<const Eigen::MatrixXd>(theta.data() + nm + (r - 1) * K, c - 1, K);
        return d;
    }

    Eigen::VectorXd target_of(const Eigen::VectorXd& theta) const {
        const Decoded d = decode(theta);
        const Eigen::MatrixXd h = d.score_a * d.score_b.transpose();
        Eigen::VectorXd target(map.dim());
        target.head(r - 1) = d.row_coord;
        target.segment(r - 1, c - 1) = d.col_coord;
        for (int a = 0; a < r - 1; ++a) {
            for (int b = 0; b < c - 1; ++b) target(map.n_margin() + a * (c - 1) + b) = h(a, b);
        }
        return target;
    }

    bool solve_inner(const Eigen::VectorXd& target) {
        ZetaSolver solver{map, inner_tol, inner_max_iter};
        if (warm_valid) {
            Eigen::VectorXd u = u_warm;
            if (solver.solve(target, u, {1, 8})) {
                u_warm = u;
                return true;
            }
        }
        // cold start: independence table at the target margins
        const Margins m = margins_from_coords(target.head(r - 1),
                                              Eigen::VectorXd(target.segment(r - 1, c - 1)));
        Eigen::VectorXd u = logits_from_table(m.row * m.col.transpose());
        if (solver.solve(target, u, {1, 8, 32, 128})) {
            u_warm = u;
            warm_valid = true;
            return true;
        }
        return false;
    }

    double value(const Eigen::VectorXd& theta) {
        if (!solve_inner(target_of(theta))) return kInf;
        const Eigen::MatrixXd p = table_from_logits(u_warm, r, c);
        return -(counts.array() * p.array().log()).sum() / n_total;
    }

    double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        grad = Eigen::VectorXd::Zero(theta.size());
        if (!solve_inner(target_of(theta))) return kInf;
        const Eigen::MatrixXd p = table_from_logits(u_warm, r, c);
        const double f = -(counts.array() * p.array().log()).sum() / n_total;

        Eigen::VectorXd z;
        Eigen::MatrixXd J;
        map.eval_with_jacobian(p, z, J);
        const int d = map.dim();
        Eigen::VectorXd g_u(d);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                const int k = i * c + j;
                if (k < d) g_u(k) = counts(i, j) / n_total - p(i, j);
            }
        }
        // dl/dzeta via the implicit function theorem
        const Eigen::VectorXd dldz = J.transpose().fullPivLu().solve(g_u);

        const Decoded dec = decode(theta);
        const int nm = margin_block();
        if (!pin_margins) grad.head(r - 1 + c - 1) = -dldz.head(r - 1 + c - 1);
        Eigen::MatrixXd dH(r - 1, c - 1);
        for (int a = 0; a < r - 1; ++a) {
            for (int b = 0; b < c - 1; ++b) dH(a, b) = dldz(map.n_margin() + a * (c - 1) + b);
        }
        Eigen::Map<Eigen::MatrixXd>(grad.data() + nm, r - 1, K) = -dH * dec.score_b;
        Eigen::Map<Eigen::MatrixXd>(grad.data() + nm + (r - 1) * K, c - 1, K) =
            -dH.transpose() * dec.score_a;
        return f;
    }
};

FitObjective::FitObjective(const ContingencyTable& t, const ModelSpec& spec,
                           const FitOptions& options)
    : impl_(std::make_unique<Impl>(t, spec, options)) {}
FitObjective::~FitObjective() = default;
FitObjective::FitObjective(FitObjective&&) noexcept = default;

int FitObjective::dimension() const { return static_cast<int>(impl_->theta0.size()); }
Eigen::VectorXd FitObjective::initial_theta() const { return impl_->theta0; }
double FitObjective::value(const Eigen::VectorXd& theta) { return impl_->value(theta); }
double FitObjective::value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    return impl_->value_and_gradient(theta, grad);
}
void FitObjective::reset_warm_start() { impl_->warm_valid = false; }
FitObjective::Decoded FitObjective::decode(const Eigen::VectorXd& theta) const {
    return impl_->decode(theta);
}

// ---------------------------------------------------------------------------
// BFGS driver
// ---------------------------------------------------------------------------

namespace {

struct OptimResult {
    Eigen::VectorXd theta;
    double f = kInf;
    double grad_norm = kInf;
    int iterations = 0;
    bool converged = false;
    bool evaluated = false;
};

OptimResult minimize_bfgs(FitObjective::Impl& obj, Eigen::VectorXd theta, double tol_grad,
                          int max_iter) {
    const int q = static_cast<int>(theta.size());
    OptimResult out;
    Eigen::VectorXd g(q);
    double f = obj.value_and_gradient(theta, g);
    if (!std::isfinite(f)) return out;
    out.evaluated = true;

    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(q, q);
    int stall = 0;
    int it = 0;
    for (; it < max_iter; ++it) {
        out.theta = theta;
        out.f = f;
        out.grad_norm = g.cwiseAbs().maxCoeff();
        if (out.grad_norm <= tol_grad) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd dir = -(hinv * g);
        double slope = dir.dot(g);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            dir = -g;
            slope = dir.dot(g);
        }
        // Armijo backtracking
        double alpha = 1.0;
        double f_new = kInf;
        Eigen::VectorXd theta_new;
        bool moved = false;
        for (int h = 0; h < 50; ++h) {
            theta_new = theta + alpha * dir;
            f_new = obj.value(theta_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * slope) {
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) {
            // steepest-descent retry from a fresh metric
            hinv.setIdentity();
            dir = -g;
            slope = dir.dot(g);
            alpha = 1.0 / std::max(1.0, g.cwiseAbs().maxCoeff());
            for (int h = 0; h < 60; ++h) {
                theta_new = theta + alpha * dir;
                f_new = obj.value(theta_new);
                if (std::isfinite(f_new) && f_new < f) {
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved) break;  // stalled at a point the line search cannot improve
        }
        Eigen::VectorXd g_new(q);
        f_new = obj.value_and_gradient(theta_new, g_new);
        if (!std::isfinite(f_new)) break;
        const Eigen::VectorXd s = theta_new - theta;
        const Eigen::VectorXd y = g_new - g;
        const double ys = y.dot(s);
        if (ys > 1e-12 * y.norm() * s.norm()) {
            const Eigen::VectorXd hy = hinv * y;
            const double yhy = y.dot(hy);
            hinv += ((ys + yhy) / (ys * ys)) * (s * s.transpose()) -
                    (hy * s.transpose() + s * hy.transpose()) / ys;
        }
        if (f - f_new <= 1e-15 * (1.0 + std::abs(f))) {
            if (++stall >= 3) {
                theta = theta_new;
                f = f_new;
                g = g_new;
                ++it;
                break;
            }
        } else {
            stall = 0;
        }
        theta = theta_new;
        f = f_new;
        g = g_new;
    }
    out.theta = theta;
    out.f = f;
    out.grad_norm = g.cwiseAbs().maxCoeff();
    out.iterations = it;
    out.converged = out.grad_norm <= tol_grad;
    return out;
}

}  // namespace

RCParams init_params(const ContingencyTable& t, const ModelSpec& spec, double smoothing) {
    FitOptions opt;
    opt.smoothing = smoothing;
    FitObjective obj(t, spec, opt);
    const auto dec = obj.decode(obj.initial_theta());
    const IdentifiedScores sc = identify_scores(dec.score_a, dec.score_b);
    return RCParams{sc.mu, sc.nu, sc.phi, dec.row_coord, dec.col_coord};
}

FitResult fit(const ContingencyTable& t, const ModelSpec& spec, const FitOptions& options) {
    FitObjective obj(t, spec, options);
    FitObjective::Impl& impl = *obj.impl_;
    const Eigen::VectorXd theta0 = obj.initial_theta();
    const int nm = impl.margin_block();
    const int score_len = static_cast<int>(theta0.size()) - nm;

    OptimResult best;
    bool any = false;
    for (int attempt = 0; attempt <= std::max(0, options.restarts); ++attempt) {
        Eigen::VectorXd theta = theta0;
        if (attempt > 0) {
            std::uint64_t state = 0xC0FFEEull ^ (static_cast<std::uint64_t>(attempt) << 13);
            for (int i = 0; i < score_len; ++i) {
                const double sign = (splitmix64(state) & 1ull) ? 1.0 : -1.0;
                theta(nm + i) *= 1.0 + 0.05 * sign;
            }
        }
        obj.reset_warm_start();
        OptimResult res = minimize_bfgs(impl, theta, options.tol_grad, options.max_iter);
        if (!res.evaluated) continue;
        const bool better = !any || (res.converged && !best.converged) ||
                            (res.converged == best.converged && res.f < best.f);
        if (better) best = res;
        any = true;
    }
    if (!any) {
        throw Error(ErrorCode::infeasible_spec,
                    "inner coordinate inversion failed at every starting point; "
                    "the spec/lambda combination looks infeasible for this table");
    }

    // final reconstruction at the winning parameters
    obj.reset_warm_start();
    Eigen::VectorXd g_final;
    const double f_final = obj.value_and_gradient(best.theta, g_final);
    if (!std::isfinite(f_final)) {
        throw Error(ErrorCode::infeasible_spec, "winning parameters lost feasibility");
    }
    const auto dec = obj.decode(best.theta);
    const IdentifiedScores sc = identify_scores(dec.score_a, dec.score_b);

    FitResult out;
    out.spec = spec;
    out.params = RCParams{sc.mu, sc.nu, sc.phi, dec.row_coord, dec.col_coord};
    out.fitted = ProbabilityTable{t.row_labels, t.col_labels,
                                  table_from_logits(impl.u_warm, impl.r, impl.c)};
    out.expected_counts = out.fitted.p * t.total();
    out.deviance = deviance(t, out.fitted);
    out.dof = dof(impl.r, impl.c, spec.K);
    out.loglik = log_likelihood(t, out.fitted);
    out.converged = best.converged;
    out.iterations = best.iterations;
    out.grad_norm = best.grad_norm;
    return out;
}

}  // namespace rcassoc
