#include "rcassoc/interactions.hpp"

#include <cmath>
#include <sstream>

namespace rcassoc {

LogitType parse_logit_type(const std::string& s) {
    if (s == "L" || s == "l") return LogitType::L;
    if (s == "G" || s == "g") return LogitType::G;
    if (s == "C" || s == "c") return LogitType::C;
    throw Error(ErrorCode::usage_error, "unknown logit type '" + s + "' (expected L, G or C)");
}

const char* logit_type_name(LogitType t) {
    switch (t) {
        case LogitType::L: return "L";
        case LogitType::G: return "G";
        case LogitType::C: return "C";
    }
    return "?";
}

void validate_interaction_spec(const InteractionSpec& spec) {
    if (!std::isfinite(spec.lambda) || std::abs(spec.lambda) > kLambdaBound) {
        std::ostringstream os;
        os << "lambda " << spec.lambda << " outside the sanity bound |lambda| <= " << kLambdaBound;
        throw Error(ErrorCode::usage_error, os.str());
    }
}

EventRanges logit_event_ranges(int n, int cut, LogitType t) {
    switch (t) {
        case LogitType::L: return {cut - 1, cut - 1, cut, cut};
        case LogitType::G: return {0, cut - 1, cut, n - 1};
        case LogitType::C: return {cut - 1, cut - 1, cut, n - 1};
    }
    return {0, 0, 0, 0};
}

namespace {

double block_sum(const Eigen::MatrixXd& p, int rlo, int rhi, int clo, int chi) {
    return p.block(rlo, clo, rhi - rlo + 1, chi - clo + 1).sum();
}

}  // namespace

Quadrants block_quadrants(const ProbabilityTable& p, int a, int b,
                          LogitType row_type, LogitType col_type) {
    const int r = static_cast<int>(p.rows());
    const int c = static_cast<int>(p.cols());
    if (a < 1 || a > r - 1 || b < 1 || b > c - 1) {
        std::ostringstream os;
        os << "cut (" << a << ", " << b << ") out of range for a " << r << "x" << c << " table";
        throw Error(ErrorCode::cut_out_of_range, os.str());
    }
    const EventRanges re = logit_event_ranges(r, a, row_type);
    const EventRanges ce = logit_event_ranges(c, b, col_type);
    return Quadrants{block_sum(p.p, re.lo1, re.hi1, ce.lo1, ce.hi1),
                     block_sum(p.p, re.lo1, re.hi1, ce.lo2, ce.hi2),
                     block_sum(p.p, re.lo2, re.hi2, ce.lo1, ce.hi1),
                     block_sum(p.p, re.lo2, re.hi2, ce.lo2, ce.hi2)};
}

double f_lambda(double x, double lambda) {
    if (!(x > 0.0)) {
        throw Error(ErrorCode::non_positive_argument,
                    "f_lambda requires a positive argument, got " + std::to_string(x));
    }
    const double lx = std::log(x);
    if (lambda == 0.0) return lx;
    // expm1 keeps full precision as lambda -> 0
    return std::expm1(lambda * lx) / lambda;
}

Eigen::MatrixXd interaction_values(const Eigen::MatrixXd& p, const InteractionSpec& spec) {
    validate_interaction_spec(spec);
    const int r = static_cast<int>(p.rows());
    const int c = static_cast<int>(p.cols());
    const Eigen::VectorXd rho = p.rowwise().sum();
    const Eigen::VectorXd gam = p.colwise().sum().transpose();

    auto range_sum = [](const Eigen::VectorXd& v, int lo, int hi) {
        return v.segment(lo, hi - lo + 1).sum();
    };

    Eigen::MatrixXd h(r - 1, c - 1);
    for (int a = 1; a <= r - 1; ++a) {
        const EventRanges re = logit_event_ranges(r, a, spec.row_type);
        const double pr1 = range_sum(rho, re.lo1, re.hi1);
        const double pr2 = range_sum(rho, re.lo2, re.hi2);
        for (int b = 1; b <= c - 1; ++b) {
            const EventRanges ce = logit_event_ranges(c, b, spec.col_type);
            const double gc1 = range_sum(gam, ce.lo1, ce.hi1);
            const double gc2 = range_sum(gam, ce.lo2, ce.hi2);
            const double q11 = block_sum(p, re.lo1, re.hi1, ce.lo1, ce.hi1);
            const double q12 = block_sum(p, re.lo1, re.hi1, ce.lo2, ce.hi2);
            const double q21 = block_sum(p, re.lo2, re.hi2, ce.lo1, ce.hi1);
            const double q22 = block_sum(p, re.lo2, re.hi2, ce.lo2, ce.hi2);
            h(a - 1, b - 1) = f_lambda(q11 / (pr1 * gc1), spec.lambda) -
                              f_lambda(q12 / (pr1 * gc2), spec.lambda) -
                              f_lambda(q21 / (pr2 * gc1), spec.lambda) +
                              f_lambda(q22 / (pr2 * gc2), spec.lambda);
        }
    }
    return h;
}

InteractionMatrix interaction_matrix(const ProbabilityTable& p, const InteractionSpec& spec) {
    Eigen::MatrixXd h = interaction_values(p.p, spec);
    const int r = static_cast<int>(p.rows());
    const int c = static_cast<int>(p.cols());

    std::vector<std::string> rcuts, ccuts;
    for (int a = 1; a <= r - 1; ++a) {
        rcuts.push_back(p.row_labels[a - 1] + "|" + p.row_labels[a]);
    }
    for (int b = 1; b <= c - 1; ++b) {
        ccuts.push_back(p.col_labels[b - 1] + "|" + p.col_labels[b]);
    }
    return InteractionMatrix{spec, std::move(h), std::move(rcuts), std::move(ccuts)};
}

PositivityReport positivity_report(const InteractionMatrix& h) {
    PositivityReport rep;
    Eigen::Index ai = 0, bi = 0;
    rep.min_entry = h.values.minCoeff(&ai, &bi);
    rep.argmin_row_cut = static_cast<int>(ai) + 1;
    rep.argmin_col_cut = static_cast<int>(bi) + 1;
    rep.all_nonneg = rep.min_entry >= 0.0;
    return rep;
}

double altham_distance(const ProbabilityTable& p, const ProbabilityTable& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "altham_distance requires equal shapes");
    }
    const Eigen::MatrixXd lp = p.p.array().log();
    const Eigen::MatrixXd lq = q.p.array().log();
    const int r = static_cast<int>(p.rows());
    const int c = static_cast<int>(p.cols());
    double acc = 0.0;
    for (int i = 0; i < r; ++i) {
        for (int l = 0; l < r; ++l) {
            for (int j = 0; j < c; ++j) {
                for (int m = 0; m < c; ++m) {
                    const double term = (lp(i, j) + lp(l, m) - lp(i, m) - lp(l, j)) -
                                        (lq(i, j) + lq(l, m) - lq(i, m) - lq(l, j));
                    acc += term * term;
                }
            }
        }
    }
    return std::sqrt(acc);
}

}  // namespace rcassoc
