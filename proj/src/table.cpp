#include "rcassoc/table.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace rcassoc {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::dimension_error: return "DimensionError";
        case ErrorCode::negative_cell: return "NegativeCell";
        case ErrorCode::empty_marginal: return "EmptyMarginal";
        case ErrorCode::label_error: return "LabelError";
        case ErrorCode::non_integer_count: return "NonIntegerCount";
        case ErrorCode::zero_cell: return "ZeroCellError";
        case ErrorCode::zero_margin: return "ZeroMarginError";
        case ErrorCode::non_convergence: return "NonConvergence";
        case ErrorCode::cut_out_of_range: return "CutOutOfRange";
        case ErrorCode::non_positive_argument: return "NonPositiveArgument";
        case ErrorCode::dimension_mismatch: return "DimensionMismatch";
        case ErrorCode::rank_out_of_range: return "RankOutOfRange";
        case ErrorCode::invariant_violation: return "InvariantViolation";
        case ErrorCode::simplex_escape: return "SimplexEscape";
        case ErrorCode::infeasible_spec: return "InfeasibleSpec";
        case ErrorCode::empty_grid: return "EmptyGrid";
        case ErrorCode::no_adequate_model: return "NoAdequateModel";
        case ErrorCode::infeasible_scale: return "InfeasibleScale";
        case ErrorCode::parse_error: return "ParseError";
        case ErrorCode::io_error: return "IOError";
        case ErrorCode::usage_error: return "UsageError";
    }
    return "UnknownError";
}

ContingencyTable validate_table(std::vector<std::string> row_labels,
                                std::vector<std::string> col_labels,
                                Eigen::MatrixXd counts,
                                bool strict_integers) {
    const Eigen::Index r = counts.rows();
    const Eigen::Index c = counts.cols();
    if (r < 2 || c < 2) {
        std::ostringstream os;
        os << "table must be at least 2x2, got " << r << "x" << c;
        throw Error(ErrorCode::dimension_error, os.str());
    }
    if (static_cast<Eigen::Index>(row_labels.size()) != r ||
        static_cast<Eigen::Index>(col_labels.size()) != c) {
        throw Error(ErrorCode::label_error, "label lists do not match matrix dimensions");
    }
    auto check_labels = [](const std::vector<std::string>& labels, const char* which) {
        std::set<std::string> seen;
        for (const auto& l : labels) {
            if (l.empty()) {
                throw Error(ErrorCode::label_error,
                            std::string("empty ") + which + " label");
            }
            if (!seen.insert(l).second) {
                throw Error(ErrorCode::label_error,
                            std::string("duplicate ") + which + " label '" + l + "'");
            }
        }
    };
    check_labels(row_labels, "row");
    check_labels(col_labels, "column");

    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            const double v = counts(i, j);
            if (!(v >= 0.0) || !std::isfinite(v)) {
                std::ostringstream os;
                os << "negative or non-finite count " << v << " at cell (" << row_labels[i]
                   << ", " << col_labels[j] << ")";
                throw Error(ErrorCode::negative_cell, os.str());
            }
            if (strict_integers && std::abs(v - std::round(v)) > 1e-9) {
                std::ostringstream os;
                os << "non-integer count " << v << " at cell (" << row_labels[i] << ", "
                   << col_labels[j] << ") with strict integer validation";
                throw Error(ErrorCode::non_integer_count, os.str());
            }
        }
    }
    for (Eigen::Index i = 0; i < r; ++i) {
        if (counts.row(i).sum() <= 0.0) {
            throw Error(ErrorCode::empty_marginal,
                        "row '" + row_labels[i] + "' has zero total");
        }
    }
    for (Eigen::Index j = 0; j < c; ++j) {
        if (counts.col(j).sum() <= 0.0) {
            throw Error(ErrorCode::empty_marginal,
                        "column '" + col_labels[j] + "' has zero total");
        }
    }
    return ContingencyTable{std::move(row_labels), std::move(col_labels), std::move(counts)};
}

ProbabilityTable to_probability(const ContingencyTable& t, double smoothing) {
    if (smoothing < 0.0) {
        throw Error(ErrorCode::negative_cell, "smoothing must be nonnegative");
    }
    if (smoothing == 0.0 && (t.counts.array() == 0.0).any()) {
        throw Error(ErrorCode::zero_cell,
                    "table has a zero cell and smoothing is 0; "
                    "interactions are undefined at zero probabilities");
    }
    Eigen::MatrixXd shifted = t.counts.array() + smoothing;
    return ProbabilityTable{t.row_labels, t.col_labels, shifted / shifted.sum()};
}

Margins margins(const ProbabilityTable& p) {
    return Margins{p.p.rowwise().sum(), p.p.colwise().sum().transpose()};
}

ProbabilityTable independence_table(const Margins& m,
                                    std::vector<std::string> row_labels,
                                    std::vector<std::string> col_labels) {
    if ((m.row.array() <= 0.0).any() || (m.col.array() <= 0.0).any()) {
        throw Error(ErrorCode::zero_margin, "margins must be strictly positive");
    }
    return ProbabilityTable{std::move(row_labels), std::move(col_labels),
                            m.row * m.col.transpose()};
}

ProbabilityTable independence_table(const Margins& m) {
    std::vector<std::string> rl, cl;
    for (Eigen::Index i = 0; i < m.row.size(); ++i) rl.push_back("r" + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < m.col.size(); ++j) cl.push_back("c" + std::to_string(j + 1));
    return independence_table(m, std::move(rl), std::move(cl));
}

ProbabilityTable ipf_adjust(const ProbabilityTable& p, const Margins& target,
                            double tol, int max_iter) {
    if (target.row.size() != p.rows() || target.col.size() != p.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "target margins do not match table shape");
    }
    if ((p.p.array() <= 0.0).any()) {
        throw Error(ErrorCode::zero_cell, "ipf_adjust requires a strictly positive table");
    }
    if ((target.row.array() <= 0.0).any() || (target.col.array() <= 0.0).any()) {
        throw Error(ErrorCode::zero_margin, "target margins must be strictly positive");
    }
    Eigen::MatrixXd x = p.p;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd rs = x.rowwise().sum();
        x.array().colwise() *= (target.row.array() / rs.array());
        Eigen::RowVectorXd cs = x.colwise().sum();
        x.array().rowwise() *= (target.col.transpose().array() / cs.array());
        const double err =
            std::max((x.rowwise().sum() - target.row).cwiseAbs().maxCoeff(),
                     (x.colwise().sum().transpose() - target.col).cwiseAbs().maxCoeff());
        if (err <= tol) {
            return ProbabilityTable{p.row_labels, p.col_labels, std::move(x)};
        }
    }
    throw Error(ErrorCode::non_convergence,
                "ipf_adjust did not reach the target margins in " +
                    std::to_string(max_iter) + " iterations");
}

}  // namespace rcassoc
