#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "rcassoc/errors.hpp"

namespace rcassoc {

/// Labeled r x c table of nonnegative counts. Observed tables hold integers;
/// synthesized or fitted tables may hold fractional counts.
struct ContingencyTable {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd counts;

    Eigen::Index rows() const { return counts.rows(); }
    Eigen::Index cols() const { return counts.cols(); }
    double total() const { return counts.sum(); }
};

/// Strictly positive cell probabilities summing to one, same labeling as the
/// table it was derived from.
struct ProbabilityTable {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd p;

    Eigen::Index rows() const { return p.rows(); }
    Eigen::Index cols() const { return p.cols(); }
};

struct Margins {
    Eigen::VectorXd row;
    Eigen::VectorXd col;
};

/// Checks shape, signs, marginals and labels; returns the table unchanged.
/// With strict_integers set, fractional cells are rejected.
ContingencyTable validate_table(std::vector<std::string> row_labels,
                                std::vector<std::string> col_labels,
                                Eigen::MatrixXd counts,
                                bool strict_integers = false);

/// p_ij = (n_ij + smoothing) / sum(n + smoothing). A zero cell with zero
/// smoothing is an error: log and power interactions are undefined at 0.
ProbabilityTable to_probability(const ContingencyTable& t, double smoothing = 0.0);

Margins margins(const ProbabilityTable& p);

/// Outer product p_ij = row_i * col_j.
ProbabilityTable independence_table(const Margins& m);
ProbabilityTable independence_table(const Margins& m,
                                    std::vector<std::string> row_labels,
                                    std::vector<std::string> col_labels);

/// Classical iterative proportional fitting: alternate row and column
/// rescalings until both margins match `target` within tol (L-inf).
/// Every local log-odds ratio of `p` is preserved.
ProbabilityTable ipf_adjust(const ProbabilityTable& p, const Margins& target,
                            double tol = 1e-10, int max_iter = 10000);

}  // namespace rcassoc
