#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "rcassoc/table.hpp"

namespace rcassoc {

/// Logit type assigned to a variable: local (adjacent categories), global
/// (cumulative split) or continuation (category versus all higher).
enum class LogitType { L, G, C };

LogitType parse_logit_type(const std::string& s);
const char* logit_type_name(LogitType t);

struct InteractionSpec {
    LogitType row_type = LogitType::L;
    LogitType col_type = LogitType::L;
    double lambda = 0.0;
};

/// |lambda| above this bound would overflow x^lambda on tiny probabilities.
inline constexpr double kLambdaBound = 5.0;

void validate_interaction_spec(const InteractionSpec& spec);

/// (r-1) x (c-1) matrix of lambda-scaled generalized odds-ratio contrasts,
/// indexed by row cut a and column cut b.
struct InteractionMatrix {
    InteractionSpec spec;
    Eigen::MatrixXd values;
    std::vector<std::string> row_cut_labels;  // "U|F" style
    std::vector<std::string> col_cut_labels;
};

struct Quadrants {
    double q11, q12, q21, q22;
};

/// Inclusive 0-based index ranges [lo1,hi1] and [lo2,hi2] of the two events a
/// logit type defines at a 1-based cut in 1..n-1.
struct EventRanges {
    int lo1, hi1, lo2, hi2;
};
EventRanges logit_event_ranges(int n, int cut, LogitType t);

/// Total probabilities of the four (row event, column event) blocks at cuts
/// (a, b), 1-based. Row event pair at cut a: L ({a},{a+1}); G ({1..a},{a+1..r});
/// C ({a},{a+1..r}); columns analogous.
Quadrants block_quadrants(const ProbabilityTable& p, int a, int b,
                          LogitType row_type, LogitType col_type);

/// Box-Cox power transform: (x^lambda - 1)/lambda, log x at lambda = 0.
/// Continuous in lambda; strictly increasing in x; f(1) = 0.
double f_lambda(double x, double lambda);

/// H_ab = f(s11) - f(s12) - f(s21) + f(s22) with s_uv the block probability
/// q_uv divided by the product of the full-table masses of its row and column
/// events, so every H_ab vanishes exactly at independence and lambda = 0
/// recovers the classical generalized log-odds ratio of the collapsed block.
InteractionMatrix interaction_matrix(const ProbabilityTable& p, const InteractionSpec& spec);

/// Label-free core of interaction_matrix, on the raw probability matrix.
Eigen::MatrixXd interaction_values(const Eigen::MatrixXd& p, const InteractionSpec& spec);

struct PositivityReport {
    bool all_nonneg = false;
    double min_entry = 0.0;
    int argmin_row_cut = 0;  // 1-based cuts
    int argmin_col_cut = 0;
};

/// Nonnegativity of every interaction implies positive association for the
/// given logit-type pair; stronger positive association means lower mobility.
PositivityReport positivity_report(const InteractionMatrix& h);

/// Root-sum-of-squares distance between the full sets of log cross-product
/// ratios of two tables: d(P,Q)^2 = sum over i,l,j,m of
/// log( (p_ij p_lm q_im q_lj) / (p_im p_lj q_ij q_lm) )^2.
double altham_distance(const ProbabilityTable& p, const ProbabilityTable& q);

}  // namespace rcassoc
