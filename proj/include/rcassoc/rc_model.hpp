#pragma once

#include <memory>

#include <Eigen/Core>

#include "rcassoc/interactions.hpp"
#include "rcassoc/table.hpp"

namespace rcassoc {

enum class WeightScheme { uniform };

/// One model in the extended RC(K) class: rank, logit types, scaling factor
/// and the weight scheme used for score identification (w_i = 1/r, w_j = 1/c).
struct ModelSpec {
    int K = 1;
    InteractionSpec interaction;
    WeightScheme weights = WeightScheme::uniform;
};

/// (r-1-K)(c-1-K). lambda is grid-selected and does not reduce dof.
int dof(int r, int c, int K);

void validate_model_spec(const ModelSpec& spec, int r, int c);

/// Identified parameters. Scores are centered (sum_i w_i mu_ik = 0), have unit
/// weighted second moment, are weight-orthogonal across dimensions, phi is
/// descending nonnegative, and the first nonzero score increment of each
/// dimension is positive. Margin coordinates are log-contrasts against the
/// last category: row_coord_i = log(rho_i / rho_r).
struct RCParams {
    Eigen::MatrixXd mu;         // r x K
    Eigen::MatrixXd nu;         // c x K
    Eigen::VectorXd phi;        // K
    Eigen::VectorXd row_coord;  // r-1
    Eigen::VectorXd col_coord;  // c-1
};

Margins margins_from_coords(const Eigen::VectorXd& row_coord, const Eigen::VectorXd& col_coord);
Eigen::VectorXd coords_from_margin(const Eigen::VectorXd& margin);

/// H_ab = sum_k phi_k (mu_{a+1,k} - mu_{a,k}) (nu_{b+1,k} - nu_{b,k}).
/// Throws InvariantViolation if the params break identification beyond 1e-8.
InteractionMatrix interaction_from_scores(const RCParams& params, const ModelSpec& spec);

struct FitResult {
    ModelSpec spec;
    RCParams params;
    ProbabilityTable fitted;
    Eigen::MatrixXd expected_counts;  // fitted * N
    double deviance = 0.0;
    int dof = 0;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
};

double log_likelihood(const ContingencyTable& t, const ProbabilityTable& p);

/// G^2 = 2 sum n_ij log(n_ij / (N fitted_ij)); zero cells contribute 0.
double deviance(const ContingencyTable& t, const ProbabilityTable& fitted);

/// Reconstructs the unique strictly positive table whose interaction matrix
/// matches the params' bilinear structure and whose margins match m.
/// For (L, L, lambda=0) this seeds with the exponential of the log-bilinear
/// form and runs ipf_adjust; otherwise a damped Newton iteration on the joint
/// coordinate map [margin coordinates; interactions], seeded at independence.
ProbabilityTable table_from_params(const RCParams& params, const ModelSpec& spec,
                                   const Margins& m, double tol = 1e-11, int max_iter = 250);
/// Same, with the target margins taken from the params' own coordinates.
ProbabilityTable table_from_params(const RCParams& params, const ModelSpec& spec,
                                   double tol = 1e-11, int max_iter = 250);

struct FitOptions {
    double tol_grad = 1e-7;  // max-norm of the mean log-likelihood gradient
    int max_iter = 500;
    int restarts = 3;  // deterministic +/-5% perturbed re-optimizations
    double inner_tol = 1e-11;
    int inner_max_iter = 250;
    double smoothing = 0.0;
    bool pin_margins = false;  // fix margin coordinates at the observed margins
};

/// Rank-K singular decomposition of the observed interaction matrix,
/// cumulated into category scores and projected onto the identification
/// constraints; margin coordinates from the observed margins.
RCParams init_params(const ContingencyTable& t, const ModelSpec& spec, double smoothing = 0.0);

/// Maximum-likelihood fit via quasi-Newton outer iterations with the joint
/// coordinate inversion as the inner map. Deterministic given options.
FitResult fit(const ContingencyTable& t, const ModelSpec& spec, const FitOptions& options = {});

/// Outer ML objective (mean negative log-likelihood) over the free parameter
/// vector theta = [row_coord; col_coord; vec(A); vec(B)] with H = A B^T,
/// exposed for gradient verification. Margin blocks are dropped from theta
/// when pin_margins is set.
class FitObjective {
public:
    FitObjective(const ContingencyTable& t, const ModelSpec& spec, const FitOptions& options = {});
    ~FitObjective();
    FitObjective(FitObjective&&) noexcept;

    int dimension() const;
    Eigen::VectorXd initial_theta() const;
    /// +infinity when the inner inversion fails at theta.
    double value(const Eigen::VectorXd& theta);
    double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad);
    void reset_warm_start();

    struct Decoded {
        Eigen::VectorXd row_coord, col_coord;
        Eigen::MatrixXd score_a, score_b;  // (r-1) x K, (c-1) x K
    };
    Decoded decode(const Eigen::VectorXd& theta) const;

private:
    friend FitResult fit(const ContingencyTable&, const ModelSpec&, const FitOptions&);
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace rcassoc
