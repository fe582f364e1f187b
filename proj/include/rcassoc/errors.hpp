#pragma once

#include <stdexcept>
#include <string>

namespace rcassoc {

enum class ErrorCode {
    dimension_error,
    negative_cell,
    empty_marginal,
    label_error,
    non_integer_count,
    zero_cell,
    zero_margin,
    non_convergence,
    cut_out_of_range,
    non_positive_argument,
    dimension_mismatch,
    rank_out_of_range,
    invariant_violation,
    simplex_escape,
    infeasible_spec,
    empty_grid,
    no_adequate_model,
    infeasible_scale,
    parse_error,
    io_error,
    usage_error,
};

/// Stable identifier used in error reports ("DimensionError", "ZeroCellError", ...).
const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    const char* code_name() const noexcept { return error_code_name(code_); }

private:
    ErrorCode code_;
};

}  // namespace rcassoc
