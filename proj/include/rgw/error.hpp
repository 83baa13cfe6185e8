#pragma once
#include <stdexcept>
#include <string>
#include <string_view>

namespace rgw {

enum class ErrorCode {
    dimension_mismatch,
    divergence_infinite,
    epsilon_out_of_range,
    invalid_argument,
    inner_diverged,
    newton_stalled,
    infeasible_init,
    zero_lipschitz,
    invalid_params,
    sampling_failed,
    parse_error,
    self_loop,
    ragged_rows,
    empty_file,
    io_error,
    out_of_range,
};

inline constexpr std::string_view to_string(ErrorCode code)
{
    switch (code) {
        case ErrorCode::dimension_mismatch: return "DimensionMismatch";
        case ErrorCode::divergence_infinite: return "DivergenceInfinite";
        case ErrorCode::epsilon_out_of_range: return "EpsilonOutOfRange";
        case ErrorCode::invalid_argument: return "InvalidArgument";
        case ErrorCode::inner_diverged: return "InnerDiverged";
        case ErrorCode::newton_stalled: return "NewtonStalled";
        case ErrorCode::infeasible_init: return "InfeasibleInit";
        case ErrorCode::zero_lipschitz: return "ZeroLipschitz";
        case ErrorCode::invalid_params: return "InvalidParams";
        case ErrorCode::sampling_failed: return "SamplingFailed";
        case ErrorCode::parse_error: return "ParseError";
        case ErrorCode::self_loop: return "SelfLoop";
        case ErrorCode::ragged_rows: return "RaggedRows";
        case ErrorCode::empty_file: return "EmptyFile";
        case ErrorCode::io_error: return "IoError";
        case ErrorCode::out_of_range: return "OutOfRange";
    }
    return "Unknown";
}

/// Exception carrying a machine-checkable error category.
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const std::string& what)
{
    if (!cond) throw Error(code, what);
}

} // namespace detail
} // namespace rgw
