#pragma once

#include <stdexcept>
#include <string>

namespace stablegnn {

enum class errc {
    non_square,
    asymmetry_too_large,
    non_finite_entry,
    dimension_mismatch,
    not_a_permutation,
    no_convergence,
    empty_mask,
    non_finite_activation,
    stale_tape,
    shape_mismatch,
    empty_batch,
    empty_slack_set,
    malformed_line,
    rating_out_of_range,
    duplicate_pair,
    empty_dataset,
    no_eligible_users,
    too_few_users,
    degenerate_graph,
    bad_config,
    io_failure,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::non_square: return "NonSquare";
        case errc::asymmetry_too_large: return "AsymmetryTooLarge";
        case errc::non_finite_entry: return "NonFiniteEntry";
        case errc::dimension_mismatch: return "DimensionMismatch";
        case errc::not_a_permutation: return "NotAPermutation";
        case errc::no_convergence: return "NoConvergence";
        case errc::empty_mask: return "EmptyMask";
        case errc::non_finite_activation: return "NonFiniteActivation";
        case errc::stale_tape: return "StaleTape";
        case errc::shape_mismatch: return "ShapeMismatch";
        case errc::empty_batch: return "EmptyBatch";
        case errc::empty_slack_set: return "EmptySlackSet";
        case errc::malformed_line: return "MalformedLine";
        case errc::rating_out_of_range: return "RatingOutOfRange";
        case errc::duplicate_pair: return "DuplicatePair";
        case errc::empty_dataset: return "EmptyDataset";
        case errc::no_eligible_users: return "NoEligibleUsers";
        case errc::too_few_users: return "TooFewUsers";
        case errc::degenerate_graph: return "DegenerateGraph";
        case errc::bad_config: return "BadConfig";
        case errc::io_failure: return "IoFailure";
    }
    return "UnknownError";
}

/// All library failures surface as this exception; `code()` is stable for tests.
class Error : public std::runtime_error {
  public:
    Error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    errc code() const noexcept { return code_; }

  private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

} // namespace stablegnn
