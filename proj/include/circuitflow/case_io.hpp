#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "circuitflow/solver.hpp"

namespace circuitflow {

enum class CaseFormat { MatpowerLike, ThreePhaseJson };

struct CaseFile {
    CaseFormat format = CaseFormat::MatpowerLike;
    std::string path;
    Network network;
};

/// Malformed input. `line` is 1-based, 0 when the position is unknown.
class CaseSyntaxError : public std::runtime_error {
  public:
    CaseSyntaxError(int line, const std::string& what);
    int line() const { return line_; }

  private:
    int line_;
};

/// Well-formed input describing an invalid network.
class CaseSemanticError : public std::runtime_error {
  public:
    CaseSemanticError(int record_id, const std::string& what, std::vector<ValidationError> errors = {});
    int record_id() const { return record_id_; }
    const std::vector<ValidationError>& errors() const { return errors_; }

  private:
    int record_id_;
    std::vector<ValidationError> errors_;
};

/// The file could not be opened or read.
class CaseReadError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Positive-sequence tabular format (see docs/case_format.md).
Network parse_case(std::string_view text);
/// Three-phase (or single-phase) JSON format.
Network parse_three_phase_json(std::string_view text);
/// Picks the format from the first non-blank character.
CaseFormat detect_format(std::string_view text);
CaseFile read_case(const std::string& path);

/// Inverse of parse_case for positive-sequence networks.
std::string write_case(const Network& network);
std::string write_three_phase_json(const Network& network);

enum class SolutionFormat { Csv, Json };

/// Bus voltages (and, for JSON, generator outputs and the report). Throws
/// std::invalid_argument when the state does not match the network.
std::string write_solution(const Network& network, const StateVector& state, const SolveReport& report,
                           SolutionFormat format);

struct SolutionRow {
    int bus = 0;
    std::string phase;
    double vmag_pu = 0.0;
    double vang_deg = 0.0;
    double vr_pu = 0.0;
    double vi_pu = 0.0;
};

std::vector<SolutionRow> read_solution_csv(std::string_view text);
std::vector<SolutionRow> read_solution_json(std::string_view text);
/// Voltages of a solution file placed into a state for `network` (for warm starts).
StateVector state_from_solution(const Network& network, const std::vector<SolutionRow>& rows);

/// Report as JSON. Wall time and the timestamp live under "metadata" so the
/// rest of the document is reproducible.
std::string write_report_json(const SolveReport& report, const std::string& case_name, const std::string& timestamp);
std::string write_trace_csv(const std::vector<NrTraceRow>& trace);
std::string write_lambda_trace_csv(const std::vector<LambdaTraceRow>& trace);

}  // namespace circuitflow
