#pragma once

#include <stdexcept>
#include <string>

namespace svmshape {

/// Error classes surfaced by the library. The CLI maps them to exit codes:
/// io/usage -> 1, degenerate input -> 2, empty result -> 3, no convergence -> 4.
enum class ErrorCode {
  io,
  invalid_spec,
  sampling_stalled,
  single_class,
  no_convergence,
  too_large,
  degenerate_active_set,
  singular_kkt,
  shape_mismatch,
  task_skipped,
  all_tasks_skipped,
  empty_surface,
  undefined_iou,
  empty_mesh,
  numeric,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::io:
    case ErrorCode::invalid_spec:
      return 1;
    case ErrorCode::single_class:
    case ErrorCode::degenerate_active_set:
    case ErrorCode::singular_kkt:
    case ErrorCode::shape_mismatch:
    case ErrorCode::too_large:
    case ErrorCode::all_tasks_skipped:
      return 2;
    case ErrorCode::empty_surface:
    case ErrorCode::undefined_iou:
    case ErrorCode::empty_mesh:
      return 3;
    case ErrorCode::no_convergence:
    case ErrorCode::sampling_stalled:
    case ErrorCode::task_skipped:
    case ErrorCode::numeric:
      return 4;
  }
  return 1;
}

}  // namespace svmshape
