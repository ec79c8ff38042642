#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fcnet {

enum class ErrorKind {
  invalid_argument,
  degenerate_series,
  unknown_condition,
  empty_condition,
  empty_network,
  node_collision,
  non_finite,
  no_cluster_structure,
  non_convergence,
  label_mismatch,
  parse_error,
  io_error,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::degenerate_series: return "degenerate series";
    case ErrorKind::unknown_condition: return "unknown condition";
    case ErrorKind::empty_condition: return "empty condition";
    case ErrorKind::empty_network: return "empty network at threshold";
    case ErrorKind::node_collision: return "node collision";
    case ErrorKind::non_finite: return "non-finite value";
    case ErrorKind::no_cluster_structure: return "no cluster structure";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::label_mismatch: return "label mismatch";
    case ErrorKind::parse_error: return "parse error";
    case ErrorKind::io_error: return "i/o error";
  }
  return "error";
}

/// Every failure raised by the library. The message always starts with the
/// kind's canonical text so callers and logs can grep for it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(detail.empty() ? std::string(to_string(kind))
                                          : std::string(to_string(kind)) + ": " + detail),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& detail) {
  if (!condition) throw Error(kind, detail);
}

}  // namespace fcnet
