#ifndef RLL_ERROR_HPP
#define RLL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace rll {

enum class ErrorKind {
  kDegenerateInput,  // near-zero vector where a direction is required
  kShape,            // dimension or size mismatch
  kConfiguration,    // batch/parameter combination the loss cannot use
  kEmptySet,         // weighting an empty mined set
  kRange,            // index or iteration outside its valid range
  kParameter,        // hyperparameter outside its invariant
  kParse,            // malformed input text
  kData,             // dataset content unusable for the request
  kPrecondition,     // caller-side contract violated (e.g. no possible match)
  kIo,               // file could not be read or written
  kNumerical,        // non-finite value encountered
  kSingularPair,     // active pair with zero distance
  kUsage,            // command-line misuse
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateInput: return "degenerate input";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kEmptySet: return "empty set";
    case ErrorKind::kRange: return "range error";
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kPrecondition: return "precondition error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kNumerical: return "numerical error";
    case ErrorKind::kSingularPair: return "singular pair";
    case ErrorKind::kUsage: return "usage error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace rll

#endif  // RLL_ERROR_HPP
