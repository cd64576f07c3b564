#pragma once

#include <stdexcept>
#include <string>

namespace rtcan {

// Every failure mode the library reports. The CLI maps these onto exit
// codes: usage problems -> 1, data/validation problems -> 2, solver
// non-convergence -> 3.
enum class Err {
  NonFinite,
  TooShort,
  BadRate,
  ShapeMismatch,
  BadLabel,
  DetachedLoss,
  MissingGrad,
  BadParams,
  NoConvergence,
  TooFew,
  EmptySet,
  LeakageDetected,
  Degenerate,
  UnknownLayer,
  IoError,
  BadSpec,
  NotDivisible,
  BadConfig,
  Usage,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err kind, const std::string& msg)
      : std::runtime_error(std::string(err_name(kind)) + ": " + msg),
        kind_(kind) {}
  Err kind() const { return kind_; }

 private:
  Err kind_;
};

[[noreturn]] inline void fail(Err kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace rtcan
