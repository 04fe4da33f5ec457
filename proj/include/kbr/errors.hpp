#pragma once

#include <stdexcept>
#include <string>

namespace kbr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Class name, e.g. "UnboundedKernel".
  virtual const char* kind() const noexcept { return "Error"; }
};

#define KBR_DEFINE_ERROR(Name)           \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
    const char* kind() const noexcept override { return #Name; } \
  }

KBR_DEFINE_ERROR(InvalidArgument);
KBR_DEFINE_ERROR(KinkError);
KBR_DEFINE_ERROR(NotTwiceDifferentiable);
KBR_DEFINE_ERROR(DimensionMismatch);
KBR_DEFINE_ERROR(KernelMismatch);
KBR_DEFINE_ERROR(InvalidLambda);
KBR_DEFINE_ERROR(SingularSystem);
KBR_DEFINE_ERROR(UnboundedKernel);
KBR_DEFINE_ERROR(UnknownScenario);
KBR_DEFINE_ERROR(UnsupportedNoiseModel);
KBR_DEFINE_ERROR(InvalidSchedule);
KBR_DEFINE_ERROR(UsageError);
KBR_DEFINE_ERROR(IoError);

#undef KBR_DEFINE_ERROR

/// Raised when an iterative solve exhausts its budget without reaching the
/// requested stationarity tolerance.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }
  const char* kind() const noexcept override { return "NonConvergence"; }

 private:
  double residual_;
};

}  // namespace kbr
