#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coherence {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define COHERENCE_DEFINE_ERROR(Name)       \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

// flow
COHERENCE_DEFINE_ERROR(NonFiniteState);
COHERENCE_DEFINE_ERROR(ParseError);
COHERENCE_DEFINE_ERROR(SchemaError);
COHERENCE_DEFINE_ERROR(GapError);
COHERENCE_DEFINE_ERROR(DomainError);

// fem
COHERENCE_DEFINE_ERROR(DegenerateCloud);
COHERENCE_DEFINE_ERROR(MeshGapError);
COHERENCE_DEFINE_ERROR(ZeroAreaTriangle);

// inflate
COHERENCE_DEFINE_ERROR(NonuniformGrid);

// eigs
COHERENCE_DEFINE_ERROR(FactorizationError);

// analysis
COHERENCE_DEFINE_ERROR(ZeroMode);
COHERENCE_DEFINE_ERROR(VolumeTooLarge);
COHERENCE_DEFINE_ERROR(InvalidK);

// surrogate
COHERENCE_DEFINE_ERROR(SingularityHit);
COHERENCE_DEFINE_ERROR(BracketFailure);
COHERENCE_DEFINE_ERROR(FitDegenerate);

#undef COHERENCE_DEFINE_ERROR

/// The eigensolver stopped before every requested pair met the residual
/// contract.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(std::size_t converged, double max_residual)
      : Error("eigensolver converged " + std::to_string(converged) +
              " pairs; max residual " + std::to_string(max_residual)),
        converged_(converged),
        max_residual_(max_residual) {}

  std::size_t converged() const noexcept { return converged_; }
  double max_residual() const noexcept { return max_residual_; }

 private:
  std::size_t converged_;
  double max_residual_;
};

}  // namespace coherence
