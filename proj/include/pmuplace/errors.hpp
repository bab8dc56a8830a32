#pragma once

#include <stdexcept>
#include <string>

namespace pmuplace {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// grid construction / IO
struct DisconnectedGrid : Error { using Error::Error; };
struct PhaseMismatch : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct DuplicateBusId : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };

// measurement model
struct DegenerateMeasurement : Error { using Error::Error; };
struct UnknownCandidate : Error { using Error::Error; };

// state estimation
struct PowerFlowDiverged : Error { using Error::Error; };
struct SingularPrior : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// covariance engine
struct AlreadySelected : Error { using Error::Error; };
struct NonFiniteMetric : Error { using Error::Error; };
struct EigensolverFailure : Error { using Error::Error; };

// projection
struct NegativeInput : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };

// placement
struct NonFiniteObjective : Error { using Error::Error; };
struct TooLarge : Error { using Error::Error; };

}  // namespace pmuplace
