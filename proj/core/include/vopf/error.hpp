#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <utility>

namespace vopf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Case file problems.
class MalformedCase : public Error {
public:
    using Error::Error;
};
class InvalidTopology : public Error {
public:
    using Error::Error;
};
class UnsupportedFeature : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Raised when an operation needs a converged power-flow state.
class NotConverged : public Error {
public:
    using Error::Error;
};

/// J_g J_g^T could not be factored: LICQ fails at the evaluated point.
class RankDeficient : public Error {
public:
    using Error::Error;
    RankDeficient(const std::string& what, Eigen::VectorXd at) : Error(what), point(std::move(at)) {}

    /// The full variable vector where the factorization failed (may be empty).
    Eigen::VectorXd point;
};

// Geometry.
class OutOfBox : public Error {
public:
    using Error::Error;
};
class DegenerateInput : public Error {
public:
    using Error::Error;
};
class DegenerateSimplex : public Error {
public:
    using Error::Error;
};
class RankOutOfRange : public Error {
public:
    using Error::Error;
};
class IsolatedSample : public Error {
public:
    using Error::Error;
};

// Optimizer.
class GeometryFailure : public Error {
public:
    using Error::Error;
};

}  // namespace vopf
