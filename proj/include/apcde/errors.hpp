#pragma once
#include <stdexcept>
#include <string>

namespace apcde {

// Error taxonomy. The CLI maps these onto exit codes:
// usage/config -> 1, data/format -> 2, numerical -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArgumentError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

struct DataError : Error { using Error::Error; };
struct SchemaError : DataError { using DataError::DataError; };
struct IntegrityError : DataError { using DataError::DataError; };
struct VersionError : DataError { using DataError::DataError; };
struct DegenerateDataError : DataError { using DataError::DataError; };

struct NumericalError : Error { using Error::Error; };
struct SingularMatrixError : NumericalError { using NumericalError::NumericalError; };
struct DivergenceError : NumericalError { using NumericalError::NumericalError; };

}  // namespace apcde
