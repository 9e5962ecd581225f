#pragma once
// Exception hierarchy shared by all modules.
//
// ValidationError covers bad caller input (flags, parameters, malformed
// configuration). Everything else derives from RuntimeFailure. The CLI maps
// the first to exit code 2 and the second to exit code 1.

#include <stdexcept>
#include <string>

namespace pedseg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class RuntimeFailure : public Error {
public:
    using Error::Error;
};

// volume_io
class FormatError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };
class TruncationError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };
class IoError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };

// Label value outside the allowed domain (negative, non-integral, unmapped).
class LabelDomainError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };

// Volume invariant broken (non-finite intensity, bad spacing, size mismatch).
class InvariantError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };

// labelmap
class MappingError : public ValidationError { public: using ValidationError::ValidationError; };
class RangeError : public ValidationError { public: using ValidationError::ValidationError; };

// metrics
class ComparisonError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };
class EmptyMaskError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };

// parameters / domains
class ParameterError : public ValidationError { public: using ValidationError::ValidationError; };
class DomainError : public ValidationError { public: using ValidationError::ValidationError; };
class ManifestError : public ValidationError { public: using ValidationError::ValidationError; };

// trainer
class DataError : public RuntimeFailure { public: using RuntimeFailure::RuntimeFailure; };

}  // namespace pedseg
