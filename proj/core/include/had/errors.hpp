#pragma once

#include <stdexcept>
#include <string>

namespace had {

// Base class for all library errors. Subcommands map these to exit code 1.
struct HadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedFasta : HadError {
    using HadError::HadError;
};

struct IllegalBase : HadError {
    IllegalBase(char base, std::size_t position)
        : HadError("illegal base '" + std::string(1, base) + "' at position " +
                   std::to_string(position)),
          base(base),
          position(position) {}
    char base;
    std::size_t position;
};

struct LengthNotDivisible : HadError {
    using HadError::HadError;
};

struct InvalidTokenId : HadError {
    using HadError::HadError;
};

struct ShapeMismatch : HadError {
    using HadError::HadError;
};

struct NonScalarLoss : HadError {
    using HadError::HadError;
};

struct PositionOutOfRange : HadError {
    using HadError::HadError;
};

struct IncompleteGroup : HadError {
    using HadError::HadError;
};

struct NoVisibleTokens : HadError {
    using HadError::HadError;
};

struct EmptyMaskSet : HadError {
    using HadError::HadError;
};

struct CacheMiss : HadError {
    using HadError::HadError;
};

struct DimensionMismatch : HadError {
    using HadError::HadError;
};

struct IoError : HadError {
    using HadError::HadError;
};

struct NonFiniteLoss : HadError {
    using HadError::HadError;
};

struct InvalidHead : HadError {
    using HadError::HadError;
};

struct EmptyInput : HadError {
    using HadError::HadError;
};

struct ConfigError : HadError {
    using HadError::HadError;
};

}  // namespace had
