#pragma once

#include <stdexcept>
#include <string>

namespace wmc {

/// Shape or size disagreement between operands.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite value produced or consumed.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation (empty key set, empty sequence).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller supplied inconsistent inputs (missing modality, unknown label).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad key, bad value, impossible estimator setup).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dataset ingestion failure: manifests, body maps, images.
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed binary file (checkpoint or raster).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wmc
