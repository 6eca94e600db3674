#pragma once

#include <stdexcept>
#include <string>

namespace ipfcad {

// Every failure the pipeline can report. Codes map onto CLI exit classes:
// input/usage problems exit 2, data-consistency problems exit 3, training
// divergence exits 4.
enum class ErrorCode {
    // ingest: DICOM
    MissingMagic,
    UnsupportedTransferSyntax,
    TruncatedPixelData,
    MalformedDicom,
    UnsupportedBitsAllocated,
    EmptySeries,
    InconsistentDimensions,
    DuplicateSortKey,
    // ingest: NIfTI
    BadHeader,
    UnsupportedDatatype,
    DimMismatch,
    UnknownLabelCode,
    // segmentation
    ZeroWidth,
    EmptyVolume,
    // blocking
    EmptyClass,
    // cnn
    ShapeMismatch,
    OddDimension,
    NonFiniteLoss,
    InsufficientData,
    BadMagic,
    VersionMismatch,
    ChecksumMismatch,
    ShapeChainBroken,
    // evaluation
    TooFewPatients,
    EmptyPredictions,
    LengthMismatch,
    ZeroTotalWeight,
    // phantom
    SpecInvariantViolation,
    // config / misc
    InvalidArgument,
    IoFailure,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

// Exit classes for the CLI (and anything else that needs to triage errors).
enum class ErrorClass { Input = 2, Data = 3, Divergence = 4 };

ErrorClass error_class(ErrorCode code);

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace ipfcad
