#include "ipfcad/error.hpp"

namespace ipfcad {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingMagic: return "MissingMagic";
        case ErrorCode::UnsupportedTransferSyntax: return "UnsupportedTransferSyntax";
        case ErrorCode::TruncatedPixelData: return "TruncatedPixelData";
        case ErrorCode::MalformedDicom: return "MalformedDicom";
        case ErrorCode::UnsupportedBitsAllocated: return "UnsupportedBitsAllocated";
        case ErrorCode::EmptySeries: return "EmptySeries";
        case ErrorCode::InconsistentDimensions: return "InconsistentDimensions";
        case ErrorCode::DuplicateSortKey: return "DuplicateSortKey";
        case ErrorCode::BadHeader: return "BadHeader";
        case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::UnknownLabelCode: return "UnknownLabelCode";
        case ErrorCode::ZeroWidth: return "ZeroWidth";
        case ErrorCode::EmptyVolume: return "EmptyVolume";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::OddDimension: return "OddDimension";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::ShapeChainBroken: return "ShapeChainBroken";
        case ErrorCode::TooFewPatients: return "TooFewPatients";
        case ErrorCode::EmptyPredictions: return "EmptyPredictions";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ZeroTotalWeight: return "ZeroTotalWeight";
        case ErrorCode::SpecInvariantViolation: return "SpecInvariantViolation";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoFailure: return "IoFailure";
    }
    return "UnknownError";
}

ErrorClass error_class(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingMagic:
        case ErrorCode::UnsupportedTransferSyntax:
        case ErrorCode::TruncatedPixelData:
        case ErrorCode::MalformedDicom:
        case ErrorCode::UnsupportedBitsAllocated:
        case ErrorCode::EmptySeries:
        case ErrorCode::BadHeader:
        case ErrorCode::UnsupportedDatatype:
        case ErrorCode::BadMagic:
        case ErrorCode::VersionMismatch:
        case ErrorCode::ChecksumMismatch:
        case ErrorCode::InvalidArgument:
        case ErrorCode::IoFailure:
            return ErrorClass::Input;
        case ErrorCode::NonFiniteLoss:
            return ErrorClass::Divergence;
        default:
            return ErrorClass::Data;
    }
}

}  // namespace ipfcad
