#include "hpylori/error.hpp"

namespace hpylori {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::ShapeMismatch: return "shape-mismatch";
        case ErrorKind::MissingFile: return "missing-file";
        case ErrorKind::MalformedFile: return "malformed-file";
        case ErrorKind::UnsupportedFormat: return "unsupported-format";
        case ErrorKind::NoTissue: return "no-tissue";
        case ErrorKind::SlideTooSmall: return "slide-too-small";
        case ErrorKind::EmptyInput: return "empty-input";
        case ErrorKind::DegenerateRoc: return "degenerate-roc";
        case ErrorKind::TooFewPatients: return "too-few-patients";
        case ErrorKind::VersionMismatch: return "version-mismatch";
        case ErrorKind::CorruptFile: return "corrupt-file";
        case ErrorKind::NonFiniteLoss: return "non-finite-loss";
        case ErrorKind::Config: return "config";
        case ErrorKind::MissingInput: return "missing-input";
        case ErrorKind::ConfigMismatch: return "config-mismatch";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace hpylori
