#pragma once

#include <stdexcept>
#include <string>

namespace hpylori {

// Error classes surfaced by the library. The CLI maps each kind to a
// distinct exit code.
enum class ErrorKind {
    InvalidArgument,
    ShapeMismatch,
    MissingFile,
    MalformedFile,
    UnsupportedFormat,
    NoTissue,
    SlideTooSmall,
    EmptyInput,
    DegenerateRoc,
    TooFewPatients,
    VersionMismatch,
    CorruptFile,
    NonFiniteLoss,
    Config,
    MissingInput,
    ConfigMismatch,
    Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace hpylori
