#pragma once

#include <stdexcept>
#include <string>

namespace tas {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatchError : Error {
    using Error::Error;
};

struct NotScalarLossError : Error {
    using Error::Error;
};

// Decoupled boundary loss was asked to average over an empty region.
struct ActiveSetEmptyError : Error {
    using Error::Error;
};

struct LengthMismatchError : Error {
    using Error::Error;
};

struct EmptySequenceError : Error {
    using Error::Error;
};

struct MissingFileError : Error {
    using Error::Error;
};

struct UnknownLabelError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct UnknownArmError : Error {
    using Error::Error;
};

struct NonFiniteLossError : Error {
    NonFiniteLossError(const std::string& msg, int epoch_, std::string video_)
        : Error(msg), epoch(epoch_), video(std::move(video_)) {}
    int epoch;
    std::string video;
};

// Thrown by the finite-difference harness when a gradient check fails.
struct CheckFailedError : Error {
    using Error::Error;
};

}  // namespace tas
