#pragma once

#include <stdexcept>
#include <string>

namespace omseg {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem-level failures: missing paths, unwritable targets, rename failures.
struct IoError : Error {
    using Error::Error;
};

struct FileMissingError : IoError {
    using IoError::IoError;
};

// Header text that does not parse or lacks required fields.
struct MalformedHeaderError : Error {
    using Error::Error;
};

// Raw payload byte count disagrees with the header dims.
struct PayloadLengthError : Error {
    using Error::Error;
};

struct NonFiniteVoxelError : Error {
    using Error::Error;
};

// Non-positive dims or spacing.
struct InvalidGeometryError : Error {
    using Error::Error;
};

// A mask buffer holding values outside {0, 1}.
struct NonBinaryMaskError : Error {
    using Error::Error;
};

// Two volumes that must share dims/spacing/origin but do not.
struct GeometryMismatchError : Error {
    using Error::Error;
};

// Inputs on which the requested quantity is undefined (e.g. zero-variance NCC).
struct DegenerateInputError : Error {
    using Error::Error;
};

// Tensor or parameter shapes inconsistent with what an operation requires.
struct ShapeError : Error {
    using Error::Error;
};

// Operation called in a state that does not admit it (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

struct InvalidArgumentError : Error {
    using Error::Error;
};

// Config or manifest documents that fail validation, including unknown keys.
struct ConfigError : Error {
    using Error::Error;
};

struct PhantomGenerationError : Error {
    using Error::Error;
};

// Non-finite loss during optimization.
struct TrainingDivergedError : Error {
    using Error::Error;
};

}  // namespace omseg
