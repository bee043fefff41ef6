#pragma once

#include <stdexcept>
#include <string>

namespace mlrn {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatches and bad op arguments.
struct ShapeError : Error {
    using Error::Error;
};

// File I/O failures (missing file, short read, write failure).
struct IoError : Error {
    using Error::Error;
};

// Malformed serialized data (graph JSON, checkpoints, config files).
struct ParseError : Error {
    using Error::Error;
};

// Structural problems in a NetworkGraph (cycles, bad edges, failed rewrites).
struct GraphError : Error {
    using Error::Error;
};

// Training-time failures (non-finite loss, bad schedule).
struct TrainError : Error {
    using Error::Error;
};

}  // namespace mlrn
