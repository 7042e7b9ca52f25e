#pragma once

#include <stdexcept>
#include <string>

namespace sgkd {

// Error taxonomy shared across the library. The CLI maps these onto exit codes:
// ValidationError/IoError -> 2, NumericError -> 3, argument parsing -> 1.
struct ShapeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ValueError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ValidationError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericError : std::runtime_error { using std::runtime_error::runtime_error; };
struct IoError : std::runtime_error { using std::runtime_error::runtime_error; };

// Checkpoint loading distinguishes these from generic I/O failures.
struct CheckpointVersionError : IoError { using IoError::IoError; };
struct CheckpointCorruptError : IoError { using IoError::IoError; };

}  // namespace sgkd
