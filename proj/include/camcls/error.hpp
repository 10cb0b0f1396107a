#pragma once

#include <stdexcept>
#include <string>

namespace camcls {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or geometry mismatch between tensors.
struct DimensionError : Error {
  using Error::Error;
};

// A caller violated an operation's precondition.
struct ContractError : Error {
  using Error::Error;
};

// Invalid user-supplied configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset directory or file could not be ingested.
struct IngestError : Error {
  using Error::Error;
};

// Referenced file missing or unreadable.
struct FileError : Error {
  using Error::Error;
};

}  // namespace camcls
