#pragma once

#include <stdexcept>
#include <string>

namespace cogform {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration, knowledge base, episode file or rule store.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Emits a warning line on stderr unless warnings are silenced.
void log_warning(const std::string& message);
void set_warnings_enabled(bool enabled);
bool warnings_enabled();

}  // namespace cogform
