#pragma once

#include <stdexcept>
#include <string>

namespace rfdeep {

// Error categories map onto CLI exit codes (2 config, 3 data, 4 invariant).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Data error carrying the scan it was raised for, so the CLI can name it.
class ScanError : public DataError {
 public:
  ScanError(std::string scan_id, const std::string& what)
      : DataError(what), scan_id_(std::move(scan_id)) {}
  const std::string& scan_id() const { return scan_id_; }

 private:
  std::string scan_id_;
};

}  // namespace rfdeep
