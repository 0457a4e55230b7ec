#pragma once

#include <stdexcept>
#include <string>

namespace mcfe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent tensor shapes, channel counts, or configuration between stages.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or text file. `section` names the part of the file that
// could not be read (e.g. "header", "speech head").
class FormatError : public Error {
 public:
  FormatError(std::string section, const std::string& what)
      : Error(what + " [section: " + section + "]"), section_(std::move(section)) {}
  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

// A sampler could not satisfy its constraints within its retry budget.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcfe
