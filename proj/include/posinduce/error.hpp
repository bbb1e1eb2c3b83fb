#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace posinduce {

// Base for every error the library reports. Data and model problems derive
// from this so callers (the CLI in particular) can map them to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public Error {
 public:
  DecodeError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": invalid UTF-8: " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnmappedTagError : public Error {
 public:
  explicit UnmappedTagError(const std::string& tag)
      : Error("tag '" + tag + "' is not covered by the tag map"), tag_(tag) {}
  const std::string& tag() const { return tag_; }

 private:
  std::string tag_;
};

struct GoldRequiredError : Error {
  using Error::Error;
};
struct AbsentContextError : Error {
  using Error::Error;
};
struct InvalidDistributionError : Error {
  using Error::Error;
};
struct InvalidSymbolError : Error {
  using Error::Error;
};
// No state path has non-zero probability under the given parameters.
struct ImpossibleSequenceError : Error {
  using Error::Error;
};
struct EmptyCorpusError : Error {
  using Error::Error;
};
struct InvalidCandidateError : Error {
  using Error::Error;
};
struct InfeasibleTargetError : Error {
  using Error::Error;
};
struct InconsistentStateError : Error {
  using Error::Error;
};
struct AlignmentError : Error {
  using Error::Error;
};
struct ModelFormatError : Error {
  using Error::Error;
};
struct PreconditionError : Error {
  using Error::Error;
};

}  // namespace posinduce
