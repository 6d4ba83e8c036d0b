#pragma once

#include <stdexcept>
#include <string>

namespace scenediff {

// Base of every error the library throws. The CLI maps the subclasses onto
// process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented invariant. `index` is -1 when the violation is
// not tied to a single object.
class ValidationError : public Error {
 public:
  ValidationError(int index, std::string field, const std::string& what)
      : Error(what), index_(index), field_(std::move(field)) {}
  int index() const { return index_; }
  const std::string& field() const { return field_; }

 private:
  int index_;
  std::string field_;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A mask that a score divides by has no set pixels. `mask` is "free_space"
// or "floor_complement".
class EmptyMaskError : public DegenerateInputError {
 public:
  EmptyMaskError(std::string mask, const std::string& what)
      : DegenerateInputError(what), mask_(std::move(mask)) {}
  const std::string& mask() const { return mask_; }

 private:
  std::string mask_;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class PairingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or range mismatch at an API boundary.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class GuidanceError : public Error {
 public:
  GuidanceError(std::string term, const std::string& what) : Error(what), term_(std::move(term)) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

class GenerationError : public Error {
 public:
  GenerationError(unsigned long long seed, const std::string& what) : Error(what), seed_(seed) {}
  unsigned long long seed() const { return seed_; }

 private:
  unsigned long long seed_;
};

// No translation candidate met both calibration thresholds. Carries the
// candidate with the highest IoU (smallest displacement on ties) and its E_pen.
class CalibrationError : public Error {
 public:
  struct Candidate {
    double dx = 0.0;
    double dz = 0.0;
    double penetration = 0.0;
    double iou = 0.0;
  };
  CalibrationError(Candidate best, const std::string& what) : Error(what), best_(best) {}
  const Candidate& best() const { return best_; }

 private:
  Candidate best_;
};

class ParseError : public Error {
 public:
  ParseError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class UnsupportedVersionError : public ParseError {
 public:
  explicit UnsupportedVersionError(const std::string& what) : ParseError("/version", what) {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

class RetrievalError : public Error {
 public:
  using Error::Error;
};

// Process exit codes used by the CLI: 0 success, 2 validation, 3 I/O,
// 4 calibration/generation/guidance failure, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace scenediff
