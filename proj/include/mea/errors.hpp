#pragma once

#include <stdexcept>
#include <string>

namespace mea {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value. field() names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config error [" + field + "]: " + what), field_(std::move(field)), detail_(what) {}
  const std::string& field() const { return field_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string field_;
  std::string detail_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input error: " + what) {}
};

class ModelStateError : public Error {
 public:
  explicit ModelStateError(const std::string& what) : Error("model state error: " + what) {}
};

class AddressingError : public Error {
 public:
  explicit AddressingError(const std::string& what) : Error("addressing error: " + what) {}
};

class NumericError : public Error {
 public:
  NumericError(std::string term, const std::string& what)
      : Error("numeric error [" + term + "]: " + what), term_(std::move(term)) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error("integrity error: " + what) {}
};

class MigrationError : public Error {
 public:
  MigrationError(int found, int supported)
      : Error("migration error: checkpoint format_version " + std::to_string(found) +
              " cannot be read by this build (supports version " + std::to_string(supported) + ")"),
        found_(found),
        supported_(supported) {}
  int found() const { return found_; }
  int supported() const { return supported_; }

 private:
  int found_;
  int supported_;
};

class RegistryError : public Error {
 public:
  explicit RegistryError(const std::string& what) : Error("registry error: " + what) {}
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long last_checkpoint_step)
      : Error("training error: " + what), last_checkpoint_step_(last_checkpoint_step) {}
  // Step of the most recent checkpoint written before the failure, or -1.
  long last_checkpoint_step() const { return last_checkpoint_step_; }

 private:
  long last_checkpoint_step_;
};

class StageDependencyError : public Error {
 public:
  explicit StageDependencyError(const std::string& what) : Error("stage dependency error: " + what) {}
};

}  // namespace mea
