#pragma once

#include <stdexcept>
#include <string>

namespace glance {

// Exception hierarchy. The CLI maps each type onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or malformed input data (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset record; carries the 1-based line number when known.
class DataError : public ConfigError {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : ConfigError(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A required upstream artifact is absent or does not match its manifest hash (exit code 3).
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// Embedding provider failure after retries (exit code 4). Retryable by the caller.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, std::string prompt_hash = {})
      : Error(prompt_hash.empty() ? what : what + " [prompt " + prompt_hash + "]"),
        prompt_hash_(std::move(prompt_hash)) {}
  const std::string& prompt_hash() const { return prompt_hash_; }

 private:
  std::string prompt_hash_;
};

// Non-finite values in a numeric kernel or training loss (exit code 5).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace glance
