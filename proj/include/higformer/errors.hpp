#pragma once

#include <stdexcept>
#include <string>

namespace higformer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (bad JSON, missing field). Carries the 1-based line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
  using Error::Error;
};
class DataError : public Error {
  using Error::Error;
};
class ConfigError : public Error {
  using Error::Error;
};
class NumericError : public Error {
  using Error::Error;
};
class LookupError : public Error {
  using Error::Error;
};
class DomainError : public Error {
  using Error::Error;
};
class PredictionError : public Error {
  using Error::Error;
};
class TrainingError : public Error {
  using Error::Error;
};

/// A player was asked for a pooled embedding but has no recorded history.
class NoHistoryError : public Error {
 public:
  explicit NoHistoryError(long long player_id)
      : Error("player " + std::to_string(player_id) + " has no match history"),
        player_id_(player_id) {}
  long long player_id() const noexcept { return player_id_; }

 private:
  long long player_id_;
};

}  // namespace higformer
