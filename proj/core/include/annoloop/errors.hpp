#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace annoloop {

// Root of every error this library throws on purpose.  Callers that want a
// single catch-all can catch annoloop::Error; standard exceptions still pass
// through for genuine programming mistakes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// --- dataset ---------------------------------------------------------------

// Malformed surface text: the parser knows where it stopped and what it
// wanted to see next.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, std::string expected)
      : Error("syntax error at position " + std::to_string(position) +
              ": expected " + expected),
        position(position),
        expected(std::move(expected)) {}

  std::size_t position;
  std::string expected;
};

// Well-formed text that violates a structural rule (backward edge, unknown
// operator, wrong in-degree, out-of-order node block).
class SemanticError : public Error {
 public:
  explicit SemanticError(const std::string& what) : Error(what) {}
};

// A '[' in a SMILES string with no matching ']'.
class UnclosedBracket : public Error {
 public:
  explicit UnclosedBracket(std::size_t position)
      : Error("unclosed '[' at position " + std::to_string(position)),
        position(position) {}

  std::size_t position;
};

// A record file line that cannot be turned into a record.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line(line) {}

  std::size_t line;
};

class DuplicateId : public Error {
 public:
  DuplicateId(std::size_t line, const std::string& id)
      : Error("line " + std::to_string(line) + ": duplicate record id '" + id +
              "'"),
        line(line),
        id(id) {}

  std::size_t line;
  std::string id;
};

// Requested split sizes exceed what the dataset holds.
class InsufficientRecords : public Error {
 public:
  explicit InsufficientRecords(const std::string& what) : Error(what) {}
};

// Fewer records than folds.
class TooFewRecords : public Error {
 public:
  explicit TooFewRecords(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// --- metrics ---------------------------------------------------------------

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t lhs, std::size_t rhs)
      : Error("vector dimensions differ: " + std::to_string(lhs) + " vs " +
              std::to_string(rhs)) {}
};

// --- prompting -------------------------------------------------------------

// A prompt part that must carry content is empty.
class EmptyPart : public Error {
 public:
  explicit EmptyPart(const std::string& part)
      : Error("prompt part must not be empty: " + part) {}
};

// --- backend ---------------------------------------------------------------

// Base for everything that can go wrong while talking to a model provider.
// Iteration-level recovery in the tuning loop keys off this type.
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(what) {}
};

class HttpError : public BackendError {
 public:
  HttpError(int status, const std::string& body)
      : BackendError("http status " + std::to_string(status) + ": " + body),
        status(status),
        body(body) {}

  int status;
  std::string body;
};

class AuthMissing : public BackendError {
 public:
  explicit AuthMissing(const std::string& env_var)
      : BackendError("no API key: environment variable " + env_var +
                     " is not set") {}
};

class MalformedResponse : public BackendError {
 public:
  explicit MalformedResponse(const std::string& what) : BackendError(what) {}
};

// Replay backend asked for a request it has never seen and has no fallback.
class CacheMiss : public BackendError {
 public:
  explicit CacheMiss(const std::string& key)
      : BackendError("replay cache miss for key " + key + " (no fallback)") {}
};

// --- generation ------------------------------------------------------------

// A scored record whose id is absent from the fold assignment.
class MissingFold : public Error {
 public:
  explicit MissingFold(const std::string& id)
      : Error("record '" + id + "' has no fold assignment") {}
};

// More than half of an annotation or recovery pass failed.
class AnnotationFailed : public Error {
 public:
  explicit AnnotationFailed(const std::string& what) : Error(what) {}
};

// External scorer endpoint unreachable or talking nonsense.
class ScorerUnavailable : public Error {
 public:
  explicit ScorerUnavailable(const std::string& what) : Error(what) {}
};

// --- config ----------------------------------------------------------------

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace annoloop
