#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dki {

/// Bad argument or violated precondition. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Malformed input document. Carries the byte offset where parsing stopped.
class ParseError : public ValidationError {
   public:
    ParseError(const std::string& what, std::size_t offset)
        : ValidationError(what + " (at byte " + std::to_string(offset) + ")"), m_offset(offset)
    {
    }

    std::size_t offset() const noexcept { return m_offset; }

   private:
    std::size_t m_offset;
};

class FormatError : public ValidationError {
   public:
    using ValidationError::ValidationError;
};

/// JSONL record that does not match its schema; line numbers are 1-based.
class SchemaError : public ValidationError {
   public:
    SchemaError(const std::string& what, std::size_t line)
        : ValidationError("line " + std::to_string(line) + ": " + what), m_line(line)
    {
    }

    std::size_t line() const noexcept { return m_line; }

   private:
    std::size_t m_line;
};

class CapacityError : public ValidationError {
   public:
    using ValidationError::ValidationError;
};

class CorruptCheckpoint : public ValidationError {
   public:
    using ValidationError::ValidationError;
};

/// Raised by the optimizer when a gradient holds NaN or Inf.
class NonFiniteGradient : public ValidationError {
   public:
    NonFiniteGradient(const std::string& tensor, std::size_t index)
        : ValidationError("non-finite gradient in tensor '" + tensor + "' at element "
                          + std::to_string(index)),
          m_tensor(tensor)
    {
    }

    const std::string& tensor() const noexcept { return m_tensor; }

   private:
    std::string m_tensor;
};

/// Missing or unreadable file. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

} // namespace dki
