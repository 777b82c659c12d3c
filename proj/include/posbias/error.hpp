#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace posbias {

/// Malformed input file content. Carries the 1-based line number when the
/// format is line-oriented (0 otherwise).
class parse_error : public std::runtime_error {
  public:
    parse_error(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(format(source, line, what)), m_line(line)
    {}

    std::size_t line() const noexcept { return m_line; }

  private:
    static std::string format(const std::string& source, std::size_t line, const std::string& what)
    {
        if (line == 0) {
            return source + ": " + what;
        }
        return source + ":" + std::to_string(line) + ": " + what;
    }

    std::size_t m_line;
};

/// Inputs parsed fine but are inconsistent with each other (dangling ids,
/// mismatched dimensions, ...).
class validation_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace posbias
