#pragma once

#include <stdexcept>
#include <string>

namespace maglive {

// Every failure raised by the library derives from Error. The CLI maps
// ParameterError/UsageError to exit code 2 and everything else to 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class ResolutionError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class LengthError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class SegmentationError : public Error { using Error::Error; };
class RangingError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };
class EvaluationError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class AssemblyError : public Error { using Error::Error; };

}  // namespace maglive
