#pragma once

#include <stdexcept>
#include <string>

namespace convscope {

// Error categories, mirrored one-to-one by the C API status codes.
enum class ErrorCategory {
  InvalidArgument,  // bad parameter value (rate >= 1, stride < 1, ...)
  Shape,            // incompatible tensor/layer geometry
  Config,           // unparsable or inconsistent configuration
  Io,               // filesystem / codec failures
  Format,           // corrupt or wrong-version serialized data
  Integrity,        // internal consistency violation in loaded state
  Numeric,          // non-finite values where finite ones are required
  Input,            // bad user-supplied data (missing class, bad image)
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

struct InvalidArgumentError : Error {
  explicit InvalidArgumentError(const std::string& m) : Error(ErrorCategory::InvalidArgument, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorCategory::Shape, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::Config, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCategory::Io, m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorCategory::Format, m) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m) : Error(ErrorCategory::Integrity, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorCategory::Numeric, m) {}
};
struct InputError : Error {
  explicit InputError(const std::string& m) : Error(ErrorCategory::Input, m) {}
};
struct InternalError : Error {
  explicit InternalError(const std::string& m) : Error(ErrorCategory::Internal, m) {}
};

const char* category_name(ErrorCategory c);

}  // namespace convscope
