#pragma once

#include <stdexcept>
#include <string>

namespace kinscope {

enum class ErrorCode {
  invalid_argument,
  parse,
  validation,
  config,
  lookup,
  transport,
  shape,
  numeric,
  data,
  state,
  label,
  io,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define KINSCOPE_DEFINE_ERROR(Name, Code)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

KINSCOPE_DEFINE_ERROR(ParseError, parse)
KINSCOPE_DEFINE_ERROR(ValidationError, validation)
KINSCOPE_DEFINE_ERROR(ConfigError, config)
KINSCOPE_DEFINE_ERROR(LookupError, lookup)
KINSCOPE_DEFINE_ERROR(TransportError, transport)
KINSCOPE_DEFINE_ERROR(ShapeError, shape)
KINSCOPE_DEFINE_ERROR(NumericError, numeric)
KINSCOPE_DEFINE_ERROR(DataError, data)
KINSCOPE_DEFINE_ERROR(StateError, state)
KINSCOPE_DEFINE_ERROR(LabelError, label)
KINSCOPE_DEFINE_ERROR(IoError, io)

#undef KINSCOPE_DEFINE_ERROR

}  // namespace kinscope
