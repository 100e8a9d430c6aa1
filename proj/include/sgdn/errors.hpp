#pragma once

#include <stdexcept>
#include <string>

namespace sgdn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SGDN_DEFINE_ERROR(Name) \
  class Name : public Error {   \
   public:                      \
    using Error::Error;         \
  }

SGDN_DEFINE_ERROR(EmptyExpression);
SGDN_DEFINE_ERROR(UngrammaticalExpression);
SGDN_DEFINE_ERROR(EmptyLabelList);
SGDN_DEFINE_ERROR(BadShape);
SGDN_DEFINE_ERROR(DimensionMismatch);
SGDN_DEFINE_ERROR(NonFiniteCost);
SGDN_DEFINE_ERROR(ConfigInvalid);
SGDN_DEFINE_ERROR(IOFailure);
SGDN_DEFINE_ERROR(SchemaViolation);
SGDN_DEFINE_ERROR(DivergenceDetected);
SGDN_DEFINE_ERROR(UnknownCategory);
SGDN_DEFINE_ERROR(CheckFailed);

#undef SGDN_DEFINE_ERROR

}  // namespace sgdn
