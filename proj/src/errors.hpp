#pragma once

#include <stdexcept>
#include <string>

namespace rest {

// Numeric values are part of the C ABI (see include/rest/rest.h).
enum class ErrorKind : int {
  kInvalidArgument = 1,
  kDimension = 2,
  kFormat = 3,
  kIo = 4,
  kConfig = 5,
  kNumeric = 6,
  kContract = 7,
  kValidation = 8,
  kIndex = 9,
  kCoverage = 10,
  kDisjointness = 11,
  kScale = 12,
  kComposition = 13,
  kFold = 14,
  kProtocol = 15,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define REST_DEFINE_ERROR(Name, Kind)                                            \
  class Name : public Error {                                                    \
   public:                                                                       \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}     \
  };

REST_DEFINE_ERROR(InvalidArgument, kInvalidArgument)
REST_DEFINE_ERROR(DimensionError, kDimension)
REST_DEFINE_ERROR(FormatError, kFormat)
REST_DEFINE_ERROR(IoError, kIo)
REST_DEFINE_ERROR(ConfigError, kConfig)
REST_DEFINE_ERROR(NumericError, kNumeric)
REST_DEFINE_ERROR(ContractError, kContract)
REST_DEFINE_ERROR(ValidationError, kValidation)
REST_DEFINE_ERROR(IndexError, kIndex)
REST_DEFINE_ERROR(CoverageError, kCoverage)
REST_DEFINE_ERROR(DisjointnessError, kDisjointness)
REST_DEFINE_ERROR(ScaleError, kScale)
REST_DEFINE_ERROR(CompositionError, kComposition)
REST_DEFINE_ERROR(FoldError, kFold)
REST_DEFINE_ERROR(ProtocolError, kProtocol)

#undef REST_DEFINE_ERROR

}  // namespace rest
