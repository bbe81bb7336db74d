#pragma once

#include <stdexcept>
#include <string>

namespace loadfuse {

// Failure classes map onto the CLI exit codes (2 config, 3 data, 4 numerical).
enum class ErrorClass { Config = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

#define LOADFUSE_ERROR(Name, Class)                          \
  class Name : public Error {                                \
   public:                                                   \
    explicit Name(const std::string& what)                   \
        : Error(ErrorClass::Class, #Name ": " + what) {}     \
  }

LOADFUSE_ERROR(ConfigError, Config);
LOADFUSE_ERROR(InvalidSpec, Config);
LOADFUSE_ERROR(UntrainedModel, Config);
LOADFUSE_ERROR(LeakageDetected, Config);

LOADFUSE_ERROR(IoError, Data);
LOADFUSE_ERROR(ParseError, Data);
LOADFUSE_ERROR(AlignmentError, Data);
LOADFUSE_ERROR(NonMultipleLength, Data);
LOADFUSE_ERROR(InsufficientSupport, Data);
LOADFUSE_ERROR(ZeroVariance, Data);
LOADFUSE_ERROR(NoUsableNeighbors, Data);
LOADFUSE_ERROR(ZeroWeightSum, Data);
LOADFUSE_ERROR(MissingSlowReading, Data);
LOADFUSE_ERROR(LengthMismatch, Data);
LOADFUSE_ERROR(EmptyAfterExclusion, Data);
LOADFUSE_ERROR(EmptyInput, Data);

LOADFUSE_ERROR(DimensionMismatch, Numeric);
LOADFUSE_ERROR(NotPositiveDefinite, Numeric);
LOADFUSE_ERROR(NonFinite, Numeric);
LOADFUSE_ERROR(Diverged, Numeric);

#undef LOADFUSE_ERROR

}  // namespace loadfuse
