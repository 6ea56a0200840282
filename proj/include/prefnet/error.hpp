#pragma once

#include <stdexcept>
#include <string>

namespace prefnet {

/// Base of every error raised by the library. `kind()` is a stable short tag
/// ("shape", "config", ...) used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define PREFNET_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(tag, what) {}         \
  };

PREFNET_DEFINE_ERROR(ShapeError, "shape")
PREFNET_DEFINE_ERROR(ConfigError, "config")
PREFNET_DEFINE_ERROR(LabelError, "label")
PREFNET_DEFINE_ERROR(DataError, "data")
PREFNET_DEFINE_ERROR(NumericError, "numeric")
PREFNET_DEFINE_ERROR(FormatError, "format")
PREFNET_DEFINE_ERROR(CorruptionError, "corruption")
PREFNET_DEFINE_ERROR(VersionError, "version")
PREFNET_DEFINE_ERROR(IngestionError, "ingestion")
PREFNET_DEFINE_ERROR(ArgumentError, "argument")

#undef PREFNET_DEFINE_ERROR

}  // namespace prefnet
