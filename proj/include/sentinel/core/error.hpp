#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sentinel {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SENTINEL_DEFINE_ERROR(Name)            \
  class Name : public Error {                  \
   public:                                     \
    using Error::Error;                        \
  }

// ingest
SENTINEL_DEFINE_ERROR(UnknownKind);
SENTINEL_DEFINE_ERROR(SourceUnreadable);
// flow features
SENTINEL_DEFINE_ERROR(KeyMismatch);
SENTINEL_DEFINE_ERROR(EmptyFlow);
// neural detector
SENTINEL_DEFINE_ERROR(SchemaMismatch);
SENTINEL_DEFINE_ERROR(NonFiniteInput);
SENTINEL_DEFINE_ERROR(DegenerateDataset);
SENTINEL_DEFINE_ERROR(NonFiniteLoss);
SENTINEL_DEFINE_ERROR(BadMagic);
SENTINEL_DEFINE_ERROR(VersionUnsupported);
SENTINEL_DEFINE_ERROR(DimMismatch);
SENTINEL_DEFINE_ERROR(TruncatedFile);
// threat calculator
SENTINEL_DEFINE_ERROR(OutOfRange);
// event bus
SENTINEL_DEFINE_ERROR(TopicUnknown);
SENTINEL_DEFINE_ERROR(BusClosed);
// service
SENTINEL_DEFINE_ERROR(PortInUse);
SENTINEL_DEFINE_ERROR(BadConfig);
// bench
SENTINEL_DEFINE_ERROR(EngineUnavailable);

#undef SENTINEL_DEFINE_ERROR

/// A log line that does not match any accepted grammar. `position` is the
/// byte offset where parsing gave up.
class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t position, std::string reason)
      : Error("malformed line at byte " + std::to_string(position) + ": " + reason),
        position_(position),
        reason_(std::move(reason)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t position_;
  std::string reason_;
};

}  // namespace sentinel
