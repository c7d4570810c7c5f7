// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace topmil {

enum class ErrorKind {
  ContractViolation,
  DegenerateInput,
  Vocabulary,
  Configuration,
  Episode,
  Divergence,
  Format,
  Io,
};

/// Base of every error raised by the library. The kind is stable and is what
/// the CLI reports in its machine-readable error document.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define TOPMIL_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

TOPMIL_DEFINE_ERROR(ContractViolation, ErrorKind::ContractViolation)
TOPMIL_DEFINE_ERROR(DegenerateInput, ErrorKind::DegenerateInput)
TOPMIL_DEFINE_ERROR(VocabularyError, ErrorKind::Vocabulary)
TOPMIL_DEFINE_ERROR(ConfigurationError, ErrorKind::Configuration)
TOPMIL_DEFINE_ERROR(EpisodeError, ErrorKind::Episode)
TOPMIL_DEFINE_ERROR(DivergenceError, ErrorKind::Divergence)
TOPMIL_DEFINE_ERROR(FormatError, ErrorKind::Format)
TOPMIL_DEFINE_ERROR(IoError, ErrorKind::Io)

#undef TOPMIL_DEFINE_ERROR

inline std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ContractViolation: return "contract_violation";
    case ErrorKind::DegenerateInput: return "degenerate_input";
    case ErrorKind::Vocabulary: return "vocabulary";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Episode: return "episode";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace topmil
