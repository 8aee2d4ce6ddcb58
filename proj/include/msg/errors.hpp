#pragma once

#include <stdexcept>
#include <string>

namespace msg {

// Base for all toolkit errors. `code()` is the stable machine-readable
// identifier emitted in error JSON by the CLI.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

#define MSG_DEFINE_ERROR(NAME, CODE)                                   \
  class NAME : public ::msg::Error {                                   \
  public:                                                              \
    explicit NAME(const std::string& message)                          \
        : ::msg::Error(CODE, message) {}                               \
  }

// corpus
MSG_DEFINE_ERROR(UnknownAdapter, "unknown-adapter");
MSG_DEFINE_ERROR(MalformedFile, "malformed-file");
MSG_DEFINE_ERROR(EmptyCorpus, "empty-corpus");

// templating
MSG_DEFINE_ERROR(GrammarError, "grammar-error");
MSG_DEFINE_ERROR(DuplicateGroundTruthSlot, "duplicate-ground-truth-slot");
MSG_DEFINE_ERROR(MissingNoneOfTheAbove, "missing-none-of-the-above");
MSG_DEFINE_ERROR(DuplicateTemplateId, "duplicate-template-id");
MSG_DEFINE_ERROR(EmptyCell, "empty-cell");
MSG_DEFINE_ERROR(MissingBinding, "missing-binding");

// distractor
MSG_DEFINE_ERROR(PoolTooSmall, "pool-too-small");
MSG_DEFINE_ERROR(ScorerUnavailable, "scorer-unavailable");
MSG_DEFINE_ERROR(InsufficientDistractors, "insufficient-distractors");
MSG_DEFINE_ERROR(SpanOutOfBounds, "span-out-of-bounds");
MSG_DEFINE_ERROR(NoOpReplacement, "no-op-replacement");

// visprompt
MSG_DEFINE_ERROR(BBoxOutOfImage, "bbox-out-of-image");

// mcqgen
MSG_DEFINE_ERROR(CorpusExhausted, "corpus-exhausted");

// instructgen
MSG_DEFINE_ERROR(InsufficientFacts, "insufficient-facts");
MSG_DEFINE_ERROR(ServiceUnavailable, "service-unavailable");

// harness
MSG_DEFINE_ERROR(EndpointUnreachable, "endpoint-unreachable");
MSG_DEFINE_ERROR(QueryTimeout, "timeout");
MSG_DEFINE_ERROR(AuthFailure, "auth-failure");
MSG_DEFINE_ERROR(FallbackUnavailable, "fallback-unavailable");
MSG_DEFINE_ERROR(ItemResponseMismatch, "item-response-mismatch");

// analysis
MSG_DEFINE_ERROR(SuiteMismatch, "suite-mismatch");
MSG_DEFINE_ERROR(DegenerateMatrix, "degenerate-matrix");
MSG_DEFINE_ERROR(UnsupportedK, "unsupported-k");

// generic I/O
MSG_DEFINE_ERROR(IoError, "io-error");

#undef MSG_DEFINE_ERROR

}  // namespace msg
