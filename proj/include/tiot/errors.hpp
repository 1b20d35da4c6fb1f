#pragma once

#include <stdexcept>
#include <string>

namespace tiot {

enum class Errc {
  // codec
  TooManyTransactions,
  ReservedHandler,
  BadLength,
  HashMismatch,
  PayloadTooLarge,
  // pow
  NotPrime,
  NotEnoughRoots,
  PrimeTooLarge,
  SolutionOverflow,
  // vclock
  UnknownSender,
  NotDeliverable,
  Underflow,
  // ledger
  ParentMismatch,
  PositionGap,
  NotFound,
  PositionOverflow,
  // gateway / miner
  UnknownEvent,
  NoEligibleMiners,
  MissingChallenge,
  // simnet
  Unsatisfiable,
  TooManyFaults,
  // provenance
  EventNotFound,
  EmptyLedger,
  // io
  IoError,
  BadConfig,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace tiot
