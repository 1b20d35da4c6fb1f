#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "tiot/errors.hpp"
#include "tiot/types.hpp"

namespace tiot {

// Immutable snapshot of a sender's clock at send time.
struct Timestamp {
  NodeId sender = 0;
  std::map<NodeId, std::uint32_t> snapshot;

  bool operator==(const Timestamp&) const = default;
};

// Reduced vector clock: one counter per associated miner (owner included),
// never the whole network. The owner's entry counts its own sends; every
// other entry counts deliveries from that miner. Entries shrink only when
// a validated block retires the events they were counting.
class VectorClock {
 public:
  VectorClock() = default;
  VectorClock(NodeId owner, const std::vector<NodeId>& associated);

  NodeId owner() const { return owner_; }
  const std::map<NodeId, std::uint32_t>& entries() const { return entries_; }
  bool knows(NodeId id) const { return entries_.count(id) != 0; }

  // Increments the owner entry, then snapshots. Call once per sent message.
  Timestamp on_send();

  // Causal-deliverability test: ts is the sender's next-in-sequence message
  // and everything the sender had seen is already reflected here. Keys the
  // receiver does not track are skipped; it cannot depend on them.
  // Throws UnknownSender if ts.sender is not in the key set.
  bool deliverable(const Timestamp& ts) const;

  // Entry-wise max over non-owner keys, then owner +1.
  // Throws NotDeliverable if deliverable(ts) does not hold.
  void on_receive(const Timestamp& ts);

  // Subtracts per-miner counts of events retired by a validated block.
  // Degenerates to an all-zero reset when the block covers every pending
  // event of the epoch. Throws Underflow if a count exceeds an entry.
  void on_validation(const std::map<NodeId, std::uint32_t>& validated);

  bool all_zero() const;

 private:
  NodeId owner_ = 0;
  std::map<NodeId, std::uint32_t> entries_;
};

}  // namespace tiot
