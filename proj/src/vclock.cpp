#include "tiot/vclock.hpp"

#include <algorithm>

namespace tiot {

VectorClock::VectorClock(NodeId owner, const std::vector<NodeId>& associated) : owner_(owner) {
  entries_[owner] = 0;
  for (NodeId id : associated) entries_[id] = 0;
}

Timestamp VectorClock::on_send() {
  ++entries_[owner_];
  return Timestamp{owner_, entries_};
}

bool VectorClock::deliverable(const Timestamp& ts) const {
  auto own = entries_.find(ts.sender);
  if (own == entries_.end())
    raise(Errc::UnknownSender, "sender " + std::to_string(ts.sender) + " is not associated with " +
                                   std::to_string(owner_));

  auto sent = ts.snapshot.find(ts.sender);
  const std::uint32_t sender_count = sent == ts.snapshot.end() ? 0 : sent->second;
  if (sender_count != own->second + 1) return false;

  for (const auto& [id, count] : ts.snapshot) {
    if (id == ts.sender) continue;
    auto mine = entries_.find(id);
    if (mine == entries_.end()) continue;  // untracked miner, no dependency possible
    if (count > mine->second) return false;
  }
  return true;
}

void VectorClock::on_receive(const Timestamp& ts) {
  if (!deliverable(ts))
    raise(Errc::NotDeliverable, "message from " + std::to_string(ts.sender) +
                                    " delivered out of causal order at " + std::to_string(owner_));
  for (auto& [id, count] : entries_) {
    if (id == owner_) continue;
    auto theirs = ts.snapshot.find(id);
    if (theirs != ts.snapshot.end()) count = std::max(count, theirs->second);
  }
  ++entries_[owner_];
}

void VectorClock::on_validation(const std::map<NodeId, std::uint32_t>& validated) {
  for (const auto& [id, count] : validated) {
    auto mine = entries_.find(id);
    if (mine == entries_.end()) continue;
    if (count > mine->second)
      raise(Errc::Underflow, "validated " + std::to_string(count) + " events from " +
                                 std::to_string(id) + " but only " + std::to_string(mine->second) +
                                 " are outstanding");
    mine->second -= count;
  }
}

bool VectorClock::all_zero() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const auto& kv) { return kv.second == 0; });
}

}  // namespace tiot
