#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "tiot/ledger.hpp"
#include "tiot/message.hpp"
#include "tiot/pow.hpp"
#include "tiot/runtime.hpp"
#include "tiot/vclock.hpp"

namespace tiot {

struct MinerConfig {
  std::size_t capacity_blocks = 20;
  std::size_t cut_limit = 20;  // 1 = LRU baseline
  SimTime retry_delay_ms = 400;
};

struct MinerStats {
  std::uint64_t modmults = 0;
  std::uint64_t proposals_sent = 0;
  std::uint64_t votes_approve = 0;
  std::uint64_t votes_reject = 0;
  std::uint64_t fetches_sent = 0;
  std::uint64_t suppressed_requests = 0;
  std::uint64_t tamper_detected = 0;
  std::uint64_t blocks_admitted = 0;
  std::uint64_t lru_fallbacks = 0;
  std::uint64_t max_stored_bytes = 0;
};

// One device's protocol state machine: it buffers event transactions behind
// the causal-deliverability gate, groups deliverable events into blocks,
// solves its assigned puzzles, votes on other miners' proposals and
// maintains the bounded partial ledger.
class Miner {
 public:
  Miner(NodeId id, MinerConfig cfg) : id_(id), cfg_(cfg), partial_(cfg.capacity_blocks, cfg.cut_limit) {}

  // -- setup ---------------------------------------------------------------
  // Declares membership in an action-chain: the chain's events with their
  // owning devices and trigger edges. Call once per chain, then finalize.
  struct ChainEvent {
    EventHandler event = 0;
    NodeId owner = 0;
    EventHandler trigger = 0;  // 0 = chain start
  };
  void join_chain(std::uint8_t chain, const std::vector<ChainEvent>& events);
  void finalize_setup();  // builds the vector clock key set

  void add_challenge(const PuzzleChallenge& challenge);

  void set_silent(bool v) { silent_ = v; }
  void set_vote_flipper(bool v) { flip_votes_ = v; }
  // Fault hook: flips one bit in a stored block, picked by the two draws.
  bool tamper_stored_block(std::uint64_t block_draw, std::uint64_t bit_draw);

  // -- runtime -------------------------------------------------------------
  // The device fires one of its own events (sensor trigger or reactivation).
  // Suppressed when the same event is already pending locally.
  void request_event(EventHandler event, SimTime now, Outbox& out);

  void on_broadcast(const Message& msg, SimTime now, Outbox& out);
  void on_unicast(const Message& msg, SimTime now, Outbox& out);
  void on_timer(TimerKind kind, std::uint64_t arg, SimTime now, Outbox& out);

  // -- introspection -------------------------------------------------------
  NodeId id() const { return id_; }
  const VectorClock& clock() const { return clock_; }
  const PartialLedger& partial() const { return partial_; }
  const DependencyMap& deps() const { return deps_; }
  const MinerStats& stats() const { return stats_; }
  const std::set<EventHandler>& chain_events() const { return chain_events_; }
  bool owns_event(EventHandler e) const { return my_events_.count(e) != 0; }
  std::size_t pending_count() const { return pending_.size(); }
  std::vector<EventHandler> pending_events() const;
  std::size_t buffered_count() const { return buffer_.size(); }
  bool quiescent() const { return pending_.empty() && buffer_.empty() && !pending_vote_; }

 private:
  struct PendingEvent {
    EventHandler event = 0;
    NodeId sender = 0;
    Timestamp ts;
  };

  bool happens_before(const PendingEvent& a, const PendingEvent& b) const;
  void deliver(const Message& msg, Outbox& out);
  void drain_buffer(Outbox& out);
  void handle_request(const Message& msg, SimTime now, Outbox& out);
  void handle_proposal(const Message& msg, SimTime now, Outbox& out);
  void handle_commit(const Message& msg, SimTime now, Outbox& out);
  void try_propose(SimTime now, Outbox& out);
  void evaluate_vote(const ProposalPayload& p, SimTime now, Outbox& out);
  void send_vote(BlockId id, bool approve, VoteReason reason, Outbox& out);
  // Verified partial-ledger read; a tampered block reads as absent.
  std::optional<TransactionBlock> read_event_block(EventHandler e, SimTime now, Outbox& out);

  NodeId id_;
  MinerConfig cfg_;
  VectorClock clock_;
  PartialLedger partial_;
  DependencyMap deps_;

  std::set<EventHandler> my_events_;
  std::set<EventHandler> chain_events_;
  std::map<EventHandler, std::set<std::uint8_t>> event_chains_;
  std::map<EventHandler, NodeId> event_owner_;
  std::map<EventHandler, PuzzleChallenge> challenges_;

  std::vector<PendingEvent> pending_;  // causal (delivery) order
  std::deque<Message> buffer_;         // arrival order, re-examined after deliveries

  std::map<std::uint8_t, std::pair<std::uint8_t, std::uint8_t>> tips_;  // chain -> (pos, hash)
  std::map<EventHandler, BlockId> last_commit_of_;

  std::optional<BlockId> suspended_on_;
  std::optional<BlockId> last_proposal_;
  bool narrow_next_ = false;  // re-propose a single event after a rejection

  struct PendingVote {
    ProposalPayload proposal;
    std::set<BlockId> awaiting;
  };
  std::optional<PendingVote> pending_vote_;

  bool silent_ = false;
  bool flip_votes_ = false;
  MinerStats stats_;
};

}  // namespace tiot
