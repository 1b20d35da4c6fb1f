#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "tiot/ledger.hpp"
#include "tiot/message.hpp"
#include "tiot/pow.hpp"
#include "tiot/rng.hpp"
#include "tiot/runtime.hpp"

namespace tiot {

// Per-event spend bit: 0 = the next request for this event is valid,
// 1 = a request is pending validation (a further request is a replay).
class CoinRegistry {
 public:
  void register_event(EventHandler event);
  bool registered(EventHandler event) const { return bits_.count(event) != 0; }
  // Throws UnknownEvent.
  bool spent(EventHandler event) const;
  void set_bit(EventHandler event);
  void clear_bit(EventHandler event);
  std::size_t coin_count() const { return bits_.size(); }

 private:
  std::map<EventHandler, bool> bits_;
};

// Which miners verify which events. Associations come from chain membership;
// the reservation set backs isolated events that belong to no chain.
class MinerRoster {
 public:
  void associate(EventHandler event, NodeId miner);
  void reserve(NodeId miner) { reservations_.insert(miner); }

  const std::set<NodeId>& associated_with(EventHandler event) const;
  const std::set<NodeId>& reservations() const { return reservations_; }

  // Union of associations over the block's events; the reservation set when
  // that union is empty. Never contains the gateway.
  std::set<NodeId> identify_miners(const TransactionBlock& block) const;

 private:
  std::map<EventHandler, std::set<NodeId>> associations_;
  std::set<NodeId> reservations_;
};

// Approvals needed for an eligible set of the given size; quorum_permille
// 510 is the 51% rule.
std::uint32_t quorum_threshold(std::size_t eligible, std::uint32_t quorum_permille);

struct ConsensusRound {
  ProposalPayload proposal;
  NodeId proposer = 0;
  std::set<NodeId> eligible;
  std::map<NodeId, bool> votes;  // explicit approve/reject, proposer pre-approves
  enum class Status { Open, Committed, Rejected } status = Status::Open;

  std::uint32_t approvals() const;
};

struct GatewayConfig {
  std::uint32_t quorum_permille = 510;
  SimTime vote_timeout_ms = 500;
  SimTime coin_clear_ms = 5000;
  std::uint32_t factor_cap = 1;  // threshold factor cap passed to make_challenges
};

struct GatewayStats {
  std::uint64_t requests_accepted = 0;
  std::uint64_t replays_rejected = 0;
  std::uint64_t rounds_committed = 0;
  std::uint64_t rounds_rejected = 0;
  std::uint64_t proposals_dropped = 0;
  std::uint64_t events_committed = 0;
  std::uint64_t fetch_misses = 0;
  std::uint64_t modmults = 0;  // isolated-event verification only
};

// The trusted hub: coin registry, FIFO relay, puzzle issuance and the 51%
// block-validation vote. Driven entirely by on_uplink/on_timer; all sends
// go through the Outbox.
class Gateway {
 public:
  Gateway(GatewayConfig cfg, Rng rng) : cfg_(cfg), rng_(std::move(rng)) {}

  // -- setup ---------------------------------------------------------------
  void register_event(EventHandler event) { coins_.register_event(event); }
  void associate(EventHandler event, NodeId miner) { roster_.associate(event, miner); }
  void reserve_miner(NodeId miner) { roster_.reserve(miner); }

  // One puzzle per event: distinct primitive roots of `prime` for every
  // associated (or reserved) miner, shared threshold. Returns the issued map
  // so the caller can hand each miner its challenge.
  const std::map<NodeId, PuzzleChallenge>& issue_challenges(EventHandler event,
                                                            std::uint32_t prime);

  const std::map<NodeId, PuzzleChallenge>& challenges_for(EventHandler event) const;

  // -- runtime -------------------------------------------------------------
  void on_uplink(const Message& msg, SimTime now, Outbox& out);
  void on_timer(TimerKind kind, std::uint64_t arg, SimTime now, Outbox& out);

  const Ledger& ledger() const { return ledger_; }
  Ledger& ledger() { return ledger_; }
  const CoinRegistry& coins() const { return coins_; }
  const MinerRoster& roster() const { return roster_; }
  const GatewayStats& stats() const { return stats_; }
  bool round_open() const { return round_.has_value(); }
  bool idle() const { return !round_ && queue_.empty(); }

 private:
  void handle_event_request(const Message& msg, Outbox& out);
  void handle_proposal(const Message& msg, SimTime now, Outbox& out);
  void handle_vote(const Message& msg, SimTime now, Outbox& out);
  void handle_fetch(const Message& msg, Outbox& out);
  void open_round(SimTime now, Outbox& out);
  void decide_round(SimTime now, Outbox& out);
  void finish_round(bool committed, SimTime now, Outbox& out);
  // Structural and coin-state validity of a queued proposal right now.
  bool proposal_valid(const ProposalPayload& p, std::string* why) const;

  GatewayConfig cfg_;
  Rng rng_;
  CoinRegistry coins_;
  MinerRoster roster_;
  Ledger ledger_;
  std::map<EventHandler, std::map<NodeId, PuzzleChallenge>> issued_;

  struct Queued {
    ProposalPayload proposal;
    NodeId proposer = 0;
  };
  std::vector<Queued> queue_;
  std::optional<ConsensusRound> round_;
  std::uint64_t round_seq_ = 0;
  bool open_timer_pending_ = false;
  // Spend serial per event, so a delayed coin release never clears a newer
  // occurrence's bit.
  std::map<EventHandler, std::uint64_t> spend_serial_;
  std::map<std::uint64_t, std::vector<std::pair<EventHandler, std::uint64_t>>> coin_clears_;
  GatewayStats stats_;
};

}  // namespace tiot
