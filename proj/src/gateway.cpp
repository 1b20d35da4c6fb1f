#include "tiot/gateway.hpp"

#include <algorithm>

namespace tiot {

void CoinRegistry::register_event(EventHandler event) {
  if (event == 0) raise(Errc::ReservedHandler, "0x00 cannot name an event");
  bits_.emplace(event, false);
}

bool CoinRegistry::spent(EventHandler event) const {
  auto it = bits_.find(event);
  if (it == bits_.end())
    raise(Errc::UnknownEvent, "event " + std::to_string(event) + " is not registered");
  return it->second;
}

void CoinRegistry::set_bit(EventHandler event) {
  if (!bits_.count(event))
    raise(Errc::UnknownEvent, "event " + std::to_string(event) + " is not registered");
  bits_[event] = true;
}

void CoinRegistry::clear_bit(EventHandler event) {
  if (!bits_.count(event))
    raise(Errc::UnknownEvent, "event " + std::to_string(event) + " is not registered");
  bits_[event] = false;
}

void MinerRoster::associate(EventHandler event, NodeId miner) {
  associations_[event].insert(miner);
}

const std::set<NodeId>& MinerRoster::associated_with(EventHandler event) const {
  static const std::set<NodeId> empty;
  auto it = associations_.find(event);
  return it == associations_.end() ? empty : it->second;
}

std::set<NodeId> MinerRoster::identify_miners(const TransactionBlock& block) const {
  std::set<NodeId> out;
  for (EventHandler e : block.transactions) {
    const std::set<NodeId>& assoc = associated_with(e);
    out.insert(assoc.begin(), assoc.end());
  }
  if (out.empty() && !block.transactions.empty()) out = reservations_;
  out.erase(kGatewayId);
  return out;
}

std::uint32_t quorum_threshold(std::size_t eligible, std::uint32_t quorum_permille) {
  // ceil(permille * n / 1000) in integer arithmetic.
  return static_cast<std::uint32_t>(
      (static_cast<std::uint64_t>(quorum_permille) * eligible + 999) / 1000);
}

std::uint32_t ConsensusRound::approvals() const {
  std::uint32_t n = 0;
  for (const auto& [_, approve] : votes)
    if (approve) ++n;
  return n;
}

const std::map<NodeId, PuzzleChallenge>& Gateway::issue_challenges(EventHandler event,
                                                                   std::uint32_t prime) {
  const std::set<NodeId>& assoc = roster_.associated_with(event);
  std::vector<NodeId> miners(assoc.begin(), assoc.end());
  if (miners.empty())
    miners.assign(roster_.reservations().begin(), roster_.reservations().end());
  if (miners.empty())
    raise(Errc::NoEligibleMiners, "no miner to issue a challenge to for event " +
                                      std::to_string(event));
  issued_[event] = make_challenges(prime, event, miners, rng_, cfg_.factor_cap);
  return issued_[event];
}

const std::map<NodeId, PuzzleChallenge>& Gateway::challenges_for(EventHandler event) const {
  auto it = issued_.find(event);
  if (it == issued_.end())
    raise(Errc::MissingChallenge, "no challenge issued for event " + std::to_string(event));
  return it->second;
}

void Gateway::on_uplink(const Message& msg, SimTime now, Outbox& out) {
  switch (msg.kind) {
    case MsgKind::EventRequest: handle_event_request(msg, out); break;
    case MsgKind::BlockProposal: handle_proposal(msg, now, out); break;
    case MsgKind::Vote: handle_vote(msg, now, out); break;
    case MsgKind::LedgerFetch: handle_fetch(msg, out); break;
    default:
      out.note("gw drop kind=" + std::string(msg_kind_name(msg.kind)) + " from=" +
               std::to_string(msg.sender));
  }
}

void Gateway::handle_event_request(const Message& msg, Outbox& out) {
  const auto& p = std::get<EventRequestPayload>(msg.payload);
  if (!coins_.registered(p.event)) {
    out.note("gw unknown-event e=" + std::to_string(p.event));
    return;
  }
  if (coins_.spent(p.event)) {  // replay
    ++stats_.replays_rejected;
    out.note("gw replay-rejected e=" + std::to_string(p.event));
    return;
  }
  coins_.set_bit(p.event);
  ++spend_serial_[p.event];
  ++stats_.requests_accepted;
  out.broadcasts.push_back(msg);  // relay with the original sender and timestamp
}

bool Gateway::proposal_valid(const ProposalPayload& p, std::string* why) const {
  TransactionBlock resealed = p.block;
  try {
    resealed.seal();
  } catch (const Error& e) {
    if (why) *why = e.what();
    return false;
  }
  if (resealed.block_hash != p.block.block_hash || resealed.tx_hash != p.block.tx_hash) {
    if (why) *why = "hashes do not recompute";
    return false;
  }
  if (p.block.transactions.empty()) {
    if (why) *why = "empty block";
    return false;
  }
  if (p.k_values.size() != p.block.transactions.size()) {
    if (why) *why = "K count does not match transaction count";
    return false;
  }
  for (EventHandler e : p.block.transactions) {
    if (!coins_.registered(e)) {
      if (why) *why = "unregistered event " + std::to_string(e);
      return false;
    }
    if (!coins_.spent(e)) {
      if (why) *why = "event " + std::to_string(e) + " has no pending request";
      return false;
    }
  }
  // Freshness against the chain tip.
  const std::uint8_t chain = p.block.id.chain;
  std::uint8_t tip_pos = 0, tip_hash = genesis_block(chain).block_hash;
  if (ledger_.has_chain(chain)) {
    const TransactionBlock& tip = ledger_.chain(chain).back();
    tip_pos = tip.id.position;
    tip_hash = tip.block_hash;
  }
  if (p.block.id.position != tip_pos + 1 || p.block.parent_hash != tip_hash) {
    if (why) *why = "stale parent";
    return false;
  }
  return true;
}

void Gateway::handle_proposal(const Message& msg, SimTime now, Outbox& out) {
  const auto& p = std::get<ProposalPayload>(msg.payload);
  for (const Queued& q : queue_) {
    if (q.proposer == msg.sender && q.proposal.block.id == p.block.id &&
        q.proposal.block.transactions == p.block.transactions)
      return;  // duplicate claim
  }
  queue_.push_back(Queued{p, msg.sender});
  if (!round_ && !open_timer_pending_) {
    // Defer to the end of this tick so simultaneous claims compete.
    open_timer_pending_ = true;
    out.timers.push_back(TimerRequest{now, TimerKind::OpenRound, 0});
  }
}

void Gateway::open_round(SimTime now, Outbox& out) {
  open_timer_pending_ = false;
  if (round_) return;

  // Keep only proposals that are still valid right now.
  std::vector<Queued> valid;
  for (Queued& q : queue_) {
    std::string why;
    if (proposal_valid(q.proposal, &why)) {
      valid.push_back(std::move(q));
    } else {
      ++stats_.proposals_dropped;
      out.note("gw drop-proposal from=" + std::to_string(q.proposer) + " " + why);
    }
  }
  queue_.clear();
  if (valid.empty()) return;

  // Bigger block wins; ties break by seeded draw.
  std::size_t best_events = 0;
  for (const Queued& q : valid) best_events = std::max(best_events, q.proposal.block.transactions.size());
  std::vector<Queued*> best;
  for (Queued& q : valid)
    if (q.proposal.block.transactions.size() == best_events) best.push_back(&q);
  Queued* winner = best[best.size() == 1 ? 0 : rng_.uniform(0, best.size() - 1)];

  for (Queued& q : valid) {  // losers wait for the commit broadcast and re-evaluate
    if (&q != winner) {
      ++stats_.proposals_dropped;
      out.note("gw lost-race from=" + std::to_string(q.proposer));
    }
  }

  ConsensusRound round;
  round.proposal = winner->proposal;
  round.proposer = winner->proposer;
  round.eligible = roster_.identify_miners(winner->proposal.block);
  if (round.eligible.empty()) {
    ++stats_.proposals_dropped;
    out.note("gw no-eligible-miners");
    return;
  }
  if (round.eligible.count(round.proposer)) round.votes[round.proposer] = true;
  round_ = std::move(round);
  ++round_seq_;

  const std::set<NodeId>& assoc_any =
      roster_.associated_with(round_->proposal.block.transactions.front());
  const bool isolated = assoc_any.empty();
  if (isolated && round_->eligible.size() == 1 && round_->eligible.count(round_->proposer)) {
    // Lone reserved miner: the gateway itself checks the puzzle solutions.
    bool ok = true;
    const ProposalPayload& p = round_->proposal;
    for (std::size_t i = 0; i < p.block.transactions.size() && ok; ++i) {
      const auto& per_miner = challenges_for(p.block.transactions[i]);
      auto it = per_miner.find(round_->proposer);
      if (it == per_miner.end()) {
        ok = false;
        break;
      }
      ok = verify_solution(it->second.prime, it->second.root, it->second.threshold,
                           p.k_values[i], &stats_.modmults);
    }
    out.note(std::string("gw isolated-verify ") + (ok ? "pass" : "fail"));
    finish_round(ok, now, out);
    return;
  }

  Message m;
  m.sender = round_->proposer;  // relayed claim keeps its origin
  m.kind = MsgKind::BlockProposal;
  m.payload = round_->proposal;
  out.broadcasts.push_back(m);
  out.timers.push_back(
      TimerRequest{now + cfg_.vote_timeout_ms, TimerKind::VoteTimeout, round_seq_});
}

void Gateway::handle_vote(const Message& msg, SimTime now, Outbox& out) {
  if (!round_) return;  // late vote for a closed round
  const auto& v = std::get<VotePayload>(msg.payload);
  if (!(v.block == round_->proposal.block.id)) return;
  if (!round_->eligible.count(msg.sender)) return;
  if (round_->votes.count(msg.sender)) return;
  round_->votes[msg.sender] = v.approve;
  if (round_->votes.size() == round_->eligible.size()) decide_round(now, out);
}

void Gateway::decide_round(SimTime now, Outbox& out) {
  const std::uint32_t needed =
      quorum_threshold(round_->eligible.size(), cfg_.quorum_permille);
  finish_round(round_->approvals() >= needed, now, out);
}

void Gateway::finish_round(bool committed, SimTime now, Outbox& out) {
  ConsensusRound round = std::move(*round_);
  round_ = std::nullopt;
  round.status = committed ? ConsensusRound::Status::Committed : ConsensusRound::Status::Rejected;

  if (committed) {
    ledger_.append_block(round.proposal.block);
    for (EventHandler e : round.proposal.block.transactions) coins_.clear_bit(e);
    ++stats_.rounds_committed;
    stats_.events_committed += round.proposal.block.transactions.size();
    out.note("gw commit chain=" + std::to_string(round.proposal.block.id.chain) +
             " pos=" + std::to_string(round.proposal.block.id.position) +
             " events=" + std::to_string(round.proposal.block.transactions.size()));
  } else {
    ++stats_.rounds_rejected;
    out.note("gw reject chain=" + std::to_string(round.proposal.block.id.chain) +
             " pos=" + std::to_string(round.proposal.block.id.position));
    // Coins stay set; release them only after a quiet period, and only if
    // the spend they belong to is still the current one.
    std::vector<std::pair<EventHandler, std::uint64_t>> clears;
    for (EventHandler e : round.proposal.block.transactions)
      clears.emplace_back(e, spend_serial_[e]);
    coin_clears_[round_seq_] = std::move(clears);
    out.timers.push_back(TimerRequest{now + cfg_.coin_clear_ms, TimerKind::CoinClear, round_seq_});
  }

  Message m;
  m.sender = kGatewayId;
  m.kind = MsgKind::BlockCommit;
  TransactionBlock sealed = round.proposal.block;
  sealed.seal();
  m.payload = CommitPayload{committed, sealed};
  out.broadcasts.push_back(m);

  if (!queue_.empty() && !open_timer_pending_) {
    open_timer_pending_ = true;
    out.timers.push_back(TimerRequest{now, TimerKind::OpenRound, 0});
  }
}

void Gateway::handle_fetch(const Message& msg, Outbox& out) {
  const auto& f = std::get<FetchPayload>(msg.payload);
  for (BlockId id : f.ids) {
    ReplyPayload reply;
    reply.id = id;
    reply.block = ledger_.find_block(id);
    if (!reply.block) {
      ++stats_.fetch_misses;
      out.note("gw fetch-miss chain=" + std::to_string(id.chain) +
               " pos=" + std::to_string(id.position));
    }
    Message m;
    m.sender = kGatewayId;
    m.kind = MsgKind::LedgerReply;
    m.payload = reply;
    out.unicasts.push_back(Outbox::Unicast{msg.sender, m});
  }
}

void Gateway::on_timer(TimerKind kind, std::uint64_t arg, SimTime now, Outbox& out) {
  switch (kind) {
    case TimerKind::OpenRound: open_round(now, out); break;
    case TimerKind::VoteTimeout:
      if (round_ && arg == round_seq_) decide_round(now, out);
      break;
    case TimerKind::CoinClear: {
      auto it = coin_clears_.find(arg);
      if (it == coin_clears_.end()) break;
      for (auto [e, serial] : it->second) {
        if (spend_serial_[e] == serial && coins_.spent(e)) {
          coins_.clear_bit(e);
          out.note("gw coin-timeout-clear e=" + std::to_string(e));
        }
      }
      coin_clears_.erase(it);
      break;
    }
    case TimerKind::Retry: break;  // miner-side timer
  }
}

}  // namespace tiot
