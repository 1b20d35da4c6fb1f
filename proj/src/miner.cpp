#include "tiot/miner.hpp"

#include <algorithm>

namespace tiot {

void Miner::join_chain(std::uint8_t chain, const std::vector<ChainEvent>& events) {
  for (const ChainEvent& ce : events) {
    chain_events_.insert(ce.event);
    event_chains_[ce.event].insert(chain);
    event_owner_[ce.event] = ce.owner;
    if (ce.owner == id_) my_events_.insert(ce.event);
    if (ce.trigger != 0) deps_.add_trigger(ce.event, ce.trigger);
  }
}

void Miner::finalize_setup() {
  std::vector<NodeId> associated;
  for (const auto& [_, owner] : event_owner_) associated.push_back(owner);
  clock_ = VectorClock(id_, associated);
}

void Miner::add_challenge(const PuzzleChallenge& challenge) {
  challenges_[challenge.event] = challenge;
}

std::vector<EventHandler> Miner::pending_events() const {
  std::vector<EventHandler> out;
  out.reserve(pending_.size());
  for (const PendingEvent& p : pending_) out.push_back(p.event);
  return out;
}

bool Miner::happens_before(const PendingEvent& a, const PendingEvent& b) const {
  auto snap = [](const Timestamp& ts, NodeId id) -> std::uint32_t {
    auto it = ts.snapshot.find(id);
    return it == ts.snapshot.end() ? 0 : it->second;
  };
  if (a.sender == b.sender) return snap(a.ts, a.sender) < snap(b.ts, b.sender);
  // b causally follows a iff b's sender had seen a's send when it sent b.
  return snap(b.ts, a.sender) >= snap(a.ts, a.sender);
}

void Miner::request_event(EventHandler event, SimTime now, Outbox& out) {
  if (!my_events_.count(event))
    raise(Errc::UnknownEvent, "node " + std::to_string(id_) + " does not own event " +
                                  std::to_string(event));
  bool already = std::any_of(pending_.begin(), pending_.end(),
                             [&](const PendingEvent& p) { return p.event == event; });
  if (already) {
    ++stats_.suppressed_requests;
    out.note("n" + std::to_string(id_) + " suppress e=" + std::to_string(event));
    return;
  }
  Timestamp ts = clock_.on_send();
  pending_.push_back(PendingEvent{event, id_, ts});

  Message m;
  m.sender = id_;
  m.kind = MsgKind::EventRequest;
  m.ts = ts;
  m.payload = EventRequestPayload{event};
  out.to_gateway.push_back(m);
  // Proposing waits for the gateway echo, which confirms the coin was spent.
}

void Miner::on_broadcast(const Message& msg, SimTime now, Outbox& out) {
  switch (msg.kind) {
    case MsgKind::EventRequest: handle_request(msg, now, out); break;
    case MsgKind::BlockProposal: handle_proposal(msg, now, out); break;
    case MsgKind::BlockCommit: handle_commit(msg, now, out); break;
    default: break;  // fetch/reply/vote never arrive as broadcasts
  }
}

void Miner::handle_request(const Message& msg, SimTime now, Outbox& out) {
  if (msg.sender == id_) {
    // Own request echoed back: the gateway accepted it, safe to propose.
    try_propose(now, out);
    return;
  }
  const auto& p = std::get<EventRequestPayload>(msg.payload);
  if (!chain_events_.count(p.event)) return;  // not our chains, bystander
  if (!msg.ts) {
    out.note("n" + std::to_string(id_) + " request-without-ts e=" + std::to_string(p.event));
    return;
  }

  auto snap = [](const Timestamp& ts, NodeId id) -> std::uint32_t {
    auto it = ts.snapshot.find(id);
    return it == ts.snapshot.end() ? 0 : it->second;
  };
  const std::uint32_t seq = snap(*msg.ts, msg.ts->sender);
  if (seq <= clock_.entries().at(msg.ts->sender)) {
    out.note("n" + std::to_string(id_) + " stale-duplicate from=" + std::to_string(msg.sender));
    return;
  }

  if (clock_.deliverable(*msg.ts)) {
    deliver(msg, out);
    drain_buffer(out);
    try_propose(now, out);
  } else {
    buffer_.push_back(msg);
  }
}

void Miner::deliver(const Message& msg, Outbox& out) {
  const auto& p = std::get<EventRequestPayload>(msg.payload);
  clock_.on_receive(*msg.ts);
  pending_.push_back(PendingEvent{p.event, msg.sender, *msg.ts});
  auto it = msg.ts->snapshot.find(msg.ts->sender);
  out.delivered.push_back(
      Outbox::DeliveredEvent{p.event, msg.sender, it == msg.ts->snapshot.end() ? 0 : it->second});
}

void Miner::drain_buffer(Outbox& out) {
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto it = buffer_.begin(); it != buffer_.end(); ++it) {
      const Timestamp& ts = *it->ts;
      auto own = clock_.entries().find(ts.sender);
      const std::uint32_t seq = ts.snapshot.count(ts.sender) ? ts.snapshot.at(ts.sender) : 0;
      if (own != clock_.entries().end() && seq <= own->second) {
        buffer_.erase(it);  // duplicate surfaced by a later delivery
        progress = true;
        break;
      }
      if (clock_.deliverable(ts)) {
        Message msg = *it;
        buffer_.erase(it);
        deliver(msg, out);
        progress = true;
        break;
      }
    }
  }
}

void Miner::try_propose(SimTime now, Outbox& out) {
  if (suspended_on_ || pending_.empty()) return;

  const PendingEvent& head = pending_.front();
  const std::set<std::uint8_t>& head_chains = event_chains_.at(head.event);

  std::vector<std::size_t> group{0};
  for (std::size_t i = 1; i < pending_.size() && group.size() < kMaxSolutionsPerBlock; ++i) {
    const PendingEvent& e = pending_[i];
    const std::set<std::uint8_t>& chains = event_chains_.at(e.event);
    bool same_chain = std::any_of(chains.begin(), chains.end(), [&](std::uint8_t c) {
      return head_chains.count(c) != 0;
    });
    // Criterion two: events of the miner's other chains ride along only
    // while concurrent with the head event.
    if (same_chain || !happens_before(head, e)) group.push_back(i);
  }
  if (narrow_next_) {
    group.resize(1);
    narrow_next_ = false;
  }

  const std::uint8_t chain = *head_chains.begin();
  std::uint8_t tip_pos = 0;
  std::uint8_t tip_hash = genesis_block(chain).block_hash;
  if (auto it = tips_.find(chain); it != tips_.end()) {
    tip_pos = it->second.first;
    tip_hash = it->second.second;
  }
  if (tip_pos == 255) {
    out.note("n" + std::to_string(id_) + " chain-full c=" + std::to_string(chain));
    return;
  }

  ProposalPayload proposal;
  proposal.block.id = BlockId{chain, static_cast<std::uint8_t>(tip_pos + 1)};
  proposal.block.parent_hash = tip_hash;
  for (std::size_t idx : group) {
    const EventHandler e = pending_[idx].event;
    auto ch = challenges_.find(e);
    if (ch == challenges_.end())
      raise(Errc::MissingChallenge, "node " + std::to_string(id_) +
                                        " holds no challenge for event " + std::to_string(e));
    PuzzleSolution sol = solve_puzzle(ch->second);
    stats_.modmults += sol.mul_count;
    proposal.block.transactions.push_back(e);
    proposal.k_values.push_back(static_cast<std::uint16_t>(sol.k));
  }
  proposal.block.seal();

  Message m;
  m.sender = id_;
  m.kind = MsgKind::BlockProposal;
  m.payload = proposal;
  out.to_gateway.push_back(m);
  ++stats_.proposals_sent;

  // Claiming a block suspends own creation until the round resolves; the
  // retry timer covers proposals the gateway drops without a round.
  suspended_on_ = proposal.block.id;
  last_proposal_ = proposal.block.id;
  out.timers.push_back(TimerRequest{now + cfg_.retry_delay_ms, TimerKind::Retry, 0});
}

void Miner::handle_proposal(const Message& msg, SimTime now, Outbox& out) {
  const auto& p = std::get<ProposalPayload>(msg.payload);
  bool eligible = std::any_of(p.block.transactions.begin(), p.block.transactions.end(),
                              [&](EventHandler e) { return chain_events_.count(e) != 0; });
  if (!eligible) return;
  suspended_on_ = p.block.id;  // stop own block creation for the round
  if (msg.sender == id_) return;  // own claim, the gateway counts it as approval
  evaluate_vote(p, now, out);
}

void Miner::evaluate_vote(const ProposalPayload& p, SimTime now, Outbox& out) {
  pending_vote_ = std::nullopt;

  // Every (event, K) pair must verify under this miner's own root. A block
  // naming an event we hold no challenge for can never earn our approval.
  if (p.k_values.size() != p.block.transactions.size()) {
    send_vote(p.block.id, false, VoteReason::BadPuzzle, out);
    return;
  }
  for (std::size_t i = 0; i < p.block.transactions.size(); ++i) {
    auto ch = challenges_.find(p.block.transactions[i]);
    if (ch == challenges_.end()) {
      send_vote(p.block.id, false, VoteReason::BadPuzzle, out);
      return;
    }
    if (!verify_solution(ch->second.prime, ch->second.root, ch->second.threshold, p.k_values[i],
                         &stats_.modmults)) {
      send_vote(p.block.id, false, VoteReason::BadPuzzle, out);
      return;
    }
  }

  // The block's order must not contradict our delivered causal order.
  auto find_pending = [&](EventHandler e) -> const PendingEvent* {
    for (const PendingEvent& pe : pending_)
      if (pe.event == e) return &pe;
    return nullptr;
  };
  for (std::size_t i = 0; i < p.block.transactions.size(); ++i) {
    const PendingEvent* ei = find_pending(p.block.transactions[i]);
    if (!ei) continue;
    for (std::size_t j = i + 1; j < p.block.transactions.size(); ++j) {
      const PendingEvent* ej = find_pending(p.block.transactions[j]);
      if (!ej) continue;
      if (happens_before(*ej, *ei)) {
        send_vote(p.block.id, false, VoteReason::BadOrder, out);
        return;
      }
    }
  }

  // Traceability: every triggered event needs a registered trigger, either
  // earlier in this very block or in a committed block we can reach.
  std::set<BlockId> fetch_ids;
  for (std::size_t i = 0; i < p.block.transactions.size(); ++i) {
    const EventHandler e = p.block.transactions[i];
    const std::set<EventHandler>& triggers = deps_.triggers_of(e);
    if (triggers.empty()) continue;

    bool satisfied = false;
    std::optional<BlockId> fetchable;
    for (EventHandler t : triggers) {
      for (std::size_t j = 0; j < i && !satisfied; ++j)
        if (p.block.transactions[j] == t) satisfied = true;
      if (satisfied) break;
      if (read_event_block(t, now, out)) {
        satisfied = true;
        break;
      }
      if (auto it = last_commit_of_.find(t); it != last_commit_of_.end()) fetchable = it->second;
    }
    if (!satisfied) {
      if (!fetchable) {
        send_vote(p.block.id, false, VoteReason::MissingTrigger, out);
        return;
      }
      fetch_ids.insert(*fetchable);
    }
  }

  if (!fetch_ids.empty()) {
    FetchPayload f;
    f.ids.assign(fetch_ids.begin(), fetch_ids.end());
    Message m;
    m.sender = id_;
    m.kind = MsgKind::LedgerFetch;
    m.payload = f;
    out.to_gateway.push_back(m);
    ++stats_.fetches_sent;
    pending_vote_ = PendingVote{p, std::move(fetch_ids)};
    return;  // vote once the blocks arrive
  }

  send_vote(p.block.id, true, VoteReason::None, out);
}

void Miner::send_vote(BlockId id, bool approve, VoteReason reason, Outbox& out) {
  if (silent_) {
    out.note("n" + std::to_string(id_) + " silent");
    return;
  }
  if (flip_votes_) approve = !approve;
  approve ? ++stats_.votes_approve : ++stats_.votes_reject;

  Message m;
  m.sender = id_;
  m.kind = MsgKind::Vote;
  m.payload = VotePayload{id, approve, reason};
  out.to_gateway.push_back(m);
}

std::optional<TransactionBlock> Miner::read_event_block(EventHandler e, SimTime now, Outbox& out) {
  std::optional<TransactionBlock> b = partial_.find_event(e);
  if (!b) return std::nullopt;
  if (!hashes_consistent(*b)) {
    ++stats_.tamper_detected;
    out.note("n" + std::to_string(id_) + " tamper-detected chain=" + std::to_string(b->id.chain) +
             " pos=" + std::to_string(b->id.position));
    return std::nullopt;  // treat as missing, a fetch will replace it
  }
  partial_.touch(b->id, now);
  return b;
}

void Miner::handle_commit(const Message& msg, SimTime now, Outbox& out) {
  const auto& c = std::get<CommitPayload>(msg.payload);

  if (pending_vote_ && pending_vote_->proposal.block.id == c.block.id)
    pending_vote_ = std::nullopt;  // round closed without our vote

  if (!c.committed) {
    if (last_proposal_ && *last_proposal_ == c.block.id) narrow_next_ = true;
    suspended_on_ = std::nullopt;
    out.timers.push_back(TimerRequest{now + cfg_.retry_delay_ms, TimerKind::Retry, 0});
    return;
  }

  tips_[c.block.id.chain] = {c.block.id.position, c.block.block_hash};

  bool related = std::any_of(c.block.transactions.begin(), c.block.transactions.end(),
                             [&](EventHandler e) { return chain_events_.count(e) != 0; });
  if (related) {
    PartialLedger::EvictionReport rep = partial_.admit(c.block, deps_, now);
    if (rep.used_lru_fallback) ++stats_.lru_fallbacks;
    ++stats_.blocks_admitted;
    stats_.max_stored_bytes = std::max<std::uint64_t>(stats_.max_stored_bytes, partial_.stored_bytes());
    for (EventHandler e : c.block.transactions)
      if (chain_events_.count(e)) last_commit_of_[e] = c.block.id;
  }

  // Retire the block's events from pending and shrink the clock by what
  // was validated per sender.
  std::map<NodeId, std::uint32_t> validated;
  for (EventHandler e : c.block.transactions) {
    auto it = std::find_if(pending_.begin(), pending_.end(),
                           [&](const PendingEvent& pe) { return pe.event == e; });
    if (it != pending_.end()) {
      ++validated[it->sender];
      pending_.erase(it);
    }
  }
  clock_.on_validation(validated);

  suspended_on_ = std::nullopt;
  try_propose(now, out);
}

void Miner::on_unicast(const Message& msg, SimTime now, Outbox& out) {
  if (msg.kind != MsgKind::LedgerReply) return;
  const auto& r = std::get<ReplyPayload>(msg.payload);

  if (r.block) {
    if (hashes_consistent(*r.block)) {
      partial_.admit(*r.block, deps_, now);
      partial_.touch(r.block->id, now);
      stats_.max_stored_bytes =
          std::max<std::uint64_t>(stats_.max_stored_bytes, partial_.stored_bytes());
    } else {
      out.note("n" + std::to_string(id_) + " bad-reply chain=" + std::to_string(r.id.chain));
    }
  }

  if (!pending_vote_) return;
  if (!pending_vote_->awaiting.count(r.id)) return;
  pending_vote_->awaiting.erase(r.id);
  if (!r.block) {
    BlockId id = pending_vote_->proposal.block.id;
    pending_vote_ = std::nullopt;
    send_vote(id, false, VoteReason::MissingTrigger, out);
    return;
  }
  if (pending_vote_->awaiting.empty()) {
    ProposalPayload p = pending_vote_->proposal;
    pending_vote_ = std::nullopt;
    evaluate_vote(p, now, out);
  }
}

void Miner::on_timer(TimerKind kind, std::uint64_t, SimTime now, Outbox& out) {
  if (kind != TimerKind::Retry) return;
  suspended_on_ = std::nullopt;
  try_propose(now, out);
}

bool Miner::tamper_stored_block(std::uint64_t block_draw, std::uint64_t bit_draw) {
  return partial_.fault_flip_bit(block_draw, bit_draw);
}

}  // namespace tiot
