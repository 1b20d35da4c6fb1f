#include "tiot/simnet.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>

#include "tiot/pow.hpp"
#include "tiot/rng.hpp"

namespace tiot {

namespace {

struct SimEvent {
  SimTime t = 0;
  int klass = 0;  // 0 = normal, 1 = end-of-tick (round opening)
  std::uint64_t seq = 0;
  enum class Type { UplinkArrive, DownlinkArrive, UnicastArrive, Timer, Activate, RequestLater, Tamper };
  Type type = Type::Timer;
  Message msg;
  NodeId node = 0;  // receiver / timer owner / tamper target
  TimerKind timer_kind = TimerKind::Retry;
  std::uint64_t timer_arg = 0;
  std::uint8_t chain = 0;
  EventHandler event = 0;
};

struct EventOrder {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.klass != b.klass) return a.klass > b.klass;
    return a.seq > b.seq;
  }
};

class Engine {
 public:
  Engine(const Scenario& scenario, SimTime duration)
      : sc_(scenario),
        duration_(duration),
        rng_root_(scenario.seed),
        rng_delays_(rng_root_.fork()),
        rng_sched_(rng_root_.fork()),
        rng_primes_(rng_root_.fork()),
        rng_faults_(rng_root_.fork()),
        gateway_(GatewayConfig{scenario.quorum_permille, scenario.vote_timeout_ms,
                               scenario.coin_clear_ms, 1},
                 rng_root_.fork()) {}

  SimResult run();

 private:
  void setup();
  void push(SimEvent ev) {
    ev.seq = next_seq_++;
    queue_.push(std::move(ev));
  }
  SimTime link_delay(NodeId node) {
    auto dev = sc_.find_device(node);
    auto it = sc_.delays.find(dev ? dev->protocol : "p802154");
    const DelaySpec d = it == sc_.delays.end() ? DelaySpec{} : it->second;
    return d.base_ms + rng_delays_.uniform(0, d.jitter_ms);
  }
  void trace_msg(TraceRecord::Kind kind, SimTime t, NodeId actor, const Message& m);
  void trace_note(SimTime t, NodeId actor, const std::string& note);
  void drain(NodeId actor, Outbox& out, SimTime now);
  void handle(const SimEvent& ev);
  void fire_triggers(NodeId device, const TransactionBlock& block, SimTime now);
  void account_commit(const TransactionBlock& block);
  void sample(SimTime t);

  const Scenario& sc_;
  SimTime duration_;
  Rng rng_root_, rng_delays_, rng_sched_, rng_primes_, rng_faults_;
  Gateway gateway_;
  std::map<NodeId, Miner> miners_;
  std::map<NodeId, std::set<EventHandler>> node_chain_events_;

  std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
  std::uint64_t next_seq_ = 0;
  std::map<NodeId, SimTime> last_down_;  // per-receiver FIFO clamp for the relay

  std::vector<std::uint64_t> activation_count_;           // per chain
  std::vector<std::map<std::size_t, std::uint64_t>> fired_epoch_;  // per chain, per event index

  SimResult result_;
  std::map<NodeId, NodeCounters> counters_;
};

void Engine::trace_msg(TraceRecord::Kind kind, SimTime t, NodeId actor, const Message& m) {
  TraceRecord r;
  r.t = t;
  r.kind = kind;
  r.actor = actor;
  r.mk = m.kind;
  r.origin = m.sender;
  if (m.kind == MsgKind::EventRequest) {
    r.event = std::get<EventRequestPayload>(m.payload).event;
    if (m.ts) {
      auto it = m.ts->snapshot.find(m.ts->sender);
      r.seq = it == m.ts->snapshot.end() ? 0 : it->second;
    }
  }
  r.digest = payload_digest(m.payload);
  result_.trace.push_back(std::move(r));
}

void Engine::trace_note(SimTime t, NodeId actor, const std::string& note) {
  TraceRecord r;
  r.t = t;
  r.kind = TraceRecord::Kind::Note;
  r.actor = actor;
  r.note = note;
  result_.trace.push_back(std::move(r));
}

void Engine::setup() {
  for (const DeviceSpec& d : sc_.devices) {
    MinerConfig cfg;
    cfg.capacity_blocks = sc_.capacity_blocks;
    cfg.cut_limit = sc_.cut_limit;
    cfg.retry_delay_ms = sc_.retry_delay_ms;
    miners_.emplace(d.id, Miner(d.id, cfg));
    for (EventHandler e : d.events) gateway_.register_event(e);
  }

  std::map<EventHandler, NodeId> owners = sc_.event_owners();
  for (const ChainSpec& c : sc_.chains) {
    std::set<NodeId> members(c.extra_members.begin(), c.extra_members.end());
    for (const ChainEventSpec& e : c.events) members.insert(e.device);

    std::vector<Miner::ChainEvent> chain_events;
    for (const ChainEventSpec& e : c.events) {
      Miner::ChainEvent ce;
      ce.event = e.event;
      ce.owner = e.device;
      ce.trigger = e.parent >= 0 ? c.events[e.parent].event : 0;
      chain_events.push_back(ce);
    }
    for (NodeId m : members) {
      miners_.at(m).join_chain(c.id, chain_events);
      for (const ChainEventSpec& e : c.events) {
        gateway_.associate(e.event, m);
        node_chain_events_[m].insert(e.event);
      }
    }
  }
  for (auto& [id, m] : miners_) m.finalize_setup();

  // One puzzle per event, prime drawn from the configured ordinal range.
  std::set<EventHandler> all_events;
  for (const auto& [e, _] : owners) all_events.insert(e);
  for (EventHandler e : all_events) {
    const std::uint32_t ordinal = static_cast<std::uint32_t>(
        rng_primes_.uniform(sc_.prime_ordinals.first, sc_.prime_ordinals.second));
    const std::uint32_t prime = nth_prime(ordinal);
    for (const auto& [miner, challenge] : gateway_.issue_challenges(e, prime))
      if (miner != kGatewayId) miners_.at(miner).add_challenge(challenge);
  }

  for (const FaultSpec& f : sc_.faults) {
    auto it = miners_.find(f.node);
    if (it == miners_.end()) continue;
    switch (f.kind) {
      case FaultSpec::Kind::SilentNode: it->second.set_silent(true); break;
      case FaultSpec::Kind::VoteFlipper: it->second.set_vote_flipper(true); break;
      case FaultSpec::Kind::BlockTamperer: {
        SimEvent ev;
        ev.type = SimEvent::Type::Tamper;
        ev.t = f.at_ms != 0 ? f.at_ms : std::max<SimTime>(1, duration_ / 2);
        ev.node = f.node;
        push(ev);
        break;
      }
    }
  }

  activation_count_.assign(sc_.chains.size(), 0);
  fired_epoch_.assign(sc_.chains.size(), {});
  for (std::size_t i = 0; i < sc_.chains.size(); ++i) {
    SimEvent ev;
    ev.type = SimEvent::Type::Activate;
    ev.t = rng_sched_.uniform(sc_.first_activation_ms.first, sc_.first_activation_ms.second);
    ev.chain = static_cast<std::uint8_t>(i);
    push(ev);
  }
}

void Engine::drain(NodeId actor, Outbox& out, SimTime now) {
  for (std::string& n : out.notes) trace_note(now, actor, n);
  for (const Outbox::DeliveredEvent& d : out.delivered) {
    TraceRecord r;
    r.t = now;
    r.kind = TraceRecord::Kind::Deliver;
    r.actor = actor;
    r.mk = MsgKind::EventRequest;
    r.origin = d.sender;
    r.event = d.event;
    r.seq = d.seq;
    result_.trace.push_back(std::move(r));
  }

  for (Message& m : out.to_gateway) {
    ++counters_[actor].sends;
    trace_msg(TraceRecord::Kind::Send, now, actor, m);
    SimEvent ev;
    ev.type = SimEvent::Type::UplinkArrive;
    ev.t = now + link_delay(actor);
    ev.msg = std::move(m);
    push(ev);
  }

  for (Message& m : out.broadcasts) {
    ++counters_[kGatewayId].sends;
    trace_msg(TraceRecord::Kind::Send, now, kGatewayId, m);
    if (m.kind == MsgKind::BlockCommit) {
      const auto& c = std::get<CommitPayload>(m.payload);
      if (c.committed) account_commit(c.block);
    }
    for (const DeviceSpec& d : sc_.devices) {
      SimEvent ev;
      ev.type = SimEvent::Type::DownlinkArrive;
      ev.t = std::max(now + link_delay(d.id), last_down_[d.id]);
      last_down_[d.id] = ev.t;
      ev.node = d.id;
      ev.msg = m;
      push(ev);
    }
  }

  for (Outbox::Unicast& u : out.unicasts) {
    ++counters_[kGatewayId].sends;
    trace_msg(TraceRecord::Kind::Send, now, kGatewayId, u.msg);
    SimEvent ev;
    ev.type = SimEvent::Type::UnicastArrive;
    ev.t = std::max(now + link_delay(u.to), last_down_[u.to]);
    last_down_[u.to] = ev.t;
    ev.node = u.to;
    ev.msg = std::move(u.msg);
    push(ev);
  }

  for (const TimerRequest& tr : out.timers) {
    SimEvent ev;
    ev.type = SimEvent::Type::Timer;
    ev.t = tr.fire_at;
    ev.klass = tr.kind == TimerKind::OpenRound ? 1 : 0;  // after same-tick arrivals
    ev.node = actor;
    ev.timer_kind = tr.kind;
    ev.timer_arg = tr.arg;
    push(ev);
  }
}

void Engine::account_commit(const TransactionBlock& block) {
  result_.committed_events += block.transactions.size();
  for (const auto& [node, events] : node_chain_events_) {
    std::uint64_t n = 0;
    for (EventHandler e : block.transactions) n += events.count(e);
    counters_[node].events_committed += n;
  }
}

void Engine::fire_triggers(NodeId device, const TransactionBlock& block, SimTime now) {
  for (std::size_t ci = 0; ci < sc_.chains.size(); ++ci) {
    const ChainSpec& chain = sc_.chains[ci];
    if (activation_count_[ci] == 0) continue;  // chain not armed yet
    for (std::size_t i = 0; i < chain.events.size(); ++i) {
      const ChainEventSpec& ce = chain.events[i];
      if (ce.device != device || ce.parent < 0) continue;
      const EventHandler parent_event = chain.events[ce.parent].event;
      bool fired = std::find(block.transactions.begin(), block.transactions.end(),
                             parent_event) != block.transactions.end();
      if (!fired) continue;
      // Once per activation epoch, or a pair of chains sharing two events
      // could ping-pong forever.
      if (fired_epoch_[ci][i] >= activation_count_[ci]) continue;
      fired_epoch_[ci][i] = activation_count_[ci];
      SimEvent ev;
      ev.type = SimEvent::Type::RequestLater;
      ev.t = now + sc_.actuation_ms;
      ev.node = device;
      ev.event = ce.event;
      push(ev);
    }
  }
}

void Engine::handle(const SimEvent& ev) {
  Outbox out;
  switch (ev.type) {
    case SimEvent::Type::Activate: {
      const ChainSpec& chain = sc_.chains[ev.chain];
      ++activation_count_[ev.chain];
      trace_note(ev.t, kGatewayId, "activate chain=" + std::to_string(chain.id) +
                                       " epoch=" + std::to_string(activation_count_[ev.chain]));
      EventHandler root = chain.start_event();
      NodeId owner = 0;
      for (const ChainEventSpec& e : chain.events)
        if (e.parent < 0) owner = e.device;
      miners_.at(owner).request_event(root, ev.t, out);
      drain(owner, out, ev.t);

      const SimTime next =
          ev.t + rng_sched_.uniform(sc_.reactivation_ms.first, sc_.reactivation_ms.second);
      if (next <= duration_) {
        SimEvent re;
        re.type = SimEvent::Type::Activate;
        re.t = next;
        re.chain = ev.chain;
        push(re);
      }
      break;
    }
    case SimEvent::Type::RequestLater:
      miners_.at(ev.node).request_event(ev.event, ev.t, out);
      drain(ev.node, out, ev.t);
      break;
    case SimEvent::Type::UplinkArrive:
      ++counters_[kGatewayId].receives;
      trace_msg(TraceRecord::Kind::Arrive, ev.t, kGatewayId, ev.msg);
      gateway_.on_uplink(ev.msg, ev.t, out);
      drain(kGatewayId, out, ev.t);
      break;
    case SimEvent::Type::DownlinkArrive: {
      ++counters_[ev.node].receives;
      trace_msg(TraceRecord::Kind::Arrive, ev.t, ev.node, ev.msg);
      miners_.at(ev.node).on_broadcast(ev.msg, ev.t, out);
      drain(ev.node, out, ev.t);
      if (ev.msg.kind == MsgKind::BlockCommit) {
        const auto& c = std::get<CommitPayload>(ev.msg.payload);
        if (c.committed) fire_triggers(ev.node, c.block, ev.t);
      }
      break;
    }
    case SimEvent::Type::UnicastArrive:
      ++counters_[ev.node].receives;
      trace_msg(TraceRecord::Kind::Arrive, ev.t, ev.node, ev.msg);
      miners_.at(ev.node).on_unicast(ev.msg, ev.t, out);
      drain(ev.node, out, ev.t);
      break;
    case SimEvent::Type::Timer:
      if (ev.node == kGatewayId) {
        gateway_.on_timer(ev.timer_kind, ev.timer_arg, ev.t, out);
      } else {
        miners_.at(ev.node).on_timer(ev.timer_kind, ev.timer_arg, ev.t, out);
      }
      drain(ev.node, out, ev.t);
      break;
    case SimEvent::Type::Tamper: {
      bool done = miners_.at(ev.node).tamper_stored_block(rng_faults_.next(), rng_faults_.next());
      trace_note(ev.t, ev.node, done ? "tamper-applied" : "tamper-skipped-empty");
      break;
    }
  }
}

void Engine::sample(SimTime t) {
  MetricsSample s;
  s.t = t;
  counters_[kGatewayId].modmults = gateway_.stats().modmults;
  counters_[kGatewayId].bytes_stored = gateway_.ledger().block_count() * kBlockBytes;
  for (auto& [id, m] : miners_) {
    counters_[id].modmults = m.stats().modmults;
    counters_[id].bytes_stored = m.partial().stored_bytes();
  }
  s.nodes = counters_;
  result_.samples.push_back(std::move(s));
}

SimResult Engine::run() {
  setup();
  counters_[kGatewayId];  // gateway row exists even if idle
  for (const DeviceSpec& d : sc_.devices) counters_[d.id];

  SimTime next_sample = sc_.sample_interval_ms;
  while (!queue_.empty()) {
    SimEvent ev = queue_.top();
    queue_.pop();
    if (ev.t > duration_) continue;  // drop, but keep draining earlier events
    while (next_sample <= ev.t && next_sample <= duration_) {
      sample(next_sample);
      next_sample += sc_.sample_interval_ms;
    }
    handle(ev);
  }
  sample(duration_);

  result_.energy = sc_.energy;
  result_.ledger = gateway_.ledger();
  result_.gateway_stats = gateway_.stats();
  for (auto& [id, m] : miners_) {
    result_.miner_stats[id] = m.stats();
    result_.suppressed_reactivations += m.stats().suppressed_requests;
  }
  result_.final_counters = counters_;
  return result_;
}

}  // namespace

SimResult run_simulation(const Scenario& scenario, SimTime duration_ms) {
  scenario.validate();
  Engine engine(scenario, duration_ms);
  return engine.run();
}

double SimResult::mer_of(NodeId node) const {
  auto it = final_counters.find(node);
  if (it == final_counters.end() || it->second.events_committed == 0) return 0.0;
  return static_cast<double>(it->second.sends + it->second.receives) /
         static_cast<double>(it->second.events_committed);
}

double SimResult::avg_miner_mer() const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& [id, c] : final_counters) {
    if (id == kGatewayId || c.events_committed == 0) continue;
    sum += mer_of(id);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double SimResult::energy_of(NodeId node) const {
  auto it = final_counters.find(node);
  if (it == final_counters.end()) return 0.0;
  return energy.alpha * static_cast<double>(it->second.sends) +
         energy.beta * static_cast<double>(it->second.receives) +
         energy.gamma * static_cast<double>(it->second.modmults);
}

std::string SimResult::csv() const {
  std::ostringstream out;
  out << "time,node,sends,receives,modmults,bytes_stored,events_committed\n";
  for (const MetricsSample& s : samples)
    for (const auto& [id, c] : s.nodes)
      out << s.t << ',' << id << ',' << c.sends << ',' << c.receives << ',' << c.modmults << ','
          << c.bytes_stored << ',' << c.events_committed << '\n';
  return out.str();
}

namespace {
std::string actor_name(NodeId id) { return id == kGatewayId ? "gw" : "n" + std::to_string(id); }
}  // namespace

std::string SimResult::tracelog() const {
  std::ostringstream out;
  for (const TraceRecord& r : trace) {
    out << r.t << ' ' << actor_name(r.actor) << ' ';
    switch (r.kind) {
      case TraceRecord::Kind::Send: out << msg_kind_name(r.mk) << ' ' << r.digest; break;
      case TraceRecord::Kind::Arrive: out << msg_kind_name(r.mk) << "/rx " << r.digest; break;
      case TraceRecord::Kind::Deliver:
        out << msg_kind_name(r.mk) << "/dlv e=" << static_cast<int>(r.event) << ":"
            << r.seq;
        break;
      case TraceRecord::Kind::Note: {
        std::string n = r.note;
        std::replace(n.begin(), n.end(), ' ', '_');
        out << "note " << n;
        break;
      }
    }
    out << '\n';
  }
  return out.str();
}

void SimResult::write_outputs(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/metrics.csv", std::ios::trunc);
    if (!f) raise(Errc::IoError, "cannot write " + dir + "/metrics.csv");
    f << csv();
  }
  ledger.save(dir + "/ledger.bin");
  {
    std::ofstream f(dir + "/trace.log", std::ios::trunc);
    if (!f) raise(Errc::IoError, "cannot write " + dir + "/trace.log");
    f << tracelog();
  }
}

}  // namespace tiot
