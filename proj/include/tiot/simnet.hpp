#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tiot/gateway.hpp"
#include "tiot/ledger.hpp"
#include "tiot/message.hpp"
#include "tiot/miner.hpp"
#include "tiot/scenario.hpp"

namespace tiot {

struct TraceRecord {
  enum class Kind { Send, Arrive, Deliver, Note };
  SimTime t = 0;
  Kind kind = Kind::Note;
  NodeId actor = 0;  // sender for Send, receiver for Arrive/Deliver
  MsgKind mk = MsgKind::EventRequest;
  NodeId origin = 0;       // original sender of the message
  EventHandler event = 0;  // event requests only
  std::uint32_t seq = 0;   // sender's send counter, event requests only
  std::string digest;
  std::string note;
};

struct NodeCounters {
  std::uint64_t sends = 0;
  std::uint64_t receives = 0;
  std::uint64_t modmults = 0;
  std::uint64_t bytes_stored = 0;  // gauge, not a counter
  std::uint64_t events_committed = 0;
};

struct MetricsSample {
  SimTime t = 0;
  std::map<NodeId, NodeCounters> nodes;
};

struct SimResult {
  Ledger ledger;
  std::vector<TraceRecord> trace;
  std::vector<MetricsSample> samples;  // one per sampling tick plus the final state
  std::map<NodeId, NodeCounters> final_counters;
  std::map<NodeId, MinerStats> miner_stats;
  GatewayStats gateway_stats;
  EnergyCoeffs energy;
  std::uint64_t committed_events = 0;
  std::uint64_t suppressed_reactivations = 0;

  // Message-to-event ratio of one miner: its sends plus receives over the
  // committed events of its chains. Zero when it saw no committed event.
  double mer_of(NodeId node) const;
  double avg_miner_mer() const;
  double energy_of(NodeId node) const;  // alpha*sends + beta*receives + gamma*modmults

  std::string csv() const;    // time,node,sends,receives,modmults,bytes_stored,events_committed
  std::string tracelog() const;  // one line per record: time actor kind digest
  void write_outputs(const std::string& dir) const;  // metrics.csv, ledger.bin, trace.log
};

// Deterministic discrete-event run of the whole protocol stack. Identical
// (scenario, duration) pairs produce identical results, byte for byte.
SimResult run_simulation(const Scenario& scenario, SimTime duration_ms);

}  // namespace tiot
