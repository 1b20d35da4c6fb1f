#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tiot/message.hpp"
#include "tiot/types.hpp"

namespace tiot {

enum class TimerKind : std::uint8_t {
  OpenRound,    // gateway: gather same-tick proposals, then open
  VoteTimeout,  // gateway: close the round, silence counts as reject
  CoinClear,    // gateway: release coins of a rejected round
  Retry,        // miner: re-evaluate pending after a rejected/lost round
};

struct TimerRequest {
  SimTime fire_at = 0;
  TimerKind kind = TimerKind::OpenRound;
  std::uint64_t arg = 0;
};

// Everything a state machine wants the simulator to do on its behalf.
// Handlers append; the engine drains, routes, traces and meters.
struct Outbox {
  struct Unicast {
    NodeId to = 0;
    Message msg;
  };
  struct DeliveredEvent {  // a request passed the causal-deliverability gate
    EventHandler event = 0;
    NodeId sender = 0;
    std::uint32_t seq = 0;  // sender's send counter for this request
  };

  std::vector<Message> to_gateway;  // node uplink
  std::vector<Message> broadcasts;  // gateway downlink to every node
  std::vector<Unicast> unicasts;    // gateway reply to one node
  std::vector<TimerRequest> timers;
  std::vector<DeliveredEvent> delivered;
  std::vector<std::string> notes;  // protocol events and errors, traced not thrown

  void note(std::string s) { notes.push_back(std::move(s)); }
};

}  // namespace tiot
