#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tiot/ledger.hpp"
#include "tiot/types.hpp"

namespace tiot {

struct DeviceSpec {
  NodeId id = 0;
  std::string protocol = "p802154";  // delay-model tag only
  std::string label;
  std::vector<EventHandler> events;  // events this device owns (its coins)
};

// One node of an action-chain's trigger tree. parent == -1 marks the start
// event; every other node is triggered by its parent's event.
struct ChainEventSpec {
  EventHandler event = 0;
  NodeId device = 0;
  int parent = -1;
};

struct ChainSpec {
  std::uint8_t id = 0;
  std::vector<ChainEventSpec> events;
  std::vector<NodeId> extra_members;  // miners of the chain with no own event

  EventHandler start_event() const;
  std::vector<EventHandler> end_events() const;  // leaves of the trigger tree
};

struct DelaySpec {
  SimTime base_ms = 5;
  SimTime jitter_ms = 10;  // uniform 0..jitter added to base
};

struct FaultSpec {
  enum class Kind { SilentNode, VoteFlipper, BlockTamperer };
  Kind kind = Kind::SilentNode;
  NodeId node = 0;
  SimTime at_ms = 0;  // tamper time; ignored for the other kinds
};

struct EnergyCoeffs {
  double alpha = 1.0;   // per send
  double beta = 1.0;    // per receive
  double gamma = 0.01;  // per modular multiplication
};

struct Scenario {
  std::uint64_t seed = 1;
  std::vector<DeviceSpec> devices;
  std::vector<ChainSpec> chains;
  std::pair<SimTime, SimTime> reactivation_ms{10000, 20000};
  std::pair<SimTime, SimTime> first_activation_ms{100, 1000};
  std::pair<std::uint32_t, std::uint32_t> prime_ordinals{800, 1200};
  std::map<std::string, DelaySpec> delays{
      {"p802154", {5, 10}}, {"ble", {4, 8}}, {"lora", {8, 15}}};
  std::vector<FaultSpec> faults;
  EnergyCoeffs energy;

  std::size_t capacity_blocks = 20;
  std::size_t cut_limit = 20;
  std::uint32_t quorum_permille = 510;
  SimTime vote_timeout_ms = 500;
  SimTime coin_clear_ms = 5000;
  SimTime retry_delay_ms = 400;
  SimTime actuation_ms = 20;  // trigger-to-request lag at a device
  SimTime sample_interval_ms = 1000;
  bool allow_majority_faults = false;

  const DeviceSpec* find_device(NodeId id) const;
  std::map<EventHandler, NodeId> event_owners() const;
  DependencyMap dependency_map() const;  // union of all chains' trigger edges
  void validate() const;                 // throws BadConfig on structural problems
};

struct GenBounds {
  std::uint32_t devices = 30;
  std::uint32_t chains = 10;
  std::uint32_t min_len = 10;
  std::uint32_t max_len = 20;
  std::uint32_t max_chains_per_device = 5;
};

// Deterministic scenario from bounds and seed: each chain is a path of
// distinct devices (one unique event per device), lengths within bounds,
// per-device membership capped. Throws Unsatisfiable.
Scenario generate_scenario(const GenBounds& bounds, std::uint64_t seed);

// Five labeled devices (detector, monitor, window, alarm, sprinkler) whose
// chain fans out from the smoke-detect event, alongside `background_chains`
// generated chains over separate devices.
Scenario smoke_scenario(std::uint64_t seed, std::uint32_t background_chains = 10);
inline constexpr EventHandler kSmokeDetectEvent = 0x51;
inline constexpr EventHandler kWindowOpenEvent = 0x52;
inline constexpr EventHandler kAlarmOnEvent = 0x53;
inline constexpr EventHandler kSprinklerOnEvent = 0x54;

// Adds a fault, refusing any injection that would put half or more of some
// event's eligible miners at fault (TooManyFaults), unless the scenario
// explicitly allows majority faults.
void inject_fault(Scenario& scenario, const FaultSpec& fault);

// JSON round trip for config files.
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

}  // namespace tiot
