#include "tiot/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tiot/rng.hpp"

namespace tiot {

EventHandler ChainSpec::start_event() const {
  for (const ChainEventSpec& e : events)
    if (e.parent < 0) return e.event;
  raise(Errc::BadConfig, "chain " + std::to_string(id) + " has no start event");
}

std::vector<EventHandler> ChainSpec::end_events() const {
  std::set<std::size_t> parents;
  for (const ChainEventSpec& e : events)
    if (e.parent >= 0) parents.insert(static_cast<std::size_t>(e.parent));
  std::vector<EventHandler> out;
  for (std::size_t i = 0; i < events.size(); ++i)
    if (!parents.count(i)) out.push_back(events[i].event);
  return out;
}

const DeviceSpec* Scenario::find_device(NodeId id) const {
  for (const DeviceSpec& d : devices)
    if (d.id == id) return &d;
  return nullptr;
}

std::map<EventHandler, NodeId> Scenario::event_owners() const {
  std::map<EventHandler, NodeId> out;
  for (const DeviceSpec& d : devices)
    for (EventHandler e : d.events) out[e] = d.id;
  return out;
}

DependencyMap Scenario::dependency_map() const {
  DependencyMap deps;
  for (const ChainSpec& c : chains)
    for (const ChainEventSpec& e : c.events)
      if (e.parent >= 0) deps.add_trigger(e.event, c.events[e.parent].event);
  return deps;
}

void Scenario::validate() const {
  std::map<EventHandler, NodeId> owners = event_owners();
  for (const DeviceSpec& d : devices) {
    if (d.id == kGatewayId) raise(Errc::BadConfig, "node id 0 is the gateway");
    for (EventHandler e : d.events)
      if (e == 0) raise(Errc::BadConfig, "event 0x00 is reserved");
  }
  for (const ChainSpec& c : chains) {
    if (c.events.empty()) raise(Errc::BadConfig, "chain " + std::to_string(c.id) + " is empty");
    int starts = 0;
    for (std::size_t i = 0; i < c.events.size(); ++i) {
      const ChainEventSpec& e = c.events[i];
      if (e.parent < 0)
        ++starts;
      else if (static_cast<std::size_t>(e.parent) >= i)
        raise(Errc::BadConfig, "chain " + std::to_string(c.id) +
                                   " has a forward parent reference");  // also rules out cycles
      auto it = owners.find(e.event);
      if (it == owners.end() || it->second != e.device)
        raise(Errc::BadConfig, "chain " + std::to_string(c.id) + " event " +
                                   std::to_string(e.event) + " is not owned by device " +
                                   std::to_string(e.device));
    }
    if (starts != 1)
      raise(Errc::BadConfig, "chain " + std::to_string(c.id) + " needs exactly one start event");
  }
}

Scenario generate_scenario(const GenBounds& bounds, std::uint64_t seed) {
  if (bounds.min_len < 1 || bounds.max_len < bounds.min_len)
    raise(Errc::BadConfig, "bad chain length bounds");
  if (bounds.devices < bounds.min_len)
    raise(Errc::Unsatisfiable, "a chain of " + std::to_string(bounds.min_len) +
                                   " needs that many distinct devices, only " +
                                   std::to_string(bounds.devices) + " exist");
  if (bounds.chains > 200) raise(Errc::BadConfig, "too many chains for 8-bit chain ids");

  Scenario s;
  s.seed = seed;
  Rng rng(seed);

  static const char* protocols[] = {"p802154", "ble", "lora"};
  for (std::uint32_t i = 1; i <= bounds.devices; ++i) {
    DeviceSpec d;
    d.id = i;
    d.protocol = protocols[i % 3];
    d.label = "node" + std::to_string(i);
    d.events = {static_cast<EventHandler>(i)};  // one unique event per device
    s.devices.push_back(d);
  }
  if (bounds.devices > 255) raise(Errc::BadConfig, "event handlers are 8-bit");

  std::vector<std::uint32_t> membership(bounds.devices + 1, 0);
  for (std::uint32_t c = 0; c < bounds.chains; ++c) {
    const std::uint32_t want =
        static_cast<std::uint32_t>(rng.uniform(bounds.min_len, bounds.max_len));
    ChainSpec chain;
    chain.id = static_cast<std::uint8_t>(c);
    std::set<NodeId> used;
    for (std::uint32_t step = 0; step < want; ++step) {
      std::vector<NodeId> eligible;
      for (std::uint32_t d = 1; d <= bounds.devices; ++d)
        if (!used.count(d) && membership[d] < bounds.max_chains_per_device) eligible.push_back(d);
      if (eligible.empty()) {
        if (chain.events.size() >= bounds.min_len) break;  // legal short chain
        raise(Errc::Unsatisfiable, "ran out of eligible devices at chain " + std::to_string(c) +
                                       " length " + std::to_string(chain.events.size()));
      }
      const NodeId dev = eligible[rng.uniform(0, eligible.size() - 1)];
      used.insert(dev);
      ++membership[dev];
      ChainEventSpec ev;
      ev.device = dev;
      ev.event = static_cast<EventHandler>(dev);
      ev.parent = step == 0 ? -1 : static_cast<int>(step - 1);
      chain.events.push_back(ev);
    }
    s.chains.push_back(std::move(chain));
  }
  s.validate();
  return s;
}

Scenario smoke_scenario(std::uint64_t seed, std::uint32_t background_chains) {
  // Background chains over devices 1..25; the five smoke devices live on
  // their own ids so the two populations never share a chain.
  GenBounds bg;
  bg.devices = 25;
  bg.chains = background_chains;
  Scenario s = generate_scenario(bg, seed);

  const NodeId detector = 26, monitor = 27, window = 28, alarm = 29, sprinkler = 30;
  auto add = [&](NodeId id, const char* label, std::vector<EventHandler> events) {
    DeviceSpec d;
    d.id = id;
    d.protocol = "ble";
    d.label = label;
    d.events = std::move(events);
    s.devices.push_back(d);
  };
  add(detector, "smoke_detector", {kSmokeDetectEvent});
  add(monitor, "smoke_monitor", {});
  add(window, "window_sensor", {kWindowOpenEvent});
  add(alarm, "fire_alarm", {kAlarmOnEvent});
  add(sprinkler, "water_sprinkler", {kSprinklerOnEvent});

  // The monitor observes the detector and actuates the other three, so the
  // chain fans out from the smoke-detect event; the monitor itself executes
  // no event and joins as an extra member.
  ChainSpec chain;
  chain.id = static_cast<std::uint8_t>(s.chains.size());
  chain.events.push_back({kSmokeDetectEvent, detector, -1});
  chain.events.push_back({kWindowOpenEvent, window, 0});
  chain.events.push_back({kAlarmOnEvent, alarm, 0});
  chain.events.push_back({kSprinklerOnEvent, sprinkler, 0});
  chain.extra_members.push_back(monitor);
  s.chains.push_back(chain);

  s.validate();
  return s;
}

void inject_fault(Scenario& scenario, const FaultSpec& fault) {
  if (!scenario.find_device(fault.node))
    raise(Errc::BadConfig, "fault target " + std::to_string(fault.node) + " does not exist");

  if (!scenario.allow_majority_faults) {
    std::set<NodeId> faulty{fault.node};
    for (const FaultSpec& f : scenario.faults) faulty.insert(f.node);

    // Eligible miners per event = devices of every chain containing it.
    std::map<EventHandler, std::set<NodeId>> eligible;
    for (const ChainSpec& c : scenario.chains) {
      std::set<NodeId> members(c.extra_members.begin(), c.extra_members.end());
      for (const ChainEventSpec& e : c.events) members.insert(e.device);
      for (const ChainEventSpec& e : c.events)
        eligible[e.event].insert(members.begin(), members.end());
    }
    for (const auto& [event, miners] : eligible) {
      std::size_t bad = 0;
      for (NodeId m : miners) bad += faulty.count(m);
      if (2 * bad >= miners.size())
        raise(Errc::TooManyFaults, "event " + std::to_string(event) + " would have " +
                                       std::to_string(bad) + "/" + std::to_string(miners.size()) +
                                       " faulty miners");
    }
  }
  scenario.faults.push_back(fault);
}

namespace {

using nlohmann::json;

json delays_to_json(const std::map<std::string, DelaySpec>& delays) {
  json out = json::object();
  for (const auto& [tag, d] : delays) out[tag] = {{"base_ms", d.base_ms}, {"jitter_ms", d.jitter_ms}};
  return out;
}

const char* fault_kind_name(FaultSpec::Kind k) {
  switch (k) {
    case FaultSpec::Kind::SilentNode: return "silent_node";
    case FaultSpec::Kind::VoteFlipper: return "vote_flipper";
    case FaultSpec::Kind::BlockTamperer: return "block_tamperer";
  }
  return "?";
}

FaultSpec::Kind fault_kind_from(const std::string& s) {
  if (s == "silent_node") return FaultSpec::Kind::SilentNode;
  if (s == "vote_flipper") return FaultSpec::Kind::VoteFlipper;
  if (s == "block_tamperer") return FaultSpec::Kind::BlockTamperer;
  raise(Errc::BadConfig, "unknown fault kind " + s);
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["seed"] = s.seed;
  j["devices"] = json::array();
  for (const DeviceSpec& d : s.devices)
    j["devices"].push_back(
        {{"id", d.id}, {"protocol", d.protocol}, {"label", d.label}, {"events", d.events}});
  j["chains"] = json::array();
  for (const ChainSpec& c : s.chains) {
    json events = json::array();
    for (const ChainEventSpec& e : c.events)
      events.push_back({{"event", e.event}, {"device", e.device}, {"parent", e.parent}});
    j["chains"].push_back(
        {{"id", c.id}, {"events", events}, {"extra_members", c.extra_members}});
  }
  j["reactivation_ms"] = {s.reactivation_ms.first, s.reactivation_ms.second};
  j["first_activation_ms"] = {s.first_activation_ms.first, s.first_activation_ms.second};
  j["prime_ordinals"] = {s.prime_ordinals.first, s.prime_ordinals.second};
  j["delays"] = delays_to_json(s.delays);
  j["faults"] = json::array();
  for (const FaultSpec& f : s.faults)
    j["faults"].push_back({{"kind", fault_kind_name(f.kind)}, {"node", f.node}, {"at_ms", f.at_ms}});
  j["energy"] = {{"alpha", s.energy.alpha}, {"beta", s.energy.beta}, {"gamma", s.energy.gamma}};
  j["capacity_blocks"] = s.capacity_blocks;
  j["cut_limit"] = s.cut_limit;
  j["quorum_permille"] = s.quorum_permille;
  j["vote_timeout_ms"] = s.vote_timeout_ms;
  j["coin_clear_ms"] = s.coin_clear_ms;
  j["retry_delay_ms"] = s.retry_delay_ms;
  j["actuation_ms"] = s.actuation_ms;
  j["sample_interval_ms"] = s.sample_interval_ms;
  j["allow_majority_faults"] = s.allow_majority_faults;
  return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(Errc::BadConfig, std::string("config is not valid JSON: ") + e.what());
  }
  try {
    Scenario s;
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const json& d : j.at("devices")) {
      DeviceSpec dev;
      dev.id = d.at("id").get<NodeId>();
      dev.protocol = d.at("protocol").get<std::string>();
      dev.label = d.value("label", "");
      for (const json& e : d.at("events")) dev.events.push_back(e.get<EventHandler>());
      s.devices.push_back(dev);
    }
    for (const json& c : j.at("chains")) {
      ChainSpec chain;
      chain.id = c.at("id").get<std::uint8_t>();
      for (const json& e : c.at("events"))
        chain.events.push_back({e.at("event").get<EventHandler>(), e.at("device").get<NodeId>(),
                                e.at("parent").get<int>()});
      if (c.contains("extra_members"))
        for (const json& m : c["extra_members"]) chain.extra_members.push_back(m.get<NodeId>());
      s.chains.push_back(chain);
    }
    auto pair_of = [](const json& a) {
      return std::pair<SimTime, SimTime>{a.at(0).get<SimTime>(), a.at(1).get<SimTime>()};
    };
    if (j.contains("reactivation_ms")) s.reactivation_ms = pair_of(j["reactivation_ms"]);
    if (j.contains("first_activation_ms")) s.first_activation_ms = pair_of(j["first_activation_ms"]);
    if (j.contains("prime_ordinals"))
      s.prime_ordinals = {j["prime_ordinals"].at(0).get<std::uint32_t>(),
                          j["prime_ordinals"].at(1).get<std::uint32_t>()};
    if (j.contains("delays")) {
      s.delays.clear();
      for (auto& [tag, d] : j["delays"].items())
        s.delays[tag] = DelaySpec{d.at("base_ms").get<SimTime>(), d.at("jitter_ms").get<SimTime>()};
    }
    if (j.contains("faults"))
      for (const json& f : j["faults"])
        s.faults.push_back({fault_kind_from(f.at("kind").get<std::string>()),
                            f.at("node").get<NodeId>(), f.value("at_ms", SimTime{0})});
    if (j.contains("energy"))
      s.energy = {j["energy"].value("alpha", 1.0), j["energy"].value("beta", 1.0),
                  j["energy"].value("gamma", 0.01)};
    s.capacity_blocks = j.value("capacity_blocks", s.capacity_blocks);
    s.cut_limit = j.value("cut_limit", s.cut_limit);
    s.quorum_permille = j.value("quorum_permille", s.quorum_permille);
    s.vote_timeout_ms = j.value("vote_timeout_ms", s.vote_timeout_ms);
    s.coin_clear_ms = j.value("coin_clear_ms", s.coin_clear_ms);
    s.retry_delay_ms = j.value("retry_delay_ms", s.retry_delay_ms);
    s.actuation_ms = j.value("actuation_ms", s.actuation_ms);
    s.sample_interval_ms = j.value("sample_interval_ms", s.sample_interval_ms);
    s.allow_majority_faults = j.value("allow_majority_faults", s.allow_majority_faults);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    raise(Errc::BadConfig, std::string("config field error: ") + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoError, "cannot write " + path);
  out << scenario_to_json(s);
}

}  // namespace tiot
