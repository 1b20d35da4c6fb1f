#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tiot/ledger.hpp"
#include "tiot/scenario.hpp"

namespace tiot {

enum class ProvKind { Entity, Activity, Agent };
enum class ProvRelation {
  WasDerivedFrom,     // Entity -> Entity
  WasGeneratedBy,     // Entity -> Activity
  Used,               // Activity -> Entity
  WasAssociatedWith,  // Activity -> Agent
  WasAttributedTo,    // Entity -> Agent
};

const char* prov_kind_name(ProvKind k);
const char* prov_relation_name(ProvRelation r);

struct ProvNode {
  std::string id;
  ProvKind kind = ProvKind::Entity;
  std::string label;

  bool operator==(const ProvNode&) const = default;
};

struct ProvEdge {
  std::string from;
  std::string to;
  ProvRelation relation = ProvRelation::WasDerivedFrom;

  auto operator<=>(const ProvEdge&) const = default;
};

// PROV-style DAG over entity/activity/agent nodes. add_edge enforces the
// endpoint-kind table above; validate() additionally checks acyclicity.
class ProvenanceDag {
 public:
  void add_node(const ProvNode& node);
  void add_edge(const ProvEdge& edge);  // throws BadConfig on a typing violation

  bool has_node(const std::string& id) const { return nodes_.count(id) != 0; }
  const ProvNode& node(const std::string& id) const;
  std::vector<ProvNode> nodes() const;       // sorted by id
  std::vector<ProvEdge> edges() const;       // sorted
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  // Entities with no outgoing wasDerivedFrom edge: the root causes.
  std::vector<std::string> root_entities() const;

  void validate() const;  // throws BadConfig if a cycle exists

 private:
  std::map<std::string, ProvNode> nodes_;
  std::set<ProvEdge> edges_;
};

// Naming and trigger context for DAG construction, normally derived from a
// scenario config.
struct ProvenanceContext {
  DependencyMap deps;
  std::map<EventHandler, std::string> event_names;
  std::map<EventHandler, NodeId> event_owners;
  std::map<NodeId, std::string> node_names;

  static ProvenanceContext from_scenario(const Scenario& s);
  std::string event_label(EventHandler e) const;
  std::string agent_label(NodeId n) const;
};

// Backtracking construction: locate each end event's most recent committed
// occurrence (at or before `before`, when given), then walk blocks in
// reverse looking for trigger occurrences until every path reaches a start
// event or the paths merge. Throws EmptyLedger / EventNotFound.
ProvenanceDag build_dag(const Ledger& ledger, const std::vector<EventHandler>& end_events,
                        const ProvenanceContext& ctx,
                        std::optional<BlockId> before = std::nullopt);

// Deterministic exports: dot for rendering, a line-oriented text form that
// loads back losslessly.
std::string export_dot(const ProvenanceDag& dag);
std::string export_text(const ProvenanceDag& dag);
ProvenanceDag load_text(const std::string& text);

}  // namespace tiot
