#include "tiot/provenance.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace tiot {

const char* prov_kind_name(ProvKind k) {
  switch (k) {
    case ProvKind::Entity: return "entity";
    case ProvKind::Activity: return "activity";
    case ProvKind::Agent: return "agent";
  }
  return "?";
}

const char* prov_relation_name(ProvRelation r) {
  switch (r) {
    case ProvRelation::WasDerivedFrom: return "wasDerivedFrom";
    case ProvRelation::WasGeneratedBy: return "wasGeneratedBy";
    case ProvRelation::Used: return "used";
    case ProvRelation::WasAssociatedWith: return "wasAssociatedWith";
    case ProvRelation::WasAttributedTo: return "wasAttributedTo";
  }
  return "?";
}

void ProvenanceDag::add_node(const ProvNode& node) {
  auto [it, inserted] = nodes_.emplace(node.id, node);
  if (!inserted && !(it->second == node))
    raise(Errc::BadConfig, "conflicting definitions for node " + node.id);
}

void ProvenanceDag::add_edge(const ProvEdge& edge) {
  static const std::map<ProvRelation, std::pair<ProvKind, ProvKind>> typing = {
      {ProvRelation::WasDerivedFrom, {ProvKind::Entity, ProvKind::Entity}},
      {ProvRelation::WasGeneratedBy, {ProvKind::Entity, ProvKind::Activity}},
      {ProvRelation::Used, {ProvKind::Activity, ProvKind::Entity}},
      {ProvRelation::WasAssociatedWith, {ProvKind::Activity, ProvKind::Agent}},
      {ProvRelation::WasAttributedTo, {ProvKind::Entity, ProvKind::Agent}},
  };
  const auto [from_kind, to_kind] = typing.at(edge.relation);
  if (node(edge.from).kind != from_kind || node(edge.to).kind != to_kind)
    raise(Errc::BadConfig, std::string(prov_relation_name(edge.relation)) +
                               " endpoints must be " + prov_kind_name(from_kind) + " -> " +
                               prov_kind_name(to_kind));
  edges_.insert(edge);
}

const ProvNode& ProvenanceDag::node(const std::string& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) raise(Errc::NotFound, "no DAG node " + id);
  return it->second;
}

std::vector<ProvNode> ProvenanceDag::nodes() const {
  std::vector<ProvNode> out;
  for (const auto& [_, n] : nodes_) out.push_back(n);
  return out;
}

std::vector<ProvEdge> ProvenanceDag::edges() const { return {edges_.begin(), edges_.end()}; }

std::vector<std::string> ProvenanceDag::root_entities() const {
  std::vector<std::string> out;
  for (const auto& [id, n] : nodes_) {
    if (n.kind != ProvKind::Entity) continue;
    bool derived = std::any_of(edges_.begin(), edges_.end(), [&](const ProvEdge& e) {
      return e.relation == ProvRelation::WasDerivedFrom && e.from == id;
    });
    if (!derived) out.push_back(id);
  }
  return out;
}

void ProvenanceDag::validate() const {
  // Kahn over all edges; PROV relations all point backward in time, so a
  // cycle means the construction is broken.
  std::map<std::string, std::size_t> out_degree;
  for (const auto& [id, _] : nodes_) out_degree[id] = 0;
  for (const ProvEdge& e : edges_) ++out_degree[e.from];

  std::deque<std::string> ready;
  for (const auto& [id, deg] : out_degree)
    if (deg == 0) ready.push_back(id);

  std::size_t removed = 0;
  std::map<std::string, std::vector<std::string>> incoming;
  for (const ProvEdge& e : edges_) incoming[e.to].push_back(e.from);
  while (!ready.empty()) {
    std::string id = ready.front();
    ready.pop_front();
    ++removed;
    for (const std::string& from : incoming[id])
      if (--out_degree[from] == 0) ready.push_back(from);
  }
  if (removed != nodes_.size()) raise(Errc::BadConfig, "provenance graph has a cycle");
}

ProvenanceContext ProvenanceContext::from_scenario(const Scenario& s) {
  ProvenanceContext ctx;
  ctx.deps = s.dependency_map();
  ctx.event_owners = s.event_owners();
  for (const DeviceSpec& d : s.devices) {
    ctx.node_names[d.id] = d.label.empty() ? "node" + std::to_string(d.id) : d.label;
    for (EventHandler e : d.events)
      ctx.event_names[e] = ctx.node_names[d.id] + "_e" + std::to_string(e);
  }
  return ctx;
}

std::string ProvenanceContext::event_label(EventHandler e) const {
  auto it = event_names.find(e);
  return it != event_names.end() ? it->second : "event" + std::to_string(e);
}

std::string ProvenanceContext::agent_label(NodeId n) const {
  auto it = node_names.find(n);
  return it != node_names.end() ? it->second : "node" + std::to_string(n);
}

namespace {

// A committed occurrence of an event: where it sits in the ledger and its
// global position for ordering and tie-breaks.
struct Occurrence {
  EventHandler event = 0;
  BlockId block;
  std::size_t tx_index = 0;
  std::uint64_t order = 0;  // (append_seq << 8) | tx_index

  bool operator<(const Occurrence& o) const { return order < o.order; }
};

// Most recent occurrence of `event` strictly below `below` (or anywhere when
// below is the max). Scans each candidate chain from its latest block
// downward, never revisiting a block.
std::optional<Occurrence> find_occurrence(const Ledger& ledger, EventHandler event,
                                          std::uint64_t below) {
  std::optional<Occurrence> best;
  for (std::uint8_t chain : ledger.chains_with_event(event)) {
    const std::vector<TransactionBlock>& blocks = ledger.chain(chain);
    for (std::size_t p = blocks.size(); p-- > 0;) {
      const TransactionBlock& b = blocks[p];
      const std::uint64_t base = ledger.append_seq(b.id) << 8;
      if (base >= below) continue;  // every slot of this block is at/after the bound
      bool found = false;
      for (std::size_t i = b.transactions.size(); i-- > 0;) {
        const std::uint64_t order = base | static_cast<std::uint64_t>(i);
        if (order >= below) continue;
        if (b.transactions[i] == event) {
          Occurrence o;
          o.event = event;
          o.block = b.id;
          o.tx_index = i;
          o.order = order;
          if (!best || best->order < o.order) best = o;
          found = true;
          break;
        }
      }
      if (found) break;  // latest in this chain; earlier positions are older
    }
  }
  return best;
}

std::string occ_id(const char* prefix, const ProvenanceContext& ctx, const Occurrence& o) {
  return std::string(prefix) + "_" + ctx.event_label(o.event) + "_" +
         std::to_string(o.block.chain) + "." + std::to_string(o.block.position) + "." +
         std::to_string(o.tx_index);
}

}  // namespace

ProvenanceDag build_dag(const Ledger& ledger, const std::vector<EventHandler>& end_events,
                        const ProvenanceContext& ctx, std::optional<BlockId> before) {
  if (end_events.empty()) raise(Errc::BadConfig, "no end events given");
  bool any_block = false;
  for (std::uint8_t c : ledger.chain_indexes()) any_block |= ledger.chain(c).size() > 1;
  if (!any_block) raise(Errc::EmptyLedger, "the ledger holds no committed blocks");

  std::uint64_t limit = ~std::uint64_t{0};
  if (before) limit = (ledger.append_seq(*before) + 1) << 8;  // include that whole block

  ProvenanceDag dag;
  std::deque<Occurrence> work;
  std::set<std::uint64_t> visited;

  for (EventHandler e : end_events) {
    std::optional<Occurrence> o = find_occurrence(ledger, e, limit);
    if (!o)
      raise(Errc::EventNotFound,
            "event " + std::to_string(e) + " has no committed occurrence in range");
    if (visited.insert(o->order).second) work.push_back(*o);
  }

  while (!work.empty()) {
    Occurrence o = work.front();
    work.pop_front();

    const std::string entity = occ_id("entity", ctx, o);
    const std::string activity = occ_id("activity", ctx, o);
    auto owner_it = ctx.event_owners.find(o.event);
    const NodeId owner = owner_it == ctx.event_owners.end() ? 0 : owner_it->second;
    const std::string agent = "agent_" + ctx.agent_label(owner);

    dag.add_node({entity, ProvKind::Entity, ctx.event_label(o.event)});
    dag.add_node({activity, ProvKind::Activity, ctx.event_label(o.event) + "_handler"});
    dag.add_node({agent, ProvKind::Agent, ctx.agent_label(owner)});
    dag.add_edge({entity, activity, ProvRelation::WasGeneratedBy});
    dag.add_edge({activity, agent, ProvRelation::WasAssociatedWith});
    dag.add_edge({entity, agent, ProvRelation::WasAttributedTo});

    // Nearest preceding occurrence of any configured trigger.
    std::optional<Occurrence> trigger;
    for (EventHandler t : ctx.deps.triggers_of(o.event)) {
      std::optional<Occurrence> cand = find_occurrence(ledger, t, o.order);
      if (cand && (!trigger || trigger->order < cand->order)) trigger = cand;
    }
    if (trigger) {
      const std::string tentity = occ_id("entity", ctx, *trigger);
      dag.add_node({tentity, ProvKind::Entity, ctx.event_label(trigger->event)});
      dag.add_edge({entity, tentity, ProvRelation::WasDerivedFrom});
      dag.add_edge({activity, tentity, ProvRelation::Used});
      if (visited.insert(trigger->order).second) work.push_back(*trigger);
    }
    // No trigger found: a start event, or its cause predates the ledger;
    // either way this path terminates here.
  }

  dag.validate();
  return dag;
}

std::string export_dot(const ProvenanceDag& dag) {
  std::ostringstream out;
  out << "digraph provenance {\n";
  out << "  rankdir=RL;\n";
  for (const ProvNode& n : dag.nodes()) {
    const char* shape = n.kind == ProvKind::Entity     ? "ellipse"
                        : n.kind == ProvKind::Activity ? "box"
                                                       : "house";
    out << "  \"" << n.id << "\" [label=\"" << n.label << "\", shape=" << shape << "];\n";
  }
  for (const ProvEdge& e : dag.edges())
    out << "  \"" << e.from << "\" -> \"" << e.to << "\" [label=\""
        << prov_relation_name(e.relation) << "\"];\n";
  out << "}\n";
  return out.str();
}

std::string export_text(const ProvenanceDag& dag) {
  std::ostringstream out;
  for (const ProvNode& n : dag.nodes())
    out << "node " << n.id << ' ' << prov_kind_name(n.kind) << ' ' << n.label << '\n';
  for (const ProvEdge& e : dag.edges())
    out << "edge " << e.from << ' ' << e.to << ' ' << prov_relation_name(e.relation) << '\n';
  return out.str();
}

ProvenanceDag load_text(const std::string& text) {
  ProvenanceDag dag;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<ProvEdge> edges;  // nodes may appear after edges referencing them
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "node") {
      std::string id, kind, label;
      ls >> id >> kind;
      std::getline(ls, label);
      if (!label.empty() && label.front() == ' ') label.erase(0, 1);
      ProvKind k;
      if (kind == "entity")
        k = ProvKind::Entity;
      else if (kind == "activity")
        k = ProvKind::Activity;
      else if (kind == "agent")
        k = ProvKind::Agent;
      else
        raise(Errc::BadConfig, "line " + std::to_string(lineno) + ": unknown kind " + kind);
      dag.add_node({id, k, label});
    } else if (tag == "edge") {
      std::string from, to, rel;
      ls >> from >> to >> rel;
      ProvRelation r;
      if (rel == "wasDerivedFrom")
        r = ProvRelation::WasDerivedFrom;
      else if (rel == "wasGeneratedBy")
        r = ProvRelation::WasGeneratedBy;
      else if (rel == "used")
        r = ProvRelation::Used;
      else if (rel == "wasAssociatedWith")
        r = ProvRelation::WasAssociatedWith;
      else if (rel == "wasAttributedTo")
        r = ProvRelation::WasAttributedTo;
      else
        raise(Errc::BadConfig, "line " + std::to_string(lineno) + ": unknown relation " + rel);
      edges.push_back({from, to, r});
    } else {
      raise(Errc::BadConfig, "line " + std::to_string(lineno) + ": expected node or edge");
    }
  }
  for (const ProvEdge& e : edges) dag.add_edge(e);
  return dag;
}

}  // namespace tiot
