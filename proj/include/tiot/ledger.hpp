#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tiot/codec.hpp"

namespace tiot {

// Trigger relation derived from the configured action-chains: for each
// event, the set of events that can trigger it. Chain-start events have an
// empty set and are vacuously traceable.
class DependencyMap {
 public:
  void add_trigger(EventHandler event, EventHandler trigger);
  const std::set<EventHandler>& triggers_of(EventHandler event) const;
  bool is_chain_start(EventHandler event) const { return triggers_of(event).empty(); }

 private:
  std::map<EventHandler, std::set<EventHandler>> triggers_;
};

// True iff every event in the (order-preserving, single-chain) block
// subsequence is traceable: its trigger set is empty, or at least one
// trigger occurs earlier in the flattened event sequence. O(M*E) for M
// blocks of E events.
bool is_partial_consistent_cut(std::span<const TransactionBlock> blocks,
                               const DependencyMap& deps);

// The gateway's full ledger: one chain-of-blocks per action-chain, each
// rooted at a genesis block, append-only. Blocks also carry a global
// append sequence so provenance can order occurrences across chains.
class Ledger {
 public:
  // Creates the chain's genesis block if absent.
  const TransactionBlock& ensure_chain(std::uint8_t chain);

  // Appends a committed block to its chain. The parent hash must match the
  // current tip and the position must be tip+1.
  // Throws ParentMismatch / PositionGap / PositionOverflow.
  void append_block(const TransactionBlock& block);

  std::optional<TransactionBlock> find_block(BlockId id) const;

  // Strict multi-fetch; throws NotFound naming the first missing id.
  std::vector<TransactionBlock> fetch_blocks(const std::vector<BlockId>& ids) const;

  bool has_chain(std::uint8_t chain) const { return chains_.count(chain) != 0; }
  const std::vector<TransactionBlock>& chain(std::uint8_t chain) const;
  std::vector<std::uint8_t> chain_indexes() const;
  std::size_t block_count() const { return order_.size(); }

  // Global append order of a block, 0-based. Throws NotFound.
  std::uint64_t append_seq(BlockId id) const;

  // Search accelerator: chains whose blocks mention this handler.
  const std::set<std::uint8_t>& chains_with_event(EventHandler event) const;

  // Full hash-chain audit of the in-memory ledger; returns the failing
  // block and a reason, or nullopt when everything checks out.
  struct AuditFailure {
    BlockId id;
    std::string reason;
  };
  std::optional<AuditFailure> audit() const;

  // Append-only file of 21-byte records (chain tag + 20-byte block) in
  // global append order. load() verifies hashes, tags and linkage as it
  // reads and throws on the first bad record.
  void save(const std::string& path) const;
  static Ledger load(const std::string& path);

 private:
  void index_block(const TransactionBlock& block);

  std::map<std::uint8_t, std::vector<TransactionBlock>> chains_;
  std::vector<BlockId> order_;  // global append order, genesis included
  std::map<EventHandler, std::set<std::uint8_t>> event_chains_;
};

// One miner's bounded block store. Policy: cut_limit == 1 is the plain LRU
// baseline over `capacity` blocks; cut_limit > 1 additionally bounds the
// retained events to cut_limit and prefers evictions that keep each chain's
// retained subsequence a partial consistent cut, falling back to LRU when
// no such eviction exists.
class PartialLedger {
 public:
  PartialLedger(std::size_t capacity, std::size_t cut_limit)
      : capacity_(capacity), cut_limit_(cut_limit) {}

  struct EvictionReport {
    std::vector<BlockId> evicted;
    bool used_lru_fallback = false;
  };

  // Stores a validated block (idempotent on re-admission) and evicts per
  // policy. Admission always succeeds.
  EvictionReport admit(const TransactionBlock& block, const DependencyMap& deps,
                       std::uint64_t tick);

  // Marks a block as used (read during validation) at the given tick.
  void touch(BlockId id, std::uint64_t tick);

  bool contains(BlockId id) const;
  std::optional<TransactionBlock> find_block(BlockId id) const;
  // Most recent stored block containing the handler, if any.
  std::optional<TransactionBlock> find_event(EventHandler event) const;

  std::size_t block_count() const { return blocks_.size(); }
  std::size_t event_count() const;
  std::size_t stored_bytes() const { return blocks_.size() * kBlockBytes; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cut_limit() const { return cut_limit_; }
  std::uint64_t lru_fallbacks() const { return lru_fallbacks_; }

  // Retained subsequence of one chain, in position order.
  std::vector<TransactionBlock> chain_view(std::uint8_t chain) const;
  std::vector<std::uint8_t> chain_indexes() const;

  // True iff every chain's retained subsequence is a partial consistent cut.
  bool consistent(const DependencyMap& deps) const;

  // Fault hook: flips one bit of a stored block (hash or transaction bytes,
  // chosen by the draws) without resealing. Returns false when empty.
  bool fault_flip_bit(std::uint64_t block_draw, std::uint64_t bit_draw);

 private:
  struct Entry {
    TransactionBlock block;
    std::uint64_t last_use = 0;
    std::uint64_t admitted = 0;
  };

  bool consistent_without(std::size_t skip_index, const DependencyMap& deps) const;

  std::size_t capacity_;
  std::size_t cut_limit_;
  std::vector<Entry> blocks_;  // admission order
  std::uint64_t admit_seq_ = 0;
  std::uint64_t lru_fallbacks_ = 0;
};

}  // namespace tiot
