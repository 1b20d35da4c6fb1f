#include "tiot/ledger.hpp"

#include <algorithm>
#include <fstream>

namespace tiot {

namespace {
std::string id_str(BlockId id) {
  return "<" + std::to_string(id.chain) + "," + std::to_string(id.position) + ">";
}
}  // namespace

void DependencyMap::add_trigger(EventHandler event, EventHandler trigger) {
  triggers_[event].insert(trigger);
}

const std::set<EventHandler>& DependencyMap::triggers_of(EventHandler event) const {
  static const std::set<EventHandler> empty;
  auto it = triggers_.find(event);
  return it == triggers_.end() ? empty : it->second;
}

bool is_partial_consistent_cut(std::span<const TransactionBlock> blocks,
                               const DependencyMap& deps) {
  std::set<EventHandler> seen;
  for (const TransactionBlock& b : blocks) {
    for (EventHandler e : b.transactions) {
      const std::set<EventHandler>& triggers = deps.triggers_of(e);
      if (!triggers.empty()) {
        bool traceable = std::any_of(triggers.begin(), triggers.end(),
                                     [&](EventHandler t) { return seen.count(t) != 0; });
        if (!traceable) return false;
      }
      seen.insert(e);
    }
  }
  return true;
}

const TransactionBlock& Ledger::ensure_chain(std::uint8_t chain) {
  auto it = chains_.find(chain);
  if (it == chains_.end()) {
    it = chains_.emplace(chain, std::vector<TransactionBlock>{genesis_block(chain)}).first;
    order_.push_back(it->second.front().id);
  }
  return it->second.front();
}

void Ledger::append_block(const TransactionBlock& block) {
  ensure_chain(block.id.chain);
  std::vector<TransactionBlock>& chain = chains_[block.id.chain];
  const TransactionBlock& tip = chain.back();

  if (tip.id.position == 255)
    raise(Errc::PositionOverflow, "chain " + std::to_string(block.id.chain) + " is full");
  if (block.id.position != tip.id.position + 1)
    raise(Errc::PositionGap, "appending " + id_str(block.id) + " after " + id_str(tip.id));
  if (block.parent_hash != tip.block_hash)
    raise(Errc::ParentMismatch, "parent hash of " + id_str(block.id) +
                                    " does not match the chain tip");

  TransactionBlock sealed = block;
  sealed.seal();
  chain.push_back(sealed);
  index_block(sealed);
  order_.push_back(sealed.id);
}

void Ledger::index_block(const TransactionBlock& block) {
  for (EventHandler e : block.transactions) event_chains_[e].insert(block.id.chain);
}

std::optional<TransactionBlock> Ledger::find_block(BlockId id) const {
  auto it = chains_.find(id.chain);
  if (it == chains_.end() || id.position >= it->second.size()) return std::nullopt;
  return it->second[id.position];
}

std::vector<TransactionBlock> Ledger::fetch_blocks(const std::vector<BlockId>& ids) const {
  std::vector<TransactionBlock> out;
  for (BlockId id : ids) {
    std::optional<TransactionBlock> b = find_block(id);
    if (!b) raise(Errc::NotFound, "block " + id_str(id) + " is not in the ledger");
    out.push_back(std::move(*b));
  }
  return out;
}

const std::vector<TransactionBlock>& Ledger::chain(std::uint8_t chain) const {
  auto it = chains_.find(chain);
  if (it == chains_.end())
    raise(Errc::NotFound, "chain " + std::to_string(chain) + " does not exist");
  return it->second;
}

std::vector<std::uint8_t> Ledger::chain_indexes() const {
  std::vector<std::uint8_t> out;
  for (const auto& [idx, _] : chains_) out.push_back(idx);
  return out;
}

std::uint64_t Ledger::append_seq(BlockId id) const {
  auto it = std::find(order_.begin(), order_.end(), id);
  if (it == order_.end()) raise(Errc::NotFound, "block " + id_str(id) + " is not in the ledger");
  return static_cast<std::uint64_t>(it - order_.begin());
}

const std::set<std::uint8_t>& Ledger::chains_with_event(EventHandler event) const {
  static const std::set<std::uint8_t> empty;
  auto it = event_chains_.find(event);
  return it == event_chains_.end() ? empty : it->second;
}

std::optional<Ledger::AuditFailure> Ledger::audit() const {
  for (const auto& [idx, chain] : chains_) {
    for (std::size_t pos = 0; pos < chain.size(); ++pos) {
      const TransactionBlock& b = chain[pos];
      TransactionBlock recomputed = b;
      recomputed.seal();
      if (recomputed.block_hash != b.block_hash || recomputed.tx_hash != b.tx_hash)
        return AuditFailure{b.id, "stored hashes do not recompute"};
      if (b.id.chain != idx || b.id.position != pos)
        return AuditFailure{b.id, "block is filed under the wrong slot"};
      const std::uint8_t expected_parent = pos == 0 ? 0x00 : chain[pos - 1].block_hash;
      if (b.parent_hash != expected_parent)
        return AuditFailure{b.id, "parent hash does not match predecessor"};
    }
  }
  return std::nullopt;
}

void Ledger::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::IoError, "cannot write " + path);
  for (BlockId id : order_) {
    const TransactionBlock& b = chains_.at(id.chain)[id.position];
    BlockBytes img = encode_block(b);
    out.put(static_cast<char>(id.chain));
    out.write(reinterpret_cast<const char*>(img.data()), img.size());
  }
}

Ledger Ledger::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoError, "cannot read " + path);

  Ledger ledger;
  std::array<char, 1 + kBlockBytes> rec;
  std::uint64_t record = 0;
  while (in.read(rec.data(), rec.size())) {
    const std::uint8_t tag = static_cast<std::uint8_t>(rec[0]);
    std::array<std::uint8_t, kBlockBytes> img;
    std::copy(rec.begin() + 1, rec.end(), img.begin());

    TransactionBlock b;
    try {
      b = decode_block(img);
    } catch (const Error& e) {
      raise(e.code(), "record " + std::to_string(record) + ": " + e.what());
    }
    if (b.id.chain != tag)
      raise(Errc::HashMismatch,
            "record " + std::to_string(record) + ": chain tag does not match block id");

    if (b.id.position == 0) {
      if (b != genesis_block(tag))
        raise(Errc::HashMismatch,
              "record " + std::to_string(record) + ": malformed genesis block");
      ledger.ensure_chain(tag);
    } else {
      try {
        ledger.append_block(b);
      } catch (const Error& e) {
        raise(e.code(), "record " + std::to_string(record) + ": " + e.what());
      }
    }
    ++record;
  }
  if (in.gcount() != 0)
    raise(Errc::BadLength, "trailing " + std::to_string(in.gcount()) + " bytes after record " +
                               std::to_string(record));
  return ledger;
}

PartialLedger::EvictionReport PartialLedger::admit(const TransactionBlock& block,
                                                   const DependencyMap& deps,
                                                   std::uint64_t tick) {
  EvictionReport report;
  for (Entry& e : blocks_) {
    if (e.block.id == block.id) {  // re-admission refreshes recency only
      e.last_use = tick;
      return report;
    }
  }
  blocks_.push_back(Entry{block, tick, admit_seq_++});

  auto over_budget = [&] {
    if (blocks_.size() > capacity_) return true;
    return cut_limit_ > 1 && event_count() > cut_limit_;
  };

  while (over_budget() && blocks_.size() > 1) {
    // Oldest-by-use first; admission order breaks ties.
    std::vector<std::size_t> order(blocks_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (blocks_[a].last_use != blocks_[b].last_use)
        return blocks_[a].last_use < blocks_[b].last_use;
      return blocks_[a].admitted < blocks_[b].admitted;
    });

    std::size_t victim = order[0];
    if (cut_limit_ > 1) {
      bool found = false;
      for (std::size_t idx : order) {
        if (idx == blocks_.size() - 1) continue;  // never evict the block just admitted
        if (consistent_without(idx, deps)) {
          victim = idx;
          found = true;
          break;
        }
      }
      if (!found) {
        victim = order[0] == blocks_.size() - 1 && order.size() > 1 ? order[1] : order[0];
        report.used_lru_fallback = true;
        ++lru_fallbacks_;
      }
    }

    report.evicted.push_back(blocks_[victim].block.id);
    blocks_.erase(blocks_.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  return report;
}

void PartialLedger::touch(BlockId id, std::uint64_t tick) {
  for (Entry& e : blocks_)
    if (e.block.id == id) e.last_use = tick;
}

bool PartialLedger::contains(BlockId id) const {
  return std::any_of(blocks_.begin(), blocks_.end(),
                     [&](const Entry& e) { return e.block.id == id; });
}

std::optional<TransactionBlock> PartialLedger::find_block(BlockId id) const {
  for (const Entry& e : blocks_)
    if (e.block.id == id) return e.block;
  return std::nullopt;
}

std::optional<TransactionBlock> PartialLedger::find_event(EventHandler event) const {
  std::optional<TransactionBlock> best;
  std::uint64_t best_admitted = 0;
  for (const Entry& e : blocks_) {
    bool has = std::find(e.block.transactions.begin(), e.block.transactions.end(), event) !=
               e.block.transactions.end();
    if (has && (!best || e.admitted > best_admitted)) {
      best = e.block;
      best_admitted = e.admitted;
    }
  }
  return best;
}

std::size_t PartialLedger::event_count() const {
  std::size_t n = 0;
  for (const Entry& e : blocks_) n += e.block.transactions.size();
  return n;
}

std::vector<TransactionBlock> PartialLedger::chain_view(std::uint8_t chain) const {
  std::vector<TransactionBlock> out;
  for (const Entry& e : blocks_)
    if (e.block.id.chain == chain) out.push_back(e.block);
  std::sort(out.begin(), out.end(),
            [](const TransactionBlock& a, const TransactionBlock& b) { return a.id < b.id; });
  return out;
}

std::vector<std::uint8_t> PartialLedger::chain_indexes() const {
  std::set<std::uint8_t> idx;
  for (const Entry& e : blocks_) idx.insert(e.block.id.chain);
  return {idx.begin(), idx.end()};
}

bool PartialLedger::consistent(const DependencyMap& deps) const {
  return consistent_without(blocks_.size(), deps);
}

bool PartialLedger::fault_flip_bit(std::uint64_t block_draw, std::uint64_t bit_draw) {
  if (blocks_.empty()) return false;
  TransactionBlock& b = blocks_[block_draw % blocks_.size()].block;
  // Hash fields plus the live transaction bytes; the id stays intact so the
  // block remains addressable.
  const std::size_t mutable_bytes = 3 + b.transactions.size();
  const std::size_t pos = bit_draw % (mutable_bytes * 8);
  const std::uint8_t mask = static_cast<std::uint8_t>(1u << (pos % 8));
  switch (pos / 8) {
    case 0: b.block_hash ^= mask; break;
    case 1: b.parent_hash ^= mask; break;
    case 2: b.tx_hash ^= mask; break;
    default: b.transactions[pos / 8 - 3] ^= mask; break;
  }
  return true;
}

bool PartialLedger::consistent_without(std::size_t skip_index, const DependencyMap& deps) const {
  for (std::uint8_t chain : chain_indexes()) {
    std::vector<TransactionBlock> view;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (i == skip_index) continue;
      if (blocks_[i].block.id.chain == chain) view.push_back(blocks_[i].block);
    }
    std::sort(view.begin(), view.end(),
              [](const TransactionBlock& a, const TransactionBlock& b) { return a.id < b.id; });
    if (!is_partial_consistent_cut(view, deps)) return false;
  }
  return true;
}

}  // namespace tiot
