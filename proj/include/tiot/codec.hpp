#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tiot/errors.hpp"
#include "tiot/types.hpp"

namespace tiot {

// Left-fold XOR over a byte sequence; empty input folds to 0x00.
std::uint8_t xor_hash(std::span<const std::uint8_t> bytes);

// Block identifier <chain, position>, serialized as 16 bits, chain first.
struct BlockId {
  std::uint8_t chain = 0;
  std::uint8_t position = 0;

  friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

inline constexpr std::size_t kBlockBytes = 20;
inline constexpr std::size_t kMaxTransactions = 15;
using BlockBytes = std::array<std::uint8_t, kBlockBytes>;

// Fixed 20-byte transaction block:
//   [chain, position, block_hash, parent_hash, tx_hash, tx1..tx15]
// tx_hash folds the 15 transaction bytes (0x00 padding included);
// block_hash folds the other 19 bytes.
struct TransactionBlock {
  BlockId id;
  std::uint8_t block_hash = 0;
  std::uint8_t parent_hash = 0;
  std::uint8_t tx_hash = 0;
  std::vector<EventHandler> transactions;  // causal order, <= 15, handlers != 0

  // Recomputes tx_hash and block_hash from the current contents.
  void seal();

  bool operator==(const TransactionBlock& other) const = default;
};

// Genesis block of a chain-of-blocks: <chain, 0>, no transactions, zero parent.
TransactionBlock genesis_block(std::uint8_t chain);

// Emits the 20-byte wire image, recomputing both hashes first.
// Throws TooManyTransactions / ReservedHandler.
BlockBytes encode_block(const TransactionBlock& block);

// Parses a 20-byte image and verifies both stored hashes against
// recomputation. Throws BadLength / HashMismatch / ReservedHandler.
TransactionBlock decode_block(std::span<const std::uint8_t> bytes);

// True iff both stored hashes recompute and the block is structurally
// sound; never throws. The read-side tamper check.
bool hashes_consistent(const TransactionBlock& block);

}  // namespace tiot
