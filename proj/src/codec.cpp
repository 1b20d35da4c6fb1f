#include "tiot/codec.hpp"

#include <algorithm>

namespace tiot {

std::uint8_t xor_hash(std::span<const std::uint8_t> bytes) {
  std::uint8_t h = 0;
  for (std::uint8_t b : bytes) h ^= b;
  return h;
}

namespace {

void check_transactions(const std::vector<EventHandler>& txs) {
  if (txs.size() > kMaxTransactions)
    raise(Errc::TooManyTransactions,
          "block holds " + std::to_string(txs.size()) + " transactions, limit is 15");
  for (EventHandler h : txs)
    if (h == 0) raise(Errc::ReservedHandler, "0x00 is transaction-slot padding");
}

BlockBytes layout(const TransactionBlock& b) {
  BlockBytes out{};
  out[0] = b.id.chain;
  out[1] = b.id.position;
  out[2] = b.block_hash;
  out[3] = b.parent_hash;
  out[4] = b.tx_hash;
  std::copy(b.transactions.begin(), b.transactions.end(), out.begin() + 5);
  return out;
}

std::uint8_t fold_skipping(std::span<const std::uint8_t, kBlockBytes> img, std::size_t skip) {
  std::uint8_t h = 0;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (i != skip) h ^= img[i];
  return h;
}

}  // namespace

void TransactionBlock::seal() {
  check_transactions(transactions);
  BlockBytes img = layout(*this);
  std::uint8_t tx = 0;
  for (std::size_t i = 5; i < kBlockBytes; ++i) tx ^= img[i];
  tx_hash = tx;
  img[4] = tx;
  block_hash = fold_skipping(img, 2);
}

TransactionBlock genesis_block(std::uint8_t chain) {
  TransactionBlock g;
  g.id = {chain, 0};
  g.parent_hash = 0x00;
  g.seal();
  return g;
}

bool hashes_consistent(const TransactionBlock& block) {
  try {
    TransactionBlock resealed = block;
    resealed.seal();
    return resealed.block_hash == block.block_hash && resealed.tx_hash == block.tx_hash;
  } catch (const Error&) {
    return false;
  }
}

BlockBytes encode_block(const TransactionBlock& block) {
  TransactionBlock sealed = block;
  sealed.seal();
  return layout(sealed);
}

TransactionBlock decode_block(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kBlockBytes)
    raise(Errc::BadLength, "block image is " + std::to_string(bytes.size()) + " bytes, want 20");

  std::uint8_t tx = 0;
  for (std::size_t i = 5; i < kBlockBytes; ++i) tx ^= bytes[i];
  if (tx != bytes[4]) raise(Errc::HashMismatch, "transaction hash does not recompute");
  if (fold_skipping(bytes.subspan<0, kBlockBytes>(), 2) != bytes[2])
    raise(Errc::HashMismatch, "block hash does not recompute");

  TransactionBlock b;
  b.id = {bytes[0], bytes[1]};
  b.block_hash = bytes[2];
  b.parent_hash = bytes[3];
  b.tx_hash = bytes[4];
  for (std::size_t i = 5; i < kBlockBytes; ++i) {
    if (bytes[i] == 0) {
      // Padding starts here; everything after must be padding too.
      for (std::size_t j = i; j < kBlockBytes; ++j)
        if (bytes[j] != 0) raise(Errc::ReservedHandler, "0x00 inside transaction list");
      break;
    }
    b.transactions.push_back(bytes[i]);
  }
  return b;
}

}  // namespace tiot
