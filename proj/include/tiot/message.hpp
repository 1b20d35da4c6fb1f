#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tiot/codec.hpp"
#include "tiot/vclock.hpp"

namespace tiot {

enum class MsgKind : std::uint8_t {
  EventRequest,
  BlockProposal,
  Vote,
  BlockCommit,
  LedgerFetch,
  LedgerReply,
};

const char* msg_kind_name(MsgKind k);

// Reject-vote reason codes; observability only, the protocol treats every
// non-approve as a plain reject.
enum class VoteReason : std::uint8_t { None = 0, BadPuzzle, BadOrder, MissingTrigger };

struct EventRequestPayload {
  EventHandler event = 0;
};

struct ProposalPayload {
  TransactionBlock block;
  std::vector<std::uint16_t> k_values;  // one per transaction, block order, <= 5
};

struct VotePayload {
  BlockId block;
  bool approve = false;
  VoteReason reason = VoteReason::None;
};

struct CommitPayload {
  bool committed = false;  // false broadcasts a rejected round
  TransactionBlock block;
};

struct FetchPayload {
  std::vector<BlockId> ids;
};

struct ReplyPayload {
  BlockId id;
  std::optional<TransactionBlock> block;  // empty means NotFound at the gateway
};

using Payload = std::variant<EventRequestPayload, ProposalPayload, VotePayload, CommitPayload,
                             FetchPayload, ReplyPayload>;

inline constexpr std::size_t kMaxPayloadBytes = 30;
inline constexpr std::size_t kMaxSolutionsPerBlock = 5;  // 30 = 20-byte block + 5 * 2-byte K

// Simulator-internal envelope. Only the payload is wire-constrained; the
// timestamp rides in the control header and is present on event requests
// only, which are the messages the ordering protocol counts.
struct Message {
  NodeId sender = 0;
  MsgKind kind = MsgKind::EventRequest;
  std::optional<Timestamp> ts;
  Payload payload;
};

// Canonical payload bytes: the 20-byte block layout for blocks, big-endian
// 16-bit K values, <chain, position> pairs for ids. Throws PayloadTooLarge
// if the result exceeds 30 bytes.
std::vector<std::uint8_t> payload_bytes(const Payload& payload);

// "xorhash:length" over payload_bytes, used in trace lines.
std::string payload_digest(const Payload& payload);

}  // namespace tiot
