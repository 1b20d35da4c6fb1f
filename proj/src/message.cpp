#include "tiot/message.hpp"

namespace tiot {

const char* msg_kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::EventRequest: return "EventRequest";
    case MsgKind::BlockProposal: return "BlockProposal";
    case MsgKind::Vote: return "Vote";
    case MsgKind::BlockCommit: return "BlockCommit";
    case MsgKind::LedgerFetch: return "LedgerFetch";
    case MsgKind::LedgerReply: return "LedgerReply";
  }
  return "?";
}

namespace {

void append_block(std::vector<std::uint8_t>& out, const TransactionBlock& b) {
  BlockBytes img = encode_block(b);
  out.insert(out.end(), img.begin(), img.end());
}

struct PayloadWriter {
  std::vector<std::uint8_t> out;

  void operator()(const EventRequestPayload& p) { out.push_back(p.event); }

  void operator()(const ProposalPayload& p) {
    if (p.k_values.size() > kMaxSolutionsPerBlock)
      raise(Errc::PayloadTooLarge,
            std::to_string(p.k_values.size()) + " K values, only 5 fit beside a block");
    append_block(out, p.block);
    for (std::uint16_t k : p.k_values) {
      out.push_back(static_cast<std::uint8_t>(k >> 8));
      out.push_back(static_cast<std::uint8_t>(k & 0xff));
    }
  }

  void operator()(const VotePayload& p) {
    out.push_back(p.block.chain);
    out.push_back(p.block.position);
    out.push_back(p.approve ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(p.reason));
  }

  void operator()(const CommitPayload& p) {
    out.push_back(p.committed ? 1 : 0);
    append_block(out, p.block);
  }

  void operator()(const FetchPayload& p) {
    out.push_back(static_cast<std::uint8_t>(p.ids.size()));
    for (BlockId id : p.ids) {
      out.push_back(id.chain);
      out.push_back(id.position);
    }
  }

  void operator()(const ReplyPayload& p) {
    out.push_back(p.block ? 1 : 0);
    out.push_back(p.id.chain);
    out.push_back(p.id.position);
    if (p.block) append_block(out, *p.block);
  }
};

}  // namespace

std::vector<std::uint8_t> payload_bytes(const Payload& payload) {
  PayloadWriter w;
  std::visit(w, payload);
  if (w.out.size() > kMaxPayloadBytes)
    raise(Errc::PayloadTooLarge,
          std::to_string(w.out.size()) + " bytes, the payload budget is 30");
  return w.out;
}

std::string payload_digest(const Payload& payload) {
  std::vector<std::uint8_t> bytes = payload_bytes(payload);
  static const char* hex = "0123456789abcdef";
  std::uint8_t h = xor_hash(bytes);
  std::string out;
  out += hex[h >> 4];
  out += hex[h & 0xf];
  out += ':';
  out += std::to_string(bytes.size());
  return out;
}

}  // namespace tiot
