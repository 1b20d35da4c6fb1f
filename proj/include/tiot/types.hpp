#pragma once

#include <cstdint>

namespace tiot {

// Device/miner identifier. Id 0 is reserved for the gateway.
using NodeId = std::uint32_t;
inline constexpr NodeId kGatewayId = 0;

// 8-bit event identifier; doubles as the virtual coin for that event.
// 0x00 is reserved as transaction-slot padding and never names a real event.
using EventHandler = std::uint8_t;

// Simulated time in milliseconds.
using SimTime = std::uint64_t;

}  // namespace tiot
