#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "tiot/errors.hpp"
#include "tiot/rng.hpp"
#include "tiot/types.hpp"

namespace tiot {

// Number-theoretic proof of work: a miner assigned the tuple <P, r> must
// find K > threshold with r^K = r (mod P), where r is a primitive root of
// the prime P. Any other primitive root of P verifies the same K, which is
// what lets the associated miners cross-check each other's solutions.

bool is_prime(std::uint32_t n);

// The nth prime, 1-based (nth_prime(1) == 2).
std::uint32_t nth_prime(std::uint32_t n);

// Euler's totient via trial-division factorization. euler_phi(1) == 1.
std::uint64_t euler_phi(std::uint64_t n);

// base^exp mod m by repeated squaring, m < 2^32. If mul_count is non-null,
// the number of modular multiplications performed is added to it.
std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t m,
                      std::uint64_t* mul_count = nullptr);

// Multiplicative order of r mod p for prime p, by the divisor-check method.
std::uint32_t multiplicative_order(std::uint32_t r, std::uint32_t p);

// All primitive roots of prime p in ascending order; the list has exactly
// euler_phi(euler_phi(p)) entries. Throws NotPrime.
// primitive_roots() runs the candidate sweep with OpenMP when available;
// primitive_roots_serial() is the plain loop kept as the reference path.
// Both produce identical output.
std::vector<std::uint32_t> primitive_roots(std::uint32_t p);
std::vector<std::uint32_t> primitive_roots_serial(std::uint32_t p);

struct PuzzleChallenge {
  std::uint32_t prime = 0;      // P
  std::uint32_t root = 0;       // this miner's assigned primitive root of P
  std::uint32_t threshold = 0;  // lower bound on K: P * factor, shared per event
  EventHandler event = 0;

  bool operator==(const PuzzleChallenge&) const = default;
};

struct PuzzleSolution {
  std::uint32_t k = 0;          // fits 2 bytes on the wire
  std::uint64_t mul_count = 0;  // modular multiplications spent solving
};

// Solutions serialize as 2-byte big-endian values; anything >= 2^16 is
// unrepresentable and raises SolutionOverflow.
inline constexpr std::uint32_t kSolutionLimit = 1u << 16;

// Gateway-side challenge issuance for one event: each miner gets a distinct
// primitive root of p, all share threshold = p * u with u drawn uniformly
// from 1..=min(assigned roots). factor_cap > 0 additionally caps u (the
// desk-scale configuration pins u = 1 so K always fits 2 bytes).
// Throws NotEnoughRoots / PrimeTooLarge.
std::map<NodeId, PuzzleChallenge> make_challenges(std::uint32_t p, EventHandler event,
                                                  const std::vector<NodeId>& miners, Rng& rng,
                                                  std::uint32_t factor_cap = 0);

// Smallest K with K = 1 (mod P-1) and K > threshold, i.e. the closed form
// c*(P-1)+1 that Fermat's little theorem makes a solution. The returned
// mul_count is the cost of the confirming exponentiation.
// Throws SolutionOverflow if K does not fit 2 bytes.
PuzzleSolution solve_puzzle(const PuzzleChallenge& challenge);

// True iff k > threshold and root^k = root (mod p). Works under any root
// assigned for the same (p, event). Throws NotPrime on a malformed p.
bool verify_solution(std::uint32_t p, std::uint32_t root, std::uint32_t threshold,
                     std::uint32_t k, std::uint64_t* mul_count = nullptr);

}  // namespace tiot
