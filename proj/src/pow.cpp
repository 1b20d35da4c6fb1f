#include "tiot/pow.hpp"

#include <algorithm>

namespace tiot {

bool is_prime(std::uint32_t n) {
  if (n < 2) return false;
  if (n % 2 == 0) return n == 2;
  for (std::uint32_t d = 3; static_cast<std::uint64_t>(d) * d <= n; d += 2)
    if (n % d == 0) return false;
  return true;
}

std::uint32_t nth_prime(std::uint32_t n) {
  std::uint32_t count = 0;
  for (std::uint32_t v = 2;; ++v) {
    if (is_prime(v) && ++count == n) return v;
  }
}

namespace {

std::vector<std::uint64_t> prime_factors(std::uint64_t n) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t d = 2; d * d <= n; d == 2 ? d = 3 : d += 2) {
    if (n % d == 0) {
      out.push_back(d);
      while (n % d == 0) n /= d;
    }
  }
  if (n > 1) out.push_back(n);
  return out;
}

}  // namespace

std::uint64_t euler_phi(std::uint64_t n) {
  std::uint64_t result = n;
  for (std::uint64_t p : prime_factors(n)) result -= result / p;
  return result;
}

std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t m,
                      std::uint64_t* mul_count) {
  std::uint64_t result = 1 % m;
  std::uint64_t b = base % m;
  std::uint64_t muls = 0;
  while (exp > 0) {
    if (exp & 1) {
      result = result * b % m;
      ++muls;
    }
    b = b * b % m;
    ++muls;
    exp >>= 1;
  }
  if (mul_count) *mul_count += muls;
  return result;
}

std::uint32_t multiplicative_order(std::uint32_t r, std::uint32_t p) {
  // ord(r) divides p-1; the smallest divisor d with r^d = 1 is the order.
  std::uint32_t n = p - 1;
  std::vector<std::uint32_t> divisors;
  for (std::uint32_t d = 1; static_cast<std::uint64_t>(d) * d <= n; ++d) {
    if (n % d == 0) {
      divisors.push_back(d);
      if (d != n / d) divisors.push_back(n / d);
    }
  }
  std::sort(divisors.begin(), divisors.end());
  for (std::uint32_t d : divisors)
    if (pow_mod(r, d, p) == 1) return d;
  return n;
}

namespace {

std::vector<std::uint32_t> roots_impl(std::uint32_t p, bool parallel) {
  if (!is_prime(p)) raise(Errc::NotPrime, std::to_string(p) + " is not prime");
  if (p == 2) return {};

  const std::uint32_t n = p - 1;
  const std::vector<std::uint64_t> factors = prime_factors(n);

  // r is a primitive root iff r^((p-1)/q) != 1 for every prime factor q of p-1.
  auto is_root = [&](std::uint32_t r) {
    for (std::uint64_t q : factors)
      if (pow_mod(r, n / q, p) == 1) return false;
    return true;
  };

  std::vector<char> flag(p, 0);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 2; r < static_cast<std::int64_t>(p); ++r)
      flag[static_cast<std::size_t>(r)] = is_root(static_cast<std::uint32_t>(r));
  } else {
    for (std::uint32_t r = 2; r < p; ++r) flag[r] = is_root(r);
  }

  std::vector<std::uint32_t> roots;
  for (std::uint32_t r = 2; r < p; ++r)
    if (flag[r]) roots.push_back(r);
  return roots;
}

}  // namespace

std::vector<std::uint32_t> primitive_roots(std::uint32_t p) { return roots_impl(p, true); }

std::vector<std::uint32_t> primitive_roots_serial(std::uint32_t p) { return roots_impl(p, false); }

std::map<NodeId, PuzzleChallenge> make_challenges(std::uint32_t p, EventHandler event,
                                                  const std::vector<NodeId>& miners, Rng& rng,
                                                  std::uint32_t factor_cap) {
  // The minimal solution is 2(P-1)+1 whenever threshold >= P, so primes past
  // this bound cannot produce a 2-byte K at all.
  if (2ull * (p - 1) + 1 >= kSolutionLimit)
    raise(Errc::PrimeTooLarge, "prime " + std::to_string(p) + " cannot yield a 2-byte solution");

  std::vector<std::uint32_t> roots = primitive_roots(p);
  if (roots.size() < miners.size())
    raise(Errc::NotEnoughRoots, std::to_string(p) + " has " + std::to_string(roots.size()) +
                                    " primitive roots for " + std::to_string(miners.size()) +
                                    " miners");

  // Draw distinct roots by partial Fisher-Yates over the ascending list.
  std::vector<std::uint32_t> assigned;
  assigned.reserve(miners.size());
  for (std::size_t i = 0; i < miners.size(); ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform(0, roots.size() - 1 - i));
    std::swap(roots[i], roots[j]);
    assigned.push_back(roots[i]);
  }

  std::uint32_t factor_max = *std::min_element(assigned.begin(), assigned.end());
  if (factor_cap > 0) factor_max = std::min(factor_max, factor_cap);
  const std::uint32_t factor = static_cast<std::uint32_t>(rng.uniform(1, factor_max));
  const std::uint32_t threshold = p * factor;

  std::map<NodeId, PuzzleChallenge> out;
  for (std::size_t i = 0; i < miners.size(); ++i)
    out[miners[i]] = PuzzleChallenge{p, assigned[i], threshold, event};
  return out;
}

PuzzleSolution solve_puzzle(const PuzzleChallenge& challenge) {
  const std::uint32_t p = challenge.prime;
  const std::uint64_t order = p - 1;
  // Smallest c with c*(P-1)+1 > threshold.
  const std::uint64_t c = (challenge.threshold - 1) / order + 1;
  const std::uint64_t k = c * order + 1;
  if (k >= kSolutionLimit)
    raise(Errc::SolutionOverflow,
          "K=" + std::to_string(k) + " exceeds the 2-byte wire limit for P=" + std::to_string(p));

  PuzzleSolution sol;
  sol.k = static_cast<std::uint32_t>(k);
  // Confirming exponentiation; also the recorded compute cost.
  if (pow_mod(challenge.root, k, p, &sol.mul_count) != challenge.root)
    raise(Errc::NotPrime, "challenge arithmetic is inconsistent; P is malformed");
  return sol;
}

bool verify_solution(std::uint32_t p, std::uint32_t root, std::uint32_t threshold,
                     std::uint32_t k, std::uint64_t* mul_count) {
  if (!is_prime(p)) raise(Errc::NotPrime, std::to_string(p) + " is not prime");
  if (k <= threshold) return false;
  return pow_mod(root, k, p, mul_count) == root;
}

}  // namespace tiot
