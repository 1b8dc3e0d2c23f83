#include "gradpf/noise_bank.hpp"

#include <cmath>
#include <numbers>

namespace gradpf::dpf {

namespace {

enum Role : std::uint64_t { kProposal = 1, kResample = 2, kGumbel = 3, kKeyed = 4, kRefresh = 5 };

// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// (0, 1]
double to_unit_closed(std::uint64_t b) { return static_cast<double>((b >> 11) + 1) * 0x1.0p-53; }

// (0, 1)
double to_unit_open(std::uint64_t b) { return (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

NoiseBank::NoiseBank(std::uint64_t seed, int steps, int particles, int state_dim)
    : seed_(seed), steps_(steps), particles_(particles), state_dim_(state_dim) {
  if (steps < 1 || particles < 1 || state_dim < 1) {
    throw ConfigError("NoiseBank: steps, particles and state_dim must be positive");
  }
}

std::uint64_t NoiseBank::bits(std::uint64_t role, std::uint64_t t, std::uint64_t i,
                              std::uint64_t k) const {
  std::uint64_t h = mix(seed_ ^ (role << 56));
  h = mix(h ^ t);
  h = mix(h ^ i);
  return mix(h ^ k);
}

double NoiseBank::normal(int t, int i, int k) const {
  // Box-Muller on two keyed uniforms, cosine branch only.
  const double u1 = to_unit_closed(bits(kProposal, t, i, 2 * static_cast<std::uint64_t>(k)));
  const double u2 = to_unit_open(bits(kProposal, t, i, 2 * static_cast<std::uint64_t>(k) + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec NoiseBank::proposal_noise(int t, int i) const {
  Vec eps(state_dim_);
  for (int k = 0; k < state_dim_; ++k) eps(k) = normal(t, i, k);
  return eps;
}

double NoiseBank::resample_uniform(int t, int i) const {
  return to_unit_closed(bits(kResample, t, i, 0));
}

double NoiseBank::gumbel(int t, int i, int j) const {
  return -std::log(-std::log(to_unit_open(bits(kGumbel, t, i, j))));
}

double NoiseBank::keyed_uniform(std::uint64_t key, int t, int i) const {
  return to_unit_closed(bits(kKeyed, t, i, key));
}

NoiseBank NoiseBank::refreshed(std::uint64_t iteration) const {
  return NoiseBank(mix(mix(seed_ ^ (kRefresh << 56)) ^ iteration), steps_, particles_,
                   state_dim_);
}

}  // namespace gradpf::dpf
