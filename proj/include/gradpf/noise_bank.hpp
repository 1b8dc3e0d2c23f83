#pragma once

#include <cstdint>

#include "gradpf/types.hpp"

namespace gradpf::dpf {

// Fixed random inputs of a particle filter: proposal noises eps[t][i], resampling
// uniforms u[t][i] and Gumbel draws G[t][i][j]. Values are produced on demand by
// a counter-based generator keyed on (seed, role, t, i, k), so the same bank
// yields the same numbers for every theta evaluated within a chain without
// storing T x N arrays. Time index 0 holds the initial-state noise.
class NoiseBank {
 public:
  NoiseBank(std::uint64_t seed, int steps, int particles, int state_dim);

  std::uint64_t seed() const { return seed_; }
  int steps() const { return steps_; }
  int particles() const { return particles_; }
  int state_dim() const { return state_dim_; }

  double normal(int t, int i, int k) const;
  Vec proposal_noise(int t, int i) const;
  // In (0, 1].
  double resample_uniform(int t, int i) const;
  double gumbel(int t, int i, int j) const;
  // Uniform in (0, 1] from an extra key, for streams that must vary with it.
  double keyed_uniform(std::uint64_t key, int t, int i) const;

  // A bank with the same shape and an independent stream.
  NoiseBank refreshed(std::uint64_t iteration) const;

 private:
  std::uint64_t bits(std::uint64_t role, std::uint64_t t, std::uint64_t i, std::uint64_t k) const;

  std::uint64_t seed_;
  int steps_;
  int particles_;
  int state_dim_;
};

}  // namespace gradpf::dpf
