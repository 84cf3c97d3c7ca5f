#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include <boost/random/normal_distribution.hpp>

namespace optomech {

/// Stream tags. Every random stream is derived from (seed, block, tag, index)
/// so results do not depend on the order in which blocks are generated.
enum class Stream : std::uint64_t {
  MechanicsX = 1,
  MechanicsY = 2,
  Detection = 3,
  Jitter = 4,
  LowFrequency = 5,
  MonteCarlo = 6,
  Synthetic = 7,
};

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (tags.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t block, Stream stream, std::uint64_t index = 0) {
  return make_engine(seed, {block, static_cast<std::uint64_t>(stream), index});
}

/// Unit normal variates (ziggurat; identical across platforms for a given engine state).
class NormalSource {
 public:
  explicit NormalSource(Engine engine) : engine_(std::move(engine)) {}
  double operator()() { return dist_(engine_); }

 private:
  Engine engine_;
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

} // namespace optomech
