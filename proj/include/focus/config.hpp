#pragma once

#include "json.hpp"

#include "focus/eval.hpp"
#include "focus/optim.hpp"
#include "focus/sfm.hpp"
#include "focus/synth.hpp"

namespace focus {

inline constexpr std::uint64_t kDefaultSeed = 42;

/// Every module configuration the CLI routes, with its defaults.
struct RunConfig {
  SfmConfig sfm;
  PoissonConfig poisson;
  OptimConfig optim;
  EvalOptions eval;
  NoiseSpec noise;
  RingOptions ring;
  ImageSize resolution{640, 480};
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 0;
};

nlohmann::json config_to_json(const RunConfig& config);

}  // namespace focus
