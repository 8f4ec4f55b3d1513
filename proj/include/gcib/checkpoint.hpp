#pragma once

#include <array>
#include <string>

#include "gcib/training.hpp"

namespace gcib {

// Versioned binary snapshot of everything needed to resume or evaluate a
// model: hyperparameters, dataset shape, parameters, optimizer moments and
// the live RNG streams. Round-trips bit-exactly. Layout documented in the
// README.
struct Checkpoint {
  uint32_t version = 1;
  Hyperparams hp;
  Ablation ablation = Ablation::none;
  int num_users = 0;
  int num_items = 0;
  std::vector<std::string> behavior_names;
  int target = -1;
  ModelState state;
  AdamState opt;
  uint64_t trained_epochs = 0;
  std::array<uint64_t, 4> sampler_rng{};
  std::array<uint64_t, 4> noise_rng{};
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);  // atomic
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gcib
