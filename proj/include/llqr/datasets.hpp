#pragma once

#include <random>

#include "llqr/types.hpp"

namespace llqr {

struct Dataset {
  Matrix x;          // (n, dim)
  IntVector labels;  // (n)
  int num_classes = 0;
};

// Seeded synthetic generators; nothing is shipped, everything reproduces
// from the seed.
Dataset make_blobs(unsigned seed, int n, int num_classes = 3, int dim = 2, double spread = 0.6);
Dataset make_two_moons(unsigned seed, int n, double noise = 0.1);

// Seed-deterministic minibatch iteration: indices reshuffle once per epoch.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, int batch_size, unsigned seed);

  struct Batch {
    Matrix x;
    IntVector labels;
  };
  Batch next();
  long epoch() const { return epoch_; }

 private:
  void reshuffle();
  const Dataset& data_;
  int batch_size_;
  std::mt19937_64 rng_;
  std::vector<int> order_;
  size_t cursor_ = 0;
  long epoch_ = 0;
};

}  // namespace llqr
