#include "llqr/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace llqr {

Dataset make_blobs(unsigned seed, int n, int num_classes, int dim, double spread) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix centers(num_classes, dim);
  for (int c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * M_PI * c / num_classes;
    for (int j = 0; j < dim; ++j) {
      centers(c, j) = j == 0 ? 3.0 * std::cos(angle) : (j == 1 ? 3.0 * std::sin(angle) : 0.0);
    }
  }

  Dataset d;
  d.x.resize(n, dim);
  d.labels.resize(n);
  d.num_classes = num_classes;
  for (int i = 0; i < n; ++i) {
    const int c = i % num_classes;
    d.labels(i) = c;
    for (int j = 0; j < dim; ++j) {
      d.x(i, j) = centers(c, j) + spread * gauss(rng);
    }
  }
  return d;
}

Dataset make_two_moons(unsigned seed, int n, double noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, M_PI);

  Dataset d;
  d.x.resize(n, 2);
  d.labels.resize(n);
  d.num_classes = 2;
  for (int i = 0; i < n; ++i) {
    const double t = unif(rng);
    if (i % 2 == 0) {
      d.x(i, 0) = std::cos(t);
      d.x(i, 1) = std::sin(t);
      d.labels(i) = 0;
    } else {
      d.x(i, 0) = 1.0 - std::cos(t);
      d.x(i, 1) = 0.5 - std::sin(t);
      d.labels(i) = 1;
    }
    d.x(i, 0) += noise * gauss(rng);
    d.x(i, 1) += noise * gauss(rng);
  }
  return d;
}

BatchSampler::BatchSampler(const Dataset& data, int batch_size, unsigned seed)
    : data_(data), batch_size_(batch_size), rng_(seed) {
  order_.resize(data_.x.rows());
  std::iota(order_.begin(), order_.end(), 0);
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

BatchSampler::Batch BatchSampler::next() {
  if (cursor_ + batch_size_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  Batch b;
  b.x.resize(batch_size_, data_.x.cols());
  b.labels.resize(batch_size_);
  for (int i = 0; i < batch_size_; ++i) {
    const int idx = order_[cursor_ + i];
    b.x.row(i) = data_.x.row(idx);
    b.labels(i) = data_.labels(idx);
  }
  cursor_ += batch_size_;
  return b;
}

}  // namespace llqr
