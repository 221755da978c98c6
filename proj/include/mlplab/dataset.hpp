// Copyright 2026 The mlplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLPLAB_DATASET_HPP
#define MLPLAB_DATASET_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "mlplab/errors.hpp"
#include "mlplab/rng.hpp"

namespace mlplab {

/// One labeled feature vector with its one-hot target.
struct Sample {
  std::vector<double> features;
  int label = 0;
  std::vector<double> one_hot;
};

/// Immutable after construction; safe to share across readers.
struct Dataset {
  std::vector<Sample> samples;
  int class_count = 0;
  int feature_dim = 0;
  std::vector<double> class_priors;  // empirical frequency per class

  std::size_t size() const { return samples.size(); }
};

struct SplitSpec {
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::uint64_t shuffle_seed = 0;
};

inline std::vector<double> one_hot(int label, int class_count) {
  if (class_count < 1) throw std::invalid_argument("one_hot: class_count < 1");
  if (label < 0 || label >= class_count)
    throw std::invalid_argument("one_hot: label " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(class_count) + " classes");
  std::vector<double> v(class_count, 0.0);
  v[label] = 1.0;
  return v;
}

/// Builds a Dataset from samples, recomputing class priors.
inline Dataset make_dataset(std::vector<Sample> samples, int class_count,
                            int feature_dim) {
  Dataset ds;
  ds.samples = std::move(samples);
  ds.class_count = class_count;
  ds.feature_dim = feature_dim;
  ds.class_priors.assign(class_count, 0.0);
  for (const Sample& s : ds.samples) {
    if (s.label < 0 || s.label >= class_count)
      throw std::invalid_argument("make_dataset: label out of range");
    if (static_cast<int>(s.features.size()) != feature_dim)
      throw std::invalid_argument("make_dataset: inconsistent feature_dim");
    ds.class_priors[s.label] += 1.0;
  }
  if (!ds.samples.empty()) {
    for (double& p : ds.class_priors) p /= static_cast<double>(ds.samples.size());
  }
  return ds;
}

/// Desk-scale stand-in for image data: one isotropic unit-variance Gaussian
/// per class, means at distance `separation` from the origin along random
/// (almost surely distinct) directions. Sample order is class-major.
inline Dataset synthetic_gaussians(int class_count, int per_class,
                                   int feature_dim, double separation,
                                   std::uint64_t seed) {
  if (class_count < 1) throw std::invalid_argument("synthetic_gaussians: class_count < 1");
  if (per_class < 1) throw std::invalid_argument("synthetic_gaussians: per_class < 1");
  if (feature_dim < 1) throw std::invalid_argument("synthetic_gaussians: feature_dim < 1");
  if (separation < 0.0) throw std::invalid_argument("synthetic_gaussians: separation < 0");

  Rng rng(seed);
  std::vector<std::vector<double>> means(class_count,
                                         std::vector<double>(feature_dim));
  for (auto& mean : means) {
    double norm2 = 0.0;
    for (double& m : mean) {
      m = rng.normal();
      norm2 += m * m;
    }
    const double norm = std::sqrt(norm2);
    const double scale = norm > 0.0 ? separation / norm : 0.0;
    for (double& m : mean) m *= scale;
  }

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(class_count) * per_class);
  for (int c = 0; c < class_count; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Sample s;
      s.features.resize(feature_dim);
      for (int d = 0; d < feature_dim; ++d)
        s.features[d] = means[c][d] + rng.normal();
      s.label = c;
      s.one_hot = one_hot(c, class_count);
      samples.push_back(std::move(s));
    }
  }
  return make_dataset(std::move(samples), class_count, feature_dim);
}

namespace detail {
inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx,
                      std::size_t begin, std::size_t end) {
  std::vector<Sample> picked;
  picked.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) picked.push_back(ds.samples[idx[i]]);
  return make_dataset(std::move(picked), ds.class_count, ds.feature_dim);
}
}  // namespace detail

/// Exact three-way partition with per-split priors recomputed. The shuffle
/// uses its own seed so every architecture in a sweep sees the same split.
inline std::tuple<Dataset, Dataset, Dataset> split(const Dataset& ds,
                                                   const SplitSpec& spec) {
  if (ds.samples.empty()) throw std::invalid_argument("split: empty dataset");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) ||
      !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0) ||
      spec.train_fraction + spec.val_fraction >= 1.0)
    throw std::invalid_argument("split: fractions must lie in (0,1) and sum below 1");

  const std::size_t n = ds.samples.size();
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(
      std::llround(spec.val_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw std::invalid_argument("split: fractions produce an empty split");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(spec.shuffle_seed);
  rng.shuffle(idx);

  return {detail::subset(ds, idx, 0, n_train),
          detail::subset(ds, idx, n_train, n_train + n_val),
          detail::subset(ds, idx, n_train + n_val, n)};
}

/// Two-way variant for datasets that ship with a separate test set.
inline std::pair<Dataset, Dataset> split_train_val(const Dataset& ds,
                                                   double train_fraction,
                                                   std::uint64_t shuffle_seed) {
  if (ds.samples.empty()) throw std::invalid_argument("split_train_val: empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split_train_val: fraction must lie in (0,1)");
  const std::size_t n = ds.samples.size();
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n)
    throw std::invalid_argument("split_train_val: fraction produces an empty split");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(idx);
  return {detail::subset(ds, idx, 0, n_train), detail::subset(ds, idx, n_train, n)};
}

/// Keeps the first `limit` samples (post-load subsetting for desk-scale runs).
inline Dataset head(const Dataset& ds, std::size_t limit) {
  if (limit >= ds.samples.size()) return ds;
  std::vector<Sample> picked(ds.samples.begin(), ds.samples.begin() + limit);
  return make_dataset(std::move(picked), ds.class_count, ds.feature_dim);
}

}  // namespace mlplab

#endif  // MLPLAB_DATASET_HPP
