// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "arbilomod/common.hpp"
#include "arbilomod/decomposition.hpp"
#include "arbilomod/fem.hpp"

namespace arbilomod
{

// Parameter training set {10^0, ..., 10^5}.
std::vector<double> default_training_set();

struct TrainingConfig
{
  int samples = 60;           // random coupling samples per parameter
  double eps_train = 1.0e-4;  // snapshot greedy tolerance
  std::vector<double> xi = default_training_set();
  std::uint64_t seed = 0;
  bool include_source = true;

  void validate() const;
};

// Reduced local basis of one space. Columns live on the space's footprint and are
// orthonormal in the H1 product.
struct LocalBasis
{
  int space = -1;
  Matrix vectors;
  int revision = 0;

  int size() const { return static_cast<int>(vectors.cols()); }
};

// Greedy orthonormalization of snapshots: repeatedly picks the snapshot with the largest
// remaining norm, normalizes it and removes its component from all others. Stops when
// every remaining norm is <= eps.
Matrix snapshot_greedy(const Matrix &snapshots, const SparseMatrix &gram, double eps);

// Uniform value on [-1, 1] from a counter-based hash of the key.
double counter_uniform(std::uint64_t seed, const std::vector<std::uint64_t> &key);

// Coefficients of random sample i on the coupling dofs of face s (ordered as
// Decomposition::coupling_dofs).
Vector random_coupling_sample(const Decomposition &dec, int s, std::uint64_t seed, int i);

// Trains the reduced space of face s: local solves on the training dofs for every
// parameter (source term and random coupling data), projection onto the face space and a
// snapshot greedy in the footprint H1 product.
LocalBasis train_face(int s, const TrainingConfig &cfg, const AffineSystem &sys,
                      const Decomposition &dec, const ExtensionOperator &ext,
                      const SparseMatrix &gram);

// Basis of a vertex space: its single extended function, normalized.
LocalBasis vertex_basis(int s, const Decomposition &dec, const ExtensionOperator &ext,
                        const SparseMatrix &gram);

// Gram matrix of the H1 product restricted to a footprint.
SparseMatrix footprint_gram(const SparseMatrix &gram, const Space &sp);

}  // namespace arbilomod
