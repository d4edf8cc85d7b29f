// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace arbilomod
{

using Index = int;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, Index>;
using IndexList = std::vector<Index>;

// Error hierarchy. Everything derives from std::runtime_error so callers that only care
// about "something failed" can catch one type; the CLI maps the kinds to exit codes.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error
{
public:
  using Error::Error;
};

class GeometryResolutionError : public Error
{
public:
  using Error::Error;
};

class LinearSolverError : public Error
{
public:
  LinearSolverError(const std::string &what, double residual = -1.0)
    : Error(what), residual_(residual)
  {
  }
  double residual() const { return residual_; }

private:
  double residual_;
};

class ConditioningError : public Error
{
public:
  using Error::Error;
};

class StalenessError : public Error
{
public:
  using Error::Error;
};

class TrainingError : public Error
{
public:
  TrainingError(const std::string &what, int space) : Error(what), space_(space) {}
  int space() const { return space_; }

private:
  int space_;
};

class LoadError : public Error
{
public:
  using Error::Error;
};

// Runs body(i) for i in [0, count). Tasks are distributed round-robin over at most
// `threads` worker threads; results must be written to per-index slots by the caller.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)> &body);

// Number of worker threads used when a caller passes threads <= 0.
int default_thread_count();

}  // namespace arbilomod
