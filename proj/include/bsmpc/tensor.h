// Copyright 2026 The bsmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BSMPC_TENSOR_H_
#define BSMPC_TENSOR_H_

#include <Eigen/Core>

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsmpc {

// Row-major dense matrix; rows index the batch, columns the features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Rng = std::mt19937_64;

// Raised when a caller breaks a documented precondition (shape mismatch,
// out-of-range index, non-scalar loss).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised when NaN/Inf shows up where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool all_finite(const Matrix& m);

// Throws NumericError naming `what` if `m` holds NaN or Inf.
void require_finite(const Matrix& m, const std::string& what);

std::string shape_string(const Matrix& m);

// Shape-tagged array of doubles in row-major order. All entries are finite;
// construction rejects NaN/Inf. Rank 0 is not representable (use shape {1}).
class DenseArray {
 public:
  DenseArray() = default;
  DenseArray(std::vector<std::size_t> shape, std::vector<double> data);

  static DenseArray from_matrix(const Matrix& m);
  // Rank-1 arrays become a single row.
  Matrix to_matrix() const;

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace bsmpc

#endif  // BSMPC_TENSOR_H_
