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

#include "bsmpc/tensor.h"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace bsmpc {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NumericError("non-finite value in " + what);
  }
}

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

DenseArray::DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ContractError("DenseArray: empty shape");
  std::size_t n = 1;
  for (std::size_t d : shape_) {
    if (d == 0) throw ContractError("DenseArray: zero-length dimension");
    n *= d;
  }
  if (n != data_.size()) {
    throw ContractError("DenseArray: data length " +
                        std::to_string(data_.size()) +
                        " does not match shape product " + std::to_string(n));
  }
  for (double x : data_) {
    if (!std::isfinite(x)) throw NumericError("DenseArray: non-finite entry");
  }
}

DenseArray DenseArray::from_matrix(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return DenseArray({static_cast<std::size_t>(m.rows()),
                     static_cast<std::size_t>(m.cols())},
                    std::move(data));
}

Matrix DenseArray::to_matrix() const {
  if (shape_.size() > 2) {
    throw ContractError("DenseArray::to_matrix: rank > 2");
  }
  const Eigen::Index rows = shape_.size() == 2 ? shape_[0] : 1;
  const Eigen::Index cols = shape_.back();
  Matrix m(rows, cols);
  std::copy(data_.begin(), data_.end(), m.data());
  return m;
}

}  // namespace bsmpc
