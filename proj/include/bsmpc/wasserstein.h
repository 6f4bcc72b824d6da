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

#ifndef BSMPC_WASSERSTEIN_H_
#define BSMPC_WASSERSTEIN_H_

#include "bsmpc/tensor.h"

namespace bsmpc {

// Exact 1-Wasserstein distance between distributions p and q on n points with
// ground cost `cost` (n x n, nonnegative). Solved as a min-cost flow by
// successive shortest paths, so the value is the LP optimum up to rounding.
double w1_discrete(const Vector& p, const Vector& q, const Matrix& cost);

}  // namespace bsmpc

#endif  // BSMPC_WASSERSTEIN_H_
