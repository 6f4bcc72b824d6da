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

#ifndef BSMPC_PLOT_H_
#define BSMPC_PLOT_H_

#include <filesystem>
#include <string>
#include <vector>

namespace bsmpc {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws std::runtime_error naming the missing column.
  int column(const std::string& name) const;
};

// Plain comma separated values with a header line; no quoting.
CsvTable read_csv(const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Rows whose x or y cell is empty or not a finite number are dropped. With
// `dedupe` consecutive rows repeating the previous y are dropped too (the
// metrics CSV repeats the last evaluation on every update row).
Series extract_series(const CsvTable& t, const std::string& x_col,
                      const std::string& y_col, const std::string& label,
                      bool dedupe = false);

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
  bool log_y = false;
};

std::string render_svg(const std::vector<Series>& series,
                       const PlotOptions& opt);

}  // namespace bsmpc

#endif  // BSMPC_PLOT_H_
