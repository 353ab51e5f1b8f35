// seqvc/plot.hpp
//
// Attention-matrix export: binary PGM images (no plotting dependency) and
// raw matrices in FSEQ form.

// Copyright 2026  seqvc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SEQVC_PLOT_HPP_
#define SEQVC_PLOT_HPP_

#include "seqvc/features.hpp"

namespace seqvc {

// rows x cols values scaled to [0,255] by the matrix maximum; row 0 at the
// top of the image.
inline void write_pgm(const std::string &path, const std::vector<real> &values, int rows,
                      int cols) {
  require_shape(rows >= 1 && cols >= 1 &&
                    values.size() == static_cast<std::size_t>(rows) * cols,
                "write_pgm: bad dimensions");
  real mx = 0;
  for (real v : values) mx = std::max(mx, v);
  if (mx <= 0) mx = 1;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << "P5\n" << cols << " " << rows << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const real v = values[static_cast<std::size_t>(r) * cols + c];
      row[static_cast<std::size_t>(c)] =
          static_cast<unsigned char>(std::min(real(255), std::max(real(0), v / mx * 255)));
    }
    f.write(reinterpret_cast<const char *>(row.data()), cols);
  }
  if (!f) throw IoError("short write to " + path);
}

// Attention matrices reuse the FSEQ container: dim = source frames,
// length = target steps.
inline void write_attention(const std::string &fseq_path, const std::string &pgm_path,
                            const std::vector<real> &attention, int rows, int cols,
                            double frame_period_ms) {
  FeatureSequence a(rows, cols, frame_period_ms);
  a.data = attention;
  write_fseq(fseq_path, a);
  write_pgm(pgm_path, attention, rows, cols);
}

}  // namespace seqvc

#endif  // SEQVC_PLOT_HPP_
