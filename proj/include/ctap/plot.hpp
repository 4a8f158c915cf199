#ifndef CTAP_PLOT_HPP
#define CTAP_PLOT_HPP

// Portable-image (PGM/PPM) output for diagnostics.

#include "ctap/autodiff.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ctap {

// Grayscale heatmap, min -> black, max -> white; each cell drawn as
// scale x scale pixels. Row 0 at the top.
void write_heatmap_pgm(const std::filesystem::path& path, const Matrix<float>& values, int scale = 1);

struct Series {
  std::string name;
  std::vector<double> y;
  unsigned char r = 0, g = 0, b = 0;
};

// Line plot of one or more series on a shared y range (RGB PPM).
void write_line_plot_ppm(const std::filesystem::path& path, const std::vector<Series>& series, int width = 640,
                         int height = 360);

}  // namespace ctap

#endif  // CTAP_PLOT_HPP
