#include "ctap/plot.hpp"

#include "ctap/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace ctap {

namespace {

std::ofstream open_image(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_heatmap_pgm(const std::filesystem::path& path, const Matrix<float>& values, int scale) {
  scale = std::max(1, scale);
  const float lo = values.size() ? values.minCoeff() : 0.0f;
  const float hi = values.size() ? values.maxCoeff() : 1.0f;
  const float range = hi > lo ? hi - lo : 1.0f;
  const auto w = static_cast<int>(values.cols()) * scale;
  const auto h = static_cast<int>(values.rows()) * scale;
  auto out = open_image(path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = (values(y / scale, x / scale) - lo) / range;
      row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(std::lround(255.0f * std::clamp(v, 0.0f, 1.0f)));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

void write_line_plot_ppm(const std::filesystem::path& path, const std::vector<Series>& series, int width,
                         int height) {
  std::vector<unsigned char> img(static_cast<std::size_t>(width * height * 3), 255);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t longest = 1;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    longest = std::max(longest, s.y.size());
  }
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1 : 0;
    hi = lo + 2;
  }
  const int margin = 10;
  auto plot = [&](int x, int y, const Series& s) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t i = static_cast<std::size_t>((y * width + x) * 3);
    img[i] = s.r;
    img[i + 1] = s.g;
    img[i + 2] = s.b;
  };
  for (const auto& s : series) {
    int px = -1;
    int py = -1;
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const int x = margin + static_cast<int>((width - 2 * margin - 1) * (longest > 1 ? double(i) / (longest - 1) : 0.0));
      const int y = height - margin - 1 - static_cast<int>((height - 2 * margin - 1) * (s.y[i] - lo) / (hi - lo));
      if (px >= 0) {
        const int steps = std::max(std::abs(x - px), std::abs(y - py));
        for (int k = 0; k <= steps; ++k) {
          plot(px + (x - px) * k / std::max(1, steps), py + (y - py) * k / std::max(1, steps), s);
        }
      } else {
        plot(x, y, s);
      }
      px = x;
      py = y;
    }
  }
  auto out = open_image(path);
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace ctap
