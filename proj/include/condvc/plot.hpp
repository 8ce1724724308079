#pragma once

// Rate-distortion plots: bpp on x, PSNR (dB) on y, one marked line per curve.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "condvc/eval.hpp"

namespace condvc {

struct PlotOptions {
  int width = 800;
  int height = 520;
  std::string title = "Rate-distortion";
};

// SVG document; each legend item is a <g class="legend-entry">.
std::string render_rd_svg(const std::vector<RDCurve>& curves, const PlotOptions& options = {});

// Interleaved 8-bit RGB pixels, width * height * 3 bytes.
std::vector<uint8_t> render_rd_raster(const std::vector<RDCurve>& curves, const PlotOptions& options = {});

// Format by extension: .svg or .png. Output depends only on the inputs.
void plot_rd(const std::vector<RDCurve>& curves, const std::filesystem::path& out_path,
             const PlotOptions& options = {});

}  // namespace condvc
