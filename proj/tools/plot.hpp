#pragma once

#include <filesystem>
#include <vector>

namespace expdist::plot {

// Scalar field on an nx-by-ny lattice (row j = y index, drawn bottom-up).
// NaN cells are drawn grey. cyclic selects a periodic colour map for angles.
void write_heatmap(const std::filesystem::path& path, int nx, int ny, const std::vector<double>& values,
                   bool cyclic = false, int cell_pixels = 8);

// Polyline through (x, y) with point markers inside a framed box.
void write_curve(const std::filesystem::path& path, const std::vector<double>& x, const std::vector<double>& y,
                 int width = 480, int height = 320);

}  // namespace expdist::plot
