#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace downgen {

/// Named per-pixel map, [nx * ny] with lat fastest.
using HeatmapPanel = std::pair<std::string, std::vector<double>>;

/// Static SVG with one heatmap per panel side by side on a shared colour
/// scale. Latitude increases upward. Non-finite cells are drawn grey.
std::string heatmap_svg(const std::string& title, const std::vector<HeatmapPanel>& panels, std::size_t nx,
                        std::size_t ny);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace downgen
