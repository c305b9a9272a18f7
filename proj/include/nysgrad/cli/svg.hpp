#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nysgrad/linop.hpp"

namespace nysgrad::cli {

struct Series {
    std::string name;
    std::vector<double> x{};
    std::vector<double> y{};
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    bool lines = true;
    bool markers = false;
    std::vector<Series> series{};
};

struct Heatmap {
    std::string title;
    Matrix values;
};

/// Non-finite points are skipped; with log_y, so are non-positive ones.
std::string render_svg(const LinePlot& plot);

/// Panels side by side on a shared symmetric color scale (blue < 0 < red).
std::string render_svg(const std::vector<Heatmap>& panels, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace nysgrad::cli
