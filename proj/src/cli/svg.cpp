#include "nysgrad/cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "nysgrad/error.hpp"

namespace nysgrad::cli {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// Round-ish tick positions covering [lo, hi].
std::vector<double> linear_ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push_back(t);
    return ticks;
}

}  // namespace

std::string render_svg(const LinePlot& plot) {
    constexpr double width = 720, height = 440;
    constexpr double left = 80, right = 200, top = 40, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;

    auto ty = [&](double y) { return plot.log_y ? std::log10(y) : y; };
    auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!plot.log_y || y > 0); };

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : plot.series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, ty(s.y[i]));
            ymax = std::max(ymax, ty(s.y[i]));
        }
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return top + (1.0 - (ty(y) - ymin) / (ymax - ymin)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(plot.title) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (double t : linear_ticks(xmin, xmax)) {
        o << "<line x1=\"" << num(sx(t)) << "\" x2=\"" << num(sx(t)) << "\" y1=\"" << top + ph << "\" y2=\""
          << top + ph + 5 << "\" stroke=\"black\"/>";
        o << "<text x=\"" << num(sx(t)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
          << tick_label(t) << "</text>\n";
    }
    for (double t : linear_ticks(ymin, ymax)) {
        const double py = top + (1.0 - (t - ymin) / (ymax - ymin)) * ph;
        o << "<line x1=\"" << left - 5 << "\" x2=\"" << left + pw << "\" y1=\"" << num(py) << "\" y2=\"" << num(py)
          << "\" stroke=\"#dddddd\"/>";
        o << "<text x=\"" << left - 8 << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">"
          << tick_label(plot.log_y ? std::pow(10.0, t) : t) << "</text>\n";
    }
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">"
      << xml_escape(plot.x_label) << "</text>\n";
    o << "<text transform=\"translate(20," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(plot.y_label) << (plot.log_y ? " (log)" : "") << "</text>\n";

    for (std::size_t si = 0; si < plot.series.size(); ++si) {
        const auto& s = plot.series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        std::string path;
        bool pen_down = false;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!usable(s.x[i], s.y[i])) {
                pen_down = false;
                continue;
            }
            path += (pen_down ? " L" : " M") + num(sx(s.x[i])) + " " + num(sy(s.y[i]));
            pen_down = true;
            if (plot.markers)
                o << "<circle cx=\"" << num(sx(s.x[i])) << "\" cy=\"" << num(sy(s.y[i])) << "\" r=\"3\" fill=\""
                  << color << "\"/>\n";
        }
        if (plot.lines && !path.empty())
            o << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        const double ly = top + 10 + 18.0 * static_cast<double>(si);
        o << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << num(ly) << "\" y2=\""
          << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
        o << "<text x=\"" << left + pw + 38 << "\" y=\"" << num(ly + 4) << "\" font-size=\"11\">"
          << xml_escape(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string render_svg(const std::vector<Heatmap>& panels, const std::string& title) {
    constexpr double cell_area = 240, gap = 30, top = 50, left = 20;
    double scale = 0.0;
    for (const auto& p : panels) scale = std::max(scale, p.values.cwiseAbs().maxCoeff());
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;

    const double width = left * 2 + static_cast<double>(panels.size()) * (cell_area + gap);
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(top + cell_area + 40) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(title) << " (color scale +/-" << tick_label(scale) << ")</text>\n";
    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const Matrix& m = panels[pi].values;
        const double x0 = left + static_cast<double>(pi) * (cell_area + gap);
        const double cw = cell_area / static_cast<double>(std::max<Index>(m.cols(), 1));
        const double ch = cell_area / static_cast<double>(std::max<Index>(m.rows(), 1));
        o << "<text x=\"" << num(x0 + cell_area / 2) << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
          << xml_escape(panels[pi].title) << "</text>\n";
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j) {
                double t = m(i, j) / scale;
                if (!std::isfinite(t)) t = 0.0;
                t = std::clamp(t, -1.0, 1.0);
                const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
                const int r = t >= 0 ? 255 : fade, b = t >= 0 ? fade : 255;
                o << "<rect x=\"" << num(x0 + static_cast<double>(j) * cw) << "\" y=\""
                  << num(top + static_cast<double>(i) * ch) << "\" width=\"" << num(cw + 0.05) << "\" height=\""
                  << num(ch + 0.05) << "\" fill=\"rgb(" << r << "," << fade << "," << b << ")\"/>\n";
            }
        }
    }
    o << "</svg>\n";
    return o.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace nysgrad::cli
