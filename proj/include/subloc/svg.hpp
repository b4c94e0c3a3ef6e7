// Hand-rolled SVG line charts: fixed canvas, optional log-scale y axis,
// deterministic text output, no external plotting dependency.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace subloc {

class LinePlot {
   public:
    LinePlot(std::string title, std::string xlabel, std::string ylabel, bool log_y = false)
        : title_(std::move(title)),
          xlabel_(std::move(xlabel)),
          ylabel_(std::move(ylabel)),
          log_y_(log_y) {}

    void add(const std::string& label, const std::vector<double>& xs,
             const std::vector<double>& ys) {
        if (xs.size() != ys.size()) throw std::invalid_argument("LinePlot: length mismatch");
        series_.push_back({label, xs, ys});
    }

    std::string render() const {
        double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
        bool any = false;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                const double y = transform(s.ys[i]);
                if (!std::isfinite(s.xs[i]) || !std::isfinite(y)) continue;
                if (!any) {
                    x_lo = x_hi = s.xs[i];
                    y_lo = y_hi = y;
                    any = true;
                } else {
                    x_lo = std::min(x_lo, s.xs[i]);
                    x_hi = std::max(x_hi, s.xs[i]);
                    y_lo = std::min(y_lo, y);
                    y_hi = std::max(y_hi, y);
                }
            }
        if (x_hi - x_lo < 1e-300) x_hi = x_lo + 1.0;
        if (y_hi - y_lo < 1e-12) {
            y_lo -= 0.5;
            y_hi += 0.5;
        }

        std::string out;
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"480\" "
               "viewBox=\"0 0 760 480\">\n";
        out += "<rect width=\"760\" height=\"480\" fill=\"white\"/>\n";
        out += text(380, 24, title_, 16, "middle");
        out += text(380, 470, xlabel_, 12, "middle");
        out += "<g transform=\"translate(18,250) rotate(-90)\">" +
               text(0, 0, ylabel_ + (log_y_ ? " (log scale)" : ""), 12, "middle", false) + "</g>\n";
        out += "<rect x=\"70\" y=\"40\" width=\"640\" height=\"390\" fill=\"none\" "
               "stroke=\"#888\"/>\n";

        for (int i = 0; i <= 5; ++i) {
            const double fx = i / 5.0;
            const double px = 70.0 + 640.0 * fx;
            const double vx = x_lo + (x_hi - x_lo) * fx;
            out += line(px, 430, px, 434, "#555");
            out += text(px, 448, num(vx), 10, "middle");
            const double fy = i / 5.0;
            const double py = 430.0 - 390.0 * fy;
            const double vy = y_lo + (y_hi - y_lo) * fy;
            out += line(66, py, 70, py, "#555");
            out += text(62, py + 3, log_y_ ? num(std::pow(10.0, vy)) : num(vy), 10, "end");
        }

        for (std::size_t si = 0; si < series_.size(); ++si) {
            const auto& s = series_[si];
            const std::string color = palette(si);
            std::string points;
            bool open = false;
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                const double ty = transform(s.ys[i]);
                if (!std::isfinite(s.xs[i]) || !std::isfinite(ty)) {
                    if (open) {
                        out += polyline(points, color);
                        points.clear();
                        open = false;
                    }
                    continue;
                }
                const double px = 70.0 + 640.0 * (s.xs[i] - x_lo) / (x_hi - x_lo);
                const double py = 430.0 - 390.0 * (ty - y_lo) / (y_hi - y_lo);
                points += coord(px) + "," + coord(py) + " ";
                open = true;
            }
            if (open) out += polyline(points, color);
            const double ly = 56.0 + 16.0 * si;
            out += line(590, ly - 4, 614, ly - 4, color);
            out += text(620, ly, s.label, 11, "start");
        }
        out += "</svg>\n";
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("LinePlot: cannot write " + path);
        f << render();
    }

   private:
    struct Series {
        std::string label;
        std::vector<double> xs, ys;
    };

    double transform(double y) const {
        if (!log_y_) return y;
        return y > 0.0 ? std::log10(y) : std::numeric_limits<double>::quiet_NaN();
    }

    static std::string palette(std::size_t i) {
        static const char* colors[] = {"#1f6fb2", "#c23b22", "#2e8b57",
                                       "#8a2be2", "#d2691e", "#374048"};
        return colors[i % 6];
    }

    static std::string coord(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return buf;
    }

    static std::string num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4g", v);
        return buf;
    }

    static std::string line(double x1, double y1, double x2, double y2,
                            const std::string& color) {
        return "<line x1=\"" + coord(x1) + "\" y1=\"" + coord(y1) + "\" x2=\"" + coord(x2) +
               "\" y2=\"" + coord(y2) + "\" stroke=\"" + color + "\"/>\n";
    }

    static std::string polyline(const std::string& points, const std::string& color) {
        return "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.6\" points=\"" +
               points + "\"/>\n";
    }

    static std::string text(double x, double y, const std::string& content, int size,
                            const std::string& anchor, bool newline = true) {
        std::string t = "<text x=\"" + coord(x) + "\" y=\"" + coord(y) +
                        "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) +
                        "\" text-anchor=\"" + anchor + "\">" + escape(content) + "</text>";
        if (newline) t += "\n";
        return t;
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char ch : s) {
            if (ch == '&')
                out += "&amp;";
            else if (ch == '<')
                out += "&lt;";
            else if (ch == '>')
                out += "&gt;";
            else
                out += ch;
        }
        return out;
    }

    std::string title_, xlabel_, ylabel_;
    bool log_y_ = false;
    std::vector<Series> series_;
};

}  // namespace subloc
