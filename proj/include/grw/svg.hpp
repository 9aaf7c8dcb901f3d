#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "grw/error.hpp"

namespace grw {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double pearson_r = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    LinearFit fit;
    const std::size_t n = xs.size();
    if (n < 2) return fit;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.intercept = my - fit.slope * mx;
    fit.pearson_r = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
    return fit;
}

namespace svg {

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct Frame {
    double width = 640, height = 420;
    double left = 70, right = 20, top = 50, bottom = 50;
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

    void fit(const std::vector<double>& xs, const std::vector<double>& ys) {
        if (xs.empty()) return;
        x_min = x_max = xs[0];
        y_min = y_max = ys[0];
        for (std::size_t i = 0; i < xs.size(); ++i) {
            x_min = std::min(x_min, xs[i]);
            x_max = std::max(x_max, xs[i]);
            y_min = std::min(y_min, ys[i]);
            y_max = std::max(y_max, ys[i]);
        }
        if (x_max == x_min) x_max = x_min + 1.0;
        if (y_max == y_min) y_max = y_min + 1.0;
        double pad = 0.05 * (y_max - y_min);
        y_min -= pad;
        y_max += pad;
    }

    double px(double x) const {
        return left + (x - x_min) / (x_max - x_min) * (width - left - right);
    }
    double py(double y) const {
        return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);
    }
};

inline void open_chart(std::ostream& os, const Frame& f, const std::string& title,
                       const std::string& xlabel, const std::string& ylabel) {
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
       << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height << "\">\n"
       << "<rect width=\"" << f.width << "\" height=\"" << f.height
       << "\" fill=\"white\"/>\n"
       << "<text x=\"" << f.width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"15\">"
       << escape(title) << "</text>\n";
    // axes
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\""
       << f.width - f.right << "\" y2=\"" << f.height - f.bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left
       << "\" y2=\"" << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    // extreme tick labels
    os << "<text x=\"" << f.left << "\" y=\"" << f.height - f.bottom + 18
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << num(f.x_min) << "</text>\n";
    os << "<text x=\"" << f.width - f.right << "\" y=\"" << f.height - f.bottom + 18
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << num(f.x_max) << "</text>\n";
    os << "<text x=\"" << f.left - 6 << "\" y=\"" << f.height - f.bottom
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << num(f.y_min) << "</text>\n";
    os << "<text x=\"" << f.left - 6 << "\" y=\"" << f.top + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << num(f.y_max) << "</text>\n";
    os << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\"" << f.height - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
       << escape(xlabel) << "</text>\n";
    os << "<text x=\"18\" y=\"" << (f.top + f.height - f.bottom) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 18 "
       << (f.top + f.height - f.bottom) / 2 << ")\">" << escape(ylabel) << "</text>\n";
}

} // namespace svg

inline void write_line_chart_svg(const std::string& path, const std::string& title,
                                 const std::string& xlabel, const std::string& ylabel,
                                 const std::vector<double>& xs,
                                 const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ShapeError("write_line_chart_svg: length mismatch");
    std::ofstream os(path);
    if (!os) throw StateError("write_line_chart_svg: cannot open " + path);
    svg::Frame f;
    f.fit(xs, ys);
    svg::open_chart(os, f, title, xlabel, ylabel);
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i)
        os << svg::num(f.px(xs[i])) << ',' << svg::num(f.py(ys[i])) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i)
        os << "<circle cx=\"" << svg::num(f.px(xs[i])) << "\" cy=\"" << svg::num(f.py(ys[i]))
           << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    os << "</svg>\n";
}

inline void write_scatter_svg(const std::string& path, const std::string& title,
                              const std::string& xlabel, const std::string& ylabel,
                              const std::vector<double>& xs, const std::vector<double>& ys,
                              const LinearFit& fit) {
    if (xs.size() != ys.size()) throw ShapeError("write_scatter_svg: length mismatch");
    std::ofstream os(path);
    if (!os) throw StateError("write_scatter_svg: cannot open " + path);
    svg::Frame f;
    f.fit(xs, ys);
    svg::open_chart(os, f, title, xlabel, ylabel);
    for (std::size_t i = 0; i < xs.size(); ++i)
        os << "<circle cx=\"" << svg::num(f.px(xs[i])) << "\" cy=\"" << svg::num(f.py(ys[i]))
           << "\" r=\"3\" fill=\"#d62728\" fill-opacity=\"0.7\"/>\n";
    // fitted line clipped to the x range
    double y0 = fit.intercept + fit.slope * f.x_min;
    double y1 = fit.intercept + fit.slope * f.x_max;
    os << "<line x1=\"" << svg::num(f.px(f.x_min)) << "\" y1=\"" << svg::num(f.py(y0))
       << "\" x2=\"" << svg::num(f.px(f.x_max)) << "\" y2=\"" << svg::num(f.py(y1))
       << "\" stroke=\"#2ca02c\" stroke-width=\"2\" stroke-dasharray=\"6 3\"/>\n";
    os << "</svg>\n";
}

} // namespace grw
