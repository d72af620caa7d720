#include "unlearn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "unlearn/io_util.hpp"

namespace unlearn {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    fields.push_back(current);
    return fields;
}

double parse_double_field(const std::string& field, const std::string& file, long line) {
    std::size_t consumed = 0;
    double value = 0.0;
    try {
        value = std::stod(field, &consumed);
    } catch (const std::exception&) {
        throw ParseError(file, line, "invalid number '" + field + "'");
    }
    if (consumed != field.size()) throw ParseError(file, line, "invalid number '" + field + "'");
    return value;
}

}  // namespace

std::vector<StepLog> read_step_log_csv(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::istringstream in(content);
    std::string line;
    long line_number = 0;

    if (!std::getline(in, line)) throw ParseError(path.string(), 1, "empty file");
    ++line_number;
    if (line != step_log_csv_header()) {
        throw ParseError(path.string(), 1, "unexpected header '" + line + "'");
    }

    std::vector<StepLog> logs;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 9) {
            throw ParseError(path.string(), line_number,
                             "expected 9 fields, got " + std::to_string(fields.size()));
        }
        StepLog log;
        log.step = static_cast<int>(parse_double_field(fields[0], path.string(), line_number));
        log.forget_loss = parse_double_field(fields[1], path.string(), line_number);
        log.retain_loss = parse_double_field(fields[2], path.string(), line_number);
        log.cos_fr = parse_double_field(fields[3], path.string(), line_number);
        log.cos_cf = parse_double_field(fields[4], path.string(), line_number);
        log.cos_cr = parse_double_field(fields[5], path.string(), line_number);
        log.conflict_fraction = parse_double_field(fields[6], path.string(), line_number);
        if (!fields[7].empty()) {
            log.forget_acc = parse_double_field(fields[7], path.string(), line_number);
        }
        if (!fields[8].empty()) {
            log.retain_acc = parse_double_field(fields[8], path.string(), line_number);
        }
        logs.push_back(std::move(log));
    }
    if (logs.empty()) throw ParseError(path.string(), line_number, "no data rows");
    return logs;
}

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kMarginLeft = 64.0;
constexpr double kMarginRight = 16.0;
constexpr double kMarginTop = 36.0;
constexpr double kMarginBottom = 44.0;

std::string fmt2(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return std::string(buf);
}

std::string fmt_tick(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", x);
    return std::string(buf);
}

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;

    double to_x(double v) const {
        return kMarginLeft + (v - lo) / (hi - lo) * (kWidth - kMarginLeft - kMarginRight);
    }
    double to_y(double v) const {
        return kHeight - kMarginBottom -
               (v - lo) / (hi - lo) * (kHeight - kMarginTop - kMarginBottom);
    }
};

AxisRange padded_range(double lo, double hi) {
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = (hi - lo) * 0.05;
    return AxisRange{lo - pad, hi + pad};
}

struct Series {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points;
};

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
    double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
    bool first = true;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (first) {
                x_lo = x_hi = x;
                y_lo = y_hi = y;
                first = false;
            }
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    AxisRange x_axis = padded_range(x_lo, x_hi);
    AxisRange y_axis = padded_range(y_lo, y_hi);

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(kWidth) + "\" height=\"" +
           fmt2(kHeight) + "\" viewBox=\"0 0 " + fmt2(kWidth) + " " + fmt2(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt2(kWidth / 2) +
           "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">" +
           title + "</text>\n";

    // axes
    const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    svg += "<line x1=\"" + fmt2(x0) + "\" y1=\"" + fmt2(y0) + "\" x2=\"" + fmt2(x1) + "\" y2=\"" +
           fmt2(y0) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt2(x0) + "\" y1=\"" + fmt2(y0) + "\" x2=\"" + fmt2(x0) + "\" y2=\"" +
           fmt2(y1) + "\" stroke=\"black\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        const double fx = x_axis.lo + (x_axis.hi - x_axis.lo) * i / 4.0;
        const double px = x_axis.to_x(fx);
        svg += "<line x1=\"" + fmt2(px) + "\" y1=\"" + fmt2(y0) + "\" x2=\"" + fmt2(px) +
               "\" y2=\"" + fmt2(y0 + 4) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt2(px) + "\" y=\"" + fmt2(y0 + 18) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
               fmt_tick(fx) + "</text>\n";

        const double fy = y_axis.lo + (y_axis.hi - y_axis.lo) * i / 4.0;
        const double py = y_axis.to_y(fy);
        svg += "<line x1=\"" + fmt2(x0 - 4) + "\" y1=\"" + fmt2(py) + "\" x2=\"" + fmt2(x0) +
               "\" y2=\"" + fmt2(py) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt2(x0 - 8) + "\" y=\"" + fmt2(py + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
               fmt_tick(fy) + "</text>\n";
    }
    svg += "<text x=\"" + fmt2((x0 + x1) / 2) + "\" y=\"" + fmt2(kHeight - 8) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" + x_label +
           "</text>\n";
    svg += "<text x=\"14\" y=\"" + fmt2((y0 + y1) / 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 14 " +
           fmt2((y0 + y1) / 2) + ")\">" + y_label + "</text>\n";

    double legend_y = kMarginTop + 6;
    for (const auto& s : series) {
        std::string path;
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            path += (i == 0 ? "M" : "L");
            path += fmt2(x_axis.to_x(s.points[i].first)) + " " +
                    fmt2(y_axis.to_y(s.points[i].second));
        }
        svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + s.color +
               "\" stroke-width=\"1.5\"/>\n";
        svg += "<line x1=\"" + fmt2(x1 - 120) + "\" y1=\"" + fmt2(legend_y) + "\" x2=\"" +
               fmt2(x1 - 100) + "\" y2=\"" + fmt2(legend_y) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + fmt2(x1 - 94) + "\" y=\"" + fmt2(legend_y + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
        legend_y += 16;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace

std::string loss_chart_svg(const RunSeries& run) {
    Series retain{"retain loss", "#1f77b4", {}};
    Series forget{"forget loss", "#d62728", {}};
    for (const auto& log : run.logs) {
        retain.points.emplace_back(log.step, log.retain_loss);
        forget.points.emplace_back(log.step, log.forget_loss);
    }
    return line_chart_svg("Loss dynamics: " + run.name, "step", "loss (nats)", {retain, forget});
}

std::string cosine_chart_svg(const RunSeries& run) {
    Series fr{"cos(forget, retain)", "#2ca02c", {}};
    Series cf{"cos(final, forget)", "#d62728", {}};
    Series cr{"cos(final, retain)", "#1f77b4", {}};
    for (const auto& log : run.logs) {
        fr.points.emplace_back(log.step, log.cos_fr);
        cf.points.emplace_back(log.step, log.cos_cf);
        cr.points.emplace_back(log.step, log.cos_cr);
    }
    return line_chart_svg("Gradient geometry: " + run.name, "step", "cosine", {fr, cf, cr});
}

RunPoint final_point(const RunSeries& run) {
    for (auto it = run.logs.rbegin(); it != run.logs.rend(); ++it) {
        if (it->forget_acc && it->retain_acc) {
            return RunPoint{run.name, *it->forget_acc, *it->retain_acc, false};
        }
    }
    throw InputError("run '" + run.name + "' has no logged probe accuracies");
}

void mark_pareto_points(std::vector<RunPoint>& points) {
    for (auto& p : points) {
        bool dominated = false;
        for (const auto& other : points) {
            const bool no_worse =
                other.forget_acc <= p.forget_acc && other.retain_acc >= p.retain_acc;
            const bool strictly_better =
                other.forget_acc < p.forget_acc || other.retain_acc > p.retain_acc;
            if (no_worse && strictly_better) {
                dominated = true;
                break;
            }
        }
        p.pareto = !dominated;
    }
}

std::string tradeoff_scatter_svg(const std::vector<RunPoint>& points) {
    AxisRange x_axis = padded_range(0.0, 1.0);
    AxisRange y_axis = padded_range(0.0, 1.0);

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(kWidth) + "\" height=\"" +
           fmt2(kHeight) + "\" viewBox=\"0 0 " + fmt2(kWidth) + " " + fmt2(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt2(kWidth / 2) +
           "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" "
           "text-anchor=\"middle\">Forget / retain trade-off</text>\n";

    const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    svg += "<line x1=\"" + fmt2(x0) + "\" y1=\"" + fmt2(y0) + "\" x2=\"" + fmt2(x1) + "\" y2=\"" +
           fmt2(y0) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt2(x0) + "\" y1=\"" + fmt2(y0) + "\" x2=\"" + fmt2(x0) + "\" y2=\"" +
           fmt2(y1) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double f = i / 4.0;
        svg += "<text x=\"" + fmt2(x_axis.to_x(f)) + "\" y=\"" + fmt2(y0 + 18) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
               fmt_tick(f) + "</text>\n";
        svg += "<text x=\"" + fmt2(x0 - 8) + "\" y=\"" + fmt2(y_axis.to_y(f) + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
               fmt_tick(f) + "</text>\n";
    }
    svg += "<text x=\"" + fmt2((x0 + x1) / 2) + "\" y=\"" + fmt2(kHeight - 8) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">forget accuracy "
           "(lower is better)</text>\n";
    svg += "<text x=\"14\" y=\"" + fmt2((y0 + y1) / 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 14 " +
           fmt2((y0 + y1) / 2) + ")\">retain accuracy (higher is better)</text>\n";

    for (const auto& p : points) {
        const double px = x_axis.to_x(p.forget_acc);
        const double py = y_axis.to_y(p.retain_acc);
        if (p.pareto) {
            svg += "<circle cx=\"" + fmt2(px) + "\" cy=\"" + fmt2(py) +
                   "\" r=\"7\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"2\"/>\n";
        }
        svg += "<circle cx=\"" + fmt2(px) + "\" cy=\"" + fmt2(py) +
               "\" r=\"4\" fill=\"#1f77b4\"/>\n";
        svg += "<text x=\"" + fmt2(px + 8) + "\" y=\"" + fmt2(py - 6) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + p.name +
               (p.pareto ? " (pareto)" : "") + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string cosine_summary_csv(const std::vector<RunSeries>& runs) {
    std::string out = "run,mean_cos_fr,mean_cos_cf,mean_cos_cr\n";
    for (const auto& run : runs) {
        double fr = 0.0, cf = 0.0, cr = 0.0;
        for (const auto& log : run.logs) {
            fr += log.cos_fr;
            cf += log.cos_cf;
            cr += log.cos_cr;
        }
        const double n = static_cast<double>(run.logs.size());
        out += run.name + "," + format_g9(fr / n) + "," + format_g9(cf / n) + "," +
               format_g9(cr / n) + "\n";
    }
    return out;
}

}  // namespace unlearn
