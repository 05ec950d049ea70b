#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "jocor/error.hpp"
#include "jocor/trainers.hpp"

namespace jocor {

inline constexpr const char* kCsvHeader =
    "epoch,trainer,repeat,test_acc_net1,test_acc_net2,label_precision,keep_rate,lr,mean_joint_loss";

/// Fixed, locale-independent decimal formatting for metric files.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string csv_row(const EpochRecord& r, const std::string& trainer, int repeat) {
    std::string s = std::to_string(r.epoch) + "," + trainer + "," + std::to_string(repeat) + ",";
    s += r.test_accuracy[0] ? format_number(*r.test_accuracy[0]) : "";
    s += ",";
    s += r.test_accuracy[1] ? format_number(*r.test_accuracy[1]) : "";
    s += "," + format_number(r.label_precision) + "," + format_number(r.keep_rate) + "," +
         format_number(r.learning_rate) + "," + format_number(r.mean_joint_loss);
    return s;
}

/// Appends rows as epochs finish, so a run that aborts leaves its completed epochs on disk.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::string trainer, int repeat)
        : out_(path, std::ios::trunc), trainer_(std::move(trainer)), repeat_(repeat) {
        if (!out_) throw ConfigError("cannot write " + path);
        out_ << kCsvHeader << '\n' << std::flush;
    }

    void write(const EpochRecord& r) { out_ << csv_row(r, trainer_, repeat_) << '\n' << std::flush; }

private:
    std::ofstream out_;
    std::string trainer_;
    int repeat_;
};

inline void emit_csv(const std::string& path, const std::vector<EpochRecord>& records, const std::string& trainer,
                     int repeat) {
    CsvWriter w(path, trainer, repeat);
    for (const auto& r : records) w.write(r);
}

struct CsvRow {
    EpochRecord record;
    std::string trainer;
    int repeat = 0;
};

inline std::vector<CsvRow> parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw DataError("metrics CSV: missing or unexpected header");
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != 9) throw DataError("metrics CSV: expected 9 columns in '" + line + "'");
        auto num = [](const std::string& c) { return std::stod(c); };
        CsvRow row;
        row.record.epoch = std::stoi(cells[0]);
        row.trainer = cells[1];
        row.repeat = std::stoi(cells[2]);
        if (!cells[3].empty()) row.record.test_accuracy[0] = num(cells[3]);
        if (!cells[4].empty()) row.record.test_accuracy[1] = num(cells[4]);
        row.record.label_precision = num(cells[5]);
        row.record.keep_rate = num(cells[6]);
        row.record.learning_rate = num(cells[7]);
        row.record.mean_joint_loss = num(cells[8]);
        rows.push_back(std::move(row));
    }
    return rows;
}

/// One curve per trainer: per-epoch mean over repeats and the matching standard deviation.
struct Curve {
    std::string trainer;
    std::vector<double> mean;
    std::vector<double> std;
};

/// Mean and population standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - mean) * (x - mean);
    return {mean, std::sqrt(sq / static_cast<double>(xs.size()))};
}

namespace detail {

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    return colors[i % (sizeof colors / sizeof *colors)];
}

inline void svg_panel(std::ostream& out, const std::vector<Curve>& curves, double top, const std::string& title,
                      const std::string& y_label, const std::string& css_class) {
    constexpr double left = 70, width = 620, height = 240;
    std::size_t epochs = 1;
    for (const auto& c : curves) epochs = std::max(epochs, c.mean.size());
    auto px = [&](std::size_t i) { return left + (epochs > 1 ? width * static_cast<double>(i) / (epochs - 1) : 0.0); };
    auto py = [&](double v) { return top + height * (1.0 - std::clamp(v, 0.0, 1.0)); };

    out << "<text x=\"" << left + width / 2 << "\" y=\"" << top - 10 << "\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double v = k / 5.0;
        out << "<line x1=\"" << left - 4 << "\" y1=\"" << py(v) << "\" x2=\"" << left << "\" y2=\"" << py(v)
            << "\" stroke=\"#333\"/><text x=\"" << left - 8 << "\" y=\"" << py(v) + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << k * 20 << "</text>\n";
    }
    for (int k = 0; k <= 5; ++k) {
        const auto i = static_cast<std::size_t>(std::lround((epochs - 1) * k / 5.0));
        out << "<text x=\"" << px(i) << "\" y=\"" << top + height + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
            << i + 1 << "</text>\n";
    }
    out << "<text x=\"" << left + width / 2 << "\" y=\"" << top + height + 34
        << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
    out << "<text x=\"" << 18 << "\" y=\"" << top + height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
        << "transform=\"rotate(-90 18 " << top + height / 2 << ")\">" << y_label << "</text>\n";

    for (std::size_t c = 0; c < curves.size(); ++c) {
        const Curve& curve = curves[c];
        if (curve.mean.empty()) continue;
        const bool banded = std::any_of(curve.std.begin(), curve.std.end(), [](double s) { return s > 0.0; });
        if (banded) {
            out << "<polygon class=\"" << css_class << "-band\" fill=\"" << palette(c) << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
            for (std::size_t i = 0; i < curve.mean.size(); ++i) out << px(i) << "," << py(curve.mean[i] + curve.std[i]) << " ";
            for (std::size_t i = curve.mean.size(); i-- > 0;) out << px(i) << "," << py(curve.mean[i] - curve.std[i]) << " ";
            out << "\"/>\n";
        }
        out << "<polyline class=\"" << css_class << "\" data-trainer=\"" << curve.trainer << "\" fill=\"none\" stroke=\""
            << palette(c) << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < curve.mean.size(); ++i) out << px(i) << "," << py(curve.mean[i]) << " ";
        out << "\"/>\n";
    }
}

}  // namespace detail

/// Two stacked panels (test accuracy, label precision) with a shared legend.
inline std::string render_svg(const std::vector<Curve>& accuracy, const std::vector<Curve>& precision) {
    std::ostringstream out;
    out.precision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"860\" height=\"680\" font-family=\"sans-serif\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    detail::svg_panel(out, accuracy, 40, "Test accuracy vs. epochs", "test accuracy (%)", "accuracy");
    detail::svg_panel(out, precision, 370, "Label precision vs. epochs", "label precision (%)", "precision");
    for (std::size_t c = 0; c < accuracy.size(); ++c) {
        const double y = 60 + 20 * static_cast<double>(c);
        out << "<line x1=\"705\" y1=\"" << y << "\" x2=\"725\" y2=\"" << y << "\" stroke=\"" << detail::palette(c)
            << "\" stroke-width=\"2\"/><text x=\"730\" y=\"" << y + 4 << "\" font-size=\"12\">" << accuracy[c].trainer
            << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

inline void emit_svg(const std::string& path, const std::vector<Curve>& accuracy, const std::vector<Curve>& precision) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out << render_svg(accuracy, precision);
}

}  // namespace jocor
