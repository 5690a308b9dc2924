#include "rlab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef RLAB_VERSION
#define RLAB_VERSION "unknown"
#endif

namespace rlab {

std::string format_number(double x, Precision p) {
    char buf[64];
    const auto r = p == Precision::Single ? std::to_chars(buf, buf + sizeof buf, static_cast<float>(x))
                                          : std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

std::string trajectory_csv(const TrajectoryRecord& rec, Precision p) {
    rec.check_lengths();
    std::string out = trajectory_header;
    out += '\n';
    for (std::size_t i = 0; i < rec.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += format_number(rec.loss[i], p);
        out += ',';
        if (!rec.grad_inf.empty()) out += format_number(rec.grad_inf[i], p);
        out += ',';
        out += format_number(rec.state_inf[i], p);
        out += ',';
        if (!rec.sharpness.empty() && rec.sharpness[i]) out += format_number(*rec.sharpness[i], p);
        out += ',';
        if (!rec.rel_l1.empty()) out += format_number(rec.rel_l1[i], p);
        out += '\n';
    }
    return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto c = line.find(',', start);
        out.push_back(line.substr(start, c == std::string::npos ? std::string::npos : c - start));
        if (c == std::string::npos) return out;
        start = c + 1;
    }
}

double parse_double(const std::string& s, std::size_t line) {
    double v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw std::runtime_error("trajectory csv line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

TrajectoryRecord parse_trajectory_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != trajectory_header)
        throw std::runtime_error("trajectory csv: unexpected header");
    TrajectoryRecord r;
    bool any_grad = false, any_sharp = false, any_rel = false;
    std::vector<std::string> grad, sharp, rel;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        const auto f = split(line);
        if (f.size() != 6) throw std::runtime_error("trajectory csv line " + std::to_string(n) + ": expected 6 fields");
        if (parse_double(f[0], n) != static_cast<double>(r.loss.size()))
            throw std::runtime_error("trajectory csv line " + std::to_string(n) + ": iterations out of order");
        r.loss.push_back(parse_double(f[1], n));
        r.state_inf.push_back(parse_double(f[3], n));
        grad.push_back(f[2]);
        sharp.push_back(f[4]);
        rel.push_back(f[5]);
        any_grad |= !f[2].empty();
        any_sharp |= !f[4].empty();
        any_rel |= !f[5].empty();
    }
    for (std::size_t i = 0; i < r.loss.size(); ++i) {
        if (any_grad) r.grad_inf.push_back(parse_double(grad[i], i + 2));
        if (any_rel) r.rel_l1.push_back(parse_double(rel[i], i + 2));
        if (any_sharp)
            r.sharpness.push_back(sharp[i].empty() ? std::nullopt : std::optional(parse_double(sharp[i], i + 2)));
    }
    return r;
}

void Table::add(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw std::logic_error("table " + name + ": row width mismatch");
    rows.push_back(std::move(row));
}

std::string Table::csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            const bool quote = cells[i].find_first_of(",\"\n") != std::string::npos;
            if (!quote) {
                out += cells[i];
                continue;
            }
            out += '"';
            for (char c : cells[i]) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        }
        out += '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
    return out;
}

const std::string& Table::lookup(const std::string& key_column, const std::string& key,
                                 const std::string& column) const {
    const auto col = [&](const std::string& c) {
        const auto it = std::find(columns.begin(), columns.end(), c);
        if (it == columns.end()) throw std::out_of_range("table " + name + ": no column " + c);
        return static_cast<std::size_t>(it - columns.begin());
    };
    const std::size_t k = col(key_column), c = col(column);
    for (const auto& r : rows)
        if (r[k] == key) return r[c];
    throw std::out_of_range("table " + name + ": no row with " + key_column + " = " + key);
}

Series iteration_series(const std::string& name, const std::vector<double>& values) {
    Series s{name, {}, {}};
    for (std::size_t i = 0; i < values.size(); ++i) {
        s.x.push_back(static_cast<double>(i));
        s.y.push_back(values[i]);
    }
    return s;
}

namespace {

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

std::string Chart::svg() const {
    constexpr double W = 720, H = 420, left = 70, right = 170, top = 40, bottom = 50;
    constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                       "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    auto usable = [&](double y) { return std::isfinite(y) && (!log_y || y > 0); };
    auto ty = [&](double y) { return log_y ? std::log10(y) : y; };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !usable(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    if (!(x0 <= x1)) x0 = 0, x1 = 1;
    if (!(y0 <= y1)) y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1 - (ty(y) - y0) / (y1 - y0)) * ph; };

    std::string o;
    o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"420\" font-family=\"sans-serif\" "
         "font-size=\"12\">\n";
    o += "<rect width=\"720\" height=\"420\" fill=\"white\"/>\n";
    o += "<text x=\"" + fixed(left) + "\" y=\"24\" font-size=\"14\">" + escape(title) + "</text>\n";
    o += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) + "\" height=\"" + fixed(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
        const double sx = left + pw * i / 4.0, sy = top + ph * (1 - i / 4.0);
        o += "<text x=\"" + fixed(sx) + "\" y=\"" + fixed(top + ph + 16) + "\" text-anchor=\"middle\">" + tick(fx) +
             "</text>\n";
        o += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(sy + 4) + "\" text-anchor=\"end\">" +
             tick(log_y ? std::pow(10.0, fy) : fy) + "</text>\n";
    }
    o += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(H - 12) + "\" text-anchor=\"middle\">" +
         escape(x_label) + "</text>\n";
    o += "<text x=\"16\" y=\"" + fixed(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fixed(top + ph / 2) + ")\">" + escape(y_label) + (log_y ? " (log)" : "") + "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = palette[k % std::size(palette)];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !usable(s.y[i])) continue;
            pts += fixed(px(s.x[i])) + "," + fixed(py(s.y[i])) + " ";
        }
        if (!pts.empty()) pts.pop_back();
        o += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1\" points=\"" + pts +
             "\"/>\n";
        const double ly = top + 14 + 16 * static_cast<double>(k);
        o += "<line x1=\"" + fixed(W - right + 10) + "\" y1=\"" + fixed(ly - 4) + "\" x2=\"" + fixed(W - right + 30) +
             "\" y2=\"" + fixed(ly - 4) + "\" stroke=\"" + colour + "\"/>\n";
        o += "<text x=\"" + fixed(W - right + 34) + "\" y=\"" + fixed(ly) + "\">" + escape(s.name) + "</text>\n";
    }
    o += "</svg>\n";
    return o;
}

const Table& ExperimentOutput::table(const std::string& name) const {
    for (const auto& t : tables)
        if (t.name == name) return t;
    throw std::out_of_range(experiment + ": no table " + name);
}

const NamedTrajectory& ExperimentOutput::trajectory(const std::string& name) const {
    for (const auto& t : trajectories)
        if (t.name == name) return t;
    throw std::out_of_range(experiment + ": no trajectory " + name);
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
    if (!f) throw std::runtime_error("error writing " + p.string());
}

}  // namespace

void write_bundle(const std::filesystem::path& dir, const ExperimentOutput& out, const Settings& settings,
                  double wall_seconds, bool svg) {
    std::filesystem::create_directories(dir);
    for (const auto& t : out.tables) write_file(dir / (t.name + ".csv"), t.csv());
    for (const auto& t : out.trajectories) write_file(dir / (t.name + ".csv"), trajectory_csv(t.record, t.precision));
    if (svg)
        for (const auto& c : out.charts) write_file(dir / (c.name + ".svg"), c.svg());

    std::string meta;
    auto kv = [&](const std::string& k, const std::string& v) { meta += k + " = " + v + "\n"; };
    kv("experiment", out.experiment);
    kv("version", RLAB_VERSION);
    kv("compiler", __VERSION__);
    kv("precision", settings.text("precision"));
    kv("seed", std::to_string(settings.seed("seed")));
    kv("wall_time_seconds", format_number(wall_seconds));
    for (const auto& [k, v] : out.facts) kv("result." + k, v);
    for (const auto& [k, v] : settings.flatten()) kv("config." + k, v);
    write_file(dir / "metadata.txt", meta);
    write_file(dir / "resolved.yaml", settings.to_yaml());
}

}  // namespace rlab
