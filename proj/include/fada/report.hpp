#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fada/experiment.hpp"

namespace fada {

struct AggregateRow {
    std::string task;  // capped runs carry a "/cap<N>" suffix
    std::string method;
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single run
    std::size_t count = 0;
    double min = 0.0, max = 0.0;
};

struct AggregateReport {
    std::vector<AggregateRow> rows;
    std::vector<std::string> flags;
};

inline std::string report_task_label(const json& rec) {
    std::string task = rec.at("task").get<std::string>();
    if (rec.value("capped", false)) task += "/cap" + std::to_string(rec.at("spec").at("source_cap").get<std::size_t>());
    return task;
}

inline std::vector<RunRecord> load_records(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path root(dir);
    if (fs::is_directory(root / "records")) root /= "records";
    if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_regular_file() && e.path().extension() == ".json") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    std::vector<RunRecord> out;
    for (const auto& p : paths) out.push_back(read_record(p));
    return out;
}

inline AggregateReport aggregate(const std::vector<RunRecord>& records) {
    if (records.empty()) throw std::runtime_error("no run records to aggregate");
    std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> cells;
    for (const auto& r : records) {
        const double acc = r.accuracy();
        if (!(acc >= 0.0 && acc <= 1.0)) throw std::runtime_error("record accuracy outside [0,1]");
        cells[{report_task_label(r.data), r.data.at("method").get<std::string>(),
               r.data.at("n_shot").get<std::size_t>()}]
            .push_back(acc);
    }
    AggregateReport rep;
    for (const auto& [key, v] : cells) {
        AggregateRow row{std::get<0>(key), std::get<1>(key), std::get<2>(key)};
        row.count = v.size();
        double sum = 0.0;
        for (double x : v) sum += x;
        row.mean = sum / double(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - row.mean) * (x - row.mean);
        row.std = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
        row.min = *std::min_element(v.begin(), v.end());
        row.max = *std::max_element(v.begin(), v.end());
        rep.rows.push_back(row);
    }
    // Anomaly: FADA accuracy should not fall from n=1 to n=7.
    std::set<std::string> tasks;
    for (const auto& r : rep.rows) tasks.insert(r.task);
    for (const auto& t : tasks) {
        const AggregateRow *n1 = nullptr, *n7 = nullptr;
        for (const auto& r : rep.rows) {
            if (r.task != t || r.method != "FADA") continue;
            if (r.n == 1) n1 = &r;
            if (r.n == 7) n7 = &r;
        }
        if (n1 && n7 && n7->mean < n1->mean) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "monotone-trend: %s FADA mean at n=7 (%.4f) < n=1 (%.4f)", t.c_str(),
                          n7->mean, n1->mean);
            rep.flags.push_back(buf);
        }
    }
    return rep;
}

inline std::string to_csv(const AggregateReport& rep) {
    std::string out = "task,method,n,mean,std,count\n";
    char buf[96];
    for (const auto& r : rep.rows) {
        out += r.task + "," + r.method + "," + std::to_string(r.n) + ",";
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,", r.mean, r.std);
        out += buf + std::to_string(r.count) + "\n";
    }
    return out;
}

// Mean accuracy against n, one polyline per method, with the LB mean as a
// dashed horizontal reference.
inline std::string to_svg(const AggregateReport& rep, const std::string& task) {
    const double W = 640, H = 400, L = 60, R = 140, T = 40, B = 50;
    auto x_of = [&](double n) { return L + (n - 1.0) / 6.0 * (W - L - R); };
    auto y_of = [&](double a) { return H - B - a * (H - T - B); };
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << task
      << ": accuracy vs n</text>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << y_of(0) << "\" x2=\"" << W - R << "\" y2=\"" << y_of(0)
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << y_of(0) << "\" x2=\"" << L << "\" y2=\"" << y_of(1)
      << "\" stroke=\"black\"/>\n";
    for (int n = 1; n <= 7; ++n)
        s << "<text x=\"" << x_of(n) - 4 << "\" y=\"" << H - B + 20 << "\" font-size=\"12\">" << n << "</text>\n";
    for (int k = 0; k <= 10; k += 2) {
        const double a = k / 10.0;
        s << "<text x=\"" << L - 36 << "\" y=\"" << y_of(a) + 4 << "\" font-size=\"12\">" << a << "</text>\n";
        s << "<line x1=\"" << L << "\" y1=\"" << y_of(a) << "\" x2=\"" << W - R << "\" y2=\"" << y_of(a)
          << "\" stroke=\"#ddd\"/>\n";
    }
    std::map<std::string, std::vector<const AggregateRow*>> by_method;
    for (const auto& r : rep.rows)
        if (r.task == task) by_method[r.method].push_back(&r);
    int legend = 0;
    for (const auto& [method, rows] : by_method) {
        const char* colour = colours[legend % 5];
        const double ly = T + 20.0 * legend++;
        s << "<text x=\"" << W - R + 30 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << method << "</text>\n";
        if (method == "LB") {
            double sum = 0;
            std::size_t cnt = 0;
            for (auto* r : rows) sum += r->mean * double(r->count), cnt += r->count;
            const double y = y_of(sum / double(cnt));
            s << "<line x1=\"" << L << "\" y1=\"" << y << "\" x2=\"" << W - R << "\" y2=\"" << y << "\" stroke=\""
              << colour << "\" stroke-dasharray=\"6,4\"/>\n";
            s << "<line x1=\"" << W - R + 8 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 24 << "\" y2=\"" << ly
              << "\" stroke=\"" << colour << "\" stroke-dasharray=\"4,2\"/>\n";
            continue;
        }
        s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
        for (auto* r : rows) s << x_of(double(r->n)) << "," << y_of(r->mean) << " ";
        s << "\"/>\n";
        for (auto* r : rows)
            s << "<circle cx=\"" << x_of(double(r->n)) << "\" cy=\"" << y_of(r->mean) << "\" r=\"3\" fill=\"" << colour
              << "\"/>\n";
        s << "<line x1=\"" << W - R + 8 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 24 << "\" y2=\"" << ly
          << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    }
    int fy = 0;
    for (const auto& f : rep.flags)
        if (f.find(" " + task + " ") != std::string::npos)
            s << "<text x=\"" << L << "\" y=\"" << H - 8 - 14 * fy++ << "\" font-size=\"11\" fill=\"#d62728\">" << f
              << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

// Writes report.csv and one SVG per task into out_dir; returns the report.
inline AggregateReport write_report(const std::string& records_dir, const std::string& out_dir) {
    const auto rep = aggregate(load_records(records_dir));
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "report.csv", std::ios::trunc) << to_csv(rep);
    std::set<std::string> tasks;
    for (const auto& r : rep.rows) tasks.insert(r.task);
    for (const auto& t : tasks) {
        std::string stem = t;
        for (auto& c : stem)
            if (c == '/') c = '_';
        if (auto p = stem.find("->"); p != std::string::npos) stem.replace(p, 2, "-");
        std::ofstream(fs::path(out_dir) / ("accuracy_" + stem + ".svg"), std::ios::trunc) << to_svg(rep, t);
    }
    std::ofstream flags(fs::path(out_dir) / "flags.txt", std::ios::trunc);
    for (const auto& f : rep.flags) flags << f << '\n';
    return rep;
}

}  // namespace fada
