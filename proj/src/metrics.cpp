// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/metrics.hpp"

#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace vicl {

namespace {

void require_same_extent(const Panel& a, const Panel& b, const char* what) {
    if (!a.same_extent(b)) {
        throw ShapeError(std::string(what) + ": extent mismatch " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
    }
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

} // namespace

std::vector<std::uint8_t> binarize(const Panel& panel, double threshold) {
    std::vector<std::uint8_t> out(panel.height() * panel.width());
    for (std::size_t y = 0; y < panel.height(); ++y) {
        for (std::size_t x = 0; x < panel.width(); ++x) out[y * panel.width() + x] = panel.intensity(y, x) >= threshold;
    }
    return out;
}

double miou(const Panel& pred, const Panel& gt, double threshold) {
    require_same_extent(pred, gt, "miou");
    const auto a = binarize(pred, threshold);
    const auto b = binarize(gt, threshold);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] & b[i];
        uni += a[i] | b[i];
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double mse(const Panel& pred, const Panel& gt) {
    require_same_extent(pred, gt, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - gt.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

double score(TaskKind kind, const Panel& pred, const Panel& gt) {
    return kind == TaskKind::Colorization ? mse(pred, gt) : miou(pred, gt);
}

bool higher_is_better(TaskKind kind) { return kind != TaskKind::Colorization; }

const char* metric_name(TaskKind kind) { return kind == TaskKind::Colorization ? "mse" : "miou"; }

std::uint64_t fingerprint(const Image& image, std::uint64_t seed) {
    std::uint64_t h = seed;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t dims[2] = {image.height(), image.width()};
    mix(dims, sizeof dims);
    mix(image.data().data(), image.data().size() * sizeof(double));
    return h;
}

std::uint64_t split_fingerprint(const std::vector<Sample>& split) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : split) {
        h = fingerprint(s.image, h);
        h = fingerprint(s.label, h);
    }
    return h;
}

EvalResult EvalResult::from_values(TaskKind kind, std::vector<double> values, std::uint64_t fp) {
    if (values.empty()) throw Error("evaluation over an empty split");
    EvalResult r;
    r.kind = kind;
    r.values = std::move(values);
    r.split_fingerprint = fp;
    double s = 0.0;
    for (double v : r.values) s += v;
    const double n = static_cast<double>(r.values.size());
    r.mean = s / n;
    if (r.values.size() > 1) {
        double ss = 0.0;
        for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
        r.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return r;
}

std::string EvalResult::to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# task=" << task_name(kind) << " metric=" << metric_name(kind) << " split=" << hex(split_fingerprint)
       << "\n";
    os << "index,value\n";
    for (std::size_t i = 0; i < values.size(); ++i) os << i << "," << values[i] << "\n";
    return os.str();
}

std::string EvalResult::to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task_name(kind);
    j["metric"] = metric_name(kind);
    j["count"] = values.size();
    j["mean"] = mean;
    j["std_error"] = std_error;
    j["split_fingerprint"] = hex(split_fingerprint);
    j["values"] = values;
    return j.dump(2);
}

EvalResult EvalResult::from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("# task=", 0) != 0) throw IoError("eval csv: missing header comment");
    std::istringstream hs(line.substr(2));
    std::string tok;
    TaskKind kind = TaskKind::Segmentation;
    std::uint64_t fp = 0;
    while (hs >> tok) {
        if (tok.rfind("task=", 0) == 0) kind = parse_task(tok.substr(5));
        if (tok.rfind("split=", 0) == 0) fp = std::stoull(tok.substr(6), nullptr, 16);
    }
    if (!std::getline(is, line) || line != "index,value") throw IoError("eval csv: missing column header");
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError("eval csv: malformed row '" + line + "'");
        values.push_back(std::stod(line.substr(comma + 1)));
    }
    return from_values(kind, std::move(values), fp);
}

} // namespace vicl
