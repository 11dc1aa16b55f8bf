#include "minidet/sim.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace minidet {

SimConfig default_scenario(LossId id, bool attention_enabled) {
    SimConfig cfg;
    cfg.loss_id = id;
    cfg.attention_enabled = attention_enabled;
    return cfg;
}

namespace {

bool finite_box(const Box& b) {
    return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
           std::isfinite(b.y2);
}

}  // namespace

Trajectory simulate(const SimConfig& cfg) {
    if (cfg.steps < 1) throw LossError("simulate needs steps >= 1");
    if (cfg.learning_rate <= 0.0) throw LossError("simulate needs learning_rate > 0");
    if (cfg.record_every < 1) throw LossError("simulate needs record_every >= 1");

    LossId eff = cfg.loss_id;
    if (eff == LossId::piou && !cfg.attention_enabled) eff = LossId::piou_penalty;
    const bool uses_state = eff == LossId::wiou_v1 || eff == LossId::wiou_v3;
    WiouState state;  // private to this run

    Box a = cfg.init_box;
    const double area0 = std::max(a.area(), 1e-12);
    Trajectory t;
    const auto record = [&](int step) {
        TrajectoryPoint pt;
        pt.step = step;
        pt.box = a;
        pt.loss = loss_value(eff, a, cfg.target_box, cfg.loss_params, &state);
        pt.iou = iou(a, cfg.target_box);
        pt.area_ratio = a.area() / area0;
        t.points.push_back(pt);
    };
    record(0);

    for (int s = 1; s <= cfg.steps; ++s) {
        const std::array<double, 4> g =
            loss_gradient(eff, a, cfg.target_box, cfg.loss_params, &state);
        if (uses_state)
            state.observe(1.0 - iou(a, cfg.target_box), cfg.loss_params.wiou_momentum);
        bool finite = true;
        for (double v : g) finite = finite && std::isfinite(v);
        if (!finite) {
            t.truncated = true;
            t.error = "non-finite gradient at step " + std::to_string(s);
            break;
        }
        a.x1 -= cfg.learning_rate * g[0];
        a.y1 -= cfg.learning_rate * g[1];
        a.x2 -= cfg.learning_rate * g[2];
        a.y2 -= cfg.learning_rate * g[3];
        if (!finite_box(a)) {
            t.truncated = true;
            t.error = "non-finite box at step " + std::to_string(s);
            break;
        }
        if (a.x1 > a.x2) std::swap(a.x1, a.x2);
        if (a.y1 > a.y2) std::swap(a.y1, a.y2);
        if (s % cfg.record_every == 0) record(s);
    }
    return t;
}

EnlargementReport detect_enlargement(const Trajectory& t, double threshold) {
    if (t.points.empty()) throw LossError("detect_enlargement needs a nonempty trajectory");
    EnlargementReport r;
    for (const TrajectoryPoint& pt : t.points) {
        if (pt.area_ratio > r.max_ratio) r.max_ratio = pt.area_ratio;
        if (!r.event && pt.area_ratio > threshold) {
            r.event = true;
            r.first_step = pt.step;
        }
    }
    r.final_iou = t.points.back().iou;
    return r;
}

std::string trajectory_csv(const Trajectory& t) {
    std::string out = "step,x1,y1,x2,y2,loss,iou,area_ratio\n";
    char buf[64];
    for (const TrajectoryPoint& pt : t.points) {
        out += std::to_string(pt.step);
        const double vals[7] = {pt.box.x1, pt.box.y1, pt.box.x2, pt.box.y2,
                                pt.loss,   pt.iou,    pt.area_ratio};
        for (double v : vals) {
            std::snprintf(buf, sizeof buf, ",%.9g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_trajectory(const Trajectory& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open trajectory output: " + path);
    f << trajectory_csv(t);
    if (!f) throw std::runtime_error("write failed for trajectory output: " + path);
}

Trajectory parse_trajectory_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    Trajectory t;
    if (!std::getline(in, line)) {
        t.error = "trajectory CSV is empty";
        return t;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "step,x1,y1,x2,y2,loss,iou,area_ratio") {
        t.error = "trajectory CSV header mismatch: " + line;
        return t;
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        double v[8];
        for (int i = 0; i < 8; ++i) {
            if (!std::getline(row, field, ',')) {
                t.error = "trajectory CSV row has fewer than 8 columns: " + line;
                return t;
            }
            const char* first = field.c_str();
            const char* last = first + field.size();
            const auto res = std::from_chars(first, last, v[i]);
            if (res.ec != std::errc() || res.ptr != last) {
                t.error = "trajectory CSV bad number '" + field + "' in row: " + line;
                return t;
            }
        }
        if (std::getline(row, field, ',')) {
            t.error = "trajectory CSV row has more than 8 columns: " + line;
            return t;
        }
        TrajectoryPoint pt;
        pt.step = static_cast<int>(v[0]);
        pt.box = {v[1], v[2], v[3], v[4]};
        pt.loss = v[5];
        pt.iou = v[6];
        pt.area_ratio = v[7];
        t.points.push_back(pt);
    }
    return t;
}

}  // namespace minidet
