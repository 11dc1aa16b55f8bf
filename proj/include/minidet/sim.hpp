#pragma once

#include <string>
#include <vector>

#include "minidet/losses.hpp"

namespace minidet {

// Single-box gradient-descent regression toward a fixed target. With
// loss_id = piou and attention_enabled = false the objective is the penalty
// term 1 - e^{-P^2} alone (the no-attention regression mode); the flag has no
// effect on other losses.
struct SimConfig {
    LossId loss_id = LossId::piou;
    bool attention_enabled = true;
    Box init_box{0.10, 0.10, 0.40, 0.40};
    Box target_box{0.46, 0.46, 0.766, 0.766};
    double learning_rate = 0.02;
    int steps = 150;
    LossParams loss_params;
    int record_every = 1;
};

// Shipped default scenario: disjoint small anchor, distant slightly larger
// target. Calibrated so the penalty-only PIoU run converges cleanly while the
// CIoU run enlarges past ratio 1.05 and ends at a lower IoU.
SimConfig default_scenario(LossId id, bool attention_enabled = true);

struct TrajectoryPoint {
    int step = 0;
    Box box;
    double loss = 0;
    double iou = 0;
    double area_ratio = 1;
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    bool truncated = false;  // gradient blow-up marker
    std::string error;
};

Trajectory simulate(const SimConfig& cfg);

struct EnlargementReport {
    bool event = false;
    int first_step = -1;   // step index of the first ratio > threshold
    double max_ratio = 1;
    double final_iou = 0;
};

EnlargementReport detect_enlargement(const Trajectory& t, double threshold);

// CSV: header step,x1,y1,x2,y2,loss,iou,area_ratio; 9 significant digits; LF.
std::string trajectory_csv(const Trajectory& t);
void write_trajectory(const Trajectory& t, const std::string& path);
Trajectory parse_trajectory_csv(const std::string& text);

}  // namespace minidet
