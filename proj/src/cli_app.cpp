#include "minidet/cli_app.hpp"

#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "json.hpp"
#include "minidet/data_io.hpp"
#include "minidet/eval.hpp"
#include "minidet/losses.hpp"
#include "minidet/neck.hpp"
#include "minidet/sim.hpp"

namespace minidet {

namespace {

const std::vector<std::string> kLossNames = {"ciou",      "eiou", "wiou_v1",     "wiou_v3",
                                             "piou_base", "piou", "piou_penalty"};

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string gnum(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string box_str(const Box& b) {
    return fixed6(b.x1) + " " + fixed6(b.y1) + " " + fixed6(b.x2) + " " + fixed6(b.y2);
}

int run_grad_check(const std::string& loss, int pairs, double tol, std::uint64_t seed,
                   std::ostream& out) {
    LossId id;
    parse_loss_id(loss, id);
    const GradCheckResult r = grad_check(id, pairs, seed);
    out << "loss: " << loss << "\n";
    out << "pairs: " << r.pairs << "\n";
    out << "seed: " << seed << "\n";
    out << "worst_rel_err: " << gnum(r.worst_rel_err) << "\n";
    out << "worst_anchor: " << box_str(r.worst_anchor) << "\n";
    out << "worst_gt: " << box_str(r.worst_gt) << "\n";
    const bool ok = r.passed(tol);
    out << "result: " << (ok ? "PASS" : "FAIL") << " (tol " << gnum(tol) << ")\n";
    return ok ? 0 : 1;
}

int run_sim_regress(const std::string& loss, bool no_attention, double lr, int steps,
                    int record_every, const std::string& out_path, std::ostream& out,
                    std::ostream& err) {
    LossId id;
    parse_loss_id(loss, id);
    SimConfig cfg = default_scenario(id, !no_attention);
    cfg.learning_rate = lr;
    cfg.steps = steps;
    cfg.record_every = record_every;
    const Trajectory t = simulate(cfg);
    const EnlargementReport er = detect_enlargement(t, 1.05);

    out << "loss: " << loss << "\n";
    out << "attention: " << (no_attention ? "off" : "on") << "\n";
    out << "lr: " << gnum(lr) << "\n";
    out << "steps: " << steps << "\n";
    out << "final_iou: " << fixed6(er.final_iou) << "\n";
    out << "max_area_ratio: " << fixed6(er.max_ratio) << "\n";
    if (er.event)
        out << "enlargement_event: step " << er.first_step << "\n";
    else
        out << "enlargement_event: none\n";

    if (!out_path.empty()) {
        try {
            write_trajectory(t, out_path);
            out << "wrote: " << out_path << "\n";
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return 1;
        }
    }
    if (!t.error.empty()) {
        err << "error: " << t.error << "\n";
        return 1;
    }
    return 0;
}

nlohmann::json spec_json(const NeckGraphSpec& spec) {
    const std::vector<Diagnostic> diags = validate_channels(spec);
    std::map<std::string, int> dist;
    if (diags.empty()) {
        try {
            dist = gradient_distances(spec);
        } catch (const NeckError&) {
        }
    }
    nlohmann::json doc;
    doc["name"] = spec.name;
    doc["policy"] = link_policy_name(spec.policy);
    doc["validation"] = diags.empty() ? "OK" : "FAIL";
    doc["diagnostics"] = nlohmann::json::array();
    for (const Diagnostic& d : diags)
        doc["diagnostics"].push_back({{"node", d.node}, {"message", d.message}});
    doc["nodes"] = nlohmann::json::array();
    for (const NodeSpec& n : spec.nodes) {
        const LevelSpec& lv = spec.levels[static_cast<std::size_t>(n.level)];
        nlohmann::json nd = {{"id", n.id},

                             {"level", lv.name},
                             {"layer", n.layer},
                             {"stride", lv.stride},
                             {"in_channels", n.in_channels},
                             {"out_channels", n.out_channels},
                             {"op", fusion_op_name(n.op)}};
        if (dist.count(n.id)) nd["distance"] = dist.at(n.id);
        doc["nodes"].push_back(nd);
    }
    doc["heads"] = spec.head_nodes;
    if (!dist.empty()) {
        int worst = 0;
        for (const auto& [id, d] : dist) worst = std::max(worst, d);
        doc["shortest_gradient_distance"] = worst;
    }
    return doc;
}

int run_neck_report(const std::string& cfg_path, const std::string& preset, bool json,
                    std::ostream& out, std::ostream& err) {
    NeckGraphSpec spec;
    if (!preset.empty()) {
        spec = preset_spec(preset);
    } else {
        std::string text;
        try {
            text = read_text_file(cfg_path);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return 2;
        }
        NeckConfigParse parsed = load_neck_config(text);
        for (const std::string& n : parsed.notices) err << "notice: " << n << "\n";
        if (!parsed.ok()) {
            for (const ParseDiagnostic& d : parsed.diagnostics)
                err << cfg_path << ":" << d.line << ": " << d.message << "\n";
            return 2;
        }
        spec = parsed.spec;
    }
    if (json)
        out << spec_json(spec).dump(2) << "\n";
    else
        out << neck_report(spec);
    return validate_channels(spec).empty() ? 0 : 1;
}

int run_eval(const std::string& gt_dir, const std::string& det_path, double iou_thr, bool range,
             const std::string& pr_out, bool json, std::ostream& out, std::ostream& err) {
    GroundTruthLoad gt = load_ground_truth_dir(gt_dir);
    for (const ParseDiagnostic& d : gt.diagnostics)
        err << "warning: " << d.message << " (line " << d.line << ")\n";

    const DetectionParse det = read_detections(read_text_file(det_path));
    if (!det.header_error.empty()) {
        err << det_path << ": " << det.header_error << "\n";
        return 1;
    }
    for (const ParseDiagnostic& d : det.diagnostics)
        err << "warning: " << det_path << ":" << d.line << ": " << d.message << "\n";

    EvalReport rep;
    try {
        rep = map_at(det.detections, gt.items, iou_thr);
    } catch (const EvalError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    const CategoryMap cats = default_category_map();
    double mr = 0;
    if (range) mr = map_range(det.detections, gt.items);

    if (json) {
        nlohmann::json doc;
        doc["files"] = gt.files.size();
        doc["ground_truths"] = gt.items.size();
        doc["detections"] = det.detections.size();
        doc["iou_threshold"] = iou_thr;
        doc["classes"] = nlohmann::json::array();
        for (const auto& [c, ce] : rep.per_class)
            doc["classes"].push_back({{"id", c},
                                      {"name", cats.name_of(c)},
                                      {"ap", ce.ap},
                                      {"num_gt", ce.num_gt},
                                      {"num_det", ce.num_det},
                                      {"tp", ce.tp}});
        doc["map"] = rep.map;
        doc["precision"] = rep.precision;
        doc["recall"] = rep.recall;
        if (range) doc["map_range"] = mr;
        out << doc.dump(2) << "\n";
    } else {
        out << "files: " << gt.files.size() << "\n";
        out << "ground_truths: " << gt.items.size() << "\n";
        out << "detections: " << det.detections.size() << "\n";
        for (const auto& [c, ce] : rep.per_class)
            out << "ap[" << c << "] " << cats.name_of(c) << " " << fixed6(ce.ap) << "\n";
        out << "mAP@" << fixed6(iou_thr).substr(0, 4) << ": " << fixed6(rep.map) << "\n";
        out << "precision: " << fixed6(rep.precision) << "\n";
        out << "recall: " << fixed6(rep.recall) << "\n";
        if (range) out << "mAP@0.50:0.95: " << fixed6(mr) << "\n";
    }

    if (!pr_out.empty()) {
        std::string csv = "class_id,score,recall,precision\n";
        for (const auto& [c, ce] : rep.per_class)
            for (const PRPoint& p : ce.curve)
                csv += std::to_string(c) + "," + fixed6(p.score) + "," + fixed6(p.recall) + "," +
                       fixed6(p.precision) + "\n";
        write_text_file(pr_out, csv);
        out << "wrote: " << pr_out << "\n";
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"small-object detection loss/neck/eval toolkit"};
    app.require_subcommand(1);

    auto* gc = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
    std::string gc_loss;
    int gc_pairs = 1000;
    double gc_tol = 1e-4;
    std::uint64_t gc_seed = 42;
    gc->add_option("--loss", gc_loss, "loss id")->required()->check(CLI::IsMember(kLossNames));
    gc->add_option("--pairs", gc_pairs, "random box pairs")->check(CLI::PositiveNumber);
    gc->add_option("--tol", gc_tol, "max relative error")->check(CLI::PositiveNumber);
    gc->add_option("--seed", gc_seed, "rng seed");

    auto* sr = app.add_subcommand("sim-regress", "single-box regression toward a fixed target");
    std::string sr_loss = "piou";
    bool sr_no_att = false;
    double sr_lr = 0.02;
    int sr_steps = 150;
    int sr_every = 1;
    std::string sr_out;
    sr->add_option("--loss", sr_loss, "loss id")->check(CLI::IsMember(kLossNames));
    sr->add_flag("--no-attention", sr_no_att, "descend on the penalty term alone (piou)");
    sr->add_option("--lr", sr_lr, "step size")->check(CLI::PositiveNumber);
    sr->add_option("--steps", sr_steps, "descent steps")->check(CLI::PositiveNumber);
    sr->add_option("--record-every", sr_every, "trajectory sampling stride")
        ->check(CLI::PositiveNumber);
    sr->add_option("--out", sr_out, "trajectory csv path");

    auto* nr = app.add_subcommand("neck-report", "validate and describe a fusion topology");
    std::string nr_config, nr_preset;
    bool nr_json = false;
    auto* nr_cfg_opt = nr->add_option("--config", nr_config, "topology json")->check(CLI::ExistingFile);
    auto* nr_preset_opt =
        nr->add_option("--preset", nr_preset, "built-in topology")->check(CLI::IsMember(preset_names()));
    nr_cfg_opt->excludes(nr_preset_opt);
    nr->add_flag("--json", nr_json, "machine-readable output");

    auto* ev = app.add_subcommand("eval", "detection metrics against ground truth");
    std::string ev_gt, ev_det, ev_pr_out;
    double ev_iou = 0.5;
    bool ev_range = false, ev_json = false;
    ev->add_option("--gt", ev_gt, "annotation directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--det", ev_det, "detection csv")->required()->check(CLI::ExistingFile);
    ev->add_option("--iou", ev_iou, "matching threshold")
        ->check(CLI::Range(1e-9, 1.0 - 1e-9));
    ev->add_flag("--range", ev_range, "also report mAP over 0.50:0.95");
    ev->add_option("--pr-out", ev_pr_out, "precision-recall curve csv path");
    ev->add_flag("--json", ev_json, "machine-readable output");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gc) return run_grad_check(gc_loss, gc_pairs, gc_tol, gc_seed, out);
        if (*sr)
            return run_sim_regress(sr_loss, sr_no_att, sr_lr, sr_steps, sr_every, sr_out, out, err);
        if (*nr) {
            if (nr_config.empty() && nr_preset.empty()) {
                err << "neck-report needs --config or --preset\n";
                return 2;
            }
            return run_neck_report(nr_config, nr_preset, nr_json, out, err);
        }
        if (*ev) return run_eval(ev_gt, ev_det, ev_iou, ev_range, ev_pr_out, ev_json, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace minidet
