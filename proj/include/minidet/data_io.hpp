#pragma once

#include <map>
#include <string>
#include <vector>

#include "minidet/eval.hpp"
#include "minidet/neck.hpp"

namespace minidet {

// Every parser failure is a value with location context; nothing here throws
// on malformed input (filesystem helpers at the bottom do throw on OS errors).
struct ParseDiagnostic {
    int line = 0;  // 1-based; 0 = whole-input problem
    std::string message;
};

// One VisDrone-style annotation record: left,top,width,height,score,category,
// truncation,occlusion. Category 0 is the ignored-regions id.
struct AnnotationLine {
    long left = 0, top = 0, width = 0, height = 0;
    double score = 0;
    int category = 0;
    int truncation = 0;
    int occlusion = 0;

    bool operator==(const AnnotationLine&) const = default;
};

struct AnnotationParse {
    std::vector<GroundTruth> ground_truths;
    std::vector<AnnotationLine> lines;  // the valid records, in file order
    std::vector<ParseDiagnostic> diagnostics;
};

AnnotationParse parse_annotations(const std::string& text, const std::string& image_id = "");
std::string serialize_annotations(const std::vector<AnnotationLine>& lines);

struct DetectionParse {
    std::vector<Detection> detections;
    std::vector<ParseDiagnostic> diagnostics;
    std::string header_error;  // non-empty = file rejected
};

// CSV with header image_id,class_id,x1,y1,x2,y2,score. write_detections uses
// 6-decimal fixed formatting and LF endings; read/write are exact inverses on
// files in that canonical form.
DetectionParse read_detections(const std::string& csv);
std::string write_detections(const std::vector<Detection>& dets);

struct CategoryMap {
    std::map<int, std::string> names;
    int ignored_id = 0;

    std::string name_of(int id) const;  // "?" when unknown
};

// The public VisDrone ordering: 0 = ignored regions, then the ten object
// categories.
CategoryMap default_category_map();
// JSON object {"ignored_id": n, "names": {"1": "pedestrian", ...}}.
CategoryMap parse_category_map(const std::string& text, std::vector<ParseDiagnostic>& diags);

struct NeckConfigParse {
    NeckGraphSpec spec;
    std::vector<ParseDiagnostic> diagnostics;
    std::vector<std::string> notices;  // applied defaults worth surfacing

    bool ok() const { return diagnostics.empty(); }
};

// JSON schema (// comments allowed): name, levels[{name,stride?,channels}],
// policy, prune_upsample, nodes[{id,level,layer,op,in_channels,out_channels}],
// edges[[src,dst]], heads[], num_classes, head_width. Omitted strides default
// to 4,8,16,32 with a notice.
NeckConfigParse load_neck_config(const std::string& text);

struct GroundTruthLoad {
    std::vector<GroundTruth> items;
    std::vector<ParseDiagnostic> diagnostics;  // messages prefixed with the file name
    std::vector<std::string> files;            // annotation files read, sorted
};

// Reads every .txt in a directory as one image's annotations; the image id is
// the file stem.
GroundTruthLoad load_ground_truth_dir(const std::string& dir);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace minidet
