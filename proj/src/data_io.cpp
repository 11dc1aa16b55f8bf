#include "minidet/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace minidet {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        out.push_back(cur);
    }
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

std::string shortest(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

const char* kAnnotationFields[8] = {"bbox_left",  "bbox_top", "bbox_width", "bbox_height",
                                    "score",      "category", "truncation", "occlusion"};

}  // namespace

AnnotationParse parse_annotations(const std::string& text, const std::string& image_id) {
    AnnotationParse r;
    const std::vector<std::string> lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const int ln = static_cast<int>(i) + 1;
        if (lines[i].empty()) continue;
        const std::vector<std::string> f = split_fields(lines[i]);
        if (f.size() != 8) {
            r.diagnostics.push_back({ln, "expected 8 fields, got " + std::to_string(f.size())});
            continue;
        }
        AnnotationLine a;
        long* longs[4] = {&a.left, &a.top, &a.width, &a.height};
        int* ints[3] = {&a.category, &a.truncation, &a.occlusion};
        bool ok = true;
        for (int k = 0; k < 4 && ok; ++k)
            if (!parse_number(f[static_cast<std::size_t>(k)], *longs[k])) {
                r.diagnostics.push_back(
                    {ln, std::string("field ") + kAnnotationFields[k] + " is not an integer"});
                ok = false;
            }
        if (ok && !parse_number(f[4], a.score)) {
            r.diagnostics.push_back({ln, "field score is not numeric"});
            ok = false;
        }
        for (int k = 0; k < 3 && ok; ++k)
            if (!parse_number(f[static_cast<std::size_t>(5 + k)], *ints[k])) {
                r.diagnostics.push_back(
                    {ln, std::string("field ") + kAnnotationFields[5 + k] + " is not an integer"});
                ok = false;
            }
        if (!ok) continue;
        if (a.width <= 0 || a.height <= 0) {
            r.diagnostics.push_back({ln, "degenerate box (width/height must be positive)"});
            continue;
        }
        r.lines.push_back(a);
        GroundTruth g;
        g.image_id = image_id;
        g.class_id = a.category;
        g.box = {static_cast<double>(a.left), static_cast<double>(a.top),
                 static_cast<double>(a.left + a.width), static_cast<double>(a.top + a.height)};
        g.ignore_flag = a.category == 0;
        r.ground_truths.push_back(g);
    }
    return r;
}

std::string serialize_annotations(const std::vector<AnnotationLine>& lines) {
    std::string out;
    for (const AnnotationLine& a : lines) {
        out += std::to_string(a.left) + "," + std::to_string(a.top) + "," +
               std::to_string(a.width) + "," + std::to_string(a.height) + "," + shortest(a.score) +
               "," + std::to_string(a.category) + "," + std::to_string(a.truncation) + "," +
               std::to_string(a.occlusion) + "\n";
    }
    return out;
}

static const char* kDetHeader = "image_id,class_id,x1,y1,x2,y2,score";

DetectionParse read_detections(const std::string& csv) {
    DetectionParse r;
    const std::vector<std::string> lines = split_lines(csv);
    if (lines.empty()) {
        r.header_error = "empty file; expected header " + std::string(kDetHeader);
        return r;
    }
    const std::vector<std::string> have = split_fields(lines[0]);
    const std::vector<std::string> want = split_fields(kDetHeader);
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (i >= have.size()) {
            r.header_error = "missing column '" + want[i] + "'";
            return r;
        }
        if (have[i] != want[i]) {
            r.header_error =
                "header column " + std::to_string(i + 1) + ": expected '" + want[i] + "', got '" +
                have[i] + "'";
            return r;
        }
    }
    if (have.size() > want.size()) {
        r.header_error = "unexpected column '" + have[want.size()] + "'";
        return r;
    }

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const int ln = static_cast<int>(i) + 1;
        if (lines[i].empty()) continue;
        const std::vector<std::string> f = split_fields(lines[i]);
        if (f.size() != 7) {
            r.diagnostics.push_back({ln, "expected 7 fields, got " + std::to_string(f.size())});
            continue;
        }
        Detection d;
        d.image_id = f[0];
        double nums[5];
        bool ok = parse_number(f[1], d.class_id);
        if (!ok) r.diagnostics.push_back({ln, "field class_id is not an integer"});
        for (int k = 0; k < 5 && ok; ++k)
            if (!parse_number(f[static_cast<std::size_t>(2 + k)], nums[k])) {
                r.diagnostics.push_back(
                    {ln, std::string("field ") + split_fields(kDetHeader)[static_cast<std::size_t>(2 + k)] +
                             " is not numeric"});
                ok = false;
            }
        if (!ok) continue;
        d.box = {nums[0], nums[1], nums[2], nums[3]};
        d.score = nums[4];
        if (d.score < 0.0 || d.score > 1.0) {
            r.diagnostics.push_back({ln, "score " + shortest(d.score) + " outside [0, 1]"});
            continue;
        }
        if (d.box.x2 < d.box.x1 || d.box.y2 < d.box.y1) {
            r.diagnostics.push_back({ln, "inverted box corners"});
            continue;
        }
        r.detections.push_back(std::move(d));
    }
    return r;
}

std::string write_detections(const std::vector<Detection>& dets) {
    std::string out = std::string(kDetHeader) + "\n";
    char buf[192];
    for (const Detection& d : dets) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", d.image_id.c_str(),
                      d.class_id, d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.score);
        out += buf;
    }
    return out;
}

std::string CategoryMap::name_of(int id) const {
    auto it = names.find(id);
    return it == names.end() ? "?" : it->second;
}

CategoryMap default_category_map() {
    CategoryMap m;
    m.ignored_id = 0;
    m.names = {{0, "ignored-regions"}, {1, "pedestrian"}, {2, "people"},
               {3, "bicycle"},         {4, "car"},        {5, "van"},
               {6, "truck"},           {7, "tricycle"},   {8, "awning-tricycle"},
               {9, "bus"},             {10, "motorcycle"}};
    return m;
}

namespace {

int line_of_byte(const std::string& text, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

}  // namespace

CategoryMap parse_category_map(const std::string& text, std::vector<ParseDiagnostic>& diags) {
    CategoryMap m;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        diags.push_back({line_of_byte(text, e.byte), e.what()});
        return m;
    }
    try {
        m.ignored_id = j.value("ignored_id", 0);
        if (j.contains("names"))
            for (const auto& [key, val] : j.at("names").items()) {
                int id = 0;
                if (!parse_number(key, id)) {
                    diags.push_back({0, "category id '" + key + "' is not an integer"});
                    continue;
                }
                m.names[id] = val.get<std::string>();
            }
    } catch (const nlohmann::json::exception& e) {
        diags.push_back({0, e.what()});
    }
    return m;
}

NeckConfigParse load_neck_config(const std::string& text) {
    NeckConfigParse r;
    const auto fail = [&](const std::string& msg) { r.diagnostics.push_back({0, msg}); };

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        r.diagnostics.push_back({line_of_byte(text, e.byte), e.what()});
        return r;
    }
    if (!j.is_object()) {
        fail("config root must be an object");
        return r;
    }

    try {
        r.spec.name = j.value("name", std::string());
        if (!j.contains("levels") || !j.at("levels").is_array() || j.at("levels").empty()) {
            fail("'levels' must be a non-empty array");
            return r;
        }
        bool defaulted_stride = false;
        int idx = 0;
        for (const auto& lj : j.at("levels")) {
            LevelSpec lv;
            lv.name = lj.value("name", std::string("P") + std::to_string(idx + 2));
            if (lj.contains("stride")) {
                lv.stride = lj.at("stride").get<int>();
            } else {
                lv.stride = 4 << idx;
                defaulted_stride = true;
            }
            if (!lj.contains("channels")) {
                fail("level " + lv.name + " is missing 'channels'");
                return r;
            }
            lv.channels = lj.at("channels").get<int>();
            r.spec.levels.push_back(lv);
            ++idx;
        }
        if (defaulted_stride) {
            std::string strides;
            for (const LevelSpec& lv : r.spec.levels)
                strides += (strides.empty() ? "" : ",") + std::to_string(lv.stride);
            r.notices.push_back("strides defaulted to " + strides);
        }

        const std::string policy = j.value("policy", std::string("explicit"));
        if (!parse_link_policy(policy, r.spec.policy)) {
            fail("unknown link policy '" + policy + "'");
            return r;
        }
        r.spec.prune_upsample = j.value("prune_upsample", false);

        for (const auto& nj : j.value("nodes", nlohmann::json::array())) {
            NodeSpec n;
            n.id = nj.value("id", std::string());
            if (n.id.empty()) {
                fail("node without an 'id'");
                return r;
            }
            if (!nj.contains("level")) {
                fail("node " + n.id + " is missing 'level'");
                return r;
            }
            if (nj.at("level").is_string()) {
                const std::string name = nj.at("level").get<std::string>();
                auto it = std::find_if(r.spec.levels.begin(), r.spec.levels.end(),
                                       [&](const LevelSpec& lv) { return lv.name == name; });
                if (it == r.spec.levels.end()) {
                    fail("node " + n.id + " references unknown level '" + name + "'");
                    return r;
                }
                n.level = static_cast<int>(it - r.spec.levels.begin());
            } else {
                n.level = nj.at("level").get<int>();
            }
            n.layer = nj.value("layer", 0);
            const std::string op = nj.value("op", std::string("c2f"));
            if (!parse_fusion_op(op, n.op)) {
                fail("node " + n.id + " has unknown op '" + op + "'");
                return r;
            }
            n.in_channels = nj.value("in_channels", 0);
            n.out_channels = nj.value("out_channels", 0);
            r.spec.nodes.push_back(n);
        }

        for (const auto& ej : j.value("edges", nlohmann::json::array())) {
            if (!ej.is_array() || ej.size() != 2) {
                fail("each edge must be a [source, destination] pair");
                return r;
            }
            r.spec.edges.emplace_back(ej.at(0).get<std::string>(), ej.at(1).get<std::string>());
        }
        for (const auto& hj : j.value("heads", nlohmann::json::array()))
            r.spec.head_nodes.push_back(hj.get<std::string>());
        r.spec.num_classes = j.value("num_classes", 10);
        r.spec.head_width = j.value("head_width", 0);
    } catch (const nlohmann::json::exception& e) {
        fail(e.what());
    }
    return r;
}

GroundTruthLoad load_ground_truth_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    GroundTruthLoad r;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const fs::path& p : paths) {
        r.files.push_back(p.filename().string());
        AnnotationParse parsed = parse_annotations(read_text_file(p.string()), p.stem().string());
        for (const ParseDiagnostic& d : parsed.diagnostics)
            r.diagnostics.push_back({d.line, p.filename().string() + ": " + d.message});
        r.items.insert(r.items.end(), parsed.ground_truths.begin(), parsed.ground_truths.end());
    }
    return r;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed for " + path);
}

}  // namespace minidet
