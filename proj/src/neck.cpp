#include "minidet/neck.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <set>
#include <sstream>

namespace minidet {

std::string fusion_op_name(FusionOp op) {
    switch (op) {
        case FusionOp::c2f: return "c2f";
        case FusionOp::c2f_ema: return "c2f_ema";
        case FusionOp::conv3x3: return "conv3x3";
    }
    return "?";
}

bool parse_fusion_op(const std::string& name, FusionOp& out) {
    if (name == "c2f") out = FusionOp::c2f;
    else if (name == "c2f_ema") out = FusionOp::c2f_ema;
    else if (name == "conv3x3") out = FusionOp::conv3x3;
    else return false;
    return true;
}

std::string link_policy_name(LinkPolicy p) {
    switch (p) {
        case LinkPolicy::explicit_edges: return "explicit";
        case LinkPolicy::fpn: return "fpn";
        case LinkPolicy::pafpn: return "pafpn";
        case LinkPolicy::queen_fusion: return "queen_fusion";
        case LinkPolicy::log2n: return "log2n";
        case LinkPolicy::dense: return "dense";
    }
    return "?";
}

bool parse_link_policy(const std::string& name, LinkPolicy& out) {
    if (name == "explicit") out = LinkPolicy::explicit_edges;
    else if (name == "fpn") out = LinkPolicy::fpn;
    else if (name == "pafpn") out = LinkPolicy::pafpn;
    else if (name == "queen_fusion") out = LinkPolicy::queen_fusion;
    else if (name == "log2n") out = LinkPolicy::log2n;
    else if (name == "dense") out = LinkPolicy::dense;
    else return false;
    return true;
}

std::vector<int> log2n_sources(int l) {
    if (l < 1) throw NeckError("log2n_sources needs layer index >= 1");
    std::vector<int> out;
    for (long p = 1; p <= l; p <<= 1) out.push_back(l - static_cast<int>(p));
    return out;
}

std::vector<int> dense_sources(int l) {
    if (l < 1) throw NeckError("dense_sources needs layer index >= 1");
    std::vector<int> out;
    for (int i = 0; i < l; ++i) out.push_back(i);
    return out;
}

namespace {

const NodeSpec* find_node(const NeckGraphSpec& spec, int level, int layer) {
    for (const NodeSpec& n : spec.nodes)
        if (n.level == level && n.layer == layer) return &n;
    return nullptr;
}

void require_adjacent_levels(const NeckGraphSpec& spec, const char* policy) {
    for (std::size_t i = 1; i < spec.levels.size(); ++i)
        if (spec.levels[i].stride != 2 * spec.levels[i - 1].stride)
            throw NeckError(std::string(policy) + " needs stride-adjacent levels; " +
                            spec.levels[i - 1].name + " and " + spec.levels[i].name +
                            " have strides " + std::to_string(spec.levels[i - 1].stride) +
                            " and " + std::to_string(spec.levels[i].stride));
}

// source id for grid position (level k, layer l); layer 0 is the level input
std::string grid_source(const NeckGraphSpec& spec, int k, int l) {
    if (l == 0) return spec.levels[static_cast<std::size_t>(k)].name;
    const NodeSpec* n = find_node(spec, k, l);
    return n ? n->id : std::string();
}

std::vector<std::pair<std::string, std::string>> chain_edges(const NeckGraphSpec& spec,
                                                             bool use_log2n) {
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t k = 0; k < spec.levels.size(); ++k) {
        std::vector<const NodeSpec*> chain;
        for (const NodeSpec& n : spec.nodes)
            if (n.level == static_cast<int>(k)) chain.push_back(&n);
        std::sort(chain.begin(), chain.end(),
                  [](const NodeSpec* a, const NodeSpec* b) { return a->layer < b->layer; });
        for (const NodeSpec* n : chain) {
            if (n->layer == 0) {
                edges.emplace_back(spec.levels[k].name, n->id);
                continue;
            }
            const std::vector<int> sources =
                use_log2n ? log2n_sources(n->layer) : dense_sources(n->layer);
            for (int s : sources) {
                const NodeSpec* src = find_node(spec, static_cast<int>(k), s);
                if (!src)
                    throw NeckError("chain link for " + n->id + " references missing layer " +
                                    std::to_string(s));
                edges.emplace_back(src->id, n->id);
            }
        }
    }
    return edges;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> queen_fusion_edges(const NeckGraphSpec& spec) {
    require_adjacent_levels(spec, "queen fusion");
    std::vector<std::pair<std::string, std::string>> edges;
    const int levels = static_cast<int>(spec.levels.size());
    for (const NodeSpec& n : spec.nodes) {
        if (n.layer < 1) throw NeckError("queen fusion node " + n.id + " must sit at layer >= 1");
        const std::string same = grid_source(spec, n.level, n.layer - 1);
        if (!same.empty()) edges.emplace_back(same, n.id);
        if (n.level > 0) {
            const std::string finer = grid_source(spec, n.level - 1, n.layer - 1);
            if (!finer.empty()) edges.emplace_back(finer, n.id);
        }
        if (!spec.prune_upsample && n.level + 1 < levels) {
            const std::string coarser = grid_source(spec, n.level + 1, n.layer - 1);
            if (!coarser.empty()) edges.emplace_back(coarser, n.id);
        }
    }
    return edges;
}

std::vector<std::pair<std::string, std::string>> generate_edges(const NeckGraphSpec& spec) {
    switch (spec.policy) {
        case LinkPolicy::explicit_edges:
            return spec.edges;
        case LinkPolicy::queen_fusion:
            return queen_fusion_edges(spec);
        case LinkPolicy::log2n:
            return chain_edges(spec, true);
        case LinkPolicy::dense:
            return chain_edges(spec, false);
        case LinkPolicy::fpn:
        case LinkPolicy::pafpn: {
            require_adjacent_levels(spec, "fpn");
            std::vector<std::pair<std::string, std::string>> edges;
            const int levels = static_cast<int>(spec.levels.size());
            for (const NodeSpec& n : spec.nodes) {
                if (n.layer == 1) {
                    edges.emplace_back(spec.levels[static_cast<std::size_t>(n.level)].name, n.id);
                    if (n.level + 1 < levels) {
                        const std::string coarser = grid_source(spec, n.level + 1, 1);
                        if (!coarser.empty()) edges.emplace_back(coarser, n.id);
                    }
                } else if (n.layer == 2 && spec.policy == LinkPolicy::pafpn) {
                    const std::string same = grid_source(spec, n.level, 1);
                    if (same.empty())
                        throw NeckError("pafpn node " + n.id + " has no layer-1 node to follow");
                    edges.emplace_back(same, n.id);
                    if (n.level > 0) {
                        std::string finer = grid_source(spec, n.level - 1, 2);
                        if (finer.empty()) finer = grid_source(spec, n.level - 1, 1);
                        if (!finer.empty()) edges.emplace_back(finer, n.id);
                    }
                } else {
                    throw NeckError("node " + n.id + " at layer " + std::to_string(n.layer) +
                                    " is not addressable by the " + link_policy_name(spec.policy) +
                                    " policy");
                }
            }
            return edges;
        }
    }
    throw NeckError("unknown link policy");
}

namespace {

bool is_pow2_ratio(int a, int b) {
    if (a <= 0 || b <= 0) return false;
    const int hi = std::max(a, b), lo = std::min(a, b);
    if (hi % lo != 0) return false;
    const int r = hi / lo;
    return (r & (r - 1)) == 0;
}

struct Resolved {
    std::vector<std::pair<std::string, std::string>> edges;
    std::map<std::string, const NodeSpec*> nodes;
    std::map<std::string, const LevelSpec*> levels;
    std::vector<std::string> topo;  // node ids, dependency order
};

// Structural resolution shared by validation, distances, and build.
Resolved resolve(const NeckGraphSpec& spec, std::vector<Diagnostic>* diags) {
    Resolved r;
    const auto fail = [&](const std::string& node, const std::string& msg) {
        if (diags) diags->push_back({node, msg});
    };
    for (const LevelSpec& lv : spec.levels) {
        if (r.levels.count(lv.name)) fail(lv.name, "duplicate level name");
        if (lv.stride < 1) fail(lv.name, "level stride must be positive");
        if (lv.channels < 1) fail(lv.name, "level channels must be positive");
        r.levels[lv.name] = &lv;
    }
    if (spec.levels.empty()) fail("", "no levels declared");
    for (const NodeSpec& n : spec.nodes) {
        if (r.nodes.count(n.id)) fail(n.id, "duplicate node id");
        if (r.levels.count(n.id)) fail(n.id, "node id collides with a level name");
        if (n.level < 0 || n.level >= static_cast<int>(spec.levels.size()))
            fail(n.id, "level index " + std::to_string(n.level) + " out of range");
        if (n.in_channels < 1) fail(n.id, "in_channels must be positive");
        if (n.out_channels < 1) fail(n.id, "out_channels must be positive");
        r.nodes[n.id] = &n;
    }
    try {
        r.edges = generate_edges(spec);
    } catch (const NeckError& e) {
        fail("", e.what());
        return r;
    }
    for (const auto& [src, dst] : r.edges) {
        if (!r.nodes.count(src) && !r.levels.count(src))
            fail(dst, "edge source '" + src + "' is neither a node nor a level");
        if (!r.nodes.count(dst)) fail(dst, "edge destination '" + dst + "' is not a node");
    }

    // Kahn order over node->node dependencies
    std::map<std::string, int> indeg;
    std::map<std::string, std::vector<std::string>> next;
    for (const NodeSpec& n : spec.nodes) indeg[n.id] = 0;
    for (const auto& [src, dst] : r.edges)
        if (r.nodes.count(src) && r.nodes.count(dst)) {
            ++indeg[dst];
            next[src].push_back(dst);
        }
    std::deque<std::string> ready;
    for (const NodeSpec& n : spec.nodes)
        if (indeg[n.id] == 0) ready.push_back(n.id);
    while (!ready.empty()) {
        const std::string id = ready.front();
        ready.pop_front();
        r.topo.push_back(id);
        for (const std::string& d : next[id])
            if (--indeg[d] == 0) ready.push_back(d);
    }
    if (r.topo.size() != spec.nodes.size()) {
        for (const NodeSpec& n : spec.nodes)
            if (indeg[n.id] > 0) fail(n.id, "node participates in a cycle");
    }
    return r;
}

int source_channels(const Resolved& r, const std::string& src) {
    if (auto it = r.levels.find(src); it != r.levels.end()) return it->second->channels;
    return r.nodes.at(src)->out_channels;
}

int source_stride(const NeckGraphSpec& spec, const Resolved& r, const std::string& src) {
    if (auto it = r.levels.find(src); it != r.levels.end()) return it->second->stride;
    return spec.levels[static_cast<std::size_t>(r.nodes.at(src)->level)].stride;
}

}  // namespace

std::vector<Diagnostic> validate_channels(const NeckGraphSpec& spec) {
    std::vector<Diagnostic> diags;
    Resolved r = resolve(spec, &diags);
    if (!diags.empty()) return diags;

    for (const NodeSpec& n : spec.nodes) {
        const int node_stride = spec.levels[static_cast<std::size_t>(n.level)].stride;
        int sum = 0;
        for (const auto& [src, dst] : r.edges) {
            if (dst != n.id) continue;
            sum += source_channels(r, src);
            const int ss = source_stride(spec, r, src);
            if (!is_pow2_ratio(ss, node_stride))
                diags.push_back({n.id, "input '" + src + "' stride " + std::to_string(ss) +
                                           " cannot be resampled to stride " +
                                           std::to_string(node_stride)});
        }
        if (sum == 0)
            diags.push_back({n.id, "no inputs"});
        else if (sum != n.in_channels)
            diags.push_back({n.id, "in_channels " + std::to_string(n.in_channels) +
                                       " declared but inputs sum to " + std::to_string(sum)});
    }

    std::set<int> head_levels;
    for (const std::string& h : spec.head_nodes) {
        auto it = r.nodes.find(h);
        if (it == r.nodes.end()) {
            diags.push_back({h, "head node does not exist"});
            continue;
        }
        if (!head_levels.insert(it->second->level).second)
            diags.push_back({h, "level hosts more than one head node"});
    }
    if (spec.head_nodes.empty()) diags.push_back({"", "no head nodes declared"});
    return diags;
}

std::map<std::string, int> gradient_distances(const NeckGraphSpec& spec) {
    Resolved r = resolve(spec, nullptr);
    std::map<std::string, std::vector<std::string>> rev;
    for (const auto& [src, dst] : r.edges)
        if (r.nodes.count(src)) rev[dst].push_back(src);
    std::map<std::string, int> dist;
    std::deque<std::string> q;
    for (const std::string& h : spec.head_nodes) {
        if (!r.nodes.count(h)) throw NeckError("head node '" + h + "' does not exist");
        if (!dist.count(h)) {
            dist[h] = 0;
            q.push_back(h);
        }
    }
    while (!q.empty()) {
        const std::string id = q.front();
        q.pop_front();
        for (const std::string& p : rev[id])
            if (!dist.count(p)) {
                dist[p] = dist[id] + 1;
                q.push_back(p);
            }
    }
    for (const NodeSpec& n : spec.nodes)
        if (!dist.count(n.id))
            throw NeckError("node '" + n.id + "' has no path to any head node");
    return dist;
}

int shortest_gradient_distance(const NeckGraphSpec& spec) {
    int best = 0;
    for (const auto& [id, d] : gradient_distances(spec)) best = std::max(best, d);
    return best;
}

// --- presets ----------------------------------------------------------------

namespace {

NeckGraphSpec four_level_base(const std::string& name, int b) {
    NeckGraphSpec s;
    s.name = name;
    s.levels = {{"P2", 4, b}, {"P3", 8, 2 * b}, {"P4", 16, 4 * b}, {"P5", 32, 8 * b}};
    s.head_width = b;
    return s;
}

int level_ch(const NeckGraphSpec& s, int k) {
    return s.levels[static_cast<std::size_t>(k)].channels;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"sod", "gfpn", "fpn", "pafpn", "log2n", "dense"};
}

NeckGraphSpec preset_spec(const std::string& name, int b) {
    if (b < 2) throw NeckError("preset base channels must be >= 2");
    if (name == "fpn" || name == "pafpn") {
        NeckGraphSpec s = four_level_base(name, b);
        s.policy = name == "fpn" ? LinkPolicy::fpn : LinkPolicy::pafpn;
        for (int k = 3; k >= 0; --k) {
            const int in = level_ch(s, k) + (k < 3 ? level_ch(s, k + 1) : 0);
            s.nodes.push_back({"td" + std::to_string(k + 2), k, 1, FusionOp::c2f, in,
                               level_ch(s, k)});
        }
        if (name == "fpn") {
            s.head_nodes = {"td2", "td3", "td4", "td5"};
            return s;
        }
        for (int k = 1; k <= 3; ++k) {
            const int in = level_ch(s, k) + level_ch(s, k - 1);
            s.nodes.push_back({"bu" + std::to_string(k + 2), k, 2, FusionOp::c2f, in,
                               level_ch(s, k)});
        }
        s.head_nodes = {"td2", "bu3", "bu4", "bu5"};
        return s;
    }
    if (name == "gfpn") {
        NeckGraphSpec s = four_level_base(name, b);
        s.policy = LinkPolicy::queen_fusion;
        for (int l = 1; l <= 2; ++l)
            for (int k = 0; k < 4; ++k) {
                int in = level_ch(s, k);
                if (k > 0) in += level_ch(s, k - 1);
                if (k < 3) in += level_ch(s, k + 1);
                s.nodes.push_back({"q" + std::to_string(k + 2) + "_" + std::to_string(l), k, l,
                                   FusionOp::c2f_ema, in, level_ch(s, k)});
            }
        s.head_nodes = {"q2_2", "q3_2", "q4_2", "q5_2"};
        return s;
    }
    if (name == "sod") {
        NeckGraphSpec s = four_level_base(name, b);
        s.policy = LinkPolicy::explicit_edges;
        s.prune_upsample = true;
        s.nodes = {
            {"td4", 2, 1, FusionOp::c2f_ema, 12 * b, 4 * b},
            {"td3", 1, 1, FusionOp::c2f_ema, 6 * b, 2 * b},
            {"td2", 0, 1, FusionOp::c2f_ema, 3 * b, b},
            {"bu3", 1, 2, FusionOp::c2f_ema, 5 * b, 2 * b},
            {"bu4", 2, 2, FusionOp::c2f_ema, 10 * b, 4 * b},
            {"bu5", 3, 2, FusionOp::c2f_ema, 12 * b, 8 * b},
        };
        s.edges = {
            {"P4", "td4"}, {"P5", "td4"},
            {"P3", "td3"}, {"td4", "td3"},
            {"P2", "td2"}, {"td3", "td2"},
            {"td3", "bu3"}, {"td2", "bu3"}, {"P3", "bu3"},
            {"td4", "bu4"}, {"bu3", "bu4"}, {"P4", "bu4"},
            {"P5", "bu5"}, {"bu4", "bu5"},
        };
        s.head_nodes = {"td2", "bu3", "bu4", "bu5"};
        return s;
    }
    if (name == "log2n" || name == "dense") {
        NeckGraphSpec s;
        s.name = name;
        s.levels = {{"P3", 8, 2 * b}};
        s.policy = name == "log2n" ? LinkPolicy::log2n : LinkPolicy::dense;
        s.head_width = b;
        const int ch = 2 * b;
        for (int l = 0; l < 8; ++l) {
            int in;
            if (l == 0) in = ch;
            else if (name == "log2n") in = static_cast<int>(log2n_sources(l).size()) * ch;
            else in = l * ch;
            s.nodes.push_back({"n" + std::to_string(l), 0, l, FusionOp::conv3x3, in, ch});
        }
        s.head_nodes = {"n7"};
        return s;
    }
    throw NeckError("unknown preset '" + name + "'");
}

// --- build ------------------------------------------------------------------

std::map<std::string, Tensor> BackboneStub::forward(const Tensor& image) const {
    std::map<std::string, Tensor> out;
    Tensor x = stem.forward(image);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const Stage& st = stages[i];
        for (const ConvBlock& d : st.downs) x = d.forward(x);
        x = st.c2f.forward(x);
        if (i + 1 == stages.size()) x = sppf.forward(x);
        out[st.level_name] = x;
    }
    return out;
}

namespace {

BackboneStub make_backbone(const NeckGraphSpec& spec, ParamRng& rng) {
    BackboneStub bb;
    const int stem_ch = std::max(1, spec.levels[0].channels / 2);
    bb.stem = make_conv_block(3, stem_ch, 3, 2, rng);
    int cur_stride = 2;
    int cur_ch = stem_ch;
    for (const LevelSpec& lv : spec.levels) {
        if (lv.stride < cur_stride || !is_pow2_ratio(lv.stride, cur_stride))
            throw NeckError("backbone cannot reach stride " + std::to_string(lv.stride) +
                            " for level " + lv.name);
        BackboneStub::Stage st;
        st.level_name = lv.name;
        while (cur_stride < lv.stride) {
            st.downs.push_back(make_conv_block(cur_ch, lv.channels, 3, 2, rng));
            cur_ch = lv.channels;
            cur_stride *= 2;
        }
        if (cur_ch != lv.channels) {
            st.downs.push_back(make_conv_block(cur_ch, lv.channels, 3, 1, rng));
            cur_ch = lv.channels;
        }
        st.c2f = make_c2f(lv.channels, lv.channels, 1, true, rng);
        bb.stages.push_back(std::move(st));
    }
    bb.sppf = make_sppf(cur_ch, cur_ch, 5, rng);
    return bb;
}

int ema_groups_for(int hidden) { return std::min(8, hidden); }

}  // namespace

NeckGraph build_graph(const NeckGraphSpec& spec, std::uint64_t seed) {
    const std::vector<Diagnostic> diags = validate_channels(spec);
    if (!diags.empty())
        throw NeckError("invalid neck spec: " + (diags[0].node.empty() ? "" : diags[0].node + ": ") +
                        diags[0].message);
    Resolved r = resolve(spec, nullptr);

    NeckGraph g;
    g.spec = spec;
    g.edges = r.edges;
    g.order = r.topo;
    ParamRng rng(seed);
    g.backbone = make_backbone(spec, rng);

    for (const NodeSpec& n : spec.nodes) {
        BuiltNode bn;
        bn.spec = n;
        bn.stride = spec.levels[static_cast<std::size_t>(n.level)].stride;
        for (const auto& [src, dst] : r.edges) {
            if (dst != n.id) continue;
            BuiltEdge e;
            e.src = src;
            const int ss = source_stride(spec, r, src);
            const int sc = source_channels(r, src);
            if (ss > bn.stride) e.up_factor = ss / bn.stride;
            int s = ss;
            while (s < bn.stride) {
                e.downs.push_back(make_conv_block(sc, sc, 3, 2, rng));
                s *= 2;
            }
            bn.inputs.push_back(std::move(e));
        }
        switch (n.op) {
            case FusionOp::c2f:
                bn.c2f = make_c2f(n.in_channels, n.out_channels, 1, true, rng);
                break;
            case FusionOp::c2f_ema: {
                const int hidden = std::max(1, n.out_channels / 2);
                bn.c2f_ema = make_c2f_ema(n.in_channels, n.out_channels, 1, true,
                                          ema_groups_for(hidden), rng);
                break;
            }
            case FusionOp::conv3x3:
                bn.conv = make_conv_block(n.in_channels, n.out_channels, 3, 1, rng);
                break;
        }
        g.nodes.emplace(n.id, std::move(bn));
    }

    const int head_width =
        spec.head_width > 0 ? spec.head_width : spec.levels[0].channels;
    for (const std::string& hid : spec.head_nodes) {
        const BuiltNode& bn = g.nodes.at(hid);
        HeadBlock h;
        h.node_id = hid;
        h.stride = bn.stride;
        h.cls_stem = make_conv_block(bn.spec.out_channels, head_width, 3, 1, rng);
        h.box_stem = make_conv_block(bn.spec.out_channels, head_width, 3, 1, rng);
        Tensor cw({spec.num_classes, head_width, 1, 1});
        for (long i = 0; i < cw.numel(); ++i) cw.data()[i] = rng.fan_in_uniform(head_width);
        h.cls_weight = std::move(cw);
        h.cls_bias.resize(static_cast<std::size_t>(spec.num_classes));
        for (double& v : h.cls_bias) v = rng.fan_in_uniform(head_width);
        Tensor bw({4, head_width, 1, 1});
        for (long i = 0; i < bw.numel(); ++i) bw.data()[i] = rng.fan_in_uniform(head_width);
        h.box_weight = std::move(bw);
        h.box_bias.resize(4);
        for (double& v : h.box_bias) v = rng.fan_in_uniform(head_width);
        g.heads.push_back(std::move(h));
    }
    return g;
}

NeckGraph build_sod_neck(int base_channels, std::uint64_t seed) {
    return build_graph(preset_spec("sod", base_channels), seed);
}

std::vector<HeadOutput> neck_forward(const NeckGraph& graph, const Tensor& image) {
    const int coarsest = graph.spec.levels.back().stride;
    const Shape s = image.shape();
    if (s.h % coarsest != 0 || s.w % coarsest != 0)
        throw DimError("image spatial size " + s.str() + " not divisible by coarsest stride " +
                       std::to_string(coarsest));

    std::map<std::string, Tensor> values = graph.backbone.forward(image);
    for (const std::string& id : graph.order) {
        const BuiltNode& bn = graph.nodes.at(id);
        std::vector<Tensor> ins;
        ins.reserve(bn.inputs.size());
        for (const BuiltEdge& e : bn.inputs) {
            Tensor t = values.at(e.src);
            if (e.up_factor > 1) t = upsample_nearest(t, e.up_factor);
            for (const ConvBlock& d : e.downs) t = d.forward(t);
            ins.push_back(std::move(t));
        }
        Tensor x = ins.size() == 1 ? std::move(ins[0]) : concat(ins, 1);
        switch (bn.spec.op) {
            case FusionOp::c2f: values[id] = bn.c2f.forward(x); break;
            case FusionOp::c2f_ema: values[id] = bn.c2f_ema.forward(x); break;
            case FusionOp::conv3x3: values[id] = bn.conv.forward(x); break;
        }
    }

    std::vector<HeadOutput> out;
    out.reserve(graph.heads.size());
    for (const HeadBlock& h : graph.heads) {
        const Tensor& x = values.at(h.node_id);
        HeadOutput ho;
        ho.node = h.node_id;
        ho.stride = h.stride;
        ho.cls = conv2d(h.cls_stem.forward(x), h.cls_weight, h.cls_bias);
        ho.box = conv2d(h.box_stem.forward(x), h.box_weight, h.box_bias);
        out.push_back(std::move(ho));
    }
    return out;
}

std::string neck_report(const NeckGraphSpec& spec) {
    std::ostringstream os;
    os << "neck: " << spec.name << "\n";
    os << "policy: " << link_policy_name(spec.policy) << "\n";
    const std::vector<Diagnostic> diags = validate_channels(spec);
    os << "validation: " << (diags.empty() ? "OK" : "FAIL") << "\n";
    for (const Diagnostic& d : diags)
        os << "  " << (d.node.empty() ? "(spec)" : d.node) << ": " << d.message << "\n";

    std::map<std::string, int> dist;
    std::string dist_error;
    if (diags.empty()) {
        try {
            dist = gradient_distances(spec);
        } catch (const NeckError& e) {
            dist_error = e.what();
        }
    }
    std::vector<std::pair<std::string, std::string>> edges;
    try {
        edges = generate_edges(spec);
    } catch (const NeckError&) {
    }

    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %-6s %5s %6s %6s %6s %-8s %4s  %s\n", "node", "level",
                  "layer", "stride", "in_ch", "out_ch", "op", "dist", "inputs");
    os << buf;
    for (const NodeSpec& n : spec.nodes) {
        const LevelSpec& lv = spec.levels[static_cast<std::size_t>(n.level)];
        std::string inputs;
        for (const auto& [src, dst] : edges) {
            if (dst != n.id) continue;
            if (!inputs.empty()) inputs += " ";
            int ss = lv.stride;
            if (auto it = std::find_if(spec.levels.begin(), spec.levels.end(),
                                       [&](const LevelSpec& l) { return l.name == src; });
                it != spec.levels.end()) {
                ss = it->stride;
            } else {
                for (const NodeSpec& m : spec.nodes)
                    if (m.id == src)
                        ss = spec.levels[static_cast<std::size_t>(m.level)].stride;
            }
            if (ss > lv.stride) inputs += "up(" + src + ")";
            else if (ss < lv.stride) inputs += "down(" + src + ")";
            else inputs += src;
        }
        const std::string d = dist.count(n.id) ? std::to_string(dist.at(n.id)) : "-";
        std::snprintf(buf, sizeof buf, "%-8s %-6s %5d %6d %6d %6d %-8s %4s  %s\n", n.id.c_str(),
                      lv.name.c_str(), n.layer, lv.stride, n.in_channels, n.out_channels,
                      fusion_op_name(n.op).c_str(), d.c_str(), inputs.c_str());
        os << buf;
    }
    os << "heads:";
    for (const std::string& h : spec.head_nodes) os << " " << h;
    os << "\n";
    if (!dist_error.empty()) {
        os << "distance error: " << dist_error << "\n";
    } else if (diags.empty()) {
        int worst = 0;
        for (const auto& [id, d] : dist) worst = std::max(worst, d);
        os << "shortest_gradient_distance: " << worst << "\n";
    }
    return os.str();
}

}  // namespace minidet
