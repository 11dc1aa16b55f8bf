#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "minidet/blocks.hpp"
#include "minidet/tensor.hpp"

namespace minidet {

class NeckError : public std::runtime_error {
public:
    explicit NeckError(const std::string& what) : std::runtime_error(what) {}
};

enum class FusionOp { c2f, c2f_ema, conv3x3 };
enum class LinkPolicy { explicit_edges, fpn, pafpn, queen_fusion, log2n, dense };

std::string fusion_op_name(FusionOp op);
bool parse_fusion_op(const std::string& name, FusionOp& out);
std::string link_policy_name(LinkPolicy p);
bool parse_link_policy(const std::string& name, LinkPolicy& out);

struct LevelSpec {
    std::string name;  // P2..P5 convention
    int stride = 0;
    int channels = 0;
};

struct NodeSpec {
    std::string id;
    int level = 0;  // index into levels
    int layer = 0;  // fusion column; 0 is the backbone input column
    FusionOp op = FusionOp::c2f;
    int in_channels = 0;  // declared entry width, checked against summed inputs
    int out_channels = 0;
};

// Declarative fusion topology. Edges are (source, destination) where a source
// is a level name (backbone input) or a node id; with a non-explicit policy
// the edge list is derived from the node grid instead.
struct NeckGraphSpec {
    std::string name;
    std::vector<LevelSpec> levels;
    std::vector<NodeSpec> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
    LinkPolicy policy = LinkPolicy::explicit_edges;
    bool prune_upsample = false;  // drop the upsampled queen-fusion diagonal
    std::vector<std::string> head_nodes;
    int num_classes = 10;
    int head_width = 0;  // 0 = finest level channels
};

struct Diagnostic {
    std::string node;
    std::string message;
};

// --- topology math ----------------------------------------------------------

// Skip sources l - 2^i for 2^i <= l; count is floor(log2 l) + 1.
std::vector<int> log2n_sources(int l);
// All preceding layers 0..l-1.
std::vector<int> dense_sources(int l);

// Edge list for the spec's policy (explicit specs pass through unchanged).
std::vector<std::pair<std::string, std::string>> generate_edges(const NeckGraphSpec& spec);
// Queen-fusion adjacency: same-level previous column, downsampled finer
// diagonal, and (unless pruned) upsampled coarser diagonal.
std::vector<std::pair<std::string, std::string>> queen_fusion_edges(const NeckGraphSpec& spec);

std::vector<Diagnostic> validate_channels(const NeckGraphSpec& spec);

// Max over fusion nodes of the shortest edge-path length to a head node.
int shortest_gradient_distance(const NeckGraphSpec& spec);
// Per-node distances keyed by node id (used by the report table).
std::map<std::string, int> gradient_distances(const NeckGraphSpec& spec);

// --- presets ----------------------------------------------------------------

// fpn | pafpn | gfpn | sod | log2n | dense
NeckGraphSpec preset_spec(const std::string& name, int base_channels = 16);
std::vector<std::string> preset_names();

// --- executable graph -------------------------------------------------------

// Stem plus one strided stage per level (C2f after each), SPPF on the deepest.
struct BackboneStub {
    ConvBlock stem;
    struct Stage {
        std::vector<ConvBlock> downs;  // stride-2 convs reaching the level stride
        C2fBlock c2f;
        std::string level_name;
    };
    std::vector<Stage> stages;
    SPPFBlock sppf;

    std::map<std::string, Tensor> forward(const Tensor& image) const;
};

struct HeadBlock {
    ConvBlock cls_stem, box_stem;
    Tensor cls_weight, box_weight;  // plain 1x1 output convs
    std::vector<double> cls_bias, box_bias;
    std::string node_id;
    int stride = 0;
};

struct BuiltEdge {
    std::string src;
    int up_factor = 1;                 // nearest upsample
    std::vector<ConvBlock> downs;      // stride-2 3x3 convs
};

struct BuiltNode {
    NodeSpec spec;
    int stride = 0;
    std::vector<BuiltEdge> inputs;
    // exactly one of these is populated, per spec.op
    C2fBlock c2f;
    C2fEMABlock c2f_ema;
    ConvBlock conv;
};

struct NeckGraph {
    NeckGraphSpec spec;
    std::vector<std::pair<std::string, std::string>> edges;
    std::vector<std::string> order;  // topological node order
    std::map<std::string, BuiltNode> nodes;
    BackboneStub backbone;
    std::vector<HeadBlock> heads;
};

NeckGraph build_graph(const NeckGraphSpec& spec, std::uint64_t seed);
// The shipped 4-head small-object neck (preset "sod") at the given base width.
NeckGraph build_sod_neck(int base_channels, std::uint64_t seed);

struct HeadOutput {
    std::string node;
    int stride = 0;
    Tensor cls;  // num_classes channels
    Tensor box;  // 4 channels
};

std::vector<HeadOutput> neck_forward(const NeckGraph& graph, const Tensor& image);

// Fixed-column node table plus distance summary and validation status.
std::string neck_report(const NeckGraphSpec& spec);

}  // namespace minidet
