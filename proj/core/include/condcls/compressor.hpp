#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace condcls::compressor {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotConsecutive : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownLevel : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Feature-map shape: channels, height, width.
struct Shape {
    long long c = 0;
    long long h = 0;
    long long w = 0;
    bool operator==(const Shape&) const = default;
};

struct Conv {
    int kh = 3, kw = 3;
    long long c_in = 0, c_out = 0;
    int stride = 1, pad = 0;
};
struct FullyConnected {
    long long d_in = 0, d_out = 0;
};
struct Pool {
    enum class Kind { Max, Avg };
    Kind kind = Kind::Max;
    int k = 2, stride = 2, pad = 0;
};
/// Adds the output of an earlier layer; from = -1 means the model input.
struct SkipAdd {
    long long from = -1;
};
struct Flatten {};

using Layer = std::variant<Conv, FullyConnected, Pool, SkipAdd, Flatten>;

/// Layer-graph description of a CNN: a chain of layers with skip adds
/// referencing earlier layer outputs.
struct ModelIR {
    Shape input_shape;
    std::vector<Layer> layers;
};

/// A span of layers replaceable by a bottleneck: the output spatial size is
/// either equal to the input (stride class 1) or exactly halved (stride
/// class 2), and a skip connection is added when the channel counts match.
struct TargetBlock {
    std::size_t start_index = 0;
    std::size_t end_index = 0;  // inclusive
    Shape in_shape;
    Shape out_shape;
    int stride_class = 1;
    bool skip_eligible = false;
};

/// First conv channel count x, middle y, last z.
struct ChannelTriple {
    long long x = 0, y = 0, z = 0;
};

struct Substitution {
    TargetBlock block;
    std::string kind;  // "bottleneck" or "bottleneck_compression"
    ChannelTriple channels;
};

struct CompressionPlan {
    std::string level;
    std::vector<Substitution> substitutions;
    ModelIR result;
    std::uint64_t flops_before = 0;
    std::uint64_t flops_after = 0;
    std::size_t shared_prefix_len = 0;
};

/// Output shape of every layer. Throws ShapeMismatch (naming the layer
/// index) if the chain breaks or skip endpoints differ.
std::vector<Shape> infer_shapes(const ModelIR& ir);

/// Multiply-accumulate count: conv layers contribute kh*kw*c_in*c_out*h*w
/// of the output map, fully connected d_in*d_out, everything else 0.
std::uint64_t flops(const ModelIR& ir);

/// Backward scan from the last conv emitting maximal non-overlapping
/// substitutable spans after the shared prefix.
std::vector<TargetBlock> find_target_blocks(const ModelIR& ir, std::size_t shared_prefix_len);

/// Replace a target block with conv1x1(x) -> conv3x3(y, stride) -> conv1x1(z),
/// appending a skip connection when the block is skip eligible.
ModelIR substitute_bottleneck(const ModelIR& ir, const TargetBlock& block,
                              const ChannelTriple& channels);

/// Replace two adjacent bottleneck spans with conv3x3(x) -> conv1x1(y) ->
/// conv3x3(z); the combined stride is carried by the 3x3 layers.
ModelIR merge_bottleneck_compression(const ModelIR& ir, const TargetBlock& first,
                                     const TargetBlock& second, const ChannelTriple& channels);

inline const std::vector<std::string>& ladder_levels() {
    static const std::vector<std::string> levels = {"L0",  "L1",  "L2", "L22",
                                                    "L3",  "L33", "L4", "L44"};
    return levels;
}

/// Apply one ladder rung: Ln substitutes bottlenecks into the n target
/// blocks nearest the output; doubled levels additionally merge adjacent
/// bottleneck pairs into compression blocks.
CompressionPlan plan(const ModelIR& ir, const std::string& level, std::size_t shared_prefix_len,
                     double width_ratio);

/// FLOP count of every shared-prefix choice for a fixed rung.
std::vector<std::pair<std::size_t, std::uint64_t>> sweep_shared_prefix(const ModelIR& ir,
                                                                       const std::string& level,
                                                                       double width_ratio);

/// Reference ResNet18 chain (224x224 input by default).
ModelIR resnet18(long long num_classes = 100, Shape input = {3, 224, 224});

std::string ir_to_json(const ModelIR& ir);
ModelIR ir_from_json(const std::string& text);
std::string plan_to_json(const CompressionPlan& p);

}  // namespace condcls::compressor
