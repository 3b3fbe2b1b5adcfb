#include "condcls/compressor.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace condcls::compressor {

namespace {

using nlohmann::json;

std::string at_layer(std::size_t idx, const std::string& what) {
    return "layer " + std::to_string(idx) + ": " + what;
}

long long conv_out_extent(long long in, int k, int stride, int pad, std::size_t idx) {
    const long long padded = in + 2LL * pad;
    if (k > padded) throw ShapeMismatch(at_layer(idx, "kernel exceeds padded input"));
    const long long out = (padded - k) / stride + 1;
    if (out < 1) throw ShapeMismatch(at_layer(idx, "output extent collapses below 1"));
    return out;
}

}  // namespace

std::vector<Shape> infer_shapes(const ModelIR& ir) {
    std::vector<Shape> shapes;
    shapes.reserve(ir.layers.size());
    Shape cur = ir.input_shape;
    if (cur.c < 1 || cur.h < 1 || cur.w < 1)
        throw ShapeMismatch("input shape has non-positive extent");
    for (std::size_t idx = 0; idx < ir.layers.size(); ++idx) {
        const Layer& layer = ir.layers[idx];
        if (const auto* conv = std::get_if<Conv>(&layer)) {
            if (conv->c_in != cur.c)
                throw ShapeMismatch(at_layer(idx, "conv c_in does not match incoming channels"));
            cur = {conv->c_out, conv_out_extent(cur.h, conv->kh, conv->stride, conv->pad, idx),
                   conv_out_extent(cur.w, conv->kw, conv->stride, conv->pad, idx)};
        } else if (const auto* pool = std::get_if<Pool>(&layer)) {
            cur = {cur.c, conv_out_extent(cur.h, pool->k, pool->stride, pool->pad, idx),
                   conv_out_extent(cur.w, pool->k, pool->stride, pool->pad, idx)};
        } else if (const auto* skip = std::get_if<SkipAdd>(&layer)) {
            Shape other;
            if (skip->from < 0) {
                other = ir.input_shape;
            } else if (static_cast<std::size_t>(skip->from) < idx) {
                other = shapes[static_cast<std::size_t>(skip->from)];
            } else {
                throw ShapeMismatch(at_layer(idx, "skip references a later layer"));
            }
            if (!(other == cur))
                throw ShapeMismatch(at_layer(idx, "skip endpoints have different shapes"));
        } else if (std::holds_alternative<Flatten>(layer)) {
            cur = {cur.c * cur.h * cur.w, 1, 1};
        } else if (const auto* fc = std::get_if<FullyConnected>(&layer)) {
            if (cur.h != 1 || cur.w != 1 || cur.c != fc->d_in)
                throw ShapeMismatch(at_layer(idx, "fully connected input is not flattened d_in"));
            cur = {fc->d_out, 1, 1};
        }
        shapes.push_back(cur);
    }
    return shapes;
}

std::uint64_t flops(const ModelIR& ir) {
    const std::vector<Shape> shapes = infer_shapes(ir);
    std::uint64_t total = 0;
    for (std::size_t idx = 0; idx < ir.layers.size(); ++idx) {
        if (const auto* conv = std::get_if<Conv>(&ir.layers[idx])) {
            const Shape& out = shapes[idx];
            total += static_cast<std::uint64_t>(conv->kh) * conv->kw * conv->c_in * conv->c_out *
                     out.h * out.w;
        } else if (const auto* fc = std::get_if<FullyConnected>(&ir.layers[idx])) {
            total += static_cast<std::uint64_t>(fc->d_in) * fc->d_out;
        }
    }
    return total;
}

namespace {

bool span_eligible(const Layer& layer) {
    return std::holds_alternative<Conv>(layer) || std::holds_alternative<SkipAdd>(layer);
}

/// 1 for equal spatial extents, 2 for exactly halved, 0 otherwise.
int stride_class_of(const Shape& in, const Shape& out) {
    if (in.h == out.h && in.w == out.w) return 1;
    if (in.h == 2 * out.h && in.w == 2 * out.w) return 2;
    return 0;
}

Shape shape_before(const ModelIR& ir, const std::vector<Shape>& shapes, std::size_t idx) {
    return idx == 0 ? ir.input_shape : shapes[idx - 1];
}

/// Replace layers [start, end] with `replacement`, remapping skip indices in
/// the tail. A tail skip referencing the old span's last layer is redirected
/// to the replacement's last layer.
ModelIR replace_span(const ModelIR& ir, std::size_t start, std::size_t end,
                     const std::vector<Layer>& replacement) {
    ModelIR out;
    out.input_shape = ir.input_shape;
    out.layers.assign(ir.layers.begin(), ir.layers.begin() + start);
    out.layers.insert(out.layers.end(), replacement.begin(), replacement.end());
    const long long delta =
        static_cast<long long>(replacement.size()) - static_cast<long long>(end - start + 1);
    for (std::size_t idx = end + 1; idx < ir.layers.size(); ++idx) {
        Layer layer = ir.layers[idx];
        if (auto* skip = std::get_if<SkipAdd>(&layer)) {
            if (skip->from == static_cast<long long>(end)) {
                skip->from = static_cast<long long>(start + replacement.size()) - 1;
            } else if (skip->from >= static_cast<long long>(start) &&
                       skip->from < static_cast<long long>(end)) {
                throw ShapeMismatch(at_layer(idx, "skip references inside a replaced span"));
            } else if (skip->from > static_cast<long long>(end)) {
                skip->from += delta;
            }
        }
        out.layers.push_back(layer);
    }
    return out;
}

TargetBlock make_block(const ModelIR& ir, const std::vector<Shape>& shapes, std::size_t start,
                       std::size_t end) {
    TargetBlock b;
    b.start_index = start;
    b.end_index = end;
    b.in_shape = shape_before(ir, shapes, start);
    b.out_shape = shapes[end];
    b.stride_class = stride_class_of(b.in_shape, b.out_shape);
    b.skip_eligible = b.in_shape.c == b.out_shape.c;
    return b;
}

}  // namespace

std::vector<TargetBlock> find_target_blocks(const ModelIR& ir, std::size_t shared_prefix_len) {
    const std::vector<Shape> shapes = infer_shapes(ir);
    std::vector<TargetBlock> blocks;
    if (ir.layers.empty() || shared_prefix_len >= ir.layers.size()) return blocks;

    auto is_boundary = [&](std::size_t s) {
        return s == shared_prefix_len || !std::holds_alternative<Conv>(ir.layers[s - 1]);
    };

    long long e = static_cast<long long>(ir.layers.size()) - 1;
    while (e >= static_cast<long long>(shared_prefix_len)) {
        if (!span_eligible(ir.layers[static_cast<std::size_t>(e)])) {
            --e;
            continue;
        }
        const std::size_t eu = static_cast<std::size_t>(e);
        // Contiguous eligible span [s, e] ending here whose start sits on the
        // nearest segment boundary satisfying the stride relation.
        bool found = false;
        std::size_t best_s = 0;
        std::size_t conv_count = 0;
        for (long long s = e; s >= static_cast<long long>(shared_prefix_len); --s) {
            const std::size_t su = static_cast<std::size_t>(s);
            if (!span_eligible(ir.layers[su])) break;
            if (std::holds_alternative<Conv>(ir.layers[su])) ++conv_count;
            if (conv_count > 0 && is_boundary(su) &&
                stride_class_of(shape_before(ir, shapes, su), shapes[eu]) != 0) {
                best_s = su;
                found = true;
                break;
            }
        }
        if (found) {
            blocks.push_back(make_block(ir, shapes, best_s, eu));
            e = static_cast<long long>(best_s) - 1;
        } else {
            --e;
        }
    }
    return blocks;  // nearest the output first
}

ModelIR substitute_bottleneck(const ModelIR& ir, const TargetBlock& block,
                              const ChannelTriple& channels) {
    const std::vector<Shape> shapes = infer_shapes(ir);
    if (block.end_index >= ir.layers.size() || block.start_index > block.end_index)
        throw ShapeMismatch("target block indices out of range");
    const Shape in = shape_before(ir, shapes, block.start_index);
    const Shape out = shapes[block.end_index];
    if (channels.z != out.c)
        throw ShapeMismatch("bottleneck z channels must match the block output");
    const int stride = stride_class_of(in, out);
    if (stride == 0) throw ShapeMismatch("block endpoint shapes admit no stride class");

    std::vector<Layer> replacement;
    replacement.push_back(Conv{1, 1, in.c, channels.x, 1, 0});
    replacement.push_back(Conv{3, 3, channels.x, channels.y, stride, 1});
    replacement.push_back(Conv{1, 1, channels.y, channels.z, 1, 0});
    if (in.c == out.c) {
        const long long from = static_cast<long long>(block.start_index) - 1;
        replacement.push_back(SkipAdd{from});
    }
    ModelIR result = replace_span(ir, block.start_index, block.end_index, replacement);
    infer_shapes(result);  // re-chain check
    return result;
}

ModelIR merge_bottleneck_compression(const ModelIR& ir, const TargetBlock& first,
                                     const TargetBlock& second, const ChannelTriple& channels) {
    if (first.end_index + 1 != second.start_index)
        throw NotConsecutive("bottleneck blocks are not adjacent spans");
    const std::vector<Shape> shapes = infer_shapes(ir);
    const Shape in = shape_before(ir, shapes, first.start_index);
    const Shape out = shapes[second.end_index];
    if (channels.z != out.c)
        throw ShapeMismatch("compression z channels must match the block output");
    if (out.h < 1 || in.h % out.h != 0)
        throw ShapeMismatch("merged span spatial extents are not stride compatible");
    const long long ratio = in.h / out.h;
    int stride_a = 1, stride_b = 1;
    if (ratio == 2) {
        stride_a = 2;
    } else if (ratio == 4) {
        stride_a = 2;
        stride_b = 2;
    } else if (ratio != 1) {
        throw ShapeMismatch("merged span spatial reduction is not a power-of-two stride");
    }

    std::vector<Layer> replacement;
    replacement.push_back(Conv{3, 3, in.c, channels.x, stride_a, 1});
    replacement.push_back(Conv{1, 1, channels.x, channels.y, 1, 0});
    replacement.push_back(Conv{3, 3, channels.y, channels.z, stride_b, 1});
    if (in.c == out.c) {
        const long long from = static_cast<long long>(first.start_index) - 1;
        replacement.push_back(SkipAdd{from});
    }
    ModelIR result = replace_span(ir, first.start_index, second.end_index, replacement);
    infer_shapes(result);
    return result;
}

namespace {

long long scaled_width(double ratio, long long c) {
    return std::max(1LL, static_cast<long long>(std::llround(ratio * static_cast<double>(c))));
}

struct LevelSpec {
    std::size_t depth = 0;
    bool merged = false;
};

LevelSpec parse_level(const std::string& level) {
    const auto& levels = ladder_levels();
    if (std::find(levels.begin(), levels.end(), level) == levels.end())
        throw UnknownLevel("unsupported ladder level: " + level);
    LevelSpec spec;
    spec.depth = static_cast<std::size_t>(level[1] - '0');
    spec.merged = level.size() == 3;
    return spec;
}

}  // namespace

CompressionPlan plan(const ModelIR& ir, const std::string& level, std::size_t shared_prefix_len,
                     double width_ratio) {
    if (width_ratio <= 0.0 || width_ratio > 1.0)
        throw UnknownLevel("width ratio must lie in (0,1]");
    const LevelSpec spec = parse_level(level);

    CompressionPlan out;
    out.level = level;
    out.shared_prefix_len = shared_prefix_len;
    out.flops_before = flops(ir);

    std::vector<TargetBlock> blocks = find_target_blocks(ir, shared_prefix_len);
    const std::size_t depth = std::min(spec.depth, blocks.size());

    ModelIR current = ir;
    std::vector<long long> deltas(depth, 0);
    // Blocks arrive nearest-output first (descending start), so substituting
    // in order leaves the remaining blocks' indices untouched.
    for (std::size_t i = 0; i < depth; ++i) {
        const TargetBlock& b = blocks[i];
        ChannelTriple ch{b.out_shape.c, scaled_width(width_ratio, b.out_shape.c), b.out_shape.c};
        const std::size_t before = current.layers.size();
        current = substitute_bottleneck(current, b, ch);
        deltas[i] = static_cast<long long>(current.layers.size()) - static_cast<long long>(before);
        out.substitutions.push_back({b, "bottleneck", ch});
    }

    if (spec.merged && depth >= 2) {
        // Spans of the substituted blocks in the current IR, nearest output first.
        std::vector<std::pair<std::size_t, std::size_t>> spans(depth);
        for (std::size_t i = 0; i < depth; ++i) {
            long long shift = 0;
            for (std::size_t j = i + 1; j < depth; ++j) shift += deltas[j];
            const std::size_t len = 3 + (blocks[i].skip_eligible ? 1 : 0);
            const std::size_t start =
                static_cast<std::size_t>(static_cast<long long>(blocks[i].start_index) + shift);
            spans[i] = {start, start + len - 1};
        }
        for (std::size_t i = 0; i + 1 < depth; i += 2) {
            const auto& near = spans[i];      // closer to the output, later layers
            const auto& far = spans[i + 1];   // earlier layers
            if (far.second + 1 != near.first) continue;  // non-adjacent pair stays as-is
            const std::vector<Shape> cur_shapes = infer_shapes(current);
            const TargetBlock first = make_block(current, cur_shapes, far.first, far.second);
            const TargetBlock second = make_block(current, cur_shapes, near.first, near.second);
            const long long c2 = cur_shapes[near.second].c;
            ChannelTriple ch{scaled_width(width_ratio, c2), scaled_width(width_ratio, c2), c2};
            current = merge_bottleneck_compression(current, first, second, ch);
            TargetBlock merged = first;
            merged.end_index = second.end_index;
            merged.out_shape = second.out_shape;
            merged.stride_class = first.stride_class * second.stride_class;
            merged.skip_eligible = merged.in_shape.c == merged.out_shape.c;
            out.substitutions.push_back({merged, "bottleneck_compression", ch});
        }
    }

    out.result = current;
    out.flops_after = flops(current);
    return out;
}

std::vector<std::pair<std::size_t, std::uint64_t>> sweep_shared_prefix(const ModelIR& ir,
                                                                       const std::string& level,
                                                                       double width_ratio) {
    std::vector<std::pair<std::size_t, std::uint64_t>> out;
    for (std::size_t prefix = 0; prefix < ir.layers.size(); ++prefix)
        out.emplace_back(prefix, plan(ir, level, prefix, width_ratio).flops_after);
    return out;
}

ModelIR resnet18(long long num_classes, Shape input) {
    ModelIR ir;
    ir.input_shape = input;
    auto conv3 = [](long long c_in, long long c_out, int stride) {
        return Conv{3, 3, c_in, c_out, stride, 1};
    };
    auto basic_block = [&](long long c_in, long long c_out, int stride) {
        const long long pre = static_cast<long long>(ir.layers.size()) - 1;
        ir.layers.push_back(conv3(c_in, c_out, stride));
        ir.layers.push_back(conv3(c_out, c_out, 1));
        if (stride == 1 && c_in == c_out) ir.layers.push_back(SkipAdd{pre});
    };

    ir.layers.push_back(Conv{7, 7, input.c, 64, 2, 3});
    ir.layers.push_back(Pool{Pool::Kind::Max, 3, 2, 1});
    basic_block(64, 64, 1);
    basic_block(64, 64, 1);
    basic_block(64, 128, 2);
    basic_block(128, 128, 1);
    basic_block(128, 256, 2);
    basic_block(256, 256, 1);
    basic_block(256, 512, 2);
    basic_block(512, 512, 1);
    const Shape pre_fc = infer_shapes(ir).back();
    ir.layers.push_back(Pool{Pool::Kind::Avg, static_cast<int>(pre_fc.h), 1, 0});
    ir.layers.push_back(Flatten{});
    ir.layers.push_back(FullyConnected{pre_fc.c, num_classes});
    return ir;
}

namespace {

json layer_to_json(const Layer& layer) {
    json j;
    if (const auto* conv = std::get_if<Conv>(&layer)) {
        j["type"] = "conv";
        j["k"] = {conv->kh, conv->kw};
        j["c_in"] = conv->c_in;
        j["c_out"] = conv->c_out;
        j["stride"] = conv->stride;
        j["pad"] = conv->pad;
    } else if (const auto* fc = std::get_if<FullyConnected>(&layer)) {
        j["type"] = "fc";
        j["d_in"] = fc->d_in;
        j["d_out"] = fc->d_out;
    } else if (const auto* pool = std::get_if<Pool>(&layer)) {
        j["type"] = "pool";
        j["kind"] = pool->kind == Pool::Kind::Max ? "max" : "avg";
        j["k"] = pool->k;
        j["stride"] = pool->stride;
        j["pad"] = pool->pad;
    } else if (const auto* skip = std::get_if<SkipAdd>(&layer)) {
        j["type"] = "skip_add";
        j["from"] = skip->from;
    } else {
        j["type"] = "flatten";
    }
    return j;
}

Layer layer_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv") {
        Conv conv;
        conv.kh = j.at("k").at(0).get<int>();
        conv.kw = j.at("k").at(1).get<int>();
        conv.c_in = j.at("c_in").get<long long>();
        conv.c_out = j.at("c_out").get<long long>();
        conv.stride = j.at("stride").get<int>();
        conv.pad = j.at("pad").get<int>();
        return conv;
    }
    if (type == "fc")
        return FullyConnected{j.at("d_in").get<long long>(), j.at("d_out").get<long long>()};
    if (type == "pool") {
        Pool pool;
        pool.kind = j.at("kind").get<std::string>() == "max" ? Pool::Kind::Max : Pool::Kind::Avg;
        pool.k = j.at("k").get<int>();
        pool.stride = j.at("stride").get<int>();
        pool.pad = j.value("pad", 0);
        return pool;
    }
    if (type == "skip_add") return SkipAdd{j.at("from").get<long long>()};
    if (type == "flatten") return Flatten{};
    throw ShapeMismatch("unknown layer type in IR JSON: " + type);
}

}  // namespace

std::string ir_to_json(const ModelIR& ir) {
    json j;
    j["input_shape"] = {ir.input_shape.c, ir.input_shape.h, ir.input_shape.w};
    j["layers"] = json::array();
    for (const Layer& layer : ir.layers) j["layers"].push_back(layer_to_json(layer));
    return j.dump(2);
}

ModelIR ir_from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelIR ir;
    ir.input_shape = {j.at("input_shape").at(0).get<long long>(),
                      j.at("input_shape").at(1).get<long long>(),
                      j.at("input_shape").at(2).get<long long>()};
    for (const json& lj : j.at("layers")) ir.layers.push_back(layer_from_json(lj));
    return ir;
}

std::string plan_to_json(const CompressionPlan& p) {
    json j;
    j["level"] = p.level;
    j["shared_prefix_len"] = p.shared_prefix_len;
    j["flops_before"] = p.flops_before;
    j["flops_after"] = p.flops_after;
    j["reduction"] =
        p.flops_before == 0
            ? 0.0
            : 1.0 - static_cast<double>(p.flops_after) / static_cast<double>(p.flops_before);
    j["substitutions"] = json::array();
    for (const Substitution& s : p.substitutions) {
        json sj;
        sj["start"] = s.block.start_index;
        sj["end"] = s.block.end_index;
        sj["kind"] = s.kind;
        sj["channels"] = {s.channels.x, s.channels.y, s.channels.z};
        j["substitutions"].push_back(sj);
    }
    j["result"] = json::parse(ir_to_json(p.result));
    return j.dump(2);
}

}  // namespace condcls::compressor
