#include <fstream>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "condcls/compressor.hpp"

namespace comp = condcls::compressor;
using comp::Conv;
using comp::Flatten;
using comp::FullyConnected;
using comp::ModelIR;
using comp::Pool;
using comp::Shape;
using comp::SkipAdd;

namespace {

// Independent flop oracle: walks the chain keeping its own shape state.
std::uint64_t flops_oracle(const ModelIR& ir) {
    std::vector<Shape> outs;
    Shape cur = ir.input_shape;
    std::uint64_t total = 0;
    for (const auto& layer : ir.layers) {
        if (const auto* c = std::get_if<Conv>(&layer)) {
            const long long h = (cur.h + 2 * c->pad - c->kh) / c->stride + 1;
            const long long w = (cur.w + 2 * c->pad - c->kw) / c->stride + 1;
            total += static_cast<std::uint64_t>(c->kh) * c->kw * c->c_in * c->c_out * h * w;
            cur = {c->c_out, h, w};
        } else if (const auto* p = std::get_if<Pool>(&layer)) {
            cur.h = (cur.h + 2 * p->pad - p->k) / p->stride + 1;
            cur.w = (cur.w + 2 * p->pad - p->k) / p->stride + 1;
        } else if (const auto* f = std::get_if<FullyConnected>(&layer)) {
            total += static_cast<std::uint64_t>(f->d_in) * f->d_out;
            cur = {f->d_out, 1, 1};
        } else if (std::get_if<Flatten>(&layer)) {
            cur = {cur.c * cur.h * cur.w, 1, 1};
        }
        outs.push_back(cur);
    }
    return total;
}

ModelIR tiny_chain() {
    ModelIR ir;
    ir.input_shape = {2, 8, 8};
    ir.layers = {Conv{3, 3, 2, 4, 1, 1}, Conv{3, 3, 4, 4, 1, 1}, SkipAdd{0}};
    return ir;
}

}  // namespace

TEST_CASE("shape inference follows the floor convolution arithmetic") {
    ModelIR ir;
    ir.input_shape = {3, 224, 224};
    ir.layers = {Conv{7, 7, 3, 64, 2, 3}, Pool{Pool::Kind::Max, 3, 2, 1}};
    const auto shapes = comp::infer_shapes(ir);
    CHECK(shapes[0] == Shape{64, 112, 112});
    CHECK(shapes[1] == Shape{64, 56, 56});
}

TEST_CASE("odd sizes and strides floor correctly") {
    ModelIR ir;
    ir.input_shape = {1, 7, 7};
    ir.layers = {Conv{3, 3, 1, 1, 2, 0}};
    // (7 - 3)/2 + 1 = 3
    CHECK(comp::infer_shapes(ir)[0] == Shape{1, 3, 3});
}

TEST_CASE("skip add endpoints must agree in shape") {
    ModelIR ir;
    ir.input_shape = {2, 8, 8};
    ir.layers = {Conv{3, 3, 2, 4, 1, 1}, SkipAdd{-1}};  // 4 channels vs input's 2
    CHECK_THROWS_AS(comp::infer_shapes(ir), comp::ShapeMismatch);
}

TEST_CASE("conv and fc flop closed forms") {
    ModelIR ir;
    ir.input_shape = {2, 8, 8};
    ir.layers = {Conv{3, 3, 2, 4, 1, 1}};
    CHECK(comp::flops(ir) == 3ULL * 3 * 2 * 4 * 8 * 8);  // 4608

    ModelIR fc;
    fc.input_shape = {256, 1, 1};
    fc.layers = {Flatten{}, FullyConnected{256, 200}};
    CHECK(comp::flops(fc) == 51200);
}

TEST_CASE("pool, skip and flatten layers cost nothing") {
    const ModelIR ir = tiny_chain();
    CHECK(comp::flops(ir) == 4608 + 3ULL * 3 * 4 * 4 * 8 * 8);
}

TEST_CASE("reference model flop count matches the independent oracle") {
    const ModelIR ir = comp::resnet18();
    CHECK(comp::flops(ir) == flops_oracle(ir));
    CHECK(comp::flops(ir) == 1794344960ULL);
    // Final feature map before the classifier head is 512 x 7 x 7.
    const auto shapes = comp::infer_shapes(ir);
    CHECK(shapes[shapes.size() - 4] == Shape{512, 7, 7});
}

TEST_CASE("target blocks are contiguous, non-overlapping, and stride classed") {
    const ModelIR ir = comp::resnet18();
    const auto blocks = comp::find_target_blocks(ir, 2);
    CHECK(blocks.size() == 5);
    const auto shapes = comp::infer_shapes(ir);
    std::size_t prev_start = ir.layers.size();
    for (const auto& b : blocks) {  // emitted nearest-output first
        CHECK(b.end_index < prev_start);
        prev_start = b.start_index;
        CHECK(b.start_index >= 2);
        const Shape in = b.start_index == 0 ? ir.input_shape : shapes[b.start_index - 1];
        const Shape out = shapes[b.end_index];
        CHECK(in == b.in_shape);
        CHECK(out == b.out_shape);
        if (b.stride_class == 1) {
            CHECK(in.h == out.h);
            CHECK(in.w == out.w);
        } else {
            CHECK(b.stride_class == 2);
            CHECK(in.h == 2 * out.h);
        }
        CHECK(b.skip_eligible == (in.c == out.c));
    }
}

TEST_CASE("a quartered spatial map is not a target block") {
    ModelIR ir;
    ir.input_shape = {64, 32, 32};
    ir.layers = {Conv{3, 3, 64, 64, 2, 1}, Conv{3, 3, 64, 64, 2, 1}};  // 32 -> 8
    // The two-conv span quarters the map, so only the first conv (a clean
    // halving from the segment boundary) qualifies.
    const auto blocks = comp::find_target_blocks(ir, 0);
    REQUIRE(blocks.size() == 1);
    CHECK(blocks[0].start_index == 0);
    CHECK(blocks[0].end_index == 0);
    CHECK(blocks[0].stride_class == 2);
}

TEST_CASE("bottleneck substitution preserves the output shape and cuts flops") {
    const ModelIR ir = comp::resnet18();
    const auto blocks = comp::find_target_blocks(ir, 2);
    const auto before_shapes = comp::infer_shapes(ir);
    const comp::TargetBlock& b = blocks.front();
    const comp::ChannelTriple ch{b.out_shape.c, b.out_shape.c / 4, b.out_shape.c};
    const ModelIR sub = comp::substitute_bottleneck(ir, b, ch);
    const auto after_shapes = comp::infer_shapes(sub);
    CHECK(after_shapes.back() == before_shapes.back());
    CHECK(comp::flops(sub) < comp::flops(ir));
    CHECK(comp::flops(sub) == flops_oracle(sub));
}

TEST_CASE("merging non-adjacent spans is rejected") {
    const ModelIR ir = comp::resnet18();
    const auto blocks = comp::find_target_blocks(ir, 2);
    REQUIRE(blocks.size() >= 3);
    const comp::ChannelTriple ch{64, 16, 64};
    CHECK_THROWS_AS(comp::merge_bottleneck_compression(ir, blocks[0], blocks[2], ch),
                    comp::NotConsecutive);
}

TEST_CASE("ladder flop counts strictly decrease and the deepest rung saves 60 percent") {
    const ModelIR ir = comp::resnet18();
    std::uint64_t prev = comp::flops(ir) + 1;
    for (const std::string& level : comp::ladder_levels()) {
        const auto p = comp::plan(ir, level, 2, 0.25);
        CHECK(p.flops_after < prev);
        prev = p.flops_after;
        CHECK(p.flops_after == flops_oracle(p.result));
        const auto shapes = comp::infer_shapes(p.result);
        CHECK(shapes.back() == comp::infer_shapes(ir).back());
    }
    const auto deepest = comp::plan(ir, comp::ladder_levels().back(), 2, 0.25);
    const double reduction = 1.0 - static_cast<double>(deepest.flops_after) /
                                       static_cast<double>(deepest.flops_before);
    CHECK(reduction >= 0.60);
}

TEST_CASE("level L0 is the identity plan") {
    const ModelIR ir = comp::resnet18();
    const auto p = comp::plan(ir, "L0", 2, 0.25);
    CHECK(p.flops_after == p.flops_before);
    CHECK(p.substitutions.empty());
}

TEST_CASE("unknown ladder levels are rejected") {
    CHECK_THROWS_AS(comp::plan(comp::resnet18(), "L9", 2, 0.25), comp::UnknownLevel);
}

TEST_CASE("shared prefix sweep is monotone in kept layers") {
    const ModelIR ir = comp::resnet18();
    const auto rows = comp::sweep_shared_prefix(ir, "L44", 0.25);
    REQUIRE(!rows.empty());
    // Keeping more layers shared leaves fewer blocks to compress, so the
    // compressed flop count cannot decrease.
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].first > rows[i - 1].first);
        CHECK(rows[i].second >= rows[i - 1].second);
    }
}

TEST_CASE("model IR JSON round-trips with identical flops") {
    const ModelIR ir = comp::resnet18();
    const ModelIR back = comp::ir_from_json(comp::ir_to_json(ir));
    CHECK(back.input_shape == ir.input_shape);
    CHECK(back.layers.size() == ir.layers.size());
    CHECK(comp::flops(back) == comp::flops(ir));
}

TEST_CASE("bundled reference IR file matches the built-in builder") {
    std::ifstream in(std::string(CONDCLS_DATA_DIR) + "/resnet18.json");
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    const ModelIR loaded = comp::ir_from_json(buf.str());
    CHECK(comp::flops(loaded) == comp::flops(comp::resnet18()));
    CHECK(loaded.layers.size() == comp::resnet18().layers.size());
}
