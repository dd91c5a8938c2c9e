// Copyright 2026 The PDNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pdnet/backbone.hpp"

#include <stdexcept>

#include "pdnet/errors.hpp"

namespace pdnet {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

struct StageLayout {
    bool bottleneck = false;
    std::array<int, 4> blocks{};
};

StageLayout layout_for(int depth)
{
    switch (depth) {
    case 10: return {false, {1, 1, 1, 1}};
    case 18: return {false, {2, 2, 2, 2}};
    case 34: return {false, {3, 4, 6, 3}};
    case 50: return {true, {3, 4, 6, 3}};
    case 101: return {true, {3, 4, 23, 3}};
    default: throw ConfigError("unsupported backbone depth " + std::to_string(depth));
    }
}

nn::Conv2d conv(int in, int out, int k, int stride = 1, bool bias = false)
{
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(bias));
}

class BasicBlockImpl : public nn::Module {
public:
    BasicBlockImpl(int in, int width, int stride)
        : conv1(register_module("conv1", conv(in, width, 3, stride))),
          bn1(register_module("bn1", nn::BatchNorm2d(width))),
          conv2(register_module("conv2", conv(width, width, 3))),
          bn2(register_module("bn2", nn::BatchNorm2d(width)))
    {
        if (stride != 1 || in != width)
            downsample = register_module("downsample", nn::Sequential(conv(in, width, 1, stride), nn::BatchNorm2d(width)));
    }

    torch::Tensor forward(const torch::Tensor& x)
    {
        auto out = torch::relu(bn1(conv1(x)));
        out = bn2(conv2(out));
        const auto identity = downsample ? downsample->forward(x) : x;
        return torch::relu(out + identity);
    }

    static constexpr int expansion = 1;

private:
    nn::Conv2d conv1;
    nn::BatchNorm2d bn1;
    nn::Conv2d conv2;
    nn::BatchNorm2d bn2;
    nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public nn::Module {
public:
    BottleneckImpl(int in, int width, int stride)
        : conv1(register_module("conv1", conv(in, width, 1))),
          bn1(register_module("bn1", nn::BatchNorm2d(width))),
          conv2(register_module("conv2", conv(width, width, 3, stride))),
          bn2(register_module("bn2", nn::BatchNorm2d(width))),
          conv3(register_module("conv3", conv(width, width * expansion, 1))),
          bn3(register_module("bn3", nn::BatchNorm2d(width * expansion)))
    {
        if (stride != 1 || in != width * expansion)
            downsample = register_module(
                "downsample", nn::Sequential(conv(in, width * expansion, 1, stride), nn::BatchNorm2d(width * expansion)));
    }

    torch::Tensor forward(const torch::Tensor& x)
    {
        auto out = torch::relu(bn1(conv1(x)));
        out = torch::relu(bn2(conv2(out)));
        out = bn3(conv3(out));
        const auto identity = downsample ? downsample->forward(x) : x;
        return torch::relu(out + identity);
    }

    static constexpr int expansion = 4;

private:
    nn::Conv2d conv1;
    nn::BatchNorm2d bn1;
    nn::Conv2d conv2;
    nn::BatchNorm2d bn2;
    nn::Conv2d conv3;
    nn::BatchNorm2d bn3;
    nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

void init_conv_weights(nn::Module& module)
{
    for (auto& m : module.modules(/*include_self=*/false)) {
        if (auto* c = m->as<nn::Conv2d>()) {
            nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
            if (c->bias.defined())
                nn::init::zeros_(c->bias);
        } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
            nn::init::ones_(bn->weight);
            nn::init::zeros_(bn->bias);
        }
    }
}

} // namespace

int stage_channels(const BackboneConfig& cfg, int stage)
{
    const auto layout = layout_for(cfg.depth);
    return cfg.base_width * (1 << stage) * (layout.bottleneck ? 4 : 1);
}

torch::Tensor resize_bilinear(const torch::Tensor& x, std::vector<int64_t> size)
{
    if (x.size(2) == size[0] && x.size(3) == size[1])
        return x;
    return F::interpolate(x, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false));
}

ResNetImpl::ResNetImpl(const BackboneConfig& cfg, int num_stages) : cfg_(cfg)
{
    if (num_stages < 1 || num_stages > 4)
        throw ConfigError("ResNet: num_stages must be in [1, 4]");
    if (cfg.base_width < 1)
        throw ConfigError("ResNet: base_width must be positive");
    const auto layout = layout_for(cfg.depth);
    conv1 = register_module("conv1", conv(3, cfg.base_width, 7, 2));
    bn1 = register_module("bn1", nn::BatchNorm2d(cfg.base_width));
    maxpool = register_module("maxpool", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));

    int in = cfg.base_width;
    for (int stage = 0; stage < num_stages; ++stage) {
        const int width = cfg.base_width * (1 << stage);
        const int stride = stage == 0 ? 1 : 2;
        nn::Sequential seq;
        for (int b = 0; b < layout.blocks[static_cast<std::size_t>(stage)]; ++b) {
            if (layout.bottleneck) {
                seq->push_back(Bottleneck(in, width, b == 0 ? stride : 1));
                in = width * BottleneckImpl::expansion;
            } else {
                seq->push_back(BasicBlock(in, width, b == 0 ? stride : 1));
                in = width * BasicBlockImpl::expansion;
            }
        }
        layers_.push_back(register_module("layer" + std::to_string(stage + 1), seq));
    }
    init_conv_weights(*this);
}

std::vector<torch::Tensor> ResNetImpl::forward(const torch::Tensor& x)
{
    auto h = maxpool(torch::relu(bn1(conv1(x))));
    std::vector<torch::Tensor> stages;
    stages.reserve(layers_.size());
    for (auto& layer : layers_) {
        h = layer->forward(h);
        stages.push_back(h);
    }
    return stages;
}

SiameseEncoderImpl::SiameseEncoderImpl(const BackboneConfig& cfg) : cfg_(cfg)
{
    if (cfg.fpn_width < 1)
        throw ConfigError("encoder: fpn_width must be positive");
    trunk_ = register_module("trunk", ResNet(cfg));
    for (int stage = 0; stage < 4; ++stage) {
        lateral_->push_back(nn::Conv2d(nn::Conv2dOptions(stage_channels(cfg, stage), cfg.fpn_width, 1)));
        smooth_->push_back(nn::Conv2d(nn::Conv2dOptions(cfg.fpn_width, cfg.fpn_width, 3).padding(1)));
        aux_heads_->push_back(nn::Conv2d(nn::Conv2dOptions(cfg.fpn_width, 1, 1)));
    }
    register_module("lateral", lateral_);
    register_module("smooth", smooth_);
    register_module("aux_heads", aux_heads_);
    for (auto* list : {&lateral_, &smooth_, &aux_heads_})
        for (const auto& m : **list) {
            auto* c = m->as<nn::Conv2d>();
            nn::init::kaiming_uniform_(c->weight, 1.0);
            nn::init::zeros_(c->bias);
        }
}

AppearanceFeatures SiameseEncoderImpl::encode(const torch::Tensor& frame)
{
    if (frame.dim() != 4 || frame.size(1) != 3)
        throw std::invalid_argument("encode: expected a [B, 3, H, W] frame, got " + std::to_string(frame.dim()) +
                                    "-d tensor with " + (frame.dim() >= 2 ? std::to_string(frame.size(1)) : "?") +
                                    " channels");
    const auto stages = trunk_->forward(frame);

    AppearanceFeatures out;
    torch::Tensor top;
    for (int stage = 3; stage >= 0; --stage) {
        const auto& c = stages[static_cast<std::size_t>(stage)];
        auto lateral = lateral_[static_cast<std::size_t>(stage)]->as<nn::Conv2d>()->forward(c);
        if (top.defined())
            lateral = lateral + F::interpolate(top, F::InterpolateFuncOptions()
                                                        .size(std::vector<int64_t>{c.size(2), c.size(3)})
                                                        .mode(torch::kNearest));
        top = lateral;
        const int stride = 4 << stage;
        auto level = smooth_[static_cast<std::size_t>(stage)]->as<nn::Conv2d>()->forward(lateral);
        auto aux = aux_heads_[static_cast<std::size_t>(stage)]->as<nn::Conv2d>()->forward(level);
        out.pyramid.push_back({level, stride});
        out.aux_logits.push_back({aux, stride});
    }
    out.fused = out.pyramid.back();
    return out;
}

namespace {

AppearanceFeatures slice_batch(const AppearanceFeatures& f, int64_t begin, int64_t end)
{
    auto cut = [&](const FeatureMap& m) { return FeatureMap{m.data.slice(0, begin, end), m.stride}; };
    AppearanceFeatures out;
    out.fused = cut(f.fused);
    for (const auto& m : f.pyramid)
        out.pyramid.push_back(cut(m));
    for (const auto& m : f.aux_logits)
        out.aux_logits.push_back(cut(m));
    return out;
}

} // namespace

std::pair<AppearanceFeatures, AppearanceFeatures> SiameseEncoderImpl::encode_pair(const torch::Tensor& target,
                                                                                  const torch::Tensor& reference)
{
    if (target.sizes() != reference.sizes())
        throw std::invalid_argument("encode_pair: target and reference shapes differ");
    if (!is_training())
        return {encode(target), encode(reference)};
    const int64_t b = target.size(0);
    const auto joint = encode(torch::cat({target, reference}, 0));
    return {slice_batch(joint, 0, b), slice_batch(joint, b, 2 * b)};
}

std::vector<torch::Tensor> SiameseEncoderImpl::trunk_parameters() const
{
    return trunk_->parameters();
}

void load_trunk_weights(ResNet& trunk, const std::filesystem::path& archive)
{
    torch::serialize::InputArchive in;
    try {
        in.load_from(archive.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read backbone weights " + archive.string() + ": " + e.what_without_backtrace());
    }
    torch::NoGradGuard no_grad;
    auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
        torch::Tensor src;
        if (!in.try_read(name, src))
            throw ConfigError("backbone weights " + archive.string() + " lack key '" + name + "'");
        if (src.sizes() != dst.sizes())
            throw ConfigError("backbone weights: shape mismatch for '" + name + "'");
        dst.copy_(src);
    };
    for (auto& p : trunk->named_parameters())
        copy_into(p.key(), p.value());
    for (auto& b : trunk->named_buffers())
        copy_into(b.key(), b.value());
}

} // namespace pdnet
