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

#include "pdnet/checkpoint.hpp"

#include "pdnet/errors.hpp"

namespace pdnet {

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw IoError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive in;
    try {
        in.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    return in;
}

c10::IValue read_value(torch::serialize::InputArchive& in, const std::string& key, const std::filesystem::path& path)
{
    c10::IValue v;
    if (!in.try_read(key, v))
        throw IoError("checkpoint " + path.string() + " lacks '" + key + "'");
    return v;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& in, const std::filesystem::path& path)
{
    const auto version = read_value(in, "format_version", path).toInt();
    if (version != kCheckpointFormatVersion)
        throw IoError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointFormatVersion));
    CheckpointMeta meta;
    meta.config = TrainConfig::from_json(nlohmann::json::parse(read_value(in, "config", path).toStringRef()));
    meta.epoch = read_value(in, "epoch", path).toInt();
    meta.iteration = read_value(in, "iteration", path).toInt();
    meta.metric_history = nlohmann::json::parse(read_value(in, "metric_history", path).toStringRef());
    return meta;
}

void read_tensor_into(torch::serialize::InputArchive& in, const std::string& key, torch::Tensor& dst,
                      const std::filesystem::path& path)
{
    torch::Tensor src;
    if (!in.try_read(key, src))
        throw IoError("checkpoint " + path.string() + " lacks '" + key + "'");
    if (src.sizes() != dst.sizes())
        throw IoError("checkpoint " + path.string() + ": shape mismatch for '" + key + "'");
    dst.copy_(src);
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, PdNet& model,
                     losses::PartSemanticBasis* basis, torch::optim::Optimizer* optimizer)
{
    torch::serialize::OutputArchive out;
    out.write("format_version", c10::IValue(kCheckpointFormatVersion));
    out.write("config", c10::IValue(meta.config.to_json().dump()));
    out.write("epoch", c10::IValue(meta.epoch));
    out.write("iteration", c10::IValue(meta.iteration));
    out.write("metric_history", c10::IValue(meta.metric_history.dump()));
    for (const auto& p : model->named_parameters())
        out.write("model." + p.key(), p.value().detach());
    for (const auto& b : model->named_buffers())
        out.write("model." + b.key(), b.value(), /*is_buffer=*/true);
    if (basis != nullptr && *basis)
        out.write("semantic_basis", (*basis)->basis.detach());
    if (optimizer != nullptr) {
        torch::serialize::OutputArchive opt;
        optimizer->save(opt);
        out.write("optimizer", opt);
    }
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    try {
        out.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path)
{
    auto in = open_archive(path);
    return read_meta(in, path);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, PdNet& model, losses::PartSemanticBasis* basis,
                               torch::optim::Optimizer* optimizer)
{
    auto in = open_archive(path);
    auto meta = read_meta(in, path);
    torch::NoGradGuard no_grad;
    for (auto& p : model->named_parameters())
        read_tensor_into(in, "model." + p.key(), p.value(), path);
    for (auto& b : model->named_buffers())
        read_tensor_into(in, "model." + b.key(), b.value(), path);
    if (basis != nullptr && *basis)
        read_tensor_into(in, "semantic_basis", (*basis)->basis, path);
    if (optimizer != nullptr) {
        torch::serialize::InputArchive opt;
        if (!in.try_read("optimizer", opt))
            throw IoError("checkpoint " + path.string() + " has no optimizer state");
        optimizer->load(opt);
    }
    return meta;
}

std::pair<PdNet, CheckpointMeta> load_model(const std::filesystem::path& path)
{
    const auto meta = read_checkpoint_meta(path);
    PdNet model(meta.config.model_config());
    auto loaded = load_checkpoint(path, model);
    model->eval();
    return {model, std::move(loaded)};
}

} // namespace pdnet
