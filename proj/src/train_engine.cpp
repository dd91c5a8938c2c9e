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

#include "pdnet/train_engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "pdnet/checkpoint.hpp"
#include "pdnet/errors.hpp"
#include "pdnet/inference.hpp"

namespace pdnet {

double schedule_lr(std::int64_t iter, std::int64_t total_iters, double max_lr, double power)
{
    if (total_iters <= 0)
        throw std::invalid_argument("schedule_lr: total_iters must be positive");
    if (iter < 0 || iter >= total_iters)
        throw std::invalid_argument("schedule_lr: iter out of range");
    return max_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total_iters), power);
}

const char* to_string(BatchKind kind)
{
    return kind == BatchKind::Image ? "image" : "video";
}

BatchKind AlternationSchedule::kind_at(std::int64_t step) const
{
    const std::int64_t cycle = image_iters + video_iters;
    if (cycle <= 0)
        throw ConfigError("alternation schedule has no iterations");
    return step % cycle < image_iters ? BatchKind::Image : BatchKind::Video;
}

// ---------------------------------------------------------------------------

CyclicSampler::CyclicSampler(std::size_t size, std::uint64_t seed) : seed_(seed), order_(size)
{
    reshuffle();
}

void CyclicSampler::reshuffle()
{
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed_, "sampler", 0, pass_));
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = order_.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
}

std::size_t CyclicSampler::next()
{
    if (order_.empty())
        throw std::logic_error("CyclicSampler: empty population");
    if (cursor_ == order_.size()) {
        ++pass_;
        reshuffle();
    }
    return order_[cursor_++];
}

AlternatingStream::AlternatingStream(BatchSource images, BatchSource videos, AlternationSchedule schedule)
    : images_(std::move(images)), videos_(std::move(videos)), schedule_(schedule)
{
    if (schedule_.image_iters < 0 || schedule_.video_iters < 0 || schedule_.image_iters + schedule_.video_iters == 0)
        throw ConfigError("alternation counts must be >= 0 and not both zero");
    if (schedule_.image_iters > 0 && !images_)
        throw ConfigError("alternation schedule needs an image source");
    if (schedule_.video_iters > 0 && !videos_)
        throw ConfigError("alternation schedule needs a video source");
}

TaggedBatch AlternatingStream::next()
{
    TaggedBatch batch;
    batch.kind = schedule_.kind_at(step_++);
    batch.pairs = batch.kind == BatchKind::Image ? images_() : videos_();
    return batch;
}

VideoPairSource::VideoPairSource(std::vector<ClipDescriptor> clips, const TrainConfig& cfg)
    : clips_(std::move(clips)), cfg_(cfg), sampler_(0, cfg.seed)
{
    for (std::size_t c = 0; c < clips_.size(); ++c)
        for (int idx : training_targets(clips_[c]))
            targets_.emplace_back(c, idx);
    if (targets_.empty())
        throw DatasetError("no annotated frames beyond frame 0 in the training clips");
    sampler_ = CyclicSampler(targets_.size(), derive_seed(cfg.seed, "video", 0, 0));
}

std::vector<SamplePair> VideoPairSource::next_batch()
{
    std::vector<SamplePair> batch;
    batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
    for (int i = 0; i < cfg_.batch_size; ++i) {
        const auto [c, idx] = targets_[sampler_.next()];
        const auto& clip = clips_[c];
        const auto seed = derive_seed(cfg_.seed, clip.clip_id, idx, sampler_.pass());
        batch.push_back(augment_pair(make_pair(clip, idx, cfg_.normalization), cfg_.augment_config(seed)));
    }
    return batch;
}

ImagePairSource::ImagePairSource(std::vector<ImageRecord> records, const TrainConfig& cfg)
    : records_(std::move(records)), cfg_(cfg), sampler_(records_.size(), derive_seed(cfg.seed, "image", 0, 0))
{
    if (records_.empty())
        throw DatasetError("image manifest lists no images");
}

std::vector<SamplePair> ImagePairSource::next_batch()
{
    std::vector<SamplePair> batch;
    batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
    for (int i = 0; i < cfg_.batch_size; ++i) {
        const std::size_t k = sampler_.next();
        const auto& rec = records_[k];
        const auto seed = derive_seed(cfg_.seed, rec.image_path.string(), static_cast<int>(k), sampler_.pass());
        batch.push_back(image_as_pretrain_sample(rec.image_path, rec.mask_path, cfg_.augment_config(seed),
                                                 cfg_.normalization));
    }
    return batch;
}

// ---------------------------------------------------------------------------

torch::Tensor image_to_tensor(const cv::Mat& image)
{
    if (image.type() != CV_32FC3)
        throw std::invalid_argument("image_to_tensor: expected CV_32FC3");
    cv::Mat contiguous = image.isContinuous() ? image : image.clone();
    return torch::from_blob(contiguous.data, {1, image.rows, image.cols, 3}, torch::kFloat32)
        .permute({0, 3, 1, 2})
        .contiguous();
}

namespace {

torch::Tensor mask_to_tensor(const cv::Mat& mask)
{
    cv::Mat f;
    mask.convertTo(f, CV_32F);
    return torch::from_blob(f.data, {1, 1, mask.rows, mask.cols}, torch::kFloat32).clone();
}

std::string batch_ids(const std::vector<SamplePair>& batch)
{
    std::string s;
    for (const auto& p : batch)
        s += (s.empty() ? "" : ", ") + p.clip_id + ":" + std::to_string(p.target_index);
    return s;
}

double item(const torch::Tensor& t)
{
    return t.defined() ? t.item<double>() : 0.0;
}

} // namespace

BatchTensors to_tensors(const std::vector<SamplePair>& pairs)
{
    if (pairs.empty())
        throw std::invalid_argument("to_tensors: empty batch");
    std::vector<torch::Tensor> tgt;
    std::vector<torch::Tensor> ref;
    std::vector<torch::Tensor> tgt_m;
    std::vector<torch::Tensor> ref_m;
    for (const auto& p : pairs) {
        if (p.target_image.size() != pairs.front().target_image.size())
            throw std::invalid_argument("to_tensors: batch frames differ in size");
        tgt.push_back(image_to_tensor(p.target_image));
        ref.push_back(image_to_tensor(p.reference_image));
        if (p.target_mask)
            tgt_m.push_back(mask_to_tensor(*p.target_mask));
        if (p.reference_mask)
            ref_m.push_back(mask_to_tensor(*p.reference_mask));
    }
    BatchTensors out;
    out.target = torch::cat(tgt, 0);
    out.reference = torch::cat(ref, 0);
    if (tgt_m.size() == pairs.size())
        out.target_mask = torch::cat(tgt_m, 0);
    if (ref_m.size() == pairs.size())
        out.reference_mask = torch::cat(ref_m, 0);
    return out;
}

std::int64_t planned_steps(const TrainConfig& cfg, std::size_t video_pairs, bool have_images)
{
    if (cfg.iterations > 0)
        return cfg.iterations;
    const auto per_epoch = static_cast<std::int64_t>((video_pairs + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                                     static_cast<std::size_t>(cfg.batch_size));
    const std::int64_t video = per_epoch * cfg.epochs;
    const std::int64_t img = have_images ? cfg.image_iters : 0;
    const std::int64_t vid = cfg.video_iters;
    const std::int64_t q = video / vid;
    const std::int64_t r = video % vid;
    return q * (img + vid) + (r == 0 ? 0 : img + r);
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    torch::manual_seed(cfg_.seed);
    model_ = PdNet(cfg_.model_config());
    if (!cfg_.backbone_weights.empty()) {
        auto trunk = model_->encoder()->trunk();
        load_trunk_weights(trunk, cfg_.backbone_weights);
    }
    extractor_ = losses::SemanticExtractor(cfg_.semantic_config());
    if (!cfg_.semantic_weights.empty()) {
        auto trunk = extractor_->trunk();
        load_trunk_weights(trunk, cfg_.semantic_weights);
    }
    basis_ = losses::PartSemanticBasis(cfg_.parts_p, extractor_->feature_dim(), extractor_->extractor_id());

    auto rest = model_->rest_parameters();
    for (const auto& p : basis_->parameters())
        rest.push_back(p);
    const auto opts = torch::optim::SGDOptions(cfg_.lr_video_rest_max)
                          .momentum(cfg_.momentum)
                          .weight_decay(cfg_.weight_decay);
    std::vector<torch::optim::OptimizerParamGroup> groups;
    groups.emplace_back(model_->backbone_parameters(), std::make_unique<torch::optim::SGDOptions>(opts));
    groups.emplace_back(rest, std::make_unique<torch::optim::SGDOptions>(opts));
    optimizer_ = std::make_unique<torch::optim::SGD>(std::move(groups), opts);
}

std::pair<double, double> Trainer::learning_rates(BatchKind kind) const
{
    const std::int64_t it = std::min(step_, total_steps_ - 1);
    if (kind == BatchKind::Image) {
        const double lr = schedule_lr(it, total_steps_, cfg_.lr_image_max, cfg_.lr_power);
        return {lr, lr};
    }
    return {schedule_lr(it, total_steps_, cfg_.lr_video_backbone_max, cfg_.lr_power),
            schedule_lr(it, total_steps_, cfg_.lr_video_rest_max, cfg_.lr_power)};
}

void Trainer::apply_update(BatchKind kind)
{
    const auto [lr_backbone, lr_rest] = learning_rates(kind);
    auto& groups = optimizer_->param_groups();
    static_cast<torch::optim::SGDOptions&>(groups[0].options()).lr(lr_backbone);
    static_cast<torch::optim::SGDOptions&>(groups[1].options()).lr(lr_rest);
    if (cfg_.grad_clip_norm > 0.0) {
        std::vector<torch::Tensor> params;
        for (const auto& g : groups)
            for (const auto& p : g.params())
                if (p.grad().defined())
                    params.push_back(p);
        torch::nn::utils::clip_grad_norm_(params, cfg_.grad_clip_norm);
    }
    optimizer_->step();
    ++updates_;
    ++step_;
}

void Trainer::check_finite(const torch::Tensor& loss, const std::vector<SamplePair>& batch, BatchKind kind,
                           const losses::LossComponents& parts) const
{
    if (!std::isfinite(loss.item<double>()))
        throw NumericalError(std::string("non-finite loss at step ") + std::to_string(step_) + " (" +
                             to_string(kind) + " batch: " + batch_ids(batch) + "; terms " +
                             losses::to_json(losses::LossReport{parts}).dump() + ")");
}

torch::Tensor Trainer::aux_loss(const AppearanceFeatures& features, const torch::Tensor& mask,
                                const std::vector<int64_t>& size) const
{
    torch::Tensor sum;
    for (const auto& level : features.aux_logits) {
        const auto logits = resize_bilinear(level.data, size);
        const auto term = losses::weighted_bce_logits(logits, mask) + losses::l1_loss(torch::sigmoid(logits), mask);
        sum = sum.defined() ? sum + term : term;
    }
    return sum;
}

losses::LossReport Trainer::train_step_video(const std::vector<SamplePair>& batch)
{
    const auto t = to_tensors(batch);
    if (!t.target_mask || !t.reference_mask)
        throw std::invalid_argument("train_step_video: every pair needs both masks");
    model_->train();
    const std::vector<int64_t> size{t.target.size(2), t.target.size(3)};
    const auto& g_t = *t.target_mask;
    const auto& g_ref = *t.reference_mask;

    const auto out = model_->forward(t.target, t.reference, g_t, g_ref);
    losses::LossComponents c;
    bool part_skipped = true;

    const auto seg_final = losses::weighted_bce_logits(out.logits, g_t) + losses::l1_loss(out.probability, g_t);
    auto seg_aux = aux_loss(out.target, g_t, size);
    if (out.reference)
        seg_aux = (seg_aux + aux_loss(*out.reference, g_ref, size)) / 2.0;
    auto total = cfg_.loss_weights.seg_final * seg_final + cfg_.loss_weights.seg_aux * seg_aux;

    if (out.ipda) {
        const auto& ipda = *out.ipda;
        auto saliency_term = [](const PartBundle& b, const torch::Tensor& mask) {
            const auto g = downsample_mask(mask, b.saliency.size(2), b.saliency.size(3));
            return losses::weighted_bce_logits(b.saliency_logits, g) + losses::l1_loss(b.saliency, g);
        };
        const auto saliency = (saliency_term(ipda.target, g_t) + saliency_term(ipda.reference, g_ref)) / 2.0;
        total = total + cfg_.loss_weights.saliency * saliency;
        c.saliency = item(saliency);

        if (cfg_.parts_p > 1 && cfg_.part_terms.any()) {
            const int64_t h = ipda.target.part_assign.size(2);
            const int64_t w = ipda.target.part_assign.size(3);
            const auto feat_t = extractor_->forward(t.target, h, w);
            const auto feat_ref = extractor_->forward(t.reference, h, w);
            const auto pt = losses::total_part_loss(ipda.target, feat_t, basis_->basis, cfg_.part_terms);
            const auto pr = losses::total_part_loss(ipda.reference, feat_ref, basis_->basis, cfg_.part_terms);
            const auto part_total = pt.total + pr.total;
            total = total + cfg_.loss_weights.part_total * part_total;
            c.geo = item(pt.geo + pr.geo);
            c.sem = item(pt.sem + pr.sem);
            c.area = item(pt.area + pr.area);
            c.part_total = item(part_total);
            part_skipped = false;
        }
    }
    c.seg_final = item(seg_final);
    c.seg_aux = item(seg_aux);
    check_finite(total, batch, BatchKind::Video, c);

    optimizer_->zero_grad(/*set_to_none=*/true);
    total.backward();
    apply_update(BatchKind::Video);

    auto report = losses::grand_total(c, cfg_.loss_weights);
    report.part_skipped = part_skipped;
    return report;
}

losses::LossReport Trainer::train_step_image(const std::vector<SamplePair>& batch)
{
    const auto t = to_tensors(batch);
    if (!t.target_mask || !t.reference_mask)
        throw std::invalid_argument("train_step_image: every pair needs both masks");
    model_->train();
    const std::vector<int64_t> size{t.target.size(2), t.target.size(3)};
    auto encoder = model_->encoder();
    const auto [a_t, a_ref] = encoder->encode_pair(t.target, t.reference);
    const auto seg_aux = (aux_loss(a_t, *t.target_mask, size) + aux_loss(a_ref, *t.reference_mask, size)) / 2.0;
    const auto total = cfg_.loss_weights.seg_aux * seg_aux;
    losses::LossComponents c;
    c.seg_aux = item(seg_aux);
    check_finite(total, batch, BatchKind::Image, c);

    optimizer_->zero_grad(/*set_to_none=*/true);
    total.backward();
    apply_update(BatchKind::Image);

    auto report = losses::grand_total(c, cfg_.loss_weights);
    report.part_skipped = true;
    return report;
}

void Trainer::save(const std::filesystem::path& path, const nlohmann::json& metric_history)
{
    CheckpointMeta meta;
    meta.config = cfg_;
    meta.epoch = epoch_;
    meta.iteration = step_;
    meta.metric_history = metric_history;
    save_checkpoint(path, meta, model_, &basis_, optimizer_.get());
}

void Trainer::load(const std::filesystem::path& path)
{
    const auto meta = load_checkpoint(path, model_, &basis_, optimizer_.get());
    epoch_ = static_cast<int>(meta.epoch);
    step_ = meta.iteration;
}

TrainSummary Trainer::fit(const std::filesystem::path& output_dir, std::ostream* console)
{
    if (cfg_.data_root.empty())
        throw ConfigError("data_root is not set");
    std::filesystem::create_directories(output_dir);

    VideoPairSource videos(scan_dataset(cfg_.data_root, Split::Train), cfg_);
    std::optional<ImagePairSource> images;
    AlternationSchedule schedule{cfg_.image_iters, cfg_.video_iters};
    if (cfg_.image_iters > 0 && !cfg_.image_manifest.empty()) {
        images.emplace(read_image_manifest(cfg_.image_manifest), cfg_);
    } else if (cfg_.image_iters > 0) {
        if (console)
            *console << "no image_manifest configured; training on video pairs only\n";
        schedule.image_iters = 0;
    }

    const auto total = planned_steps(cfg_, videos.pairs(), images.has_value());
    set_total_steps(total);
    BatchSource image_source;
    if (images)
        image_source = [&images] { return images->next_batch(); };
    AlternatingStream stream(image_source, [&videos] { return videos.next_batch(); }, schedule);

    std::ofstream log(output_dir / "train_log.jsonl");
    if (!log)
        throw IoError("cannot write " + (output_dir / "train_log.jsonl").string());

    std::vector<ClipDescriptor> eval_clips;
    if (cfg_.eval_every > 0)
        eval_clips = scan_dataset(cfg_.data_root, Split::Test);
    nlohmann::json history = nlohmann::json::array();

    TrainSummary summary;
    while (step_ < total) {
        const auto batch = stream.next();
        const auto lrs = learning_rates(batch.kind);
        const std::int64_t this_step = step_;
        const auto report =
            batch.kind == BatchKind::Video ? train_step_video(batch.pairs) : train_step_image(batch.pairs);
        epoch_ = videos.epoch();
        (batch.kind == BatchKind::Video ? summary.video_steps : summary.image_steps)++;
        summary.history.push_back(report);

        auto record = losses::to_json(report);
        record["step"] = this_step;
        record["kind"] = to_string(batch.kind);
        record["epoch"] = epoch_;
        record["lr_backbone"] = lrs.first;
        record["lr_rest"] = lrs.second;
        log << record.dump() << '\n';

        if (console && cfg_.log_every > 0 && (this_step % cfg_.log_every == 0 || step_ == total)) {
            *console << "step " << this_step + 1 << "/" << total << " [" << to_string(batch.kind)
                     << "] loss " << report.grand_total << '\n';
        }
        if (cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) {
            Predictor predictor(model_, cfg_.input_size, cfg_.normalization);
            const auto bench = evaluate_epoch(predictor, eval_clips);
            auto entry = metrics::to_json(bench);
            entry["step"] = step_;
            history.push_back(entry);
            if (console)
                *console << "eval @" << step_ << ": J&F " << bench.jf_mean << '\n';
        }
        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && step_ < total)
            save(output_dir / ("checkpoint_step_" + std::to_string(step_) + ".pt"), history);
    }
    summary.steps = step_;
    summary.epochs_completed = epoch_;
    summary.final_checkpoint = output_dir / "checkpoint.pt";
    save(summary.final_checkpoint, history);
    return summary;
}

} // namespace pdnet
