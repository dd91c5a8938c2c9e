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

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "pdnet/checkpoint.hpp"
#include "pdnet/errors.hpp"
#include "pdnet/train_engine.hpp"
#include "support.hpp"

using namespace pdnet;
using pdnet::testing::TempDir;
using pdnet::testing::tiny_config;
using pdnet::testing::tiny_corpus;

namespace {

struct Fixture {
    TempDir dir{"engine"};
    TrainConfig cfg;
    std::vector<ClipDescriptor> clips;

    Fixture()
    {
        synthetic::write_corpus(dir.path(), tiny_corpus());
        cfg = tiny_config(dir.path());
        clips = scan_dataset(dir.path(), Split::Train);
    }

    std::vector<SamplePair> video_batch(std::uint64_t seed = 0)
    {
        auto c = cfg;
        c.seed = seed;
        return VideoPairSource(clips, c).next_batch();
    }

    std::vector<SamplePair> image_batch()
    {
        return ImagePairSource(read_image_manifest(dir / "images.txt"), cfg).next_batch();
    }
};

std::map<std::string, torch::Tensor> snapshot(torch::nn::Module& m)
{
    std::map<std::string, torch::Tensor> out;
    for (const auto& p : m.named_parameters())
        out[p.key()] = p.value().detach().clone();
    return out;
}

bool unchanged(torch::nn::Module& m, const std::map<std::string, torch::Tensor>& before, const std::string& prefix)
{
    for (const auto& p : m.named_parameters())
        if (p.key().rfind(prefix, 0) == 0 && !torch::equal(p.value(), before.at(p.key())))
            return false;
    return true;
}

} // namespace

TEST_SUITE("train_engine") {

TEST_CASE("polynomial learning rate schedule")
{
    CHECK(schedule_lr(0, 100, 0.01) == 0.01);
    CHECK(schedule_lr(99, 100, 0.01) == doctest::Approx(0.01 * std::pow(1.0 / 100.0, 0.9)).epsilon(1e-12));
    double prev = 1.0;
    for (int i = 0; i < 100; ++i) {
        const double lr = schedule_lr(i, 100, 1.0);
        CHECK(lr <= prev);
        prev = lr;
    }
    CHECK_THROWS_AS(schedule_lr(100, 100, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(schedule_lr(-1, 100, 0.01), std::invalid_argument);
}

TEST_CASE("alternation pattern")
{
    int images = 0;
    int videos = 0;
    AlternatingStream stream([&] { ++images; return std::vector<SamplePair>{}; },
                             [&] { ++videos; return std::vector<SamplePair>{}; }, {1, 2});
    std::vector<BatchKind> kinds;
    for (int i = 0; i < 6; ++i)
        kinds.push_back(stream.next().kind);
    using K = BatchKind;
    CHECK((kinds == std::vector<K>{K::Image, K::Video, K::Video, K::Image, K::Video, K::Video}));
    CHECK(images == 2);
    CHECK(videos == 4);

    AlternatingStream video_only(nullptr, [] { return std::vector<SamplePair>{}; }, {0, 1});
    for (int i = 0; i < 5; ++i)
        CHECK(video_only.next().kind == BatchKind::Video);

    CHECK_THROWS_AS(AlternatingStream(nullptr, [] { return std::vector<SamplePair>{}; }, {1, 2}), ConfigError);
}

TEST_CASE("cyclic sampler passes are seeded permutations")
{
    CyclicSampler a(7, 42);
    CyclicSampler b(7, 42);
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<std::size_t> seen;
        for (int i = 0; i < 7; ++i) {
            const auto v = a.next();
            CHECK(v == b.next());
            seen.push_back(v);
        }
        std::sort(seen.begin(), seen.end());
        CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    }
    CHECK(a.pass() == 2);

    CyclicSampler c(20, 1);
    CyclicSampler d(20, 2);
    bool differs = false;
    for (int i = 0; i < 20; ++i)
        differs |= c.next() != d.next();
    CHECK(differs);
}

TEST_CASE("planned steps count video pairs per epoch")
{
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    CHECK(planned_steps(cfg, 6, true) == 5);   // I V V I V
    CHECK(planned_steps(cfg, 8, true) == 6);   // I V V I V V
    CHECK(planned_steps(cfg, 6, false) == 3);
    cfg.iterations = 17;
    CHECK(planned_steps(cfg, 6, true) == 17);
}

TEST_CASE("batches stack into tensors")
{
    Fixture fx;
    const auto batch = fx.video_batch();
    REQUIRE(batch.size() == 2);
    const auto t = to_tensors(batch);
    CHECK(t.target.sizes() == torch::IntArrayRef{2, 3, 64, 64});
    REQUIRE(t.target_mask.has_value());
    CHECK(t.target_mask->sizes() == torch::IntArrayRef{2, 1, 64, 64});
    CHECK(torch::equal(*t.target_mask, t.target_mask->clamp(0, 1).round()));
    for (const auto& p : batch)
        CHECK(p.target_index > 0);
    CHECK_THROWS_AS(to_tensors({}), std::invalid_argument);
}

TEST_CASE("video step makes exactly one update and descends")
{
    Fixture fx;
    fx.cfg.lr_video_backbone_max = 1e-3;
    fx.cfg.lr_video_rest_max = 1e-3;
    Trainer trainer(fx.cfg);
    trainer.set_total_steps(1000);
    const auto batch = fx.video_batch();
    const auto first = trainer.train_step_video(batch);
    CHECK(trainer.optimizer_updates() == 1);
    const auto second = trainer.train_step_video(batch);
    CHECK(trainer.optimizer_updates() == 2);
    CHECK(second.grand_total < first.grand_total);
    CHECK_FALSE(first.part_skipped);
    CHECK(first.components.part_total > 0.0);
    CHECK(first.grand_total == doctest::Approx(losses::grand_total(first.components, first.weights).grand_total));
}

TEST_CASE("zero learning rates leave parameters bitwise unchanged")
{
    Fixture fx;
    fx.cfg.lr_video_backbone_max = 0.0;
    fx.cfg.lr_video_rest_max = 0.0;
    fx.cfg.lr_image_max = 0.0;
    Trainer trainer(fx.cfg);
    trainer.set_total_steps(10);
    const auto before = snapshot(*trainer.model());
    const auto basis_before = trainer.basis()->basis.detach().clone();
    trainer.train_step_video(fx.video_batch());
    trainer.train_step_image(fx.image_batch());
    CHECK(unchanged(*trainer.model(), before, ""));
    CHECK(torch::equal(trainer.basis()->basis, basis_before));
}

TEST_CASE("image steps leave IPDA, fusion and the head untouched")
{
    Fixture fx;
    fx.cfg.lr_image_max = 1e-3;
    Trainer trainer(fx.cfg);
    trainer.set_total_steps(1000);
    trainer.train_step_video(fx.video_batch());  // populates momentum everywhere
    const auto before = snapshot(*trainer.model());
    const auto batch = fx.image_batch();
    const auto first = trainer.train_step_image(batch);
    CHECK(unchanged(*trainer.model(), before, "ipda."));
    CHECK(unchanged(*trainer.model(), before, "fusion."));
    CHECK(unchanged(*trainer.model(), before, "head."));
    CHECK_FALSE(unchanged(*trainer.model(), before, "encoder.trunk."));
    CHECK(first.part_skipped);
    CHECK(first.components.part_total == 0.0);

    Trainer fresh(fx.cfg);
    fresh.set_total_steps(1000);
    const auto a = fresh.train_step_image(batch);
    const auto b = fresh.train_step_image(batch);
    CHECK(b.grand_total < a.grand_total);
}

TEST_CASE("parameter groups receive their own learning rates")
{
    Fixture fx;
    fx.cfg.momentum = 0.0;
    fx.cfg.weight_decay = 0.0;
    fx.cfg.lr_video_backbone_max = 0.25;
    fx.cfg.lr_video_rest_max = 0.5;
    fx.cfg.lr_image_max = 0.125;
    Trainer trainer(fx.cfg);
    trainer.set_total_steps(1000);
    auto& net = trainer.model();

    auto inject_and_step = [&](BatchKind kind) {
        const auto before = snapshot(*net);
        const auto [lr_backbone, lr_rest] = trainer.learning_rates(kind);
        for (auto& p : net->parameters())
            p.mutable_grad() = torch::ones_like(p);
        trainer.apply_update(kind);
        for (const auto& p : net->named_parameters()) {
            const bool trunk = p.key().rfind("encoder.trunk.", 0) == 0;
            const double lr = trunk ? lr_backbone : lr_rest;
            const auto delta = before.at(p.key()) - p.value().detach();
            CHECK(torch::allclose(delta, torch::full_like(delta, lr), 1e-5, 1e-7));
        }
        return std::pair{lr_backbone, lr_rest};
    };
    const auto video = inject_and_step(BatchKind::Video);
    CHECK(video.first == doctest::Approx(0.25));
    CHECK(video.second == doctest::Approx(0.5));
    const auto image = inject_and_step(BatchKind::Image);
    CHECK(image.first == doctest::Approx(schedule_lr(1, 1000, 0.125)));
    CHECK(image.second == image.first);
}

TEST_CASE("gradient clipping bounds the update")
{
    Fixture fx;
    fx.cfg.momentum = 0.0;
    fx.cfg.weight_decay = 0.0;
    fx.cfg.lr_video_backbone_max = 1.0;
    fx.cfg.lr_video_rest_max = 1.0;
    fx.cfg.grad_clip_norm = 0.5;
    Trainer trainer(fx.cfg);
    trainer.set_total_steps(1000);
    auto& net = trainer.model();
    const auto before = snapshot(*net);
    for (auto& p : net->parameters())
        p.mutable_grad() = torch::full_like(p, 3.0);
    trainer.apply_update(BatchKind::Video);
    double sq = 0.0;
    for (const auto& p : net->named_parameters())
        sq += (before.at(p.key()) - p.value().detach()).pow(2).sum().item<double>();
    CHECK(std::sqrt(sq) == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("non-finite losses abort with the batch identity")
{
    Fixture fx;
    Trainer trainer(fx.cfg);
    auto batch = fx.video_batch();
    batch[0].target_image.setTo(cv::Scalar::all(std::nan("")));
    try {
        trainer.train_step_video(batch);
        FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
        const std::string what = e.what();
        CHECK(what.find(batch[0].clip_id + ":" + std::to_string(batch[0].target_index)) != std::string::npos);
    }
    CHECK(trainer.optimizer_updates() == 0);
}

TEST_CASE("single part disables the part losses")
{
    Fixture fx;
    fx.cfg.parts_p = 1;
    Trainer trainer(fx.cfg);
    const auto r = trainer.train_step_video(fx.video_batch());
    CHECK(r.part_skipped);
    CHECK(r.components.part_total == 0.0);
}

TEST_CASE("seeded runs are deterministic")
{
    Fixture fx;
    fx.cfg.iterations = 10;
    std::vector<double> losses[2];
    for (int run = 0; run < 2; ++run) {
        Trainer trainer(fx.cfg);
        trainer.set_total_steps(10);
        VideoPairSource videos(fx.clips, fx.cfg);
        for (int i = 0; i < 4; ++i)
            losses[run].push_back(trainer.train_step_video(videos.next_batch()).grand_total);
    }
    for (std::size_t i = 0; i < losses[0].size(); ++i)
        CHECK(losses[0][i] == losses[1][i]);
}

TEST_CASE("checkpoint round trip")
{
    Fixture fx;
    Trainer trainer(fx.cfg);
    trainer.set_total_steps(100);
    trainer.train_step_video(fx.video_batch());
    trainer.train_step_video(fx.video_batch(1));
    const auto path = fx.dir / "ck.pt";
    trainer.save(path, nlohmann::json::array({{{"step", 2}}}));

    const auto meta = read_checkpoint_meta(path);
    CHECK(meta.iteration == 2);
    CHECK(meta.metric_history.size() == 1);
    CHECK(meta.config.to_text() == fx.cfg.to_text());

    Trainer restored(fx.cfg);
    restored.load(path);
    CHECK(restored.step() == 2);
    for (const auto& p : trainer.model()->named_parameters())
        CHECK(torch::equal(p.value(), restored.model()->named_parameters()[p.key()]));
    for (const auto& b : trainer.model()->named_buffers())
        CHECK(torch::equal(b.value(), restored.model()->named_buffers()[b.key()]));
    CHECK(torch::equal(trainer.basis()->basis, restored.basis()->basis));

    auto [model, loaded_meta] = load_model(path);
    CHECK(loaded_meta.iteration == 2);
    for (const auto& p : trainer.model()->named_parameters())
        CHECK(torch::equal(p.value(), model->named_parameters()[p.key()]));
    CHECK_THROWS(load_checkpoint(fx.dir / "missing.pt", model));

    // Both continue identically, which needs the optimizer state too.
    const auto next = fx.video_batch(2);
    CHECK(trainer.train_step_video(next).grand_total == restored.train_step_video(next).grand_total);


}

TEST_CASE("fit writes a log and a checkpoint")
{
    Fixture fx;
    fx.cfg.image_manifest = fx.dir / "images.txt";
    fx.cfg.iterations = 4;
    fx.cfg.eval_every = 4;
    Trainer trainer(fx.cfg);
    const auto out = fx.dir / "run";
    const auto summary = trainer.fit(out);
    CHECK(summary.steps == 4);
    CHECK(summary.image_steps == 2);
    CHECK(summary.video_steps == 2);
    CHECK(std::filesystem::exists(out / "checkpoint.pt"));
    std::ifstream log(out / "train_log.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line); ++lines) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("grand_total"));
        CHECK(j.contains("kind"));
    }
    CHECK(lines == 4);
    CHECK(read_checkpoint_meta(out / "checkpoint.pt").metric_history.size() == 1);
}

TEST_CASE("fit without an image manifest trains on video only")
{
    Fixture fx;
    fx.cfg.epochs = 1;
    Trainer trainer(fx.cfg);
    const auto summary = trainer.fit(fx.dir / "run");
    // two clips, annotated frames 5 and 10 each: 4 pairs, 2 batches
    CHECK(summary.video_steps == 2);
    CHECK(summary.image_steps == 0);
}

} // TEST_SUITE
