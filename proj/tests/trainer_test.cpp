#include <gtest/gtest.h>

#include "nbdf/mixer.hpp"
#include "nbdf/trainer.hpp"

namespace nbdf {
namespace {

constexpr std::size_t kLen = 512 + 191 * 256;  // exactly 192 frames

std::vector<Mixture> mixtures(int count, int channels, std::uint64_t seed) {
  const auto clean = synth_clean_corpus(count, channels, kLen, seed);
  std::vector<NoiseSource> noise{{"n0", synth_noise(NoiseFamily::kA, channels, 4 * kLen, seed + 1)}};
  DatasetOptions opt;
  opt.count = count;
  opt.seed = seed;
  opt.ref_channel = channels - 1;
  return build_dataset(clean, noise, opt);
}

TrainConfig small_config(int channels) {
  auto cfg = TrainConfig::desk_scale();
  cfg.channels = channels;
  cfg.ref_channel = channels - 1;
  cfg.epochs = 5;
  cfg.seed = 4;
  return cfg;
}

TEST(TrainConfig, DeskScaleSizes) {
  const auto c = TrainConfig::desk_scale();
  EXPECT_EQ(c.hidden1, 32);
  EXPECT_EQ(c.hidden2, 16);
  EXPECT_EQ(c.batch_size, 64);
  const TrainConfig full;
  EXPECT_EQ(full.hidden1, 256);
  EXPECT_EQ(full.hidden2, 128);
  EXPECT_EQ(full.batch_size, 512);
  EXPECT_DOUBLE_EQ(full.lr, 1e-3);
  EXPECT_EQ(full.seq_len, 192);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  auto c = small_config(2);
  c.target = TargetKind::kSsf;
  c.lambda = 0.25;
  TrainConfig d;
  d.update_from_json(c.to_json());
  EXPECT_EQ(d.to_json(), c.to_json());
  c.ref_channel = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Pool, SizesFollowBinsAndSlices) {
  const auto mix = mixtures(2, 2, 1);
  const auto cfg = small_config(2);
  EXPECT_EQ(build_training_pool(std::vector<Mixture>{mix[0]}, cfg).size(), 257u);
  EXPECT_EQ(build_training_pool(mix, cfg).size(), 514u);
  EXPECT_TRUE(build_training_pool(std::vector<Mixture>{}, cfg).empty());
  auto sub = cfg;
  sub.bins_per_utterance = 10;
  const auto p = build_training_pool(mix, sub);
  EXPECT_EQ(p.size(), 20u);
  for (const auto& it : p.items) {
    EXPECT_EQ(it.length, 192);
    EXPECT_EQ(it.input.size(), 192u * 4);
    EXPECT_EQ(it.target.size(), 192u * 2);
  }
}

TEST(Pool, StridedWindows) {
  const auto w = strided_windows(200, 192, 4);
  ASSERT_EQ(w.size(), 3u);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].start, 4 * static_cast<int>(i));
    EXPECT_EQ(w[i].length, 192);
  }
  EXPECT_TRUE(strided_windows(191, 192, 8).empty());
  EXPECT_THROW(strided_windows(200, 192, 0), std::invalid_argument);

  auto cfg = small_config(2);
  cfg.bins_per_utterance = 5;
  const auto mix = mixtures(1, 2, 3);
  EXPECT_EQ(build_training_pool(mix, cfg, 8).size(), 5u);
  auto longer = mix;
  for (auto* b : {&longer[0].noisy, &longer[0].clean})
    for (auto& ch : b->samples) ch.resize(ch.size() + 16 * 256, 0.0);
  const auto p = build_training_pool(longer, cfg, 8);
  EXPECT_EQ(p.size(), 15u);
  for (const auto& it : p.items) EXPECT_EQ(it.length, 192);
}

TEST(Pool, MisalignedOrWrongChannelsRejected) {
  const auto mix = mixtures(1, 2, 1);
  auto clean = mix[0].clean;
  for (auto& ch : clean.samples) ch.pop_back();
  const auto cfg = small_config(2);
  EXPECT_THROW(build_training_pool({mix[0].noisy}, {clean}, cfg), std::invalid_argument);
  EXPECT_THROW(build_training_pool({mix[0].noisy}, {}, cfg), std::invalid_argument);
  EXPECT_THROW(build_training_pool(mix, small_config(3)), std::invalid_argument);
}

TEST(Pool, MrmTargetsAreMasks) {
  auto cfg = small_config(2);
  cfg.target = TargetKind::kMrm;
  for (const auto& it : build_training_pool(mixtures(1, 2, 2), cfg).items)
    for (float v : it.target) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
}

TrainingPool small_pool(TargetKind kind, int bins = 100) {
  auto cfg = small_config(2);
  cfg.target = kind;
  cfg.bins_per_utterance = bins;
  return build_training_pool(mixtures(2, 2, 7), cfg);
}

TEST(Train, ZeroLearningRateKeepsInitialization) {
  auto cfg = small_config(2);
  cfg.bins_per_utterance = 100;
  cfg.lr = 0.0;
  cfg.epochs = 2;
  const auto res = train(small_pool(TargetKind::kSf), cfg);
  const auto init = init_params<float>(cfg.arch(), cfg.seed);
  EXPECT_TRUE(std::equal(init.values().begin(), init.values().end(), res.checkpoint.params.values().begin()));
}

TEST(Train, LossDecreasesEveryEpoch) {
  for (auto kind : {TargetKind::kSf, TargetKind::kMrm}) {
    auto cfg = small_config(2);
    cfg.target = kind;
    cfg.bins_per_utterance = 100;
    const auto res = train(small_pool(kind), cfg);
    ASSERT_EQ(res.log.size(), 5u);
    for (std::size_t e = 1; e < res.log.size(); ++e)
      EXPECT_LT(res.log[e].mean_train_loss, res.log[e - 1].mean_train_loss) << to_string(kind) << " epoch " << e + 1;
    EXPECT_FALSE(std::isnan(res.log.back().mean_val_loss));
  }
}

TEST(Train, DeterministicAndThreadCountInvariant) {
  const auto pool = small_pool(TargetKind::kSsf, 40);
  auto cfg = small_config(2);
  cfg.target = TargetKind::kSsf;
  cfg.epochs = 2;
  cfg.chunk_size = 8;
  const auto a = train(pool, cfg);
  const auto b = train(pool, cfg);
  cfg.threads = 3;
  const auto c = train(pool, cfg);
  const auto n = a.checkpoint.params.size() * sizeof(float);
  EXPECT_EQ(std::memcmp(a.checkpoint.params.values().data(), b.checkpoint.params.values().data(), n), 0);
  EXPECT_EQ(std::memcmp(a.checkpoint.params.values().data(), c.checkpoint.params.values().data(), n), 0);
  EXPECT_EQ(a.log.back().mean_train_loss, c.log.back().mean_train_loss);
}

TEST(Train, PaddedFramesDoNotContribute) {
  // A pool item cut to 100 valid frames: garbage written into its padding
  // must not change the loss or the gradient.
  auto pool = small_pool(TargetKind::kCc, 4);
  pool.items.resize(4);
  for (auto& it : pool.items) it.length = 100;
  Architecture a = small_config(2).arch();
  a.target = TargetKind::kCc;
  const auto p = init_params<float>(a, 1);
  std::vector<std::size_t> idx{0, 1, 2, 3};
  for (auto& it : pool.items)
    for (std::size_t i = 100 * 4; i < it.input.size(); ++i) it.input[i] = 0.0f;
  ModelParameters<float> g1(a), g2(a);
  const auto l1 = pool_loss(pool, idx, p, 0.0, 32, 1, &g1);
  for (auto& it : pool.items) {
    for (std::size_t i = 100 * 4; i < it.input.size(); ++i) it.input[i] = 5.0f;
    for (std::size_t i = 100 * 2; i < it.target.size(); ++i) it.target[i] = -7.0f;
  }
  const auto l2 = pool_loss(pool, idx, p, 0.0, 32, 1, &g2);
  EXPECT_EQ(l1.frames, 400);
  EXPECT_NEAR(l1.sum, l2.sum, 1e-9 * std::abs(l1.sum));
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1.values()[i], g2.values()[i], 1e-6);
}

TEST(Train, RejectsMismatchedPool) {
  auto cfg = small_config(2);
  cfg.target = TargetKind::kMrm;
  EXPECT_THROW(train(small_pool(TargetKind::kSf, 4), cfg), std::invalid_argument);
  EXPECT_THROW(train(TrainingPool{}, cfg), std::invalid_argument);
}

}  // namespace
}  // namespace nbdf
