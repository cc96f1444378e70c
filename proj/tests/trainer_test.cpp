#include "stegokit/trainer.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

namespace stegokit {
namespace {

using nn::ParamRef;
namespace fs = std::filesystem;

struct OneParam {
  std::vector<double> w, g, v;
  std::vector<ParamRef<double>> refs(bool decay) {
    return {{"p", {static_cast<int>(w.size())}, w, g, v, decay}};
  }
};

TEST(LrSchedule, StepDecay) {
  const TrainConfig cfg;
  EXPECT_NEAR(lr_at(0, cfg), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(4999, cfg), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(5000, cfg), 0.009, 1e-15);
  EXPECT_NEAR(lr_at(12000, cfg), 0.0081, 1e-15);
  EXPECT_THROW(lr_at(-1, cfg), InvalidArgument);
}

TEST(LrSchedule, NonIncreasing) {
  const TrainConfig cfg;
  double prev = lr_at(0, cfg);
  for (long it = 0; it <= 60000; it += 250) {
    EXPECT_LE(lr_at(it, cfg), prev);
    prev = lr_at(it, cfg);
  }
}

TEST(SgdStep, PlainStep) {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  OneParam p{{1.0}, {1.0}, {0.0}};
  auto refs = p.refs(true);
  sgd_step(refs, cfg, 0);
  EXPECT_NEAR(p.v[0], -0.01, 1e-12);
  EXPECT_NEAR(p.w[0], 0.99, 1e-12);
}

TEST(SgdStep, MomentumAccumulates) {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  OneParam p{{1.0}, {1.0}, {0.0}};
  auto refs = p.refs(true);
  sgd_step(refs, cfg, 0);
  sgd_step(refs, cfg, 1);
  EXPECT_NEAR(p.v[0], -0.019, 1e-12);
  EXPECT_NEAR(p.w[0], 1.0 - 0.01 - 0.019, 1e-12);
}

TEST(SgdStep, WeightDecayOnlyWhereFlagged) {
  const TrainConfig cfg;
  OneParam weight{{1.0}, {0.0}, {0.0}}, bias{{1.0}, {0.0}, {0.0}};
  auto wr = weight.refs(true);
  auto br = bias.refs(false);
  sgd_step(wr, cfg, 0);
  sgd_step(br, cfg, 0);
  EXPECT_NEAR(weight.w[0], 0.999995, 1e-12);
  EXPECT_EQ(bias.w[0], 1.0);
}

TEST(SgdStep, VanillaWhenNoMomentumNoDecay) {
  TrainConfig cfg;
  cfg.momentum = 0;
  cfg.weight_decay = 0;
  Rng rng(3);
  OneParam p;
  for (int i = 0; i < 100; ++i) {
    p.w.push_back(rng.normal());
    p.g.push_back(rng.normal());
    p.v.push_back(rng.normal());
  }
  const auto w0 = p.w;
  auto refs = p.refs(true);
  sgd_step(refs, cfg, 7000);
  const double lr = lr_at(7000, cfg);
  for (std::size_t i = 0; i < w0.size(); ++i) EXPECT_EQ(p.w[i], w0[i] - lr * p.g[i]);
}

TEST(SgdStep, NonFiniteGradientReportsLayerAndIteration) {
  const TrainConfig cfg;
  OneParam p{{1.0, 2.0}, {0.5, std::nan("")}, {0.0, 0.0}};
  auto refs = p.refs(true);
  refs[0].name = "subnet0.conv1.weight";
  try {
    sgd_step(refs, cfg, 42);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.layer(), "subnet0.conv1.weight");
    EXPECT_EQ(e.iteration(), 42);
  }
  EXPECT_EQ(p.w[0], 1.0);  // nothing applied
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 63;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.base_lr = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.eval_every = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(EnsembleVote, Examples) {
  EXPECT_EQ(ensemble_vote({{1}, {1}, {0}, {1}, {0}}), std::vector<int>{1});
  EXPECT_EQ(ensemble_vote({{0, 1}, {0, 1}, {0, 1}}), (std::vector<int>{0, 1}));
  EXPECT_THROW(ensemble_vote({{0}, {1}}), InvalidArgument);
  EXPECT_THROW(ensemble_vote({}), InvalidArgument);
  EXPECT_THROW(ensemble_vote({{0, 1}, {0}, {1, 1}}), InvalidArgument);
}

TEST(EnsembleVote, MatchesCountingOracle) {
  Rng rng(9);
  std::vector<std::vector<int>> votes(5, std::vector<int>(1000));
  for (auto& v : votes)
    for (auto& x : v) x = rng.coin();
  const auto out = ensemble_vote(votes);
  for (std::size_t i = 0; i < 1000; ++i) {
    int ones = 0, zeros = 0;
    for (const auto& v : votes) (v[i] ? ones : zeros)++;
    EXPECT_EQ(out[i], ones > zeros ? 1 : 0);
  }
}

TEST(Score, PerClassAccuracy) {
  const auto perfect = score({0, 1, 0, 1});
  EXPECT_EQ(perfect.accuracy, 1.0);
  const auto constant = score({0, 0, 0, 0, 0, 0});
  EXPECT_EQ(constant.accuracy, 0.5);
  EXPECT_EQ(constant.cover_acc, 1.0);
  EXPECT_EQ(constant.stego_acc, 0.0);
  EXPECT_THROW(score({}), InvalidArgument);
}

TEST(PairStream, EveryEpochVisitsEveryPairOnce) {
  PairStream s(10, 4);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(10, 0);
    for (int i = 0; i < 10; ++i) ++seen[s.next()];
    for (int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(MetricsRow, Format) {
  EXPECT_EQ(metrics_row({500, 0.5, 0.75, 0.7, 0.8, 0.01, 12.3456}), "500,0.500000,0.750000,0.700000,0.800000,0.01,12.346");
}

// Tiny end-to-end fixture: 16x16 images and a narrow model.
struct Tiny {
  std::vector<LoadedPair> train, test;
  nn::HybridConfig cfg;

  explicit Tiny(int pairs = 24) {
    for (int i = 0; i < pairs; ++i) {
      const auto cover = prepare_cover(synthetic_cover(16, derive_seed(11, i)), 75);
      const auto e = embed(cover, {0.4, derive_seed(12, i)});
      (i % 2 ? test : train).push_back({i, cover, e.stego});
    }
    cfg.subnet = nn::SubnetConfig::type1(16);
    cfg.subnet.widths = {4, 8, 16};
    cfg.subnet.feature_width = 16;
    cfg.head = {12, 8};
  }
};

TrainConfig tiny_train_config() {
  TrainConfig t;
  t.batch_size = 8;
  t.max_iter = 6;
  t.eval_every = 3;
  t.seed = 5;
  return t;
}

TEST(FeatureBank, MatchesFrontStage) {
  Tiny t(4);
  const FeatureBank bank(t.train, t.cfg);
  ASSERT_EQ(bank.image_count(), 4u);
  const std::vector<std::size_t> idx{1};
  const auto groups = bank.gather<double>(idx);
  const auto stack = front_stage(decompress(t.train[0].stego), dct_basis(5), default_qt_specs());
  ASSERT_EQ(groups.size(), 3u);
  for (int g = 0; g < 3; ++g)
    for (int m = 0; m < 25; ++m)
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) ASSERT_EQ(groups[g](0, m, r, c), stack.groups[g][m](r, c));
  EXPECT_EQ(FeatureBank::label(0), 0);
  EXPECT_EQ(FeatureBank::label(1), 1);
}

TEST(Evaluate, UntrainedModelNearChance) {
  Tiny t(200);
  const FeatureBank bank(t.test, t.cfg);
  nn::HybridModel<float> model(t.cfg, 3);
  const auto ev = evaluate(model, bank);
  EXPECT_NEAR(ev.accuracy, 0.5, 0.05);
}

TEST(Evaluate, RejectsEmptySplit) {
  nn::HybridModel<float> model(Tiny(2).cfg, 3);
  EXPECT_THROW(evaluate(model, FeatureBank()), InvalidArgument);
}

TEST(Train, WritesMetricsAndCheckpoint) {
  Tiny t;
  const auto dir = testing::scratch_dir("train_outputs");
  nn::HybridModel<float> model(t.cfg, 5);
  TrainOutputs out{dir / "metrics.csv", dir / "final.skcp", {{"note", "unit"}}, {}};
  auto cfg = tiny_train_config();
  cfg.checkpoint_every = 3;
  const auto r = train(model, FeatureBank(t.train, t.cfg), FeatureBank(t.test, t.cfg), cfg, out);
  EXPECT_EQ(r.iterations, 6);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_EQ(r.history[0].iteration, 3);
  const auto text = read_text(dir / "metrics.csv");
  EXPECT_EQ(text.rfind("# config: ", 0), 0u);
  EXPECT_NE(text.find("\niteration,train_loss,test_accuracy,cover_acc,stego_acc,lr,seconds\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "final_iter3.skcp"));
  EXPECT_TRUE(fs::exists(dir / "final_iter6.skcp"));
  const auto ck = load_checkpoint(dir / "final.skcp");
  EXPECT_EQ(ck.iteration, 6);
  EXPECT_EQ(ck.header.at("extra").at("note"), "unit");
}

TEST(Train, IdenticalSeedsGiveIdenticalCheckpoints) {
  Tiny t;
  const FeatureBank tr(t.train, t.cfg), te(t.test, t.cfg);
  auto run = [&](std::uint64_t seed) {
    nn::HybridModel<float> model(t.cfg, seed);
    auto cfg = tiny_train_config();
    cfg.seed = seed;
    train(model, tr, te, cfg);
    return encode_checkpoint(model, {cfg.max_iter, {}});
  };
  EXPECT_EQ(run(8), run(8));
  EXPECT_NE(run(8), run(9));
}

TEST(Train, DivergenceIsReported) {
  Tiny t;
  nn::HybridModel<float> model(t.cfg, 5);
  auto cfg = tiny_train_config();
  cfg.base_lr = 1e30;
  EXPECT_THROW(train(model, FeatureBank(t.train, t.cfg), FeatureBank(t.test, t.cfg), cfg), DivergenceError);
}

TEST(Train, TargetAccuracyStopsEarly) {
  Tiny t;
  nn::HybridModel<float> model(t.cfg, 5);
  auto cfg = tiny_train_config();
  cfg.max_iter = 30;
  cfg.target_accuracy = 0.01;
  const auto r = train(model, FeatureBank(t.train, t.cfg), FeatureBank(t.test, t.cfg), cfg);
  EXPECT_TRUE(r.reached_target);
  EXPECT_EQ(r.iterations, 3);
}

TEST(Train, RejectsSmallOrEmptySplits) {
  Tiny t(4);
  nn::HybridModel<float> model(t.cfg, 5);
  EXPECT_THROW(train(model, FeatureBank(t.train, t.cfg), FeatureBank(t.test, t.cfg), tiny_train_config()),
               InvalidArgument);
  EXPECT_THROW(train(model, FeatureBank(t.train, t.cfg), FeatureBank(), tiny_train_config()), InvalidArgument);
}

TEST(CheckDisjoint, DetectsSharedCover) {
  Tiny t(6);
  EXPECT_NO_THROW(check_disjoint(t.train, t.test));
  auto leaked = t.test;
  leaked[0].cover = t.train[1].cover;
  EXPECT_THROW(check_disjoint(t.train, leaked), IntegrityError);
  leaked = t.test;
  leaked[0].pair_id = t.train[0].pair_id;
  EXPECT_THROW(check_disjoint(t.train, leaked), IntegrityError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Tiny t(2);
  nn::HybridModel<float> model(t.cfg, 77);
  const auto bytes = encode_checkpoint(model, {12, {{"k", 1}}});
  auto ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.iteration, 12);
  EXPECT_EQ(encode_checkpoint(ck.model, {12, {{"k", 1}}}), bytes);
  EXPECT_EQ(ck.header.at("qt_order"), json({"4:1", "4:2", "4:4"}));
}

TEST(Checkpoint, RejectsCorruption) {
  Tiny t(2);
  nn::HybridModel<float> model(t.cfg, 77);
  auto bytes = encode_checkpoint(model, {});
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), IoError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), IoError);
}

TEST(Checkpoint, LoadedModelPredictsIdentically) {
  Tiny t(8);
  nn::HybridModel<float> model(t.cfg, 6);
  const FeatureBank bank(t.test, t.cfg);
  auto ck = decode_checkpoint(encode_checkpoint(model, {}));
  EXPECT_EQ(evaluate(model, bank).predicted, evaluate(ck.model, bank).predicted);
}

}  // namespace
}  // namespace stegokit
