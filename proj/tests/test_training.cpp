#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mea/errors.hpp"
#include "mea/training.hpp"

using namespace mea;

namespace {

CodecConfig tiny_config(Architecture arch = Architecture::single_head) {
  CodecConfig c;
  c.architecture = arch;
  c.image_size = 16;
  c.payload_bits = 8;
  c.message_grid = 8;
  c.context_dim = 8;
  return c;
}

std::vector<Image> tiny_dataset(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Tensor t(Shape{1, 3, 16, 16});
    for (auto& v : t.values()) v = 0.1 + 0.8 * uniform01(rng);
    out.emplace_back(std::move(t));
  }
  return out;
}

// Makes head `head` emit the constant vector `out` regardless of input.
void force_head_output(CodecModel& m, int head, const std::vector<double>& out) {
  const std::string prefix = head_group(head) + ".readout.";
  for (auto& p : m.parameters().items()) {
    if (p.name == prefix + "weight") p.var.mutable_value().fill(0.0);
    if (p.name == prefix + "bias") {
      auto& v = p.var.mutable_value();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = out[i];
    }
  }
}

WatermarkSignal signal(int bits, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return signal_of(MessageBits::random(bits, rng), 1.0);
}

TrainConfig quick_config(long steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 2;
  t.seed = 3;
  return t;
}

}  // namespace

TEST(Losses, ImageLossClosedForms) {
  const Image x = tiny_dataset(1, 1)[0];
  EXPECT_EQ(image_loss(x, x), 0.0);
  EXPECT_DOUBLE_EQ(image_loss(Image(16, 16, 0.0), Image(16, 16, 1.0)), 1.0);

  Tensor shifted = x.tensor();
  for (auto& v : shifted.values()) v += 0.1;
  const ag::Var a = ag::Var::constant(x.tensor());
  const ag::Var b = ag::Var::constant(shifted);
  EXPECT_NEAR(image_loss(a, b).item(), 0.01, 1e-12);
  EXPECT_THROW(image_loss(Image(16, 16), Image(8, 8)), InputError);
}

TEST(Losses, DecoderLossClosedForms) {
  CodecModel m = init_model(tiny_config(), 1);
  const WatermarkSignal w = signal(8, 2);
  const Image x = tiny_dataset(1, 3)[0];

  force_head_output(m, 1, std::vector<double>(8, 0.0));
  EXPECT_DOUBLE_EQ(decoder_loss(m, x, w), 1.0);
  force_head_output(m, 1, w.values);
  EXPECT_NEAR(decoder_loss(m, x, w), 0.0, 1e-24);

  CodecModel multi = init_model(tiny_config(Architecture::multi_head_aux), 1);
  force_head_output(multi, 1, w.values);
  force_head_output(multi, 2, w.values);
  force_head_output(multi, 0, std::vector<double>(8, 0.0));
  EXPECT_NEAR(decoder_loss(multi, x, w), 0.0, 1e-24);
  force_head_output(multi, 0, std::vector<double>(8, 0.5));
  EXPECT_NEAR(decoder_loss(multi, x, w), 0.25, 1e-12);
}

TEST(Losses, ResilienceLossClosedForms) {
  CodecModel m = init_model(tiny_config(), 4);
  const WatermarkSignal w = signal(8, 5);
  const Image x = tiny_dataset(1, 6)[0];
  LossWeights lw;

  std::vector<double> negated;
  for (double v : w.values) negated.push_back(-v);
  force_head_output(m, 1, negated);
  EXPECT_DOUBLE_EQ(resilience_loss(m, x, w, lw), 4.0);
  force_head_output(m, 1, w.values);
  EXPECT_NEAR(resilience_loss(m, x, w, lw), 0.0, 1e-24);

  // beta0 = 0 on the multi-head model collapses to the per-head formula.
  CodecModel multi = init_model(tiny_config(Architecture::multi_head_aux), 4);
  force_head_output(multi, 1, negated);
  force_head_output(multi, 2, w.values);
  force_head_output(multi, 0, std::vector<double>(8, 1.0));
  LossWeights no_aux;
  no_aux.beta0 = 0.0;
  EXPECT_DOUBLE_EQ(resilience_loss(multi, x, w, no_aux), 4.0);
  EXPECT_DOUBLE_EQ(resilience_loss(multi, x, w, lw), 5.0);
  LossWeights weighted;
  weighted.beta = {0.5, 1.0};
  EXPECT_DOUBLE_EQ(resilience_loss(multi, x, w, weighted), 3.0);
}

TEST(Losses, Beta0IgnoredWithoutAuxHead) {
  const CodecModel single = init_model(tiny_config(), 1);
  LossWeights lw;
  lw.beta0 = 3.0;
  EXPECT_EQ(lw.beta0_for(single), 0.0);
  EXPECT_EQ(lw.beta0_for(init_model(tiny_config(Architecture::multi_head_aux), 1)), 3.0);
}

TEST(Losses, TotalLossArithmetic) {
  LossWeights w;
  w.image = 1.0;
  w.decoder = 1.0;
  w.adversarial = 0.0;
  w.resilience = 10.0;
  EXPECT_NEAR(total_loss(LossValues{0.01, 0.5, 0.7, 0.2}, w), 2.51, 1e-12);

  LossWeights zero{0.0, 0.0, 0.0, 0.0};
  EXPECT_EQ(total_loss(LossValues{0.3, 0.4, 0.5, 0.6}, zero), 0.0);

  LossWeights no_ais;
  no_ais.resilience = 0.0;
  EXPECT_EQ(total_loss(LossValues{0.01, 0.5, 0.7, 123.0}, no_ais), 0.01 + 0.5 + 0.01 * 0.7);
}

TEST(Losses, TotalLossNamesNonFiniteTerm) {
  try {
    total_loss(LossValues{0.1, std::nan(""), 0.0, 0.0}, LossWeights{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.term(), "L_D");
  }
  try {
    total_loss(LossValues{0.1, 0.1, 0.0, INFINITY}, LossWeights{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.term(), "L_AIS");
  }
}

TEST(Losses, AdversarialSymmetryAtIdentity) {
  const CodecModel m = init_model(tiny_config(), 7);
  const auto data = tiny_dataset(2, 8);
  const ag::Var x = ag::Var::constant(stack(data));
  const AdversarialTerms t = adversarial_losses(m, x, x);
  // With X_w = X the critic's two terms see the same logit g:
  // softplus(-g) + softplus(g) = generator + softplus(g) >= 2 log 2.
  EXPECT_GE(t.discriminator.item(), 2.0 * std::log(2.0) - 1e-12);
  EXPECT_TRUE(std::isfinite(t.generator.item()));
}

TEST(Losses, DiscriminatorTermDecreasesOnFixedInputs) {
  CodecModel m = init_model(tiny_config(), 9);
  const auto data = tiny_dataset(4, 10);
  const ag::Var x = ag::Var::constant(stack(data));
  std::vector<MessageBits> w;
  Rng rng = make_rng(11);
  for (int i = 0; i < 4; ++i) w.push_back(MessageBits::random(8, rng));
  ag::Var x_w;
  {
    ag::NoGradGuard g;
    x_w = m.encode(x, ag::Var::constant(signal_tensor(w, 1.0)), Mode::eval);
  }
  nn::Adam opt({"discriminator"}, nn::Adam::Options{.lr = 1e-2});
  const double first = adversarial_losses(m, x, x_w).discriminator.item();
  double last = first;
  for (int i = 0; i < 30; ++i) {
    ag::Var d = adversarial_losses(m, x, x_w).discriminator;
    last = d.item();
    m.parameters().zero_grad();
    ag::backward(d);
    opt.step(m.parameters());
  }
  EXPECT_LT(last, first);
}

TEST(Training, LogLengthEqualsSteps) {
  const auto data = tiny_dataset(6, 12);
  const TrainResult r = train_baseline(tiny_config(), quick_config(7), data);
  EXPECT_EQ(r.log.size(), 7u);
  EXPECT_EQ(r.log.front().step, 1);
  EXPECT_EQ(r.log.back().step, 7);
}

TEST(Training, DeterministicForSeed) {
  const auto data = tiny_dataset(6, 13);
  const TrainResult a = train_baseline(tiny_config(), quick_config(5), data);
  const TrainResult b = train_baseline(tiny_config(), quick_config(5), data);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].total, b.log[i].total);
  for (std::size_t i = 0; i < a.model.parameters().items().size(); ++i)
    EXPECT_EQ(a.model.parameters().items()[i].var.value().storage(),
              b.model.parameters().items()[i].var.value().storage());
}

TEST(Training, ZeroLambdaAIsBitIdenticalToBaseline) {
  const auto data = tiny_dataset(6, 14);
  const CodecModel start = init_model(tiny_config(), 15);
  TrainConfig base = quick_config(6);
  TrainConfig ais = base;
  ais.ais_enabled = true;
  ais.weights.resilience = 0.0;
  const TrainResult a = train_baseline(start, base, data);
  const TrainResult b = finetune_ais(start, ais, data);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].total, b.log[i].total);
  for (std::size_t i = 0; i < a.model.parameters().items().size(); ++i)
    ASSERT_EQ(a.model.parameters().items()[i].var.value().storage(),
              b.model.parameters().items()[i].var.value().storage())
        << a.model.parameters().items()[i].name;
}

TEST(Training, AisStepRecordsResilience) {
  const auto data = tiny_dataset(6, 16);
  TrainConfig ais = quick_config(3);
  ais.ais_enabled = true;
  const TrainResult r = finetune_ais(init_model(tiny_config(Architecture::multi_head_aux), 17), ais, data);
  for (const auto& row : r.log) EXPECT_GT(row.terms.resilience, 0.0);
}

TEST(Training, SingleBitPayloadAlwaysGetsFreshSecondMessage) {
  // With L = 1 half of all draws collide; resampling must keep training alive.
  CodecConfig c = tiny_config();
  c.payload_bits = 1;
  TrainConfig ais = quick_config(10);
  ais.ais_enabled = true;
  const auto data = tiny_dataset(4, 18);
  EXPECT_NO_THROW(finetune_ais(init_model(c, 19), ais, data));
}

TEST(Training, FixedBatchMonotoneDecrease) {
  Trainer t(init_model(tiny_config(), 20), [] {
    TrainConfig c = quick_config(50);
    c.pool = DistortionPool::identity_only();
    c.train_discriminator = false;
    c.lr_codec = 2e-4;
    return c;
  }());
  const auto batch = tiny_dataset(4, 21);
  std::vector<MessageBits> w1;
  Rng rng = make_rng(22);
  for (int i = 0; i < 4; ++i) w1.push_back(MessageBits::random(8, rng));
  double previous = t.step_on(batch, w1).total;
  for (int i = 1; i < 50; ++i) {
    const double current = t.step_on(batch, w1).total;
    EXPECT_LT(current, previous + 1e-9) << "step " << i;
    previous = current;
  }
}

TEST(Training, ModeChecks) {
  const auto data = tiny_dataset(2, 23);
  TrainConfig ais = quick_config(1);
  ais.ais_enabled = true;
  EXPECT_THROW(train_baseline(tiny_config(), ais, data), ConfigError);
  EXPECT_THROW(finetune_ais(init_model(tiny_config(), 1), quick_config(1), data), ConfigError);
  TrainConfig bad = quick_config(0);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = quick_config(1);
  bad.lr_codec = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  LossWeights negative;
  negative.resilience = -1.0;
  EXPECT_THROW(negative.validate(), ConfigError);
}

TEST(Training, DivergenceKeepsLastCheckpoint) {
  const auto dir = std::filesystem::temp_directory_path() / "mea_train_diverge";
  std::filesystem::create_directories(dir);
  TrainConfig c = quick_config(4);
  c.checkpoint_every = 2;
  c.checkpoint_path = (dir / "run.ckpt").string();
  Trainer t(init_model(tiny_config(), 24), c);
  const auto data = tiny_dataset(4, 25);
  t.step(data);
  t.step(data);
  ASSERT_EQ(t.last_checkpoint_step(), 2);
  t.model().parameters().items().front().var.mutable_value()[0] = INFINITY;
  try {
    t.step(data);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.last_checkpoint_step(), 2);
  }
  CheckpointMeta meta;
  const CodecModel restored = load_checkpoint(c.checkpoint_path, &meta);
  EXPECT_EQ(meta.training_step, 2);
  EXPECT_TRUE(restored.parameters().all_finite());
  std::filesystem::remove_all(dir);
}

TEST(GradientCheck, TotalLossWithResilience) {
  ProbeConfig probe;
  CodecModel m = probe_model(probe);
  const auto report = gradient_check(m, LossSelector::total, probe);
  EXPECT_TRUE(report.passed(1e-3)) << report.max_rel_error;
  EXPECT_FALSE(report.samples.empty());
}

TEST(GradientCheck, ImageLossNearExact) {
  ProbeConfig probe;
  CodecModel m = probe_model(probe);
  const auto report = gradient_check(m, LossSelector::image, probe);
  EXPECT_TRUE(report.passed(1e-6)) << report.max_rel_error;
}

TEST(GradientCheck, EveryTermOnMultiHead) {
  ProbeConfig probe;
  CodecModel m = probe_model(probe, Architecture::multi_head_aux);
  for (auto sel : {LossSelector::decoder, LossSelector::adversarial_generator, LossSelector::adversarial_discriminator,
                   LossSelector::resilience, LossSelector::total}) {
    const auto report = gradient_check(m, sel, probe);
    EXPECT_TRUE(report.passed(1e-3)) << to_string(sel) << " " << report.max_rel_error;
  }
}

TEST(GradientCheck, FrozenGroupsExcluded) {
  ProbeConfig probe;
  probe.frozen_groups = {"discriminator", "encoder"};
  CodecModel m = probe_model(probe);
  const auto report = gradient_check(m, LossSelector::total, probe);
  EXPECT_EQ(report.excluded_groups, probe.frozen_groups);
  for (const auto& s : report.samples) {
    EXPECT_NE(nn::group_of(s.parameter), "discriminator");
    EXPECT_NE(nn::group_of(s.parameter), "encoder");
  }
  EXPECT_EQ(report.max_rel_error_by_group.count("encoder"), 0u);
  EXPECT_TRUE(report.passed(1e-3));
}
