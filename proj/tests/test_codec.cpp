#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mea/codec.hpp"
#include "mea/errors.hpp"

using namespace mea;

namespace {

CodecConfig small_config(Architecture arch = Architecture::single_head) {
  CodecConfig c;
  c.architecture = arch;
  c.image_size = 16;
  c.payload_bits = 10;
  c.message_grid = 8;
  c.context_dim = 8;
  return c;
}

Image random_image(int size, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Tensor t(Shape{1, 3, size, size});
  for (auto& v : t.values()) v = uniform01(rng);
  return Image(std::move(t));
}

MessageBits random_message(int length, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return MessageBits::random(length, rng);
}

}  // namespace

TEST(Codec, InitIsDeterministic) {
  const CodecConfig config;  // 64x64 desk defaults
  const CodecModel a = init_model(config, 7);
  const CodecModel b = init_model(config, 7);
  ASSERT_EQ(a.parameters().items().size(), b.parameters().items().size());
  for (std::size_t i = 0; i < a.parameters().items().size(); ++i) {
    const auto& pa = a.parameters().items()[i];
    const auto& pb = b.parameters().items()[i];
    EXPECT_EQ(pa.name, pb.name);
    EXPECT_EQ(pa.var.value().storage(), pb.var.value().storage()) << pa.name;
  }
  EXPECT_EQ(a.parameter_count(), b.parameter_count());

  const CodecModel c = init_model(config, 8);
  EXPECT_NE(a.parameters().items()[0].var.value().storage(), c.parameters().items()[0].var.value().storage());
}

TEST(Codec, SingleHeadParameterGroups) {
  CodecConfig config;
  config.payload_bits = 30;
  const CodecModel m = init_model(config, 1);
  const std::vector<std::string> expected{"encoder", "decoder1", "discriminator"};
  EXPECT_EQ(m.parameters().groups(), expected);
  EXPECT_EQ(m.primary_heads(), 1);
  EXPECT_FALSE(m.has_aux_head());
}

TEST(Codec, MultiHeadParameterGroups) {
  CodecConfig config;
  config.architecture = Architecture::multi_head_aux;
  config.payload_bits = 30;
  const CodecModel m = init_model(config, 1);
  auto groups = m.parameters().groups();
  std::sort(groups.begin(), groups.end());
  const std::vector<std::string> expected{"decoder0", "decoder1", "decoder2", "discriminator", "encoder"};
  EXPECT_EQ(groups, expected);
  EXPECT_EQ(m.primary_heads(), 2);
  EXPECT_TRUE(m.has_aux_head());
}

TEST(Codec, InvalidConfigNamesField) {
  auto expect_field = [](CodecConfig c, const std::string& field) {
    try {
      init_model(c, 1);
      ADD_FAILURE() << "no error for " << field;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  CodecConfig c = small_config();
  c.image_size = 20;
  expect_field(c, "image_size");
  c = small_config();
  c.payload_bits = 0;
  expect_field(c, "payload_bits");
  c = small_config();
  c.alpha = -1.0;
  expect_field(c, "alpha");
  c = small_config();
  c.encoder_channels = 0;
  expect_field(c, "encoder_channels");
  c = small_config();
  c.residual_bound = 0.0;
  expect_field(c, "residual_bound");
}

TEST(Codec, EmbedPreservesShapeAndRange) {
  for (auto arch : {Architecture::single_head, Architecture::multi_head_aux}) {
    const CodecModel m = init_model(small_config(arch), 3);
    for (std::uint64_t s = 0; s < 4; ++s) {
      const Image x = random_image(16, 10 + s);
      const Image y = embed(m, x, random_message(10, 20 + s));
      ASSERT_EQ(y.height(), 16);
      ASSERT_EQ(y.width(), 16);
      for (double v : y.values()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(Codec, ReEmbeddingIsValidDecodeInput) {
  const CodecModel m = init_model(small_config(), 4);
  const Image x = random_image(16, 1);
  const Image x1 = embed(m, x, random_message(10, 2));
  const Image x12 = embed(m, x1, random_message(10, 3));
  const SoftMessage soft = decode(m, x12, 1);
  ASSERT_EQ(soft.size(), 10u);
  for (double v : soft) EXPECT_TRUE(std::isfinite(v));
}

TEST(Codec, DecodeAllZerosIsFinite) {
  const CodecModel m = init_model(small_config(Architecture::multi_head_aux), 5);
  const Image zeros(16, 16, 0.0);
  for (int head = 0; head <= 2; ++head) {
    const SoftMessage soft = decode(m, zeros, head);
    ASSERT_EQ(soft.size(), 10u);
    for (double v : soft) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Codec, HeadAddressing) {
  const CodecModel single = init_model(small_config(), 6);
  const Image x = random_image(16, 1);
  EXPECT_THROW(decode(single, x, 0), AddressingError);
  EXPECT_THROW(decode(single, x, 2), AddressingError);
  EXPECT_THROW(decode(single, x, -1), AddressingError);
  const CodecModel multi = init_model(small_config(Architecture::multi_head_aux), 6);
  EXPECT_NO_THROW(decode(multi, x, 0));
  EXPECT_THROW(decode(multi, x, 3), AddressingError);
}

TEST(Codec, ShapeMismatchIsInputError) {
  const CodecModel m = init_model(small_config(), 7);
  EXPECT_THROW(embed(m, random_image(24, 1), random_message(10, 1)), InputError);
  EXPECT_THROW(embed(m, random_image(16, 1), random_message(9, 1)), InputError);
  EXPECT_THROW(decode(m, random_image(8, 1), 1), InputError);
}

TEST(Codec, NonFiniteParametersAreModelStateError) {
  CodecModel m = init_model(small_config(), 8);
  m.parameters().items()[0].var.mutable_value()[0] = std::nan("");
  EXPECT_THROW(embed(m, random_image(16, 1), random_message(10, 1)), ModelStateError);
}

TEST(Codec, EmbedIsDeterministic) {
  const CodecModel m = init_model(small_config(), 9);
  const Image x = random_image(16, 3);
  const MessageBits w = random_message(10, 4);
  EXPECT_EQ(embed(m, x, w), embed(m, x, w));
}

TEST(Codec, BatchMatchesSingleImage) {
  const CodecModel m = init_model(small_config(), 10);
  std::vector<Image> xs{random_image(16, 1), random_image(16, 2), random_image(16, 3)};
  std::vector<MessageBits> ws{random_message(10, 4), random_message(10, 5), random_message(10, 6)};
  const auto batch = embed_batch(m, xs, ws);
  ASSERT_EQ(batch.size(), 3u);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Image single = embed(m, xs[i], ws[i]);
    for (std::size_t j = 0; j < single.values().size(); ++j)
      ASSERT_NEAR(batch[i].values()[j], single.values()[j], 1e-12);
  }
}

TEST(Codec, CopyIsDeep) {
  const CodecModel a = init_model(small_config(), 11);
  CodecModel b = a;
  b.parameters().items()[0].var.mutable_value()[0] += 1.0;
  EXPECT_NE(a.parameters().items()[0].var.value()[0], b.parameters().items()[0].var.value()[0]);
}

TEST(Codec, TrainModeOutputStaysInRange) {
  const CodecModel m = init_model(small_config(), 12);
  const Image x = random_image(16, 1);
  const MessageBits w = random_message(10, 2);
  const std::vector<MessageBits> ws{w};
  const ag::Var out = m.encode(ag::Var::constant(x.tensor()), ag::Var::constant(signal_tensor(ws, 1.0)), Mode::train);
  for (double v : out.value().values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Codec, ResidualIsBounded) {
  CodecConfig c = small_config();
  c.residual_bound = 0.05;
  const CodecModel m = init_model(c, 13);
  const Image x(16, 16, 0.5);
  const Image y = embed(m, x, random_message(10, 1));
  for (std::size_t i = 0; i < x.values().size(); ++i) EXPECT_LE(std::abs(y.values()[i] - 0.5), 0.05 + 1e-12);
}

TEST(Codec, ArchitectureStrings) {
  EXPECT_EQ(architecture_from_string(to_string(Architecture::single_head)), Architecture::single_head);
  EXPECT_EQ(architecture_from_string(to_string(Architecture::multi_head_aux)), Architecture::multi_head_aux);
  EXPECT_THROW(architecture_from_string("triple"), ConfigError);
}
