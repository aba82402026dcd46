#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "mea/attacks.hpp"
#include "mea/errors.hpp"
#include "mea/metrics.hpp"

using namespace mea;

namespace {

CodecConfig tiny_config(Architecture arch = Architecture::single_head, int bits = 10) {
  CodecConfig c;
  c.architecture = arch;
  c.image_size = 16;
  c.payload_bits = bits;
  c.message_grid = 8;
  c.context_dim = 8;
  c.residual_bound = 0.3;
  return c;
}

std::vector<Image> images(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Tensor t(Shape{1, 3, 16, 16});
    for (auto& v : t.values()) v = 0.1 + 0.8 * uniform01(rng);
    out.emplace_back(std::move(t));
  }
  return out;
}

MessageBits bits(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return MessageBits::random(n, rng);
}

void force_head_output(CodecModel& m, const std::vector<double>& out) {
  for (auto& p : m.parameters().items()) {
    if (p.name == "decoder1.readout.weight") p.var.mutable_value().fill(0.0);
    if (p.name == "decoder1.readout.bias")
      for (std::size_t i = 0; i < out.size(); ++i) p.var.mutable_value()[i] = out[i];
  }
}

}  // namespace

TEST(Chain, DepthOneEqualsSingleEmbed) {
  const CodecModel m = init_model(tiny_config(), 1, "m");
  ModelRegistry reg;
  reg.add(m);
  const Image x = images(1, 2)[0];
  const MessageBits w1 = bits(10, 3);
  AttackChain chain{{{"m", w1}}};
  EXPECT_EQ(run_chain(chain, x, reg), embed(m, x, w1));
}

TEST(Chain, ComposesStepByStep) {
  const CodecModel a = init_model(tiny_config(), 1, "a");
  const CodecModel b = init_model(tiny_config(Architecture::single_head, 6), 2, "b");
  ModelRegistry reg;
  reg.add(a);
  reg.add(b);
  const Image x = images(1, 4)[0];
  AttackChain chain{{{"a", bits(10, 1)}, {"a", bits(10, 2)}, {"b", bits(6, 3)}, {"a", bits(10, 4)}, {"b", bits(6, 5)}}};

  Image expected = x;
  for (const auto& step : chain.steps) expected = embed(reg.get(step.model_id), expected, step.message);
  const Image got = run_chain(chain, x, reg);
  EXPECT_EQ(got, expected);

  AttackChain prefix{{chain.steps.begin(), chain.steps.end() - 1}};
  EXPECT_EQ(embed(b, run_chain(prefix, x, reg), chain.steps.back().message), got);

  for (double v : got.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Chain, Errors) {
  const CodecModel m = init_model(tiny_config(), 1, "m");
  ModelRegistry reg;
  reg.add(m);
  const Image x = images(1, 2)[0];
  EXPECT_THROW(run_chain(AttackChain{{{"ghost", bits(10, 1)}}}, x, reg), RegistryError);
  EXPECT_THROW(reg.get("ghost"), RegistryError);
  EXPECT_THROW(AttackChain{}.validate(reg), InputError);
  EXPECT_THROW((AttackChain{{{"m", bits(7, 1)}}}.validate(reg)), InputError);
}

TEST(Chain, BetweenDistortionIsSeeded) {
  const CodecModel m = init_model(tiny_config(), 1, "m");
  ModelRegistry reg;
  reg.add(m);
  const Image x = images(1, 2)[0];
  AttackChain chain{{{"m", bits(10, 1)}, {"m", bits(10, 2)}}};
  ChainOptions opts;
  opts.between = DistortionSpec::noise(0.05);
  opts.seed = 9;
  const Image a = run_chain(chain, x, reg, opts);
  EXPECT_EQ(a, run_chain(chain, x, reg, opts));
  EXPECT_FALSE(a == run_chain(chain, x, reg));
}

TEST(ForensicLoss, ClosedForms) {
  CodecModel m = init_model(tiny_config(), 3);
  const MessageBits w1 = bits(10, 4);
  const WatermarkSignal s = signal_of(w1, 1.0);
  const Image x = images(1, 5)[0];
  force_head_output(m, s.values);
  EXPECT_NEAR(forensic_loss(m, x, w1), 0.0, 1e-24);
  std::vector<double> negated;
  for (double v : s.values) negated.push_back(-v);
  force_head_output(m, negated);
  EXPECT_DOUBLE_EQ(forensic_loss(m, x, w1), 4.0);
}

TEST(IntraSuite, ShapeAndRanges) {
  const CodecModel m = init_model(tiny_config(), 6, "def");
  const auto data = images(5, 7);
  const std::vector<int> depths{1, 2, 3, 5};
  const MetricsTable t = run_intra_model_suite(m, data, depths, 11);
  ASSERT_EQ(t.rows.size(), depths.size());
  EXPECT_EQ(t.records.size(), data.size() * depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const MetricsRow& r = t.row(depths[i]);
    EXPECT_EQ(r.depth, depths[i]);
    EXPECT_EQ(r.n_images, data.size());
    EXPECT_EQ(r.suite, "intra_model");
    EXPECT_EQ(r.defender_id, "def");
    EXPECT_EQ(r.seed, 11u);
  }
  for (const auto& rec : t.records) {
    EXPECT_GE(rec.ber_percent, 0.0);
    EXPECT_LE(rec.ber_percent, 100.0);
    EXPECT_GE(rec.forensic_loss, 0.0);
    EXPECT_TRUE(std::isnan(rec.aux_energy));
  }
  EXPECT_THROW(run_intra_model_suite(m, std::span<const Image>{}, depths, 1), InputError);
}

TEST(IntraSuite, MatchesManualChainAndIsDeterministic) {
  const CodecModel m = init_model(tiny_config(), 8, "def");
  const auto data = images(3, 9);
  const std::vector<int> depths{1, 3};
  const MetricsTable a = run_intra_model_suite(m, data, depths, 21);
  const MetricsTable b = run_intra_model_suite(m, data, depths, 21);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].ber_percent, b.records[i].ber_percent);
    EXPECT_EQ(a.records[i].psnr_db, b.records[i].psnr_db);
    EXPECT_EQ(a.records[i].forensic_loss, b.records[i].forensic_loss);
  }
  EXPECT_EQ(format_metrics_csv(a), format_metrics_csv(b));

  // The per-depth mean equals the mean of its records.
  for (int d : depths) {
    double sum = 0.0;
    int n = 0;
    for (const auto& rec : a.records)
      if (rec.depth == d) {
        sum += rec.ber_percent;
        ++n;
      }
    EXPECT_NEAR(a.row(d).ber_percent, sum / n, 1e-12);
  }
}

TEST(IntraSuite, RandomModelIsNearChanceAtDepthOne) {
  // An untrained decoder carries no information about w1.
  const CodecModel m = init_model(tiny_config(Architecture::single_head, 30), 10);
  const auto data = images(40, 11);
  const std::vector<int> depths{1};
  const MetricsTable t = run_intra_model_suite(m, data, depths, 3);
  EXPECT_NEAR(t.row(1).ber_percent, 50.0, 3.0 * 50.0 / std::sqrt(30.0 * 40.0) + 5.0);
}

TEST(IntraSuite, MultiHeadRecordsPerHeadAndAux) {
  const CodecModel m = init_model(tiny_config(Architecture::multi_head_aux), 12, "mh");
  const auto data = images(2, 13);
  const std::vector<int> depths{1, 2};
  const MetricsTable t = run_intra_model_suite(m, data, depths, 5);
  for (const auto& rec : t.records) {
    ASSERT_EQ(rec.head_bers.size(), 2u);
    EXPECT_EQ(rec.ber_percent, rec.head_bers[0]);
    EXPECT_FALSE(std::isnan(rec.aux_energy));
    EXPECT_GE(rec.aux_energy, 0.0);
  }
  ASSERT_EQ(t.row(2).head_bers.size(), 2u);
}

TEST(CrossSuite, ZeroAdditionalEqualsIntraDepthOne) {
  const CodecModel def = init_model(tiny_config(), 14, "def");
  const CodecModel att1 = init_model(tiny_config(), 15, "a1");
  const CodecModel att2 = init_model(tiny_config(Architecture::multi_head_aux, 6), 16, "a2");
  const std::vector<const CodecModel*> attackers{&att1, &att2};
  const auto data = images(4, 17);
  const MetricsTable cross = run_cross_model_suite(def, attackers, data, 3, 31);
  const std::vector<int> one{1};
  const MetricsTable intra = run_intra_model_suite(def, data, one, 31);

  EXPECT_EQ(cross.rows.size(), attackers.size() * 4);
  for (const auto* a : attackers) {
    EXPECT_EQ(cross.row(a->id(), 0).ber_percent, intra.row(1).ber_percent);
    EXPECT_EQ(cross.row(a->id(), 0).psnr_db, intra.row(1).psnr_db);
    for (int n = 0; n <= 3; ++n) {
      EXPECT_EQ(cross.row(a->id(), n).suite, "cross_model");
      EXPECT_EQ(cross.row(a->id(), n).attacker_id, a->id());
    }
  }
  EXPECT_THROW(run_cross_model_suite(def, std::span<const CodecModel* const>{}, data, 3, 1), InputError);
}

TEST(CrossSuite, Deterministic) {
  const CodecModel def = init_model(tiny_config(), 18, "def");
  const CodecModel att = init_model(tiny_config(), 19, "att");
  const std::vector<const CodecModel*> attackers{&att};
  const auto data = images(3, 20);
  EXPECT_EQ(format_metrics_csv(run_cross_model_suite(def, attackers, data, 2, 4)),
            format_metrics_csv(run_cross_model_suite(def, attackers, data, 2, 4)));
}

TEST(MetricsCsv, RoundTrip) {
  const CodecModel m = init_model(tiny_config(), 21, "def");
  const auto data = images(2, 22);
  const std::vector<int> depths{1, 2};
  MetricsTable t = run_intra_model_suite(m, data, depths, 8);
  t.rows[0].psnr_db = INFINITY;
  const std::string text = format_metrics_csv(t);
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsCsvHeader);
  EXPECT_NE(text.find(",inf,"), std::string::npos);

  std::istringstream in(text);
  const MetricsTable back = parse_metrics_csv(in, "memory");
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].suite, t.rows[i].suite);
    EXPECT_EQ(back.rows[i].defender_id, t.rows[i].defender_id);
    EXPECT_EQ(back.rows[i].depth, t.rows[i].depth);
    EXPECT_EQ(back.rows[i].ber_percent, t.rows[i].ber_percent);
    EXPECT_EQ(back.rows[i].psnr_db, t.rows[i].psnr_db);
    EXPECT_EQ(back.rows[i].ssim, t.rows[i].ssim);
    EXPECT_EQ(back.rows[i].n_images, t.rows[i].n_images);
    EXPECT_EQ(back.rows[i].seed, t.rows[i].seed);
  }
  EXPECT_EQ(format_metrics_csv(back), text);

  const auto path = std::filesystem::temp_directory_path() / "mea_metrics_roundtrip.csv";
  write_metrics_csv(t, path.string());
  EXPECT_EQ(format_metrics_csv(read_metrics_csv(path.string())), text);
  std::filesystem::remove(path);
}

TEST(MetricsCsv, RejectsMalformedInput) {
  std::istringstream bad_header("a,b,c\n");
  EXPECT_THROW(parse_metrics_csv(bad_header, "x"), InputError);
  std::istringstream short_row(std::string(kMetricsCsvHeader) + "\nintra,d,d,1\n");
  EXPECT_THROW(parse_metrics_csv(short_row, "x"), InputError);
  std::istringstream bad_number(std::string(kMetricsCsvHeader) + "\nintra,d,d,one,1,1,1,1,1\n");
  EXPECT_THROW(parse_metrics_csv(bad_number, "x"), InputError);
}

TEST(MetricsTable, RowLookupErrors) {
  MetricsTable t;
  EXPECT_THROW(t.row(1), InputError);
  EXPECT_THROW(t.row("a", 1), InputError);
}
