#include "mea/attacks.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "mea/errors.hpp"
#include "mea/metrics.hpp"

namespace mea {

void ModelRegistry::add(const CodecModel& model) { models_[model.id()] = &model; }

const CodecModel& ModelRegistry::get(const std::string& model_id) const {
  auto it = models_.find(model_id);
  if (it == models_.end()) throw RegistryError("unknown model '" + model_id + "'");
  return *it->second;
}

void AttackChain::validate(const ModelRegistry& registry) const {
  if (steps.empty()) throw InputError("attack chain must have depth >= 1");
  for (const auto& s : steps) {
    const CodecModel& m = registry.get(s.model_id);
    if (s.message.length() != m.config().payload_bits) {
      throw InputError("message for '" + s.model_id + "' has " + std::to_string(s.message.length()) +
                       " bits, model expects " + std::to_string(m.config().payload_bits));
    }
  }
}

Image run_chain(const AttackChain& chain, const Image& image, const ModelRegistry& registry,
                const ChainOptions& options) {
  chain.validate(registry);
  Rng rng = make_rng(options.seed, 0xC4A1);
  Image current = image;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    if (i > 0 && options.between) current = apply(*options.between, current, rng);
    current = embed(registry.get(chain.steps[i].model_id), current, chain.steps[i].message);
  }
  return current;
}

double forensic_loss(const CodecModel& model, const Image& attacked, const MessageBits& w1) {
  const SoftMessage soft = decode(model, attacked, 1);
  const WatermarkSignal s = signal_of(w1, model.config().alpha);
  if (soft.size() != s.values.size()) throw InputError("forensic_loss: w1 length does not match the model payload");
  double acc = 0.0;
  for (std::size_t i = 0; i < soft.size(); ++i) acc += (soft[i] - s.values[i]) * (soft[i] - s.values[i]);
  return acc / static_cast<double>(soft.size());
}

const MetricsRow& MetricsTable::row(const std::string& attacker_id, int depth) const {
  for (const auto& r : rows)
    if (r.attacker_id == attacker_id && r.depth == depth) return r;
  throw InputError("no metrics row for attacker '" + attacker_id + "' at depth " + std::to_string(depth));
}

const MetricsRow& MetricsTable::row(int depth) const {
  for (const auto& r : rows)
    if (r.depth == depth) return r;
  throw InputError("no metrics row at depth " + std::to_string(depth));
}

void MetricsTable::append(const MetricsTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  records.insert(records.end(), other.records.begin(), other.records.end());
}

namespace {

MetricsRecord measure(const CodecModel& defender, std::size_t index, int depth, const Image& original,
                      const Image& attacked, const Image& first_embedding, const MessageBits& w1) {
  MetricsRecord r;
  r.image_index = index;
  r.depth = depth;
  for (int head = 1; head <= defender.primary_heads(); ++head) {
    r.head_bers.push_back(ber(w1, binarize(decode(defender, attacked, head))));
  }
  r.ber_percent = r.head_bers.front();
  r.forensic_loss = forensic_loss(defender, attacked, w1);
  r.psnr_db = psnr(original, attacked);
  r.ssim = ssim(original, attacked);
  r.aux_energy = std::numeric_limits<double>::quiet_NaN();
  if (defender.has_aux_head()) {
    const SoftMessage aux = decode(defender, attacked, 0);
    double acc = 0.0;
    for (double v : aux) acc += v * v;
    r.aux_energy = acc / static_cast<double>(aux.size());
  }
  r.residual_sparsity = residual_sparsity(original, first_embedding);
  return r;
}

MetricsRow summarize(std::span<const MetricsRecord> records, std::string suite, std::string defender,
                     std::string attacker, int depth, std::uint64_t seed) {
  MetricsRow row;
  row.suite = std::move(suite);
  row.defender_id = std::move(defender);
  row.attacker_id = std::move(attacker);
  row.depth = depth;
  row.seed = seed;
  row.n_images = records.size();
  const double n = static_cast<double>(records.size());
  row.head_bers.assign(records.front().head_bers.size(), 0.0);
  for (const auto& r : records) {
    row.ber_percent += r.ber_percent / n;
    row.psnr_db += r.psnr_db / n;
    row.ssim += r.ssim / n;
    row.aux_energy += r.aux_energy / n;
    row.forensic_loss += r.forensic_loss / n;
    row.residual_sparsity += r.residual_sparsity / n;
    for (std::size_t h = 0; h < r.head_bers.size(); ++h) row.head_bers[h] += r.head_bers[h] / n;
  }
  return row;
}

}  // namespace

MetricsTable run_intra_model_suite(const CodecModel& defender, std::span<const Image> dataset,
                                   std::span<const int> depths, std::uint64_t seed, const SuiteOptions& options) {
  if (dataset.empty()) throw InputError("intra-model suite: empty dataset");
  if (depths.empty()) throw InputError("intra-model suite: no depths requested");
  int max_depth = 0;
  for (int d : depths) {
    if (d < 1) throw InputError("intra-model suite: depth must be >= 1");
    max_depth = std::max(max_depth, d);
  }
  const int L = defender.config().payload_bits;
  // per_image[i][d-1] for every depth up to max_depth
  std::vector<std::vector<MetricsRecord>> per_image(dataset.size());

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Rng rng = make_rng(seed, i);
    Rng channel = make_rng(seed ^ 0xD15C0ULL, i);
    const MessageBits w1 = MessageBits::random(L, rng);
    Image current = embed(defender, dataset[i], w1);
    const Image first = current;
    auto& out = per_image[i];
    out.push_back(measure(defender, i, 1, dataset[i], current, first, w1));
    for (int d = 2; d <= max_depth; ++d) {
      const MessageBits wd = MessageBits::random(L, rng);
      if (options.between) current = apply(*options.between, current, channel);
      current = embed(defender, current, wd);
      out.push_back(measure(defender, i, d, dataset[i], current, first, w1));
    }
  }

  MetricsTable table;
  for (int d : depths) {
    std::vector<MetricsRecord> at_depth;
    for (const auto& recs : per_image) at_depth.push_back(recs[d - 1]);
    table.rows.push_back(summarize(at_depth, "intra_model", defender.id(), defender.id(), d, seed));
    table.records.insert(table.records.end(), at_depth.begin(), at_depth.end());
  }
  return table;
}

MetricsTable run_cross_model_suite(const CodecModel& defender, std::span<const CodecModel* const> attackers,
                                   std::span<const Image> dataset, int n_max, std::uint64_t seed,
                                   const SuiteOptions& options) {
  if (attackers.empty()) throw InputError("cross-model suite: attacker set is empty");
  if (dataset.empty()) throw InputError("cross-model suite: empty dataset");
  if (n_max < 0) throw InputError("cross-model suite: n_max must be >= 0");
  const int L = defender.config().payload_bits;
  MetricsTable table;
  for (std::size_t a = 0; a < attackers.size(); ++a) {
    const CodecModel& attacker = *attackers[a];
    if (attacker.config().image_size != defender.config().image_size) {
      throw InputError("attacker '" + attacker.id() + "' works on a different image size");
    }
    std::vector<std::vector<MetricsRecord>> per_image(dataset.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      // w1 matches the intra-model suite for the same seed and image.
      Rng rng = make_rng(seed, i);
      Rng attack_rng = make_rng(mix_seed(seed, 0xA77AC + a), i);
      Rng channel = make_rng(seed ^ 0xD15C0ULL, i);
      const MessageBits w1 = MessageBits::random(L, rng);
      Image current = embed(defender, dataset[i], w1);
      const Image first = current;
      auto& out = per_image[i];
      out.push_back(measure(defender, i, 0, dataset[i], current, first, w1));
      for (int n = 1; n <= n_max; ++n) {
        if (options.between) current = apply(*options.between, current, channel);
        current = embed(attacker, current, MessageBits::random(attacker.config().payload_bits, attack_rng));
        out.push_back(measure(defender, i, n, dataset[i], current, first, w1));
      }
    }
    for (int n = 0; n <= n_max; ++n) {
      std::vector<MetricsRecord> at_n;
      for (const auto& recs : per_image) at_n.push_back(recs[n]);
      table.rows.push_back(summarize(at_n, "cross_model", defender.id(), attacker.id(), n, seed));
      table.records.insert(table.records.end(), at_n.begin(), at_n.end());
    }
  }
  return table;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

std::string format_metrics_csv(const MetricsTable& table) {
  std::ostringstream os;
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : table.rows) {
    os << r.suite << ',' << r.defender_id << ',' << r.attacker_id << ',' << r.depth << ',' << fmt(r.ber_percent)
       << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim) << ',' << r.n_images << ',' << r.seed << '\n';
  }
  return os.str();
}

void write_metrics_csv(const MetricsTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << format_metrics_csv(table);
}

MetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path + "'");
  return parse_metrics_csv(in, path);
}

MetricsTable parse_metrics_csv(std::istream& in, const std::string& path) {
  std::string line;
  std::getline(in, line);
  if (line.rfind(kMetricsCsvHeader, 0) != 0) throw InputError("'" + path + "' is not a metrics CSV");
  MetricsTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() < 9) throw InputError("short metrics row in '" + path + "'");
    MetricsRow r;
    r.suite = f[0];
    r.defender_id = f[1];
    r.attacker_id = f[2];
    try {
      r.depth = std::stoi(f[3]);
      r.ber_percent = parse_number(f[4]);
      r.psnr_db = parse_number(f[5]);
      r.ssim = parse_number(f[6]);
      r.n_images = std::stoul(f[7]);
      r.seed = std::stoull(f[8]);
    } catch (const std::logic_error&) {
      throw InputError("malformed number in metrics row '" + line + "' of '" + path + "'");
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace mea
