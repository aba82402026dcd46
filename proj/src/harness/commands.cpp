#include "mea/harness/commands.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mea/digest.hpp"
#include "mea/errors.hpp"
#include "mea/harness/manifest.hpp"
#include "mea/harness/report.hpp"
#include "mea/metrics.hpp"
#include "mea/serialization.hpp"
#include "mea/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mea::harness {

std::string Paths::checkpoint(const std::string& id) const { return (fs::path(root) / "checkpoints" / (id + ".ckpt")).string(); }
std::string Paths::loss_log(const std::string& id) const { return (fs::path(root) / "logs" / (id + "_loss.csv")).string(); }
std::string Paths::intra_csv(const std::string& id) const { return (fs::path(root) / "attack" / id / "intra_model.csv").string(); }
std::string Paths::cross_csv(const std::string& id) const { return (fs::path(root) / "attack" / id / "cross_model.csv").string(); }
std::string Paths::ablation_csv() const { return (fs::path(root) / "ablation" / "ablation.csv").string(); }
std::string Paths::report_dir() const { return (fs::path(root) / "report").string(); }
std::string Paths::relative(const std::string& path) const { return fs::relative(path, root).generic_string(); }

namespace {

void say(const CommandOptions& opt, const std::string& msg) {
  if (opt.log) *opt.log << msg << std::endl;
}

void ensure_parent(const std::string& path) { fs::create_directories(fs::path(path).parent_path()); }

std::string format_lambda(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::span<const Image> attack_images(const ExperimentConfig& config, const DatasetSplits& data) {
  std::span<const Image> test(data.test);
  if (test.empty()) throw InputError("test split is empty");
  if (config.attack.max_images > 0 && config.attack.max_images < test.size()) test = test.first(config.attack.max_images);
  return test;
}

// Everything that determines a trained checkpoint. Equal snapshots mean the
// checkpoint can be reused.
std::string snapshot(const ExperimentConfig& config, const std::string& stage, const std::string& id,
                     const CodecConfig& codec, const TrainConfig& train, const std::string& parent_digest) {
  json j{{"stage", stage},
         {"model", id},
         {"codec", to_json(codec)},
         {"train", to_json(train)},
         {"dataset", config.resolved.at("dataset")},
         {"parent", parent_digest}};
  return j.dump();
}

bool up_to_date(const std::string& path, const std::string& wanted) {
  if (!fs::exists(path)) return false;
  try {
    CheckpointMeta meta;
    load_checkpoint(path, &meta);
    return meta.config_snapshot == wanted;
  } catch (const Error&) {
    return false;
  }
}

CodecModel run_training(CodecModel model, TrainConfig train, std::span<const Image> data, const std::string& id,
                        const std::string& snap, const Paths& paths, const CommandOptions& opt) {
  const std::string ckpt = paths.checkpoint(id);
  ensure_parent(ckpt);
  train.checkpoint_path = ckpt + ".partial";
  train.checkpoint_snapshot = snap;
  Trainer trainer(std::move(model), train);
  const long report_every = std::max<long>(1, train.steps / 10);
  for (long s = 0; s < train.steps; ++s) {
    const LossLogRow& row = trainer.step(data);
    if (row.step % report_every == 0 || row.step == train.steps) {
      std::ostringstream os;
      os.precision(4);
      os << "  [" << id << "] step " << row.step << "/" << train.steps << "  L_I " << row.terms.image << "  L_D "
         << row.terms.decoder << "  L_A " << row.terms.adversarial << "  L_AIS " << row.terms.resilience;
      say(opt, os.str());
    }
  }
  const std::string log_path = paths.loss_log(id);
  ensure_parent(log_path);
  write_loss_csv(trainer.log(), log_path);
  CodecModel out = trainer.model();
  out.set_id(id);
  save_checkpoint(out, ckpt,
                  CheckpointMeta{.config_snapshot = snap, .rng_state_digest = trainer.rng_digest(),
                                 .training_step = trainer.steps_done()});
  fs::remove(ckpt + ".partial");
  return out;
}

void record(Manifest& m, const Paths& paths, const std::string& path, const std::string& stage) {
  m.record_artifact(paths.relative(path), stage);
}

}  // namespace

std::string ais_model_id(const std::string& base_id) { return base_id + "_ais"; }

std::string ablation_model_id(const std::string& base_id, double lambda_a, const ExperimentConfig& config) {
  if (lambda_a == config.finetune.weights.resilience) return ais_model_id(base_id);
  return base_id + "_ais_la" + format_lambda(lambda_a);
}

DatasetSplits load_dataset(const ExperimentConfig& config) {
  return ingest_dataset(config.dataset_path, config.image_size, config.splits, config.seed, config.synthetic_count);
}

CodecModel load_stage_model(const ExperimentConfig& config, const std::string& id) {
  const std::string path = Paths{config.output_dir}.checkpoint(id);
  if (!fs::exists(path)) {
    throw StageDependencyError("checkpoint for '" + id + "' not found at " + path + "; run the producing stage first");
  }
  return load_checkpoint(path);
}

void cmd_train(const ExperimentConfig& config, const std::vector<std::string>& model_ids, const CommandOptions& opt) {
  const Paths paths{config.output_dir};
  std::vector<std::string> ids = model_ids;
  if (ids.empty())
    for (const auto& [id, _] : config.models) ids.push_back(id);
  for (const auto& id : ids) config.model(id);  // validate before any work

  const DatasetSplits data = load_dataset(config);
  Manifest manifest(config.output_dir);
  manifest.record_config(config, "train");
  for (const auto& id : ids) {
    const ModelSpec& spec = config.model(id);
    const std::string snap = snapshot(config, "train", id, spec.codec, spec.train, "");
    if (!opt.force && up_to_date(paths.checkpoint(id), snap)) {
      say(opt, "train " + id + ": checkpoint up to date");
    } else {
      say(opt, "train " + id + ": " + std::to_string(spec.train.steps) + " steps");
      run_training(init_model(spec.codec, spec.train.seed, id), spec.train, data.train, id, snap, paths, opt);
      record(manifest, paths, paths.loss_log(id), "train");
    }
    record(manifest, paths, paths.checkpoint(id), "train");
    manifest.save();
  }
}

std::string cmd_finetune(const ExperimentConfig& config, const std::string& model_id, std::optional<double> lambda_a,
                         const std::string& out_id, const CommandOptions& opt) {
  const Paths paths{config.output_dir};
  CodecModel base = load_stage_model(config, model_id);
  TrainConfig train = config.finetune;
  if (lambda_a) train.weights.resilience = *lambda_a;
  const std::string id = !out_id.empty() ? out_id
                         : lambda_a      ? ablation_model_id(model_id, *lambda_a, config)
                                         : ais_model_id(model_id);

  Manifest manifest(config.output_dir);
  manifest.record_config(config, "finetune");
  const std::string snap =
      snapshot(config, "finetune", id, base.config(), train, sha256_file(paths.checkpoint(model_id)));
  if (!opt.force && up_to_date(paths.checkpoint(id), snap)) {
    say(opt, "finetune " + id + ": checkpoint up to date");
  } else {
    say(opt, "finetune " + model_id + " -> " + id + " (lambda_A " + format_lambda(train.weights.resilience) + ", " +
                 std::to_string(train.steps) + " steps)");
    const DatasetSplits data = load_dataset(config);
    run_training(std::move(base), train, data.train, id, snap, paths, opt);
    record(manifest, paths, paths.loss_log(id), "finetune");
  }
  record(manifest, paths, paths.checkpoint(id), "finetune");
  manifest.save();
  return id;
}

void cmd_attack(const ExperimentConfig& config, const std::string& model_id, bool cross, const CommandOptions& opt) {
  const Paths paths{config.output_dir};
  const CodecModel defender = load_stage_model(config, model_id);
  std::vector<CodecModel> attackers;
  if (cross) {
    for (const auto& a : config.attack.attackers) {
      const std::string id = config.attack.ais_attackers ? ais_model_id(a) : a;
      if (id != model_id) attackers.push_back(load_stage_model(config, id));
    }
  }
  const DatasetSplits data = load_dataset(config);
  const auto images = attack_images(config, data);

  Manifest manifest(config.output_dir);
  manifest.record_config(config, "attack");
  say(opt, "attack " + model_id + ": intra-model suite on " + std::to_string(images.size()) + " images");
  MetricsTable intra = run_intra_model_suite(defender, images, config.attack.depths, config.attack.seed);
  const std::string intra_path = paths.intra_csv(model_id);
  ensure_parent(intra_path);
  write_metrics_csv(intra, intra_path);
  record(manifest, paths, intra_path, "attack");

  if (!attackers.empty()) {
    say(opt, "attack " + model_id + ": cross-model suite with " + std::to_string(attackers.size()) + " attackers");
    std::vector<const CodecModel*> ptrs;
    for (const auto& a : attackers) ptrs.push_back(&a);
    MetricsTable table = run_cross_model_suite(defender, ptrs, images, config.attack.cross_max, config.attack.seed);
    const std::string cross_path = paths.cross_csv(model_id);
    write_metrics_csv(table, cross_path);
    record(manifest, paths, cross_path, "attack");
  }
  manifest.save();
}

void cmd_ablate(const ExperimentConfig& config, const CommandOptions& opt) {
  const Paths paths{config.output_dir};
  load_stage_model(config, config.ablation.model);  // fail early on a missing baseline
  const DatasetSplits data = load_dataset(config);
  std::vector<AblationRow> rows;
  for (double lambda : config.ablation.lambda_a) {
    const std::string id = cmd_finetune(config, config.ablation.model, lambda, "", opt);
    const CodecModel model = load_stage_model(config, id);
    say(opt, "ablate: intra-model suite for lambda_A " + format_lambda(lambda));
    MetricsTable t = run_intra_model_suite(model, attack_images(config, data), config.attack.depths, config.attack.seed);
    for (auto& r : t.rows) {
      r.suite = "ablation";
      rows.push_back({lambda, r});
    }
  }
  const std::string path = paths.ablation_csv();
  ensure_parent(path);
  write_ablation_csv(rows, path);
  Manifest manifest(config.output_dir);
  manifest.record_config(config, "ablate");
  record(manifest, paths, path, "ablate");
  manifest.save();
}

void cmd_report(const ExperimentConfig& config, const CommandOptions& opt) {
  const Paths paths{config.output_dir};
  const fs::path dir = paths.report_dir();
  fs::create_directories(dir);

  // Report order: each configured model followed by its AIS variant.
  std::vector<std::string> ids;
  for (const auto& [id, _] : config.models) {
    ids.push_back(id);
    ids.push_back(ais_model_id(id));
  }

  SummaryInputs in;
  MetricsTable all_intra, all_cross;
  std::vector<BarGroup> bars;
  std::vector<ResidualRow> residuals;
  const DatasetSplits data = load_dataset(config);
  const auto images = attack_images(config, data);
  const std::size_t sparsity_images = std::min<std::size_t>(images.size(), 16);

  for (const auto& id : ids) {
    if (fs::exists(paths.intra_csv(id))) {
      MetricsTable t = read_metrics_csv(paths.intra_csv(id));
      all_intra.append(t);
      in.intra.emplace_back(id, t);
      BarGroup g{id, t.rows.front().ber_percent, t.rows.front().ber_percent};
      for (const auto& r : t.rows) {
        if (r.depth == 1) g.before = r.ber_percent;
        if (r.depth == 2) g.after = r.ber_percent;
      }
      bars.push_back(g);

      if (fs::exists(paths.checkpoint(id))) {
        const CodecModel model = load_checkpoint(paths.checkpoint(id));
        Rng rng = make_rng(config.attack.seed, 0);
        double sparsity = 0.0;
        for (std::size_t i = 0; i < sparsity_images; ++i) {
          const Image x_w = embed(model, images[i], MessageBits::random(model.config().payload_bits, rng));
          sparsity += residual_sparsity(images[i], x_w) / static_cast<double>(sparsity_images);
          if (i == 0) residuals.push_back({id, images[i], x_w});
        }
        in.sparsity.emplace_back(id, sparsity);
      }
    }
    if (fs::exists(paths.cross_csv(id))) {
      MetricsTable t = read_metrics_csv(paths.cross_csv(id));
      all_cross.append(t);
      in.cross.emplace_back(id, t);
    }
  }
  if (in.intra.empty() && in.cross.empty() && !fs::exists(paths.ablation_csv())) {
    throw StageDependencyError("no attack or ablation results under " + config.output_dir + "; run 'mea attack' first");
  }

  Manifest manifest(config.output_dir);
  manifest.record_config(config, "report");
  auto emit = [&](const fs::path& p) { record(manifest, paths, p.string(), "report"); };

  if (!all_intra.rows.empty()) {
    write_metrics_csv(all_intra, (dir / "intra_model.csv").string());
    emit(dir / "intra_model.csv");
    write_bar_chart((dir / "fig2_before_after.png").string(), bars, "BER of the primary watermark before / after MEA");
    emit(dir / "fig2_before_after.png");
    in.figures.push_back("fig2_before_after.png");
  }
  if (!residuals.empty()) {
    write_residual_panel((dir / "residuals.png").string(), residuals);
    emit(dir / "residuals.png");
    in.figures.push_back("residuals.png");
  }
  if (!all_cross.rows.empty()) {
    write_metrics_csv(all_cross, (dir / "cross_model.csv").string());
    emit(dir / "cross_model.csv");
  }
  if (fs::exists(paths.ablation_csv())) {
    in.ablation = read_ablation_csv(paths.ablation_csv());
    write_ablation_csv(in.ablation, (dir / "ablation.csv").string());
    emit(dir / "ablation.csv");
  }
  {
    std::ofstream out(dir / "summary.md");
    out << format_summary(in);
  }
  emit(dir / "summary.md");
  manifest.save();
  say(opt, "report written to " + dir.string());
}

void cmd_pipeline(const ExperimentConfig& config, const CommandOptions& opt) {
  cmd_train(config, {}, opt);
  for (const auto& d : config.defenders) cmd_finetune(config, d, std::nullopt, "", opt);
  for (const auto& d : config.defenders) {
    const bool single = config.model(d).codec.architecture == Architecture::single_head;
    cmd_attack(config, d, single, opt);
    cmd_attack(config, ais_model_id(d), single, opt);
  }
  cmd_ablate(config, opt);
  cmd_report(config, opt);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const StageDependencyError*>(&e)) return 3;
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const IntegrityError*>(&e) ||
      dynamic_cast<const MigrationError*>(&e) || dynamic_cast<const RegistryError*>(&e) ||
      dynamic_cast<const AddressingError*>(&e))
    return 4;
  if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const NumericError*>(&e) ||
      dynamic_cast<const ModelStateError*>(&e))
    return 5;
  return 1;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace mea::harness
