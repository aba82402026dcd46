#pragma once

#include <string>
#include <vector>

#include "mea/attacks.hpp"
#include "mea/image.hpp"

namespace mea::harness {

// One method in the before/after chart.
struct BarGroup {
  std::string label;
  double before = 0.0;  // BER at depth 1
  double after = 0.0;   // BER after MEA
};

// Grouped bars, one group per method, before/after side by side. PNG.
void write_bar_chart(const std::string& path, const std::vector<BarGroup>& groups, const std::string& title);

// One row per method: original, watermarked, normalized residual.
struct ResidualRow {
  std::string label;
  Image original;
  Image watermarked;
};
void write_residual_panel(const std::string& path, const std::vector<ResidualRow>& rows, int scale = 4);

void write_png(const std::string& path, const Image& image, int scale = 1);

// Ablation rows carry the λ_A value in `attacker_id`-independent form.
struct AblationRow {
  double lambda_a = 0.0;
  MetricsRow metrics;
};
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);
std::vector<AblationRow> read_ablation_csv(const std::string& path);

struct SummaryInputs {
  std::vector<std::pair<std::string, MetricsTable>> intra;  // label, table
  std::vector<std::pair<std::string, MetricsTable>> cross;
  std::vector<AblationRow> ablation;
  std::vector<std::pair<std::string, double>> sparsity;  // label, mean residual sparsity
  std::vector<std::string> figures;
};
std::string format_summary(const SummaryInputs& in);

}  // namespace mea::harness
