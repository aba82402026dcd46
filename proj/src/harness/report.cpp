#include "mea/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mea/errors.hpp"
#include "mea/metrics.hpp"

namespace mea::harness {

namespace {

const cv::Scalar kBefore(180, 119, 31);  // BGR
const cv::Scalar kAfter(14, 127, 255);
const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kGrid(220, 220, 220);

void save(const std::string& path, const cv::Mat& mat) {
  if (!cv::imwrite(path, mat)) throw InputError("cannot write image '" + path + "'");
}

cv::Mat to_mat(const Image& image, int scale) {
  cv::Mat m(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c)
        row[x][2 - c] = static_cast<unsigned char>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
  }
  if (scale > 1) cv::resize(m, m, cv::Size(), scale, scale, cv::INTER_NEAREST);
  return m;
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

void write_png(const std::string& path, const Image& image, int scale) { save(path, to_mat(image, scale)); }

void write_bar_chart(const std::string& path, const std::vector<BarGroup>& groups, const std::string& title) {
  if (groups.empty()) throw InputError("bar chart needs at least one group");
  const int group_w = 140, margin_l = 70, margin_r = 30, margin_t = 60, margin_b = 70, plot_h = 300;
  const int font = cv::FONT_HERSHEY_SIMPLEX;
  int baseline = 0;
  const int title_w = cv::getTextSize(title, font, 0.55, 1, &baseline).width;
  const int width = std::max(margin_l + group_w * static_cast<int>(groups.size()) + margin_r, margin_l + title_w + margin_r);
  const int height = margin_t + plot_h + margin_b;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const double ymax = 60.0;  // BER percent; 50 means chance
  auto y_of = [&](double v) { return margin_t + plot_h - static_cast<int>(std::lround(std::min(v, ymax) / ymax * plot_h)); };

  for (int t = 0; t <= 60; t += 10) {
    const int y = y_of(t);
    cv::line(img, {margin_l, y}, {width - margin_r, y}, kGrid, 1);
    cv::putText(img, std::to_string(t), {margin_l - 35, y + 5}, font, 0.45, kInk, 1, cv::LINE_AA);
  }
  cv::line(img, {margin_l, margin_t}, {margin_l, margin_t + plot_h}, kInk, 1);
  cv::line(img, {margin_l, margin_t + plot_h}, {width - margin_r, margin_t + plot_h}, kInk, 1);
  cv::putText(img, "BER (%)", {8, margin_t - 15}, font, 0.45, kInk, 1, cv::LINE_AA);
  cv::putText(img, title, {margin_l, 25}, font, 0.55, kInk, 1, cv::LINE_AA);

  const int bar_w = 40;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const int x0 = margin_l + static_cast<int>(g) * group_w + (group_w - 2 * bar_w - 8) / 2;
    const std::pair<double, cv::Scalar> bars[] = {{groups[g].before, kBefore}, {groups[g].after, kAfter}};
    for (int b = 0; b < 2; ++b) {
      const int x = x0 + b * (bar_w + 8);
      cv::rectangle(img, cv::Point(x, y_of(bars[b].first)), cv::Point(x + bar_w, margin_t + plot_h), bars[b].second,
                    cv::FILLED);
      cv::putText(img, fixed(bars[b].first, 1), {x, y_of(bars[b].first) - 5}, font, 0.38, kInk, 1, cv::LINE_AA);
    }
    cv::putText(img, groups[g].label, {x0, margin_t + plot_h + 22}, font, 0.45, kInk, 1, cv::LINE_AA);
  }
  const int ly = height - 22;
  cv::rectangle(img, cv::Point(margin_l, ly - 10), cv::Point(margin_l + 14, ly + 2), kBefore, cv::FILLED);
  cv::putText(img, "before MEA", {margin_l + 20, ly}, font, 0.45, kInk, 1, cv::LINE_AA);
  cv::rectangle(img, cv::Point(margin_l + 130, ly - 10), cv::Point(margin_l + 144, ly + 2), kAfter, cv::FILLED);
  cv::putText(img, "after MEA", {margin_l + 150, ly}, font, 0.45, kInk, 1, cv::LINE_AA);
  save(path, img);
}

void write_residual_panel(const std::string& path, const std::vector<ResidualRow>& rows, int scale) {
  if (rows.empty()) throw InputError("residual panel needs at least one row");
  const int label_w = 120, gap = 6;
  const int tile = rows.front().original.width() * scale;
  const int header = 24;
  const int width = label_w + 3 * (tile + gap);
  const int height = header + static_cast<int>(rows.size()) * (tile + gap);
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int font = cv::FONT_HERSHEY_SIMPLEX;
  const char* heads[] = {"original", "watermarked", "residual"};
  for (int k = 0; k < 3; ++k) cv::putText(img, heads[k], {label_w + k * (tile + gap), 16}, font, 0.45, kInk, 1, cv::LINE_AA);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = header + static_cast<int>(r) * (tile + gap);
    cv::putText(img, rows[r].label, {6, y + tile / 2}, font, 0.45, kInk, 1, cv::LINE_AA);
    const Image tiles[] = {rows[r].original, rows[r].watermarked,
                           residual_visual(rows[r].original, rows[r].watermarked)};
    for (int k = 0; k < 3; ++k) {
      cv::Mat m = to_mat(tiles[k], scale);
      m.copyTo(img(cv::Rect(label_w + k * (tile + gap), y, m.cols, m.rows)));
    }
  }
  save(path, img);
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  MetricsTable t;
  for (const auto& r : rows) t.rows.push_back(r.metrics);
  std::istringstream body(format_metrics_csv(t));
  std::string line;
  std::getline(body, line);
  out << "lambda_a," << line << '\n';
  for (const auto& r : rows) {
    std::getline(body, line);
    std::ostringstream lam;
    lam << r.lambda_a;
    out << lam.str() << ',' << line << '\n';
  }
}

std::vector<AblationRow> read_ablation_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::string header;
  std::getline(in, header);
  if (header.rfind("lambda_a,", 0) != 0) throw InputError("'" + path + "' is not an ablation CSV");
  // Strip the leading column and reuse the metrics reader.
  std::ostringstream rest;
  rest << header.substr(9) << '\n';
  std::vector<double> lambdas;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    lambdas.push_back(std::stod(line.substr(0, comma)));
    rest << line.substr(comma + 1) << '\n';
  }
  std::istringstream body(rest.str());
  MetricsTable t = parse_metrics_csv(body, path);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) rows.push_back({lambdas[i], t.rows[i]});
  return rows;
}

std::string format_summary(const SummaryInputs& in) {
  std::ostringstream md;
  md << "# MEA experiment summary\n\n";

  if (!in.intra.empty()) {
    std::set<int> depths;
    for (const auto& [_, t] : in.intra)
      for (const auto& r : t.rows) depths.insert(r.depth);
    md << "## Intra-model MEA\n\nMean BER (%) / PSNR (dB) / SSIM of the primary watermark after d embeddings.\n\n";
    md << "| method |";
    for (int d : depths) md << " d=" << d << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < depths.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& [label, t] : in.intra) {
      md << "| " << label << " |";
      for (int d : depths) {
        const MetricsRow& r = t.row(d);
        md << ' ' << fixed(r.ber_percent, 2) << " / " << fixed(r.psnr_db, 2) << " / " << fixed(r.ssim, 3) << " |";
      }
      md << '\n';
    }
    md << '\n';
  }

  if (!in.cross.empty()) {
    md << "## Cross-model MEA\n\nMean BER (%) of the defender's watermark after n attacker embeddings.\n\n";
    md << "| defender | attacker | n | BER | PSNR |\n|---|---|---|---|---|\n";
    for (const auto& [label, t] : in.cross) {
      for (const auto& r : t.rows) {
        md << "| " << label << " | " << r.attacker_id << " | " << r.depth << " | " << fixed(r.ber_percent, 2) << " | "
           << fixed(r.psnr_db, 2) << " |\n";
      }
    }
    md << '\n';
  }

  if (!in.ablation.empty()) {
    std::set<int> depths;
    std::map<double, std::map<int, double>> grid;
    for (const auto& r : in.ablation) {
      depths.insert(r.metrics.depth);
      grid[r.lambda_a][r.metrics.depth] = r.metrics.ber_percent;
    }
    md << "## Ablation over lambda_A\n\nMean BER (%) by depth.\n\n| lambda_A |";
    for (int d : depths) md << " d=" << d << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < depths.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& [lam, by_depth] : grid) {
      md << "| " << lam << " |";
      for (int d : depths) md << ' ' << (by_depth.count(d) ? fixed(by_depth.at(d), 2) : "-") << " |";
      md << '\n';
    }
    md << '\n';
  }

  if (!in.sparsity.empty()) {
    md << "## Residual sparsity (diagnostic)\n\nL1/L2 ratio of X_w - X over sqrt(n); lower is sparser. Not an "
          "acceptance metric.\n\n| method | sparsity |\n|---|---|\n";
    for (const auto& [label, v] : in.sparsity) md << "| " << label << " | " << fixed(v, 4) << " |\n";
    md << '\n';
  }

  if (!in.figures.empty()) {
    md << "## Figures\n\n";
    for (const auto& f : in.figures) md << "![" << f << "](" << f << ")\n\n";
  }
  return md.str();
}

}  // namespace mea::harness
