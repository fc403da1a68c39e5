#include "attnviz/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace attnviz {

StageReport make_stage_report(std::vector<StageRunResult> runs) {
  if (runs.empty()) throw UsageError("stage report: need at least one run");
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    return static_cast<int>(a.stage) < static_cast<int>(b.stage);
  });
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].stage == runs[i - 1].stage)
      throw UsageError(std::string("stage report: duplicate stage '") +
                       to_string(runs[i].stage) + "'");
  return StageReport{std::move(runs)};
}

std::string stage_report_csv(const StageReport& report, bool include_reference) {
  std::string out = "stage,test_acc,entropy,top_decile_energy,mask_mean\n";
  char buf[256];
  for (const StageRunResult& r : report.rows) {
    std::string mask_mean;
    if (r.metrics.mask_mean) {
      std::snprintf(buf, sizeof(buf), "%.6f", *r.metrics.mask_mean);
      mask_mean = buf;
    }
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%s\n", to_string(r.stage),
                  r.final_test_acc, r.metrics.entropy, r.metrics.top_decile_energy,
                  mask_mean.c_str());
    out += buf;
  }
  if (include_reference) {
    const StageReference ref;
    std::snprintf(buf, sizeof(buf), "reference:early,%.6f,,,\n", ref.early);
    out += buf;
    std::snprintf(buf, sizeof(buf), "reference:middle,%.6f,,,\n", ref.middle);
    out += buf;
    std::snprintf(buf, sizeof(buf), "reference:later,%.6f,,,\n", ref.later);
    out += buf;
  }
  return out;
}

void write_stage_csv(const std::string& path, const StageReport& report,
                     bool include_reference) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report '" + path + "'");
  out << stage_report_csv(report, include_reference);
  if (!out) throw IoError("short write to '" + path + "'");
}

std::string render_stage_table(const StageReport& report, bool include_reference) {
  std::string out;
  char buf[256];
  out += "stage    test_acc   entropy  top_decile  mask_mean\n";
  for (const StageRunResult& r : report.rows) {
    std::string mask_mean = "-";
    if (r.metrics.mask_mean) {
      std::snprintf(buf, sizeof(buf), "%.4f", *r.metrics.mask_mean);
      mask_mean = buf;
    }
    std::snprintf(buf, sizeof(buf), "%-8s %8.4f  %8.4f    %8.4f  %9s\n",
                  to_string(r.stage), r.final_test_acc, r.metrics.entropy,
                  r.metrics.top_decile_energy, mask_mean.c_str());
    out += buf;
  }
  if (include_reference) {
    const StageReference ref;
    std::snprintf(buf, sizeof(buf),
                  "reference accuracies (published, full-scale context, not a "
                  "desk-scale target): early %.2f%%  middle %.2f%%  later %.2f%%\n",
                  100.0 * ref.early, 100.0 * ref.middle, 100.0 * ref.later);
    out += buf;
  }
  return out;
}

RgbImage hstack(const std::vector<RgbImage>& images) {
  if (images.empty()) throw UsageError("hstack: no images");
  const int h = images[0].h;
  int total_w = 0;
  for (const RgbImage& im : images) {
    if (im.h != h) throw UsageError("hstack: mismatched image heights");
    total_w += im.w;
  }
  RgbImage out;
  out.h = h;
  out.w = total_w;
  out.px.resize(static_cast<std::size_t>(h) * total_w * 3);
  int x_off = 0;
  for (const RgbImage& im : images) {
    for (int y = 0; y < h; ++y)
      std::copy(im.px.begin() + static_cast<std::ptrdiff_t>(y) * im.w * 3,
                im.px.begin() + static_cast<std::ptrdiff_t>(y + 1) * im.w * 3,
                out.px.begin() + (static_cast<std::ptrdiff_t>(y) * total_w + x_off) * 3);
    x_off += im.w;
  }
  return out;
}

}  // namespace attnviz
