#pragma once

#include <string>
#include <vector>

#include "attnviz/heatmap.hpp"
#include "attnviz/network.hpp"

namespace attnviz {

struct StageRunResult {
  StagePlacement stage;
  double final_test_acc = 0;
  NoiseMetrics metrics;                  // of the attended feature map
  std::vector<std::string> image_paths;  // rendered artifacts for this stage
};

// Rows in canonical order early, middle, later (whichever stages were run).
struct StageReport {
  std::vector<StageRunResult> rows;
};

// Published reference accuracies for the early/middle/later comparison,
// reported alongside measured numbers on request and never merged with them.
// Context only: desk-scale runs are not expected to reach them.
struct StageReference {
  double early = 0.9471;
  double middle = 0.9455;
  double later = 0.9423;
};

// Orders the runs canonically; duplicate stages are a usage error.
StageReport make_stage_report(std::vector<StageRunResult> runs);

// CSV: header stage,test_acc,entropy,top_decile_energy,mask_mean, one row per
// run; with the reference enabled, extra rows labeled reference:<stage> carry
// the published accuracy and empty metric columns.
std::string stage_report_csv(const StageReport& report, bool include_reference);
void write_stage_csv(const std::string& path, const StageReport& report,
                     bool include_reference);

// Human-readable table for stdout.
std::string render_stage_table(const StageReport& report, bool include_reference);

// Side-by-side strip: images concatenated left to right (equal heights).
RgbImage hstack(const std::vector<RgbImage>& images);

}  // namespace attnviz
