#pragma once

// ExperimentReport CSV round-trip, the per-class Dice bar chart and loss traces.

#include <string>
#include <vector>

#include "redgan/pipeline.hpp"

namespace redgan {

/// Writes report.csv and wilcoxon.csv into dir.
void write_report(const std::string& dir, const ExperimentReport& rep);
ExperimentReport read_report(const std::string& dir);

std::string report_csv(const ExperimentReport& rep);
std::string wilcoxon_csv(const ExperimentReport& rep);

/// Grouped bars: one group per global class, one bar per condition, height
/// = mean over completed folds of the cell Dice mean.
std::string dice_svg(const ExperimentReport& rep);
void write_dice_svg(const std::string& path, const ExperimentReport& rep);

void write_seg_trace(const std::string& path, const std::vector<double>& epoch_loss);
void write_gan_trace(const std::string& path, const std::vector<GanStepLog>& trace);

} // namespace redgan
