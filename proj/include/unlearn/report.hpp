#pragma once

#include <string>
#include <vector>

#include "unlearn/harness.hpp"

namespace unlearn {

struct RunSeries {
    std::string name;
    std::vector<StepLog> logs;
};

// Parses a step-log CSV produced by write_step_log_csv; malformed content
// raises ParseError with the file and line.
std::vector<StepLog> read_step_log_csv(const std::filesystem::path& path);

// Retain + forget loss vs step, one polyline each.
std::string loss_chart_svg(const RunSeries& run);
// The three diagnostic cosine traces vs step.
std::string cosine_chart_svg(const RunSeries& run);

struct RunPoint {
    std::string name;
    double forget_acc = 0.0;
    double retain_acc = 0.0;
    bool pareto = false;
};

// Final (forget_acc, retain_acc) of each run; requires both accuracies
// present somewhere in the log.
RunPoint final_point(const RunSeries& run);
void mark_pareto_points(std::vector<RunPoint>& points);

// Scatter of runs in the forget/retain plane with Pareto points highlighted.
std::string tradeoff_scatter_svg(const std::vector<RunPoint>& points);

// Per-run means of the three cosines: run,mean_cos_fr,mean_cos_cf,mean_cos_cr.
std::string cosine_summary_csv(const std::vector<RunSeries>& runs);

}  // namespace unlearn
