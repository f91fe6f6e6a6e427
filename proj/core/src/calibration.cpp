#include "viewplan/calibration.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace viewplan {

CalibrationRow score_row(double position_m, double rotation_deg, int tp, int fp, int fn, int tn) {
  CalibrationRow r{position_m, rotation_deg, tp, fp, fn, tn};
  r.precision_defined = tp + fp > 0;
  r.recall_defined = tp + fn > 0;
  r.precision = r.precision_defined ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = r.recall_defined ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  const int n = tp + fp + fn + tn;
  r.accuracy = n > 0 ? static_cast<double>(tp + tn) / n : 0.0;
  return r;
}

CalibrationReport calibrate_thresholds(const std::vector<CalibrationRecord>& records,
                                       std::vector<double> position_grid, std::vector<double> rotation_grid) {
  if (records.empty()) throw std::invalid_argument("calibration needs at least one record");
  if (position_grid.empty() || rotation_grid.empty()) throw std::invalid_argument("empty threshold grid");
  std::sort(position_grid.begin(), position_grid.end());
  std::sort(rotation_grid.begin(), rotation_grid.end());

  std::vector<ViewDistance> d;
  d.reserve(records.size());
  int positives = 0;
  for (const auto& r : records) {
    d.push_back(view_distance(r.estimate, r.target));
    positives += r.match;
  }

  CalibrationReport report;
  if (positives == 0 || positives == static_cast<int>(records.size())) {
    report.warnings.push_back("labels are all one class; precision or recall is undefined for some cells");
  }
  for (double pos : position_grid) {
    for (double rot : rotation_grid) {
      int tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const bool predicted = within_thresholds(d[i], pos, rot);
        const bool label = records[i].match;
        tp += predicted && label;
        fp += predicted && !label;
        fn += !predicted && label;
        tn += !predicted && !label;
      }
      report.rows.push_back(score_row(pos, rot, tp, fp, fn, tn));
    }
  }
  // Rows are in ascending threshold order, so a strict comparison keeps the smaller cell on ties.
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    if (report.rows[i].f1 > report.rows[report.best].f1) report.best = i;
  }
  return report;
}

std::string calibration_csv(const CalibrationReport& report) {
  std::string out = "position_m,rotation_deg,precision,recall,f1,accuracy\n";
  for (const auto& r : report.rows) {
    out += fmt::format("{:.2f},{:g},{:.3f},{:.3f},{:.3f},{:.3f}\n", r.position_m, r.rotation_deg, r.precision,
                       r.recall, r.f1, r.accuracy);
  }
  return out;
}

std::string calibration_table(const CalibrationReport& report) {
  std::string out = fmt::format("{:>13} | {:>13} | {:>9} | {:>6} | {:>5} | {:>8}\n", "Position thr.", "Rotation thr.",
                                "Precision", "Recall", "F1", "Accuracy");
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out += fmt::format("{:>11.2f} m | {:>9g} deg | {:>9.3f} | {:>6.3f} | {:>5.3f} | {:>8.3f}{}\n", r.position_m,
                       r.rotation_deg, r.precision, r.recall, r.f1, r.accuracy, i == report.best ? "  *" : "");
  }
  return out;
}

std::vector<CalibrationRecord> calibration_records_from_jsonl(const std::vector<json>& lines) {
  std::vector<CalibrationRecord> out;
  for (const json& j : lines) {
    CalibrationRecord r;
    r.estimate = pose_from_json(j.at("estimate"));
    r.target = pose_from_json(j.at("target"));
    const json& label = j.at("label");
    if (label.is_boolean()) {
      r.match = label.get<bool>();
    } else {
      const auto s = label.get<std::string>();
      if (s != "match" && s != "no-match") throw std::invalid_argument("label must be match or no-match, got " + s);
      r.match = s == "match";
    }
    out.push_back(r);
  }
  return out;
}

json to_json(const CalibrationRecord& r) {
  return {{"estimate", pose_to_json(r.estimate)},
          {"target", pose_to_json(r.target)},
          {"label", r.match ? "match" : "no-match"}};
}

}  // namespace viewplan
