#pragma once

#include <string>
#include <vector>

#include "viewplan/json_io.hpp"
#include "viewplan/se3.hpp"

namespace viewplan {

struct CalibrationRecord {
  Pose estimate;
  Pose target;
  bool match = false;  // human label
};

struct CalibrationRow {
  double position_m = 0.0;
  double rotation_deg = 0.0;
  int tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool precision_defined = true;  // false when the rule predicts no positives
  bool recall_defined = true;     // false when there are no positive labels
};

/// Fills precision/recall/F1/accuracy from the confusion counts.
CalibrationRow score_row(double position_m, double rotation_deg, int tp, int fp, int fn, int tn);

struct CalibrationReport {
  std::vector<CalibrationRow> rows;  // position-major, both grids ascending
  std::size_t best = 0;              // argmax F1; ties go to smaller thresholds
  std::vector<std::string> warnings;
};

inline const std::vector<double> kDefaultPositionGrid = {0.25, 0.5, 0.75, 1.0};
inline const std::vector<double> kDefaultRotationGrid = {30.0, 60.0, 90.0};

/// Scores the inclusive threshold rule at every grid cell against the labels.
/// Throws std::invalid_argument on empty records or grids.
CalibrationReport calibrate_thresholds(const std::vector<CalibrationRecord>& records,
                                       std::vector<double> position_grid = kDefaultPositionGrid,
                                       std::vector<double> rotation_grid = kDefaultRotationGrid);

/// Header: position_m,rotation_deg,precision,recall,f1,accuracy (three decimals).
std::string calibration_csv(const CalibrationReport& report);
/// Fixed-width table: "Position thr. | Rotation thr. | Precision | Recall | F1 | Accuracy".
std::string calibration_table(const CalibrationReport& report);

/// JSONL records: {"estimate": pose, "target": pose, "label": "match" | "no-match"}.
std::vector<CalibrationRecord> calibration_records_from_jsonl(const std::vector<json>& lines);
json to_json(const CalibrationRecord& r);

}  // namespace viewplan
