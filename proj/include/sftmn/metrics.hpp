#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sftmn {

struct Segment {
  int label = 0;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  std::size_t length() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Maximal constant runs in time order; tiles [0, T) exactly.
using SegmentList = std::vector<Segment>;

SegmentList labels_to_segments(std::span<const int> labels);
std::vector<int> segments_to_labels(const SegmentList& segments);
// Throws ValidationError unless the list tiles [0, end) with maximal runs.
void validate_segments(const SegmentList& segments);

/// Which classes a video's precision/recall/Jaccard average runs over.
enum class MacroClassSet {
  GtUnionPred,  // classes present in ground truth or prediction
  GtOnly,       // classes present in ground truth
};

// All values are percentages in [0, 100].
struct FrameScores {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double jaccard = 0;
};

FrameScores frame_scores(std::span<const int> pred, std::span<const int> gt, int num_classes,
                         MacroClassSet class_set = MacroClassSet::GtUnionPred);

// Normalized Levenshtein similarity of the segment label strings, in percent.
double edit_score(const SegmentList& pred, const SegmentList& gt);

/// Segmental F1 at IoU threshold `overlap` (fraction, e.g. 0.5), in percent.
/// Each predicted segment is compared with the same-class ground-truth
/// segment of highest IoU; it is a true positive when that IoU ≥ overlap and
/// the ground-truth segment is still unmatched, otherwise a false positive.
double f1_at_overlap(const SegmentList& pred, const SegmentList& gt, double overlap);

double f1_avg(double f1_10, double f1_25, double f1_50);

inline constexpr std::array<double, 3> kF1Overlaps{0.10, 0.25, 0.50};

struct SegmentalScores {
  double edit = 0;
  std::array<double, 3> f1_at{};  // at kF1Overlaps
  double f1_avg = 0;
};

SegmentalScores segmental_scores(std::span<const int> pred, std::span<const int> gt);

struct MeanStd {
  double mean = 0;
  double std = 0;  // population standard deviation
};

// Throws ValidationError on an empty input.
MeanStd mean_std(std::span<const double> values);

struct FrameAggregate {
  MeanStd accuracy, precision, recall, jaccard;
};

struct SegmentalAggregate {
  MeanStd edit;
  std::array<MeanStd, 3> f1_at;
  MeanStd f1_avg;
};

FrameAggregate aggregate(std::span<const FrameScores> per_video);
SegmentalAggregate aggregate(std::span<const SegmentalScores> per_video);

struct VideoScores {
  std::string video_id;
  FrameScores frame;
  SegmentalScores segmental;
};

struct EvaluationReport {
  std::vector<VideoScores> videos;
  FrameAggregate frame;
  SegmentalAggregate segmental;
};

// Builds the aggregate rows from the per-video rows.
EvaluationReport make_report(std::vector<VideoScores> videos);

/// Report columns: video_id, accuracy, precision, recall, jaccard, edit,
/// f1@10, f1@25, f1@50, f1_avg. JSON holds a "videos" array and an
/// "aggregate" object of {mean, std} per column; CSV appends "mean" and
/// "std" rows.
nlohmann::ordered_json report_to_json(const EvaluationReport& report);
std::string report_to_csv(const EvaluationReport& report);

}  // namespace sftmn
