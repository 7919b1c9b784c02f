#include "sftmn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sftmn/errors.hpp"

namespace sftmn {

SegmentList labels_to_segments(std::span<const int> labels) {
  if (labels.empty()) throw ValidationError("labels_to_segments: empty sequence");
  SegmentList segs;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[start]) {
      segs.push_back({labels[start], start, t});
      start = t;
    }
  }
  return segs;
}

std::vector<int> segments_to_labels(const SegmentList& segments) {
  validate_segments(segments);
  std::vector<int> labels;
  for (const auto& s : segments) labels.insert(labels.end(), s.length(), s.label);
  return labels;
}

void validate_segments(const SegmentList& segments) {
  if (segments.empty()) throw ValidationError("segment list is empty");
  std::size_t expected = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.start != expected || s.end <= s.start)
      throw ValidationError("segment " + std::to_string(i) + " does not continue the tiling");
    if (i > 0 && segments[i - 1].label == s.label)
      throw ValidationError("segments " + std::to_string(i - 1) + " and " + std::to_string(i) +
                            " share a class");
    expected = s.end;
  }
}

FrameScores frame_scores(std::span<const int> pred, std::span<const int> gt, int num_classes,
                         MacroClassSet class_set) {
  if (pred.size() != gt.size())
    throw ValidationError("frame_scores: prediction has " + std::to_string(pred.size()) +
                          " frames, ground truth " + std::to_string(gt.size()));
  if (gt.empty()) throw ValidationError("frame_scores: empty sequence");
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> tp(C), n_pred(C), n_gt(C);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (pred[t] < 0 || gt[t] < 0 || pred[t] >= num_classes || gt[t] >= num_classes)
      throw ValidationError("frame_scores: label out of range at frame " + std::to_string(t));
    ++n_pred[static_cast<std::size_t>(pred[t])];
    ++n_gt[static_cast<std::size_t>(gt[t])];
    if (pred[t] == gt[t]) {
      ++correct;
      ++tp[static_cast<std::size_t>(gt[t])];
    }
  }
  FrameScores s;
  s.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(gt.size());
  std::size_t counted = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const bool in_set = class_set == MacroClassSet::GtOnly ? n_gt[c] > 0
                                                           : (n_gt[c] > 0 || n_pred[c] > 0);
    if (!in_set) continue;
    ++counted;
    const double hit = static_cast<double>(tp[c]);
    if (n_pred[c] > 0) s.precision += hit / static_cast<double>(n_pred[c]);
    if (n_gt[c] > 0) s.recall += hit / static_cast<double>(n_gt[c]);
    s.jaccard += hit / static_cast<double>(n_pred[c] + n_gt[c] - tp[c]);
  }
  const double n = static_cast<double>(counted);
  s.precision *= 100.0 / n;
  s.recall *= 100.0 / n;
  s.jaccard *= 100.0 / n;
  return s;
}

double edit_score(const SegmentList& pred, const SegmentList& gt) {
  const std::size_t m = pred.size(), n = gt.size();
  if (m == 0 && n == 0) return 100.0;
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t sub = prev[j - 1] + (pred[i - 1].label == gt[j - 1].label ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  const double dist = static_cast<double>(prev[n]);
  return std::max(0.0, (1.0 - dist / static_cast<double>(std::max(m, n))) * 100.0);
}

double f1_at_overlap(const SegmentList& pred, const SegmentList& gt, double overlap) {
  std::vector<bool> used(gt.size(), false);
  std::size_t tp = 0, fp = 0;
  for (const auto& p : pred) {
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const auto& g = gt[j];
      if (g.label != p.label) continue;
      const std::size_t lo = std::max(p.start, g.start), hi = std::min(p.end, g.end);
      const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
      const double uni = static_cast<double>(p.length() + g.length()) - inter;
      const double iou = inter / uni;
      if (iou > best) {
        best = iou;
        best_idx = j;
      }
    }
    if (best >= overlap && !used[best_idx]) {
      used[best_idx] = true;
      ++tp;
    } else {
      ++fp;
    }
  }
  const std::size_t fn = gt.size() - tp;
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double f1_avg(double f1_10, double f1_25, double f1_50) { return (f1_10 + f1_25 + f1_50) / 3.0; }

SegmentalScores segmental_scores(std::span<const int> pred, std::span<const int> gt) {
  const SegmentList p = labels_to_segments(pred);
  const SegmentList g = labels_to_segments(gt);
  SegmentalScores s;
  s.edit = edit_score(p, g);
  for (std::size_t i = 0; i < kF1Overlaps.size(); ++i) s.f1_at[i] = f1_at_overlap(p, g, kF1Overlaps[i]);
  s.f1_avg = f1_avg(s.f1_at[0], s.f1_at[1], s.f1_at[2]);
  return s;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw ValidationError("aggregate: no videos");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

namespace {

template <typename Row, typename Field>
MeanStd column(std::span<const Row> rows, Field field) {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(field(r));
  return mean_std(v);
}

}  // namespace

FrameAggregate aggregate(std::span<const FrameScores> per_video) {
  FrameAggregate a;
  a.accuracy = column(per_video, [](const FrameScores& s) { return s.accuracy; });
  a.precision = column(per_video, [](const FrameScores& s) { return s.precision; });
  a.recall = column(per_video, [](const FrameScores& s) { return s.recall; });
  a.jaccard = column(per_video, [](const FrameScores& s) { return s.jaccard; });
  return a;
}

SegmentalAggregate aggregate(std::span<const SegmentalScores> per_video) {
  SegmentalAggregate a;
  a.edit = column(per_video, [](const SegmentalScores& s) { return s.edit; });
  for (std::size_t i = 0; i < 3; ++i)
    a.f1_at[i] = column(per_video, [i](const SegmentalScores& s) { return s.f1_at[i]; });
  a.f1_avg = column(per_video, [](const SegmentalScores& s) { return s.f1_avg; });
  return a;
}

EvaluationReport make_report(std::vector<VideoScores> videos) {
  EvaluationReport r;
  std::vector<FrameScores> frame;
  std::vector<SegmentalScores> seg;
  for (const auto& v : videos) {
    frame.push_back(v.frame);
    seg.push_back(v.segmental);
  }
  r.frame = aggregate(frame);
  r.segmental = aggregate(seg);
  r.videos = std::move(videos);
  return r;
}

namespace {

const std::array<const char*, 9> kColumns{"accuracy", "precision", "recall", "jaccard", "edit",
                                          "f1@10",    "f1@25",     "f1@50",  "f1_avg"};

std::array<double, 9> row_values(const VideoScores& v) {
  return {v.frame.accuracy, v.frame.precision, v.frame.recall,   v.frame.jaccard,
          v.segmental.edit, v.segmental.f1_at[0], v.segmental.f1_at[1], v.segmental.f1_at[2],
          v.segmental.f1_avg};
}

std::array<MeanStd, 9> aggregate_values(const EvaluationReport& r) {
  return {r.frame.accuracy,       r.frame.precision,      r.frame.recall,
          r.frame.jaccard,        r.segmental.edit,       r.segmental.f1_at[0],
          r.segmental.f1_at[1],   r.segmental.f1_at[2],   r.segmental.f1_avg};
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
  nlohmann::ordered_json j;
  j["videos"] = nlohmann::ordered_json::array();
  for (const auto& v : report.videos) {
    nlohmann::ordered_json row;
    row["video_id"] = v.video_id;
    const auto vals = row_values(v);
    for (std::size_t i = 0; i < kColumns.size(); ++i) row[kColumns[i]] = vals[i];
    j["videos"].push_back(row);
  }
  nlohmann::ordered_json agg;
  const auto vals = aggregate_values(report);
  for (std::size_t i = 0; i < kColumns.size(); ++i)
    agg[kColumns[i]] = {{"mean", vals[i].mean}, {"std", vals[i].std}};
  j["aggregate"] = agg;
  return j;
}

std::string report_to_csv(const EvaluationReport& report) {
  std::string out = "video_id";
  for (const char* c : kColumns) out += std::string(",") + c;
  out += "\n";
  for (const auto& v : report.videos) {
    out += v.video_id;
    for (double x : row_values(v)) out += "," + csv_number(x);
    out += "\n";
  }
  const auto agg = aggregate_values(report);
  out += "mean";
  for (const auto& a : agg) out += "," + csv_number(a.mean);
  out += "\nstd";
  for (const auto& a : agg) out += "," + csv_number(a.std);
  out += "\n";
  return out;
}

}  // namespace sftmn
