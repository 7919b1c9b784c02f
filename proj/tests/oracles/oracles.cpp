#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace sftmn::oracle {

namespace {

struct Run {
  int label;
  std::set<std::size_t> frames;
};

std::vector<Run> runs(std::span<const int> labels) {
  std::vector<Run> out;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (t == 0 || labels[t] != labels[t - 1]) out.push_back({labels[t], {}});
    out.back().frames.insert(t);
  }
  return out;
}

}  // namespace

std::vector<int> run_labels(std::span<const int> labels) {
  std::vector<int> out;
  for (const auto& r : runs(labels)) out.push_back(r.label);
  return out;
}

double edit_score(std::span<const int> pred, std::span<const int> gt) {
  const std::vector<int> a = run_labels(pred), b = run_labels(gt);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> dist = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min(dist(i + 1, j), dist(i, j + 1)) + 1;
    best = std::min(best, dist(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1));
    memo[key] = best;
    return best;
  };
  const double m = static_cast<double>(std::max(a.size(), b.size()));
  return std::max(0.0, (1.0 - static_cast<double>(dist(0, 0)) / m) * 100.0);
}

double f1_at_overlap(std::span<const int> pred, std::span<const int> gt, double overlap) {
  const std::vector<Run> p = runs(pred), g = runs(gt);
  std::vector<bool> consumed(g.size(), false);
  std::size_t tp = 0, fp = 0;
  for (const Run& pr : p) {
    double best = -1;
    std::size_t best_j = g.size();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g[j].label != pr.label) continue;
      std::set<std::size_t> uni = pr.frames;
      uni.insert(g[j].frames.begin(), g[j].frames.end());
      std::size_t inter = 0;
      for (std::size_t f : pr.frames) inter += g[j].frames.count(f);
      const double iou = static_cast<double>(inter) / static_cast<double>(uni.size());
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best_j < g.size() && best >= overlap && !consumed[best_j]) {
      consumed[best_j] = true;
      ++tp;
    } else {
      ++fp;
    }
  }
  const std::size_t fn = g.size() - tp;
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

FrameScores frame_scores(std::span<const int> pred, std::span<const int> gt, int classes) {
  std::vector<std::vector<double>> confusion(classes, std::vector<double>(classes, 0));
  for (std::size_t t = 0; t < gt.size(); ++t) confusion[gt[t]][pred[t]] += 1;
  double correct = 0;
  for (int c = 0; c < classes; ++c) correct += confusion[c][c];
  double p = 0, r = 0, j = 0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    double gt_count = 0, pred_count = 0;
    for (int o = 0; o < classes; ++o) {
      gt_count += confusion[c][o];
      pred_count += confusion[o][c];
    }
    if (gt_count == 0 && pred_count == 0) continue;
    ++present;
    const double tp = confusion[c][c];
    p += pred_count > 0 ? tp / pred_count : 0;
    r += gt_count > 0 ? tp / gt_count : 0;
    j += tp / (gt_count + pred_count - tp);
  }
  return {100 * correct / static_cast<double>(gt.size()), 100 * p / present, 100 * r / present,
          100 * j / present};
}

MeanStd resum(std::span<const double> values) {
  long double sum = 0;
  for (double v : values) sum += v;
  const long double mean = sum / values.size();
  long double sq = 0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(sq / values.size()))};
}

}  // namespace sftmn::oracle
