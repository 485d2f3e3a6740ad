#pragma once

// Voxel-level error between a prediction and labelled targets. True negatives
// (neither predicted nor labelled) do not enter the metric.

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <ostream>

#include "voxtrav/model.hpp"

namespace voxtrav {

struct Classification {
  std::vector<Index3> tp, fp, fn;
};

/// TP = pred ∩ target, FP = pred \ target, FN = target \ pred.
template <typename P, typename L>
Classification classify(const std::map<Index3, P>& pred, const std::map<Index3, L>& target) {
  Classification c;
  auto p = pred.begin();
  auto t = target.begin();
  while (p != pred.end() || t != target.end()) {
    if (t == target.end() || (p != pred.end() && p->first < t->first)) {
      c.fp.push_back((p++)->first);
    } else if (p == pred.end() || t->first < p->first) {
      c.fn.push_back((t++)->first);
    } else {
      c.tp.push_back(p->first);
      ++p, ++t;
    }
  }
  return c;
}

/// Running squared-error sums; pooled across windows before the square root.
struct ErrorSums {
  double sq = 0;
  std::size_t n = 0;
  std::vector<double> channel_sq;
  std::vector<std::size_t> channel_n;
  std::size_t tp = 0, fp = 0, fn = 0;

  explicit ErrorSums(int c = 1) : channel_sq(static_cast<std::size_t>(c), 0.0), channel_n(static_cast<std::size_t>(c), 0) {}

  /// One voxel: y/present absent for FP, yhat absent for FN.
  void add(const float* yhat, const Label* label) {
    const std::size_t c = channel_sq.size();
    double sum = 0;
    std::size_t used = 0;
    for (std::size_t q = 0; q < c; ++q) {
      if (label && !label->present[q]) continue;
      const double y = label ? label->value[q] : 0.0;
      const double p = yhat ? yhat[q] : 0.0;
      const double e = (y - p) * (y - p);
      sum += e;
      ++used;
      channel_sq[q] += e;
      ++channel_n[q];
    }
    if (used) sq += sum / static_cast<double>(used);
    ++n;
    (yhat && label ? tp : yhat ? fp : fn) += 1;
  }

  void merge(const ErrorSums& o) {
    sq += o.sq;
    n += o.n;
    tp += o.tp, fp += o.fp, fn += o.fn;
    for (std::size_t q = 0; q < channel_sq.size(); ++q) {
      channel_sq[q] += o.channel_sq[q];
      channel_n[q] += o.channel_n[q];
    }
  }
};

struct EvalReport {
  std::optional<double> rmse;  // absent when no voxel was predicted or labelled
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t tn_excluded = 0;  // occupied-window voxels without label or prediction
  std::vector<std::optional<double>> channel_rmse;
  std::size_t windows = 0;
};

inline EvalReport finish(const ErrorSums& s) {
  EvalReport r;
  if (s.n) r.rmse = std::sqrt(s.sq / static_cast<double>(s.n));
  r.tp = s.tp, r.fp = s.fp, r.fn = s.fn;
  for (std::size_t q = 0; q < s.channel_sq.size(); ++q)
    r.channel_rmse.push_back(s.channel_n[q] ? std::optional<double>(std::sqrt(s.channel_sq[q] / static_cast<double>(s.channel_n[q])))
                                            : std::nullopt);
  return r;
}

/// Squared errors of one window's prediction against its labels.
inline ErrorSums window_errors(const std::map<Index3, std::vector<float>>& pred, const std::map<Index3, Label>& labels,
                               int c) {
  ErrorSums s(c);
  const auto cls = classify(pred, labels);
  for (const auto& v : cls.tp) s.add(pred.at(v).data(), &labels.at(v));
  for (const auto& v : cls.fp) s.add(pred.at(v).data(), nullptr);
  for (const auto& v : cls.fn) s.add(nullptr, &labels.at(v));
  return s;
}

inline EvalReport rmse(const std::map<Index3, std::vector<float>>& pred, const std::map<Index3, Label>& labels, int c) {
  auto r = finish(window_errors(pred, labels, c));
  r.windows = 1;
  return r;
}

/// Runs inference on every window and pools the errors.
template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset& ds) {
  const int c = channels(ds.head);
  if (c != model.spec().head) throw UsageError("dataset head does not match the model head");
  ErrorSums total(c);
  std::size_t tn = 0;
  for (const auto& w : ds.windows) {
    const auto pred = predict_window(model, w.input);
    const auto s = window_errors(pred.scores, w.labels, c);
    total.merge(s);
    for (const auto& v : w.input)
      if (!pred.scores.count(v) && !w.labels.count(v)) ++tn;
  }
  auto r = finish(total);
  r.tn_excluded = tn;
  r.windows = ds.windows.size();
  return r;
}

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream o;
  o.precision(9);
  o << *v;
  return o.str();
}

inline void write_report(std::ostream& out, const EvalReport& r) {
  out << "rmse=" << format_metric(r.rmse) << "\n";
  out << "windows=" << r.windows << "\n";
  out << "tp=" << r.tp << "\nfp=" << r.fp << "\nfn=" << r.fn << "\ntn_excluded=" << r.tn_excluded << "\n";
  if (r.channel_rmse.size() > 1)
    for (std::size_t q = 0; q < r.channel_rmse.size(); ++q)
      out << "rmse." << q << "=" << format_metric(r.channel_rmse[q]) << "\n";
}

}  // namespace voxtrav
