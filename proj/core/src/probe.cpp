#include "dualmotion/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dualmotion/errors.hpp"

namespace dualmotion {

std::vector<double> probe_features(const MotionEncoder& encoder, const FrameSequence& sequence, int window) {
  NoGradGuard guard;
  const int w = std::min(window, sequence.length());
  std::vector<Var> frames;
  for (int t = 0; t < w; ++t) frames.emplace_back(sequence.frame(t));
  const Tensor mean = encoder.encode(frames).mean.value();
  const int c = mean.dim(1);
  const std::size_t plane = static_cast<std::size_t>(mean.dim(2)) * mean.dim(3);
  std::vector<double> f(c, 0.0);
  for (int k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < plane; ++i) f[k] += mean[k * plane + i];
    f[k] /= static_cast<double>(plane);
  }
  return f;
}

void LinearProbe::fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int num_classes,
                      const ProbeOptions& options) {
  const std::size_t n = x.size();
  const std::size_t d = x.front().size();
  mean_.assign(d, 0.0);
  scale_.assign(d, 1.0);
  for (const auto& row : x) {
    for (std::size_t j = 0; j < d; ++j) mean_[j] += row[j] / n;
  }
  for (std::size_t j = 0; j < d; ++j) {
    double v = 0;
    for (const auto& row : x) v += (row[j] - mean_[j]) * (row[j] - mean_[j]) / n;
    scale_[j] = v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(d + 1, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z[i][j] = (x[i][j] - mean_[j]) * scale_[j];
  }
  Rng rng(options.seed);
  std::normal_distribution<double> init(0.0, 0.01);
  weight_.assign(num_classes, std::vector<double>(d + 1, 0.0));
  for (auto& row : weight_) {
    for (auto& v : row) v = init(rng);
  }
  std::vector<double> logits(num_classes);
  std::vector<std::vector<double>> grad(num_classes, std::vector<double>(d + 1));
  for (int it = 0; it < options.iterations; ++it) {
    for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double top = -1e300;
      for (int c = 0; c < num_classes; ++c) {
        double s = 0;
        for (std::size_t j = 0; j <= d; ++j) s += weight_[c][j] * z[i][j];
        logits[c] = s;
        top = std::max(top, s);
      }
      double norm = 0;
      for (auto& l : logits) norm += (l = std::exp(l - top));
      for (int c = 0; c < num_classes; ++c) {
        const double r = logits[c] / norm - (c == y[i] ? 1.0 : 0.0);
        for (std::size_t j = 0; j <= d; ++j) grad[c][j] += r * z[i][j] / n;
      }
    }
    for (int c = 0; c < num_classes; ++c) {
      for (std::size_t j = 0; j <= d; ++j) {
        const double reg = j < d ? options.l2 * weight_[c][j] : 0.0;
        weight_[c][j] -= options.learning_rate * (grad[c][j] + reg);
      }
    }
  }
}

int LinearProbe::predict(const std::vector<double>& x) const {
  int best = 0;
  double best_score = -1e300;
  for (std::size_t c = 0; c < weight_.size(); ++c) {
    double s = weight_[c].back();
    for (std::size_t j = 0; j < x.size(); ++j) s += weight_[c][j] * (x[j] - mean_[j]) * scale_[j];
    if (s > best_score) best_score = s, best = static_cast<int>(c);
  }
  return best;
}

double LinearProbe::accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) const {
  if (x.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < x.size(); ++i) hits += predict(x[i]) == y[i];
  return static_cast<double>(hits) / static_cast<double>(x.size());
}

namespace {

void collect(const MotionEncoder& encoder, const std::vector<Clip>& clips, int window,
             std::vector<std::vector<double>>& x, std::vector<int>& y) {
  for (const Clip& clip : clips) {
    if (!clip.label) throw DatasetError("probe: clip '" + clip.frames.source_id + "' has no label");
    x.push_back(probe_features(encoder, clip.frames, window));
    y.push_back(*clip.label);
  }
}

}  // namespace

double probe_accuracy(const MotionEncoder& encoder, const std::vector<Clip>& train, const std::vector<Clip>& test,
                      const ProbeOptions& options) {
  std::vector<std::vector<double>> xtr, xte;
  std::vector<int> ytr, yte;
  collect(encoder, train, options.window, xtr, ytr);
  collect(encoder, test, options.window, xte, yte);
  const std::set<int> classes(ytr.begin(), ytr.end());
  if (classes.size() < 2) throw DatasetError("probe needs at least 2 classes in the training clips");
  if (*classes.begin() < 0) throw DatasetError("probe labels must be non-negative");
  int num_classes = *classes.rbegin() + 1;
  for (int v : yte) num_classes = std::max(num_classes, v + 1);
  LinearProbe probe;
  probe.fit(xtr, ytr, num_classes, options);
  return probe.accuracy(xte, yte);
}

ProbeResult representation_probe(const MotionEncoder& encoder, const ModelConfig& config, const std::vector<Clip>& train,
                                  const std::vector<Clip>& test, const ProbeOptions& options,
                                  std::uint64_t baseline_seed) {
  ProbeResult r;
  r.accuracy = probe_accuracy(encoder, train, test, options);
  Rng rng(baseline_seed);
  const MotionEncoder random_encoder(config, rng);
  r.baseline_accuracy = probe_accuracy(random_encoder, train, test, options);
  std::set<int> classes;
  for (const auto& c : train) classes.insert(*c.label);
  r.num_classes = static_cast<int>(classes.size());
  r.train_size = static_cast<int>(train.size());
  r.test_size = static_cast<int>(test.size());
  return r;
}

}  // namespace dualmotion
