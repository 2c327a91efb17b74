#pragma once

#include <cstdint>
#include <vector>

#include "dualmotion/manifest.hpp"
#include "dualmotion/motion_encoder.hpp"

namespace dualmotion {

struct ProbeOptions {
  int window = 4;           // frames fed to the encoder
  int iterations = 500;     // full-batch gradient steps
  double learning_rate = 0.5;
  double l2 = 1e-3;
  std::uint64_t seed = 0;   // classifier initialization
};

/// Frozen-encoder features: the posterior mean map averaged over space
/// (one value per latent channel), from the first `window` frames.
std::vector<double> probe_features(const MotionEncoder& encoder, const FrameSequence& sequence, int window);

/// Linear map + softmax trained by gradient descent on standardized features.
class LinearProbe {
 public:
  void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int num_classes,
           const ProbeOptions& options);
  int predict(const std::vector<double>& x) const;
  double accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) const;

 private:
  std::vector<double> mean_, scale_;
  std::vector<std::vector<double>> weight_;  // [classes][features + 1], last column bias
};

struct ProbeResult {
  double accuracy = 0;           // held-out accuracy with the given encoder
  double baseline_accuracy = 0;  // same probe on a randomly initialized encoder
  int num_classes = 0;
  int train_size = 0;
  int test_size = 0;
};

/// Trains on labeled `train` clips and reports accuracy on labeled `test`
/// clips. Throws DatasetError when fewer than two classes are present or a
/// clip is unlabeled.
double probe_accuracy(const MotionEncoder& encoder, const std::vector<Clip>& train, const std::vector<Clip>& test,
                      const ProbeOptions& options);

/// Runs the probe for `encoder` and for a fresh encoder drawn with
/// `baseline_seed` from the same configuration.
ProbeResult representation_probe(const MotionEncoder& encoder, const ModelConfig& config, const std::vector<Clip>& train,
                                  const std::vector<Clip>& test, const ProbeOptions& options,
                                  std::uint64_t baseline_seed);

}  // namespace dualmotion
