#include "dualmotion/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "dualmotion/errors.hpp"

namespace dualmotion {

Tensor copy_last_baseline(const FrameSequence& sequence) {
  if (sequence.length() < 1) throw DatasetError("copy_last_baseline: empty sequence");
  return sequence.frame(sequence.length() - 1);
}

FrameScores score_frame(const Tensor& pred, const Tensor& gt) {
  const Tensor p = to_unit_range(pred.rank() == 3 ? pred.reshaped({1, pred.dim(0), pred.dim(1), pred.dim(2)}) : pred);
  const Tensor g = to_unit_range(gt.rank() == 3 ? gt.reshaped({1, gt.dim(0), gt.dim(1), gt.dim(2)}) : gt);
  const double m = mse(p, g);
  return {m, psnr_from_mse(m), ssim(p, g)};
}

namespace {

FrameScores mean_scores(const std::vector<FrameScores>& xs) {
  FrameScores out;
  if (xs.empty()) return out;
  for (const auto& s : xs) {
    out.mse += s.mse;
    out.psnr += s.psnr;
    out.ssim += s.ssim;
  }
  const double n = static_cast<double>(xs.size());
  out.mse /= n;
  out.psnr /= n;
  out.ssim /= n;
  return out;
}

template <typename Get>
std::optional<double> mean_optional(const std::vector<SequenceReport>& seqs, Get get) {
  double s = 0;
  int n = 0;
  for (const auto& r : seqs) {
    if (const auto v = get(r)) {
      s += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

template <typename Get>
std::vector<FrameScores> mean_curve(const std::vector<SequenceReport>& seqs, std::size_t horizons, Get get) {
  std::vector<FrameScores> out;
  for (std::size_t h = 0; h < horizons; ++h) {
    std::vector<FrameScores> xs;
    for (const auto& r : seqs) xs.push_back(get(r)[h]);
    out.push_back(mean_scores(xs));
  }
  return out;
}

nlohmann::json scores_json(const FrameScores& s) { return {{"mse", s.mse}, {"psnr", s.psnr}, {"ssim", s.ssim}}; }

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::map<std::string, FrameScores> MetricsReport::mean_next_frame() const {
  std::map<std::string, FrameScores> out;
  for (const auto& mode : report_modes()) {
    std::vector<FrameScores> xs;
    for (const auto& r : sequences) xs.push_back(r.next_frame.at(mode));
    out[mode] = mean_scores(xs);
  }
  return out;
}

std::optional<double> MetricsReport::mean_epe_prediction() const {
  return mean_optional(sequences, [](const SequenceReport& r) { return r.epe_prediction; });
}

std::optional<double> MetricsReport::mean_epe_estimation() const {
  return mean_optional(sequences, [](const SequenceReport& r) { return r.epe_estimation; });
}

std::optional<double> MetricsReport::mean_epe_zero() const {
  return mean_optional(sequences, [](const SequenceReport& r) { return r.epe_zero; });
}

std::vector<FrameScores> MetricsReport::mean_fused_curve() const {
  return mean_curve(sequences, horizons.size(), [](const SequenceReport& r) { return r.fused_by_horizon; });
}

std::vector<FrameScores> MetricsReport::mean_copy_last_curve() const {
  return mean_curve(sequences, horizons.size(), [](const SequenceReport& r) { return r.copy_last_by_horizon; });
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << "sequences: " << sequences.size() << "  (mse, epe: lower is better; psnr, ssim: higher is better)\n";
  os << "mode          mse         psnr_db     ssim\n";
  for (const auto& [mode, s] : mean_next_frame()) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s  %-10.6f  %-10.4f  %-8.5f\n", mode.c_str(), s.mse, s.psnr, s.ssim);
    os << line;
  }
  const auto ep = mean_epe_prediction(), ee = mean_epe_estimation(), ez = mean_epe_zero();
  if (ep || ee || ez) {
    os << "flow          epe\n";
    if (ep) os << "prediction    " << fmt(*ep) << '\n';
    if (ee) os << "estimation    " << fmt(*ee) << '\n';
    if (ez) os << "zero_flow     " << fmt(*ez) << '\n';
  }
  if (!horizons.empty()) {
    const auto fused = mean_fused_curve(), copy = mean_copy_last_curve();
    os << "horizon  fused_mse   copy_last_mse\n";
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      char line[96];
      std::snprintf(line, sizeof(line), "%-7d  %-10.6f  %-10.6f\n", horizons[h], fused[h].mse, copy[h].mse);
      os << line;
    }
  }
  return os.str();
}

std::string MetricsReport::json() const {
  nlohmann::json j;
  j["orientation"] = {{"mse", "lower"}, {"psnr", "higher"}, {"ssim", "higher"}, {"epe", "lower"}};
  j["horizons"] = horizons;
  nlohmann::json agg;
  for (const auto& [mode, s] : mean_next_frame()) agg[mode] = scores_json(s);
  if (const auto v = mean_epe_prediction()) agg["epe_prediction"] = *v;
  if (const auto v = mean_epe_estimation()) agg["epe_estimation"] = *v;
  if (const auto v = mean_epe_zero()) agg["epe_zero_flow"] = *v;
  nlohmann::json fused = nlohmann::json::array(), copy = nlohmann::json::array();
  for (const auto& s : mean_fused_curve()) fused.push_back(scores_json(s));
  for (const auto& s : mean_copy_last_curve()) copy.push_back(scores_json(s));
  agg["curve_fused"] = fused;
  agg["curve_copy_last"] = copy;
  j["aggregate"] = agg;
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& r : sequences) {
    nlohmann::json s;
    s["id"] = r.id;
    for (const auto& [mode, sc] : r.next_frame) s[mode] = scores_json(sc);
    if (r.epe_prediction) s["epe_prediction"] = *r.epe_prediction;
    if (r.epe_estimation) s["epe_estimation"] = *r.epe_estimation;
    if (r.epe_zero) s["epe_zero_flow"] = *r.epe_zero;
    seqs.push_back(s);
  }
  j["sequences"] = seqs;
  return j.dump(2);
}

std::string MetricsReport::curves() const {
  std::ostringstream os;
  os << "horizon\tfused_mse\tfused_psnr\tfused_ssim\tcopy_last_mse\tcopy_last_psnr\tcopy_last_ssim\n";
  const auto fused = mean_fused_curve(), copy = mean_copy_last_curve();
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    os << horizons[h] << '\t' << format_scalar(fused[h].mse) << '\t' << format_scalar(fused[h].psnr) << '\t'
       << format_scalar(fused[h].ssim) << '\t' << format_scalar(copy[h].mse) << '\t' << format_scalar(copy[h].psnr)
       << '\t' << format_scalar(copy[h].ssim) << '\n';
  }
  return os.str();
}

void MetricsReport::plot_curves(const std::filesystem::path& path) const {
  const int w = 480, h = 320, margin = 40;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto fused = mean_fused_curve(), copy = mean_copy_last_curve();
  double top = 1e-12;
  for (std::size_t k = 0; k < horizons.size(); ++k) top = std::max({top, fused[k].mse, copy[k].mse});
  cv::line(img, {margin, h - margin}, {w - margin, h - margin}, cv::Scalar(0, 0, 0));
  cv::line(img, {margin, margin}, {margin, h - margin}, cv::Scalar(0, 0, 0));
  auto point = [&](std::size_t k, double v) {
    const double fx = horizons.size() > 1 ? static_cast<double>(k) / (horizons.size() - 1) : 0.5;
    return cv::Point(margin + static_cast<int>(fx * (w - 2 * margin)),
                     h - margin - static_cast<int>(v / top * (h - 2 * margin)));
  };
  auto draw = [&](const std::vector<FrameScores>& c, const cv::Scalar& color) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      cv::circle(img, point(k, c[k].mse), 3, color, cv::FILLED);
      if (k > 0) cv::line(img, point(k - 1, c[k - 1].mse), point(k, c[k].mse), color, 2);
    }
  };
  draw(copy, cv::Scalar(80, 80, 200));
  draw(fused, cv::Scalar(200, 80, 40));
  cv::putText(img, "MSE vs horizon (blue: fused, red: copy-last)", {margin, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              cv::Scalar(0, 0, 0));
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write plot '" + path.string() + "'");
}

MetricsReport evaluate_clips(const DualMotionModel& model, const BranchFlags& flags, const std::vector<Clip>& clips,
                             const EvalOptions& options) {
  if (clips.empty()) throw DatasetError("evaluation split is empty");
  MetricsReport report;
  report.horizons = options.horizons;
  const int max_h = options.horizons.empty() ? 1 : *std::max_element(options.horizons.begin(), options.horizons.end());
  const int window = options.window;
  NoGradGuard guard;
  for (const Clip& clip : clips) {
    const FrameSequence& seq = clip.frames;
    if (seq.length() < window + max_h) {
      throw DatasetError("clip '" + seq.source_id + "' has " + std::to_string(seq.length()) + " frames; evaluation needs " +
                         std::to_string(window + max_h));
    }
    const FrameSequence input = seq.window(0, window);
    const Tensor target = seq.frame(window);
    SequenceReport r;
    r.id = seq.source_id;
    const Prediction p = predict_next(model, flags, input, window, PredictMode::fused);
    const PredictionBundle& b = p.bundle;
    r.next_frame["fused"] = score_frame(b.fused_frame.value(), target);
    r.next_frame["frame_only"] =
        score_frame((b.frame_pred.defined() ? b.frame_pred : b.fused_frame).value(), target);
    r.next_frame["flow_only"] =
        score_frame((b.warped_frame.defined() ? b.warped_frame : b.fused_frame).value(), target);
    const Tensor last = copy_last_baseline(input);
    r.next_frame["copy_last"] = score_frame(last, target);
    if (clip.has_flows()) {
      const Tensor truth = clip.flows[window - 1].batched();
      r.epe_zero = epe(Tensor::zeros(truth.shape()), truth);
      if (b.flow_pred.defined()) r.epe_prediction = epe(b.flow_pred.value(), truth);
      if (flags.dual()) {
        const Var est = model.estimator(Var(seq.frame(window - 1)), Var(target));
        r.epe_estimation = epe(est.value(), truth);
      }
    }
    if (!options.horizons.empty()) {
      const MultiPrediction multi = predict_multi(model, flags, input, window, max_h, PredictMode::fused);
      for (int h : options.horizons) {
        const Tensor gt = seq.frame(window + h - 1);
        r.fused_by_horizon.push_back(score_frame(multi.frames[h - 1], gt));
        r.copy_last_by_horizon.push_back(score_frame(last, gt));
      }
    }
    report.sequences.push_back(std::move(r));
  }
  return report;
}

MetricsReport evaluate_dataset(const DualMotionModel& model, const BranchFlags& flags,
                               const DatasetManifest& manifest, const EvalOptions& options) {
  manifest.validate();
  return evaluate_clips(model, flags, load_split(manifest, Split::test), options);
}

}  // namespace dualmotion
