#pragma once

#include <Eigen/Dense>

#include <vector>

#include "evgo/core.hpp"

namespace evgo {

// H x W x C image with values in [0, 1], stored as per-channel planes.
struct Image {
  std::vector<Eigen::ArrayXXd> channels;  // size 1 or 3, each (row, col)

  int height() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int width() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
  int channel_count() const { return static_cast<int>(channels.size()); }

  static Image constant(int h, int w, int c, double value) {
    Image img;
    img.channels.assign(static_cast<size_t>(c), Eigen::ArrayXXd::Constant(h, w, value));
    return img;
  }
};

struct SnrMap {
  Eigen::ArrayXXd values;  // nonnegative
  double epsilon = 0.0;
};

struct FeatureMap {
  std::vector<Eigen::ArrayXXd> channels;

  int height() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int width() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
  int channel_count() const { return static_cast<int>(channels.size()); }
};

struct Corner {
  int x = 0;
  int y = 0;
  double harris_score = 0.0;
  double snr = 0.0;
};

// Sorted by descending Harris score.
using CornerSet = std::vector<Corner>;

struct GradientField {
  Eigen::ArrayXXd gx, gy;  // intensity per pixel
};

// Rec.601 luma; identity on single-channel images.
Eigen::ArrayXXd to_grayscale(const Image& image);

// Separable box mean with replicate padding; kernel must be odd.
Eigen::ArrayXXd box_filter(const Eigen::ArrayXXd& input, int kernel);

// Separable Gaussian with replicate padding, radius ceil(3*sigma).
Eigen::ArrayXXd gaussian_filter(const Eigen::ArrayXXd& input, double sigma);

// Element-wise relight: clamp(image * illumination, 0, 1).
Image enhance(const Image& image, const Eigen::ArrayXXd& illumination);

// snr = smoothed / (|gray - smoothed| + epsilon), smoothed = box mean of gray.
SnrMap snr_map(const Image& enhanced, int kernel, double epsilon);

// Min-max to [0, 1]; a constant map yields 0.5 everywhere.
Eigen::ArrayXXd normalize_snr(const SnrMap& map);

// concat(f_img .* m_hat, f_evt .* (1 - m_hat)) along channels.
FeatureMap snr_fusion(const FeatureMap& f_img, const FeatureMap& f_evt,
                      const Eigen::ArrayXXd& m_hat);

// Central differences in the interior, one-sided at borders.
GradientField image_gradient(const Eigen::ArrayXXd& gray);

// det(M) - k trace(M)^2 on a Gaussian-smoothed structure tensor, with
// non-maximum suppression and border rejection. If snr is given, each corner
// carries the map value at its pixel.
CornerSet harris_corners(const Eigen::ArrayXXd& gray, double k, int nms_radius, int max_corners,
                         int border_margin, double gaussian_sigma = 1.0,
                         const SnrMap* snr = nullptr);

// Invalid pixels replaced by the inverse-distance weighted average of valid
// pixels within radius; returns the number of pixels left unfilled.
int fill_holes(Image& image, const Mask& valid, int radius);

// Classical stand-in for a learned illumination estimator: smoothed
// max-channel prior inverted so the enhanced image targets the given mean.
Eigen::ArrayXXd illumination_prior(const Image& image, double sigma = 3.0,
                                   double target_mean = 0.5, double floor = 1e-3);

}  // namespace evgo
