#include "evgo/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evgo {

namespace {

int clamp_index(int i, int n) { return std::max(0, std::min(n - 1, i)); }

// 1D correlation along rows with replicate padding (kernel centered).
Eigen::ArrayXXd filter_rows(const Eigen::ArrayXXd& in, const std::vector<double>& kernel) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  const int r = static_cast<int>(kernel.size()) / 2;
  Eigen::ArrayXXd out(h, w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        acc += kernel[static_cast<size_t>(k + r)] * in(clamp_index(row + k, h), col);
      }
      out(row, col) = acc;
    }
  }
  return out;
}

Eigen::ArrayXXd filter_cols(const Eigen::ArrayXXd& in, const std::vector<double>& kernel) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  const int r = static_cast<int>(kernel.size()) / 2;
  Eigen::ArrayXXd out(h, w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        acc += kernel[static_cast<size_t>(k + r)] * in(row, clamp_index(col + k, w));
      }
      out(row, col) = acc;
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<size_t>(i + r)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

Eigen::ArrayXXd to_grayscale(const Image& image) {
  if (image.channel_count() == 1) return image.channels[0];
  if (image.channel_count() != 3) throw std::invalid_argument("to_grayscale: need 1 or 3 channels");
  return 0.299 * image.channels[0] + 0.587 * image.channels[1] + 0.114 * image.channels[2];
}

Eigen::ArrayXXd box_filter(const Eigen::ArrayXXd& input, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("box_filter: kernel must be odd");
  if (kernel == 1) return input;
  const std::vector<double> k(static_cast<size_t>(kernel), 1.0 / kernel);
  return filter_cols(filter_rows(input, k), k);
}

Eigen::ArrayXXd gaussian_filter(const Eigen::ArrayXXd& input, double sigma) {
  if (!(sigma > 0.0)) return input;
  const auto k = gaussian_kernel(sigma);
  return filter_cols(filter_rows(input, k), k);
}

Image enhance(const Image& image, const Eigen::ArrayXXd& illumination) {
  if (illumination.rows() != image.height() || illumination.cols() != image.width()) {
    throw std::invalid_argument("enhance: illumination shape mismatch");
  }
  if ((illumination <= 0.0).any()) {
    throw std::invalid_argument("enhance: illumination must be strictly positive");
  }
  Image out;
  out.channels.reserve(image.channels.size());
  for (const auto& ch : image.channels) {
    out.channels.push_back((ch * illumination).cwiseMax(0.0).cwiseMin(1.0));
  }
  return out;
}

SnrMap snr_map(const Image& enhanced, int kernel, double epsilon) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("snr_map: kernel must be odd");
  if (!(epsilon > 0.0)) throw std::invalid_argument("snr_map: epsilon must be positive");
  const Eigen::ArrayXXd gray = to_grayscale(enhanced);
  const Eigen::ArrayXXd smoothed = box_filter(gray, kernel);
  SnrMap map;
  map.epsilon = epsilon;
  map.values = smoothed / ((gray - smoothed).abs() + epsilon);
  return map;
}

Eigen::ArrayXXd normalize_snr(const SnrMap& map) {
  const double lo = map.values.minCoeff();
  const double hi = map.values.maxCoeff();
  if (hi == lo) return Eigen::ArrayXXd::Constant(map.values.rows(), map.values.cols(), 0.5);
  return (map.values - lo) / (hi - lo);
}

FeatureMap snr_fusion(const FeatureMap& f_img, const FeatureMap& f_evt,
                      const Eigen::ArrayXXd& m_hat) {
  if (f_img.channel_count() != f_evt.channel_count() || f_img.height() != f_evt.height() ||
      f_img.width() != f_evt.width()) {
    throw std::invalid_argument("snr_fusion: feature shape mismatch");
  }
  if (m_hat.rows() != f_img.height() || m_hat.cols() != f_img.width()) {
    throw std::invalid_argument("snr_fusion: snr map shape mismatch");
  }
  FeatureMap out;
  out.channels.reserve(2 * f_img.channels.size());
  for (const auto& ch : f_img.channels) out.channels.push_back(ch * m_hat);
  for (const auto& ch : f_evt.channels) out.channels.push_back(ch * (1.0 - m_hat));
  return out;
}

GradientField image_gradient(const Eigen::ArrayXXd& gray) {
  const int h = static_cast<int>(gray.rows());
  const int w = static_cast<int>(gray.cols());
  GradientField g;
  g.gx.setZero(h, w);
  g.gy.setZero(h, w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      if (w > 1) {
        if (col == 0) {
          g.gx(row, col) = gray(row, 1) - gray(row, 0);
        } else if (col == w - 1) {
          g.gx(row, col) = gray(row, w - 1) - gray(row, w - 2);
        } else {
          g.gx(row, col) = 0.5 * (gray(row, col + 1) - gray(row, col - 1));
        }
      }
      if (h > 1) {
        if (row == 0) {
          g.gy(row, col) = gray(1, col) - gray(0, col);
        } else if (row == h - 1) {
          g.gy(row, col) = gray(h - 1, col) - gray(h - 2, col);
        } else {
          g.gy(row, col) = 0.5 * (gray(row + 1, col) - gray(row - 1, col));
        }
      }
    }
  }
  return g;
}

CornerSet harris_corners(const Eigen::ArrayXXd& gray, double k, int nms_radius, int max_corners,
                         int border_margin, double gaussian_sigma, const SnrMap* snr) {
  const int h = static_cast<int>(gray.rows());
  const int w = static_cast<int>(gray.cols());
  const GradientField g = image_gradient(gray);
  const Eigen::ArrayXXd ixx = gaussian_filter(g.gx * g.gx, gaussian_sigma);
  const Eigen::ArrayXXd iyy = gaussian_filter(g.gy * g.gy, gaussian_sigma);
  const Eigen::ArrayXXd ixy = gaussian_filter(g.gx * g.gy, gaussian_sigma);
  const Eigen::ArrayXXd det = ixx * iyy - ixy * ixy;
  const Eigen::ArrayXXd trace = ixx + iyy;
  const Eigen::ArrayXXd response = det - k * trace * trace;

  const double max_response = response.maxCoeff();
  if (!(max_response > 0.0)) return {};
  const double threshold = 1e-9 * max_response;

  CornerSet corners;
  for (int row = border_margin; row < h - border_margin; ++row) {
    for (int col = border_margin; col < w - border_margin; ++col) {
      const double r = response(row, col);
      if (!(r > threshold)) continue;
      // local max within nms_radius; earlier scan-order pixel wins ties
      bool is_max = true;
      for (int dy = -nms_radius; dy <= nms_radius && is_max; ++dy) {
        for (int dx = -nms_radius; dx <= nms_radius && is_max; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int ny = row + dy, nx = col + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const double rn = response(ny, nx);
          if (rn > r) is_max = false;
          if (rn == r && (ny < row || (ny == row && nx < col))) is_max = false;
        }
      }
      if (!is_max) continue;
      Corner c;
      c.x = col;
      c.y = row;
      c.harris_score = r;
      c.snr = snr ? snr->values(row, col) : 0.0;
      corners.push_back(c);
    }
  }
  std::stable_sort(corners.begin(), corners.end(),
                   [](const Corner& a, const Corner& b) { return a.harris_score > b.harris_score; });
  if (max_corners >= 0 && static_cast<int>(corners.size()) > max_corners) {
    corners.resize(static_cast<size_t>(max_corners));
  }
  return corners;
}

int fill_holes(Image& image, const Mask& valid, int radius) {
  const int h = image.height();
  const int w = image.width();
  if (valid.rows() != h || valid.cols() != w) {
    throw std::invalid_argument("fill_holes: mask shape mismatch");
  }
  // neighbor offsets within Euclidean radius, fixed scan order
  struct Offset {
    int dx, dy;
    double weight;
  };
  std::vector<Offset> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const double dist = std::sqrt(static_cast<double>(dx * dx + dy * dy));
      if (dist > radius) continue;
      offsets.push_back({dx, dy, 1.0 / dist});
    }
  }

  const Image src = image;
  int unfilled = 0;
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      if (valid(row, col)) continue;
      double weight_sum = 0.0;
      std::vector<double> acc(static_cast<size_t>(image.channel_count()), 0.0);
      for (const Offset& o : offsets) {
        const int ny = row + o.dy, nx = col + o.dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w || !valid(ny, nx)) continue;
        weight_sum += o.weight;
        for (int c = 0; c < image.channel_count(); ++c) {
          acc[static_cast<size_t>(c)] += o.weight * src.channels[static_cast<size_t>(c)](ny, nx);
        }
      }
      if (weight_sum == 0.0) {
        ++unfilled;
        continue;
      }
      for (int c = 0; c < image.channel_count(); ++c) {
        image.channels[static_cast<size_t>(c)](row, col) = acc[static_cast<size_t>(c)] / weight_sum;
      }
    }
  }
  return unfilled;
}

Eigen::ArrayXXd illumination_prior(const Image& image, double sigma, double target_mean,
                                   double floor) {
  Eigen::ArrayXXd prior = image.channels[0];
  for (size_t c = 1; c < image.channels.size(); ++c) {
    prior = prior.max(image.channels[c]);
  }
  const Eigen::ArrayXXd smoothed = gaussian_filter(prior, sigma);
  return target_mean / smoothed.cwiseMax(floor);
}

}  // namespace evgo
