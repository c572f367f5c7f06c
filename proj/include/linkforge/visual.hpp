#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "linkforge/common.hpp"

namespace linkforge::visual {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height, row-major

  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
};

// Netpbm P3 (ASCII) and P6 (binary), maxval 255 only. Throws DataError on
// malformed or truncated input.
Image parse_ppm(std::istream& in, const std::string& file_for_errors);
Image load_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);  // P6

struct Hsv {
  double h = 0;  // degrees [0, 360); gray pixels get h = 0
  double s = 0;  // [0, 1]
  double v = 0;  // [0, 1]
};

// Hexcone model.
Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

struct HistogramBins {
  int h = 8;
  int s = 4;
  int v = 4;
  bool operator==(const HistogramBins&) const = default;
};

// Joint HSV histogram: h-major flattening (index = (ih*s_bins + is)*v_bins +
// iv), uniform bins over h/360, s, v with the upper boundary falling in the
// last bin. Total mass equals the pixel count.
std::vector<double> hsv_histogram(const Image& img, HistogramBins bins);

// Per-row channel sums: H rows (h normalized by 360), then S rows, then V
// rows; length 3 * height.
std::vector<double> horizontal_projection(const Image& img);

enum class DescriptorKind { hsv_hist, horizontal_projection };

std::vector<double> frame_descriptor(const Image& img, DescriptorKind kind, HistogramBins bins);

struct TimedFrame {
  std::int64_t ms = 0;
  std::filesystem::path file;
};

// Caches descriptors keyed by (file, kind, bins) so repeated lookups do not
// re-read frames.
class DescriptorCache {
 public:
  const std::vector<double>& get(const std::filesystem::path& file, DescriptorKind kind,
                                 HistogramBins bins);

 private:
  std::map<std::string, std::vector<double>> cache_;
};

// Picks the frame with the largest timestamp <= each segment endpoint (first
// frame when none precedes) and returns the Euclidean distance between the
// two descriptors divided by descriptor length. Frames must be non-empty with
// strictly increasing timestamps.
double frame_distance(std::span<const TimedFrame> frames, std::int64_t start_ms,
                      std::int64_t end_ms, DescriptorKind kind, HistogramBins bins,
                      DescriptorCache* cache = nullptr);

}  // namespace linkforge::visual
