#include "linkforge/visual.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace linkforge::visual {

// ---------------------------------------------------------------------------
// PPM
// ---------------------------------------------------------------------------

namespace {

// Reads the next whitespace-separated token, skipping '#' comments.
bool next_header_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return true;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return !tok.empty();
}

int header_int(std::istream& in, const std::string& file, const char* what) {
  std::string tok;
  if (!next_header_token(in, tok))
    throw DataError(file + ": truncated header, missing " + what);
  try {
    size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(file + ": bad " + std::string(what) + " \"" + tok + "\"");
  }
}

}  // namespace

Image parse_ppm(std::istream& in, const std::string& file) {
  std::string magic;
  if (!next_header_token(in, magic)) throw DataError(file + ": empty file");
  if (magic != "P3" && magic != "P6")
    throw DataError(file + ": unsupported magic \"" + magic + "\" (want P3 or P6)");

  Image img;
  img.width = header_int(in, file, "width");
  img.height = header_int(in, file, "height");
  const int maxval = header_int(in, file, "maxval");
  if (img.width <= 0 || img.height <= 0)
    throw DataError(file + ": non-positive dimensions");
  if (maxval != 255) throw DataError(file + ": only maxval 255 is supported");

  const size_t n = 3 * static_cast<size_t>(img.width) * img.height;
  img.rgb.resize(n);
  if (magic == "P3") {
    std::string tok;
    for (size_t i = 0; i < n; ++i) {
      const int v = header_int(in, file, "sample");
      if (v < 0 || v > 255) throw DataError(file + ": sample out of range");
      img.rgb[i] = static_cast<std::uint8_t>(v);
    }
    (void)tok;
  } else {
    // P6: exactly one whitespace byte after maxval, then raw samples. The
    // header reader already consumed it.
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw DataError(file + ": truncated pixel data (" + std::to_string(in.gcount()) + " of " +
                      std::to_string(n) + " bytes)");
  }
  return img;
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path.string());
  return parse_ppm(in, path.string());
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image: " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Color and descriptors
// ---------------------------------------------------------------------------

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double max = std::max({r, g, b}), min = std::min({r, g, b});
  const double delta = max - min;
  Hsv out;
  out.v = max;
  out.s = max == 0.0 ? 0.0 : delta / max;
  if (delta == 0.0) {
    out.h = 0.0;  // gray: hue undefined, pinned to 0
    return out;
  }
  double h;
  if (max == r)
    h = 60.0 * std::fmod((g - b) / delta, 6.0);
  else if (max == g)
    h = 60.0 * ((b - r) / delta + 2.0);
  else
    h = 60.0 * ((r - g) / delta + 4.0);
  if (h < 0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

namespace {

inline int bin_index(double x, double upper, int bins) {
  int i = static_cast<int>(x / upper * bins);
  if (i >= bins) i = bins - 1;  // upper boundary lands in the last bin
  if (i < 0) i = 0;
  return i;
}

}  // namespace

std::vector<double> hsv_histogram(const Image& img, HistogramBins bins) {
  if (bins.h < 1 || bins.s < 1 || bins.v < 1)
    throw DataError("hsv_histogram: bin counts must be positive");
  std::vector<double> hist(static_cast<size_t>(bins.h) * bins.s * bins.v, 0.0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      const Hsv c = rgb_to_hsv(p[0], p[1], p[2]);
      const int ih = bin_index(c.h, 360.0, bins.h);
      const int is = bin_index(c.s, 1.0, bins.s);
      const int iv = bin_index(c.v, 1.0, bins.v);
      ++hist[(static_cast<size_t>(ih) * bins.s + is) * bins.v + iv];
    }
  }
  return hist;
}

std::vector<double> horizontal_projection(const Image& img) {
  std::vector<double> out(3 * static_cast<size_t>(img.height), 0.0);
  for (int y = 0; y < img.height; ++y) {
    double hs = 0, ss = 0, vs = 0;
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      const Hsv c = rgb_to_hsv(p[0], p[1], p[2]);
      hs += c.h / 360.0;
      ss += c.s;
      vs += c.v;
    }
    out[y] = hs;
    out[img.height + y] = ss;
    out[2 * static_cast<size_t>(img.height) + y] = vs;
  }
  return out;
}

std::vector<double> frame_descriptor(const Image& img, DescriptorKind kind, HistogramBins bins) {
  switch (kind) {
    case DescriptorKind::hsv_hist:
      return hsv_histogram(img, bins);
    case DescriptorKind::horizontal_projection:
      return horizontal_projection(img);
  }
  throw DataError("frame_descriptor: unknown kind");
}

// ---------------------------------------------------------------------------
// Frame distance
// ---------------------------------------------------------------------------

const std::vector<double>& DescriptorCache::get(const std::filesystem::path& file,
                                                DescriptorKind kind, HistogramBins bins) {
  std::ostringstream key;
  key << file.string() << '|' << static_cast<int>(kind) << '|' << bins.h << 'x' << bins.s << 'x'
      << bins.v;
  auto it = cache_.find(key.str());
  if (it != cache_.end()) return it->second;
  const Image img = load_ppm(file);
  auto [pos, inserted] = cache_.emplace(key.str(), frame_descriptor(img, kind, bins));
  return pos->second;
}

namespace {

// Largest timestamp <= t; first frame when none precedes.
const TimedFrame& frame_at(std::span<const TimedFrame> frames, std::int64_t t) {
  const TimedFrame* best = &frames.front();
  for (const auto& f : frames) {
    if (f.ms <= t) best = &f;
    else break;
  }
  return *best;
}

}  // namespace

double frame_distance(std::span<const TimedFrame> frames, std::int64_t start_ms,
                      std::int64_t end_ms, DescriptorKind kind, HistogramBins bins,
                      DescriptorCache* cache) {
  if (frames.empty()) throw DataError("frame_distance: no frames");
  for (size_t i = 1; i < frames.size(); ++i)
    if (frames[i].ms <= frames[i - 1].ms)
      throw DataError("frame_distance: timestamps must be strictly increasing");

  DescriptorCache local;
  DescriptorCache& c = cache ? *cache : local;
  const std::vector<double>& a = c.get(frame_at(frames, start_ms).file, kind, bins);
  const std::vector<double>& b = c.get(frame_at(frames, end_ms).file, kind, bins);
  if (a.size() != b.size())
    throw DataError("frame_distance: descriptor lengths differ (mixed frame sizes)");
  double sq = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq) / static_cast<double>(a.size());
}

}  // namespace linkforge::visual
