#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tmeasures/error.hpp"
#include "tmeasures/image.hpp"

namespace tmeasures {

/// Scale about the center, then rotate about the center, then translate.
/// Translations are fractions of the image height/width; positive rotation is
/// counter-clockwise as displayed (row 0 at the top).
struct AffineTransform {
  double rotation_degrees = 0.0;
  double scale_h = 1.0;
  double scale_w = 1.0;
  double translate_h_fraction = 0.0;
  double translate_w_fraction = 0.0;

  bool is_identity() const {
    return rotation_degrees == 0.0 && scale_h == 1.0 && scale_w == 1.0 && translate_h_fraction == 0.0 &&
           translate_w_fraction == 0.0;
  }

  bool operator==(const AffineTransform&) const = default;
};

inline std::string to_string(const AffineTransform& t) {
  std::ostringstream out;
  out.precision(17);
  out << "rot=" << t.rotation_degrees << " sh=" << t.scale_h << " sw=" << t.scale_w
      << " th=" << t.translate_h_fraction << " tw=" << t.translate_w_fraction;
  return out.str();
}

class TransformationSet {
 public:
  TransformationSet() = default;
  TransformationSet(std::vector<AffineTransform> transforms, std::string label)
      : transforms_(std::move(transforms)), label_(std::move(label)) {
    for (std::size_t i = 0; i < transforms_.size(); ++i) {
      if (transforms_[i].is_identity()) {
        identity_index_ = i;
        return;
      }
    }
    throw Error("missing-identity", "transformation set '" + label_ + "' has no identity transform");
  }

  const std::vector<AffineTransform>& transforms() const { return transforms_; }
  const AffineTransform& operator[](std::size_t i) const { return transforms_[i]; }
  std::size_t size() const { return transforms_.size(); }
  const std::string& label() const { return label_; }
  std::size_t identity_index() const { return identity_index_; }

 private:
  std::vector<AffineTransform> transforms_;
  std::string label_;
  std::size_t identity_index_ = 0;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// m angles evenly spaced over [0°, 360°).
inline TransformationSet rotation_set(std::size_t m) {
  if (m == 0) throw Error("invalid-argument", "rotation set needs at least one angle");
  std::vector<AffineTransform> ts;
  ts.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    AffineTransform t;
    t.rotation_degrees = 360.0 * static_cast<double>(j) / static_cast<double>(m);
    ts.push_back(t);
  }
  return {std::move(ts), "rotation:" + std::to_string(m)};
}

/// Factors on a half-step-inset uniform grid over (0.5, 1.25).
inline std::vector<double> scale_factors(std::size_t factor_count) {
  constexpr double lo = 0.5;
  constexpr double hi = 1.25;
  std::vector<double> out;
  const double step = (hi - lo) / static_cast<double>(factor_count);
  for (std::size_t i = 0; i < factor_count; ++i) out.push_back(lo + (static_cast<double>(i) + 0.5) * step);
  return out;
}

/// Identity followed by (1, s), (s, 1), (s, s) for every factor s.
inline TransformationSet scale_set(std::size_t factor_count) {
  if (factor_count == 0) throw Error("invalid-argument", "scale set needs at least one factor");
  std::vector<AffineTransform> ts{AffineTransform{}};
  for (double s : scale_factors(factor_count)) {
    ts.push_back({0.0, 1.0, s, 0.0, 0.0});
    ts.push_back({0.0, s, 1.0, 0.0, 0.0});
    ts.push_back({0.0, s, s, 0.0, 0.0});
  }
  return {std::move(ts), "scale:" + std::to_string(factor_count)};
}

inline TransformationSet translation_set(const std::vector<double>& factors) {
  if (factors.empty()) throw Error("invalid-argument", "translation set needs at least one factor");
  std::vector<AffineTransform> ts{AffineTransform{}};
  std::string label = "translation:";
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const double t = factors[i];
    if (!(t > 0.0 && t <= 0.5)) throw Error("invalid-argument", "translation factor must lie in (0, 0.5]");
    const double offsets[8][2] = {{-t, -t}, {-t, t}, {t, -t}, {t, t}, {0, t}, {t, 0}, {0, -t}, {-t, 0}};
    for (const auto& o : offsets) ts.push_back({0.0, 1.0, 1.0, o[0], o[1]});
    std::ostringstream f;
    f << t;
    label += (i ? "," : "") + f.str();
  }
  return {std::move(ts), label};
}

// ---------------------------------------------------------------------------
// Grammar: rotation:<m> | scale:<count> | translation:<f1,f2,...> | file:<path>
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_real(std::string_view s, const std::string& context) {
  // std::from_chars for double is available in libstdc++ 11.
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw Error("invalid-transform-spec", "bad number '" + std::string(s) + "' in " + context);
  return v;
}

inline std::size_t parse_count(std::string_view s, const std::string& context) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || v == 0) {
    throw Error("invalid-transform-spec", "bad count '" + std::string(s) + "' in " + context);
  }
  return v;
}

}  // namespace detail

/// Parses lines of the form `rot=<deg> sh=<r> sw=<r> th=<r> tw=<r>`. Missing
/// keys keep their identity value; blank lines and `#` comments are skipped.
inline std::vector<AffineTransform> parse_transform_lines(std::istream& in, const std::string& context) {
  std::vector<AffineTransform> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string field;
    AffineTransform t;
    bool any = false;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw Error("invalid-transform-spec", "expected key=value, got '" + field + "' in " + context);
      const std::string key = field.substr(0, eq);
      const double v = detail::parse_real(std::string_view(field).substr(eq + 1), context);
      if (key == "rot") t.rotation_degrees = v;
      else if (key == "sh") t.scale_h = v;
      else if (key == "sw") t.scale_w = v;
      else if (key == "th") t.translate_h_fraction = v;
      else if (key == "tw") t.translate_w_fraction = v;
      else throw Error("invalid-transform-spec", "unknown key '" + key + "' in " + context);
      any = true;
    }
    if (!any) continue;
    if (!(t.scale_h > 0.0 && t.scale_w > 0.0)) throw Error("invalid-transform-spec", "scale factors must be positive in " + context);
    out.push_back(t);
  }
  return out;
}

inline TransformationSet parse_transformation_set(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw Error("invalid-transform-spec", "expected <family>:<args>, got '" + spec + "'");
  const std::string family = spec.substr(0, colon);
  const std::string args = spec.substr(colon + 1);
  if (family == "rotation") return rotation_set(detail::parse_count(args, spec));
  if (family == "scale") return scale_set(detail::parse_count(args, spec));
  if (family == "translation") {
    std::vector<double> factors;
    std::string_view rest(args);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      factors.push_back(detail::parse_real(rest.substr(0, comma), spec));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    try {
      return translation_set(factors);
    } catch (const Error& e) {
      throw Error("invalid-transform-spec", e.what());
    }
  }
  if (family == "file") {
    std::ifstream in(args);
    if (!in) throw Error("io-error", "cannot open transformation file '" + args + "'");
    auto ts = parse_transform_lines(in, args);
    if (ts.empty()) throw Error("invalid-transform-spec", "transformation file '" + args + "' is empty");
    return {std::move(ts), spec};
  }
  throw Error("invalid-transform-spec", "unknown transformation family '" + family + "'");
}

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

namespace detail {

// Reflection about the edge pixels without repeating them (…2 1 0 1 2…).
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  const std::ptrdiff_t period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i >= n ? period - i : i;
}

inline bool is_integer(double v) { return std::abs(v - std::round(v)) < 1e-9; }

template <typename T>
Image<T> rotate_quarter_turns(const Image<T>& img, int turns) {
  Image<T> out(img.height, img.width, img.channels);
  const std::size_t h = img.height;
  const std::size_t w = img.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sy = y;
      std::size_t sx = x;
      switch (turns) {
        case 1: sy = x; sx = w - 1 - y; break;
        case 2: sy = h - 1 - y; sx = w - 1 - x; break;
        case 3: sy = h - 1 - x; sx = y; break;
        default: break;
      }
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

template <typename T>
Image<T> shift_integer(const Image<T>& img, std::ptrdiff_t dy, std::ptrdiff_t dx) {
  Image<T> out(img.height, img.width, img.channels, T{});
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  const auto w = static_cast<std::ptrdiff_t>(img.width);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    const std::ptrdiff_t sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const std::ptrdiff_t sx = x - dx;
      if (sx < 0 || sx >= w) continue;
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) =
            img.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), c);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Applies t to img keeping the image size. Pure downscales fill uncovered
/// borders by reflection; everything else fills out-of-frame regions with 0.
/// Quarter-turn rotations (square images) and integer-pixel translations take
/// an exact pixel-permuting path.
template <typename T>
Image<T> apply(const AffineTransform& t, const Image<T>& img) {
  if (img.height < 2 || img.width < 2 || img.channels == 0) {
    throw Error("image-too-small", "transform needs an image of at least 2×2");
  }
  if (t.is_identity()) return img;

  const bool unscaled = t.scale_h == 1.0 && t.scale_w == 1.0;
  const bool untranslated = t.translate_h_fraction == 0.0 && t.translate_w_fraction == 0.0;
  const double turns_real = t.rotation_degrees / 90.0;

  if (unscaled && untranslated && detail::is_integer(turns_real)) {
    const int turns = static_cast<int>(((static_cast<long long>(std::llround(turns_real)) % 4) + 4) % 4);
    if (turns == 0) return img;
    if (turns == 2 || img.height == img.width) return detail::rotate_quarter_turns(img, turns);
  }
  const double dy = t.translate_h_fraction * static_cast<double>(img.height);
  const double dx = t.translate_w_fraction * static_cast<double>(img.width);
  if (unscaled && t.rotation_degrees == 0.0 && detail::is_integer(dy) && detail::is_integer(dx)) {
    return detail::shift_integer(img, static_cast<std::ptrdiff_t>(std::llround(dy)),
                                 static_cast<std::ptrdiff_t>(std::llround(dx)));
  }

  const bool reflect = t.rotation_degrees == 0.0 && untranslated && (t.scale_h < 1.0 || t.scale_w < 1.0);
  const double theta = t.rotation_degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  const auto w = static_cast<std::ptrdiff_t>(img.width);

  Image<T> out(img.height, img.width, img.channels, T{});
  std::vector<double> acc(img.channels);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      // Invert translate, then rotate (u right, v up), then scale.
      const double up = static_cast<double>(x) - dx - cx;
      const double vp = cy - (static_cast<double>(y) - dy);
      const double u = up * cos_t + vp * sin_t;
      const double v = -up * sin_t + vp * cos_t;
      const double sx = cx + u / t.scale_w;
      const double sy = cy - v / t.scale_h;

      const double fy0 = std::floor(sy);
      const double fx0 = std::floor(sx);
      const double fy = sy - fy0;
      const double fx = sx - fx0;
      const auto y0 = static_cast<std::ptrdiff_t>(fy0);
      const auto x0 = static_cast<std::ptrdiff_t>(fx0);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int oy = 0; oy < 2; ++oy) {
        const double wy = oy ? fy : 1.0 - fy;
        if (wy == 0.0) continue;
        std::ptrdiff_t yy = y0 + oy;
        if (yy < 0 || yy >= h) {
          if (!reflect) continue;
          yy = detail::reflect_index(yy, h);
        }
        for (int ox = 0; ox < 2; ++ox) {
          const double wx = ox ? fx : 1.0 - fx;
          if (wx == 0.0) continue;
          std::ptrdiff_t xx = x0 + ox;
          if (xx < 0 || xx >= w) {
            if (!reflect) continue;
            xx = detail::reflect_index(xx, w);
          }
          const double weight = wy * wx;
          for (std::size_t c = 0; c < img.channels; ++c) {
            acc[c] += weight * static_cast<double>(img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c));
          }
        }
      }
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = static_cast<T>(acc[c]);
      }
    }
  }
  return out;
}

}  // namespace tmeasures
