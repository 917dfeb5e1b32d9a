// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fexgan/affect.hpp"
#include "fexgan/error.hpp"
#include "fexgan/rng.hpp"

namespace fexgan {

struct ToyCorpusOptions {
  int identities = 2;
  int affects = static_cast<int>(kAffectCount);
  int per_cell = 20;
  int image_size = 64;
  std::uint64_t seed = 42;
  AffectNames affect_names = default_affect_names();

  void validate() const {
    if (identities < 2) throw ConfigError("toy corpus needs at least 2 identities");
    if (affects < 1 || affects > static_cast<int>(kAffectCount))
      throw ConfigError("toy corpus affects must lie in [1, 7]");
    if (per_cell < 4) throw ConfigError("toy corpus needs at least 4 images per cell");
    if (image_size < 8) throw ConfigError("toy corpus image_size must be >= 8");
  }
};

namespace toy_detail {

constexpr int kSupersample = 4;

inline cv::Scalar hsv_to_bgr(double h, double s, double v) {
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(h * 180.0, s * 255.0, v * 255.0));
  cv::Mat bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  const auto px = bgr.at<cv::Vec3b>(0, 0);
  return {static_cast<double>(px[0]), static_cast<double>(px[1]), static_cast<double>(px[2])};
}

/// Maps unit face coordinates to supersampled pixels.
struct Canvas {
  cv::Mat image;
  double size;
  double dx;
  double dy;

  cv::Point at(double x, double y) const {
    return {static_cast<int>(std::lround((x + dx) * size)), static_cast<int>(std::lround((y + dy) * size))};
  }
  int len(double v) const { return std::max(1, static_cast<int>(std::lround(v * size))); }
};

inline void draw_eye(Canvas& c, double x, double y, double r, bool squint, const cv::Scalar& ink) {
  if (squint) {
    cv::line(c.image, c.at(x - r, y), c.at(x + r, y), ink, c.len(0.025), cv::LINE_AA);
    return;
  }
  cv::circle(c.image, c.at(x, y), c.len(r), cv::Scalar(255, 255, 255), cv::FILLED, cv::LINE_AA);
  cv::circle(c.image, c.at(x, y), c.len(r * 0.55), ink, cv::FILLED, cv::LINE_AA);
}

inline void draw_face(cv::Mat& out, int identity, int affect, int image_size, Rng& rng) {
  const int big = image_size * kSupersample;
  const double hue = std::fmod(0.12 + identity * 0.618033988749895, 1.0);
  const cv::Scalar background = hsv_to_bgr(std::fmod(hue + 0.5, 1.0), 0.25, 0.95);
  const cv::Scalar skin = hsv_to_bgr(hue, 0.55, 0.85 + rng.uniform(-0.05, 0.05));
  const cv::Scalar ink(30, 20, 20);

  Canvas c{cv::Mat(big, big, CV_8UC3, background), static_cast<double>(big),
           rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)};
  const double scale = rng.uniform(0.92, 1.08);

  // Identity: face proportions and an optional hair band.
  const double rx = (0.33 + 0.05 * ((identity * 37) % 5) / 4.0) * scale;
  const double ry = (0.40 + 0.05 * ((identity * 13) % 3) / 2.0) * scale;
  cv::ellipse(c.image, c.at(0.5, 0.52), cv::Size(c.len(rx), c.len(ry)), 0, 0, 360, skin,
              cv::FILLED, cv::LINE_AA);
  if (identity % 2 == 1)
    cv::ellipse(c.image, c.at(0.5, 0.52 - ry * 0.75), cv::Size(c.len(rx * 0.9), c.len(ry * 0.3)),
                0, 180, 360, hsv_to_bgr(std::fmod(hue + 0.3, 1.0), 0.6, 0.35), cv::FILLED,
                cv::LINE_AA);

  const double j = 0.01;  // per-feature wobble
  const auto w = [&] { return rng.uniform(-j, j); };
  const int stroke = c.len(0.035);
  const double ex = 0.13, ey = 0.44 + w();

  double eye_r = 0.055;
  bool squint_left = false;
  switch (affect) {
    case 3: eye_r = 0.075; break;  // fear
    case 5: eye_r = 0.085; break;  // surprise
    case 2: eye_r = 0.045; break;  // anger
    case 4: squint_left = true; break;  // disgust
    default: break;
  }
  draw_eye(c, 0.5 - ex + w(), ey, eye_r, squint_left, ink);
  draw_eye(c, 0.5 + ex + w(), ey, eye_r, false, ink);

  // Brows: (inner height offset, outer height offset) relative to the eye.
  double inner = -0.10, outer = -0.10;
  switch (affect) {
    case 1: inner = -0.15; outer = -0.08; break;   // sadness
    case 2: inner = -0.06; outer = -0.14; break;   // anger
    case 3: inner = -0.15; outer = -0.13; break;   // fear
    case 4: inner = -0.08; outer = -0.10; break;   // disgust
    case 5: inner = -0.18; outer = -0.18; break;   // surprise
    default: break;
  }
  for (int side : {-1, 1}) {
    const double xi = 0.5 + side * 0.05, xo = 0.5 + side * 0.22;
    cv::line(c.image, c.at(xi, ey + inner + w()), c.at(xo, ey + outer + w()), ink, stroke,
             cv::LINE_AA);
  }

  const double my = 0.70 + w();
  switch (affect) {
    case 0:  // joy: wide smile
      cv::ellipse(c.image, c.at(0.5, my - 0.04), cv::Size(c.len(0.16), c.len(0.09)), 0, 10, 170,
                  ink, stroke, cv::LINE_AA);
      break;
    case 1:  // sadness: frown
      cv::ellipse(c.image, c.at(0.5, my + 0.06), cv::Size(c.len(0.13), c.len(0.07)), 0, 190, 350,
                  ink, stroke, cv::LINE_AA);
      break;
    case 2:  // anger: clenched bar
      cv::rectangle(c.image, c.at(0.38, my - 0.02), c.at(0.62, my + 0.025), ink, cv::FILLED,
                    cv::LINE_AA);
      break;
    case 3:  // fear: small open mouth
      cv::ellipse(c.image, c.at(0.5, my), cv::Size(c.len(0.06), c.len(0.045)), 0, 0, 360, ink,
                  cv::FILLED, cv::LINE_AA);
      break;
    case 4: {  // disgust: zig-zag
      std::vector<cv::Point> pts;
      for (int k = 0; k <= 6; ++k)
        pts.push_back(c.at(0.37 + k * 0.045, my + ((k % 2) ? -0.03 : 0.03)));
      cv::polylines(c.image, pts, false, ink, stroke, cv::LINE_AA);
      break;
    }
    case 5:  // surprise: large open mouth
      cv::ellipse(c.image, c.at(0.5, my + 0.02), cv::Size(c.len(0.09), c.len(0.12)), 0, 0, 360,
                  ink, cv::FILLED, cv::LINE_AA);
      break;
    default:  // neutral: straight line
      cv::line(c.image, c.at(0.39, my), c.at(0.61, my), ink, stroke, cv::LINE_AA);
      break;
  }

  cv::resize(c.image, out, cv::Size(image_size, image_size), 0, 0, cv::INTER_AREA);
}

}  // namespace toy_detail

/// Renders one toy face in RGB order. Identity controls colors and face
/// shape; affect controls eyes, brows and mouth.
inline cv::Mat render_toy_face(int identity, int affect, int image_size, std::uint64_t seed) {
  check_affect_id(affect);
  Rng rng(seed);
  cv::Mat bgr, rgb;
  toy_detail::draw_face(bgr, identity, affect, image_size, rng);
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

/// Writes `out_root/character_XX/<affect>/<affect>_NNNN.png`. Returns the
/// number of files written.
inline std::size_t generate_toy_corpus(const std::filesystem::path& out_root,
                                       const ToyCorpusOptions& opt) {
  opt.validate();
  std::size_t written = 0;
  for (int id = 0; id < opt.identities; ++id) {
    char id_name[32];
    std::snprintf(id_name, sizeof id_name, "character_%02d", id);
    for (int a = 0; a < opt.affects; ++a) {
      const auto dir = out_root / id_name / opt.affect_names[static_cast<std::size_t>(a)];
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
      for (int i = 0; i < opt.per_cell; ++i) {
        const std::uint64_t image_seed = Rng::derive(
            opt.seed, (static_cast<std::uint64_t>(id) * kAffectCount + a) * 1000003ULL + i);
        cv::Mat bgr;
        Rng rng(image_seed);
        toy_detail::draw_face(bgr, id, a, opt.image_size, rng);
        char file[64];
        std::snprintf(file, sizeof file, "%s_%04d.png", opt.affect_names[a].c_str(), i);
        const auto path = dir / file;
        if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write " + path.string());
        ++written;
      }
    }
  }
  return written;
}

}  // namespace fexgan
