// Copyright 2026 The ccbp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ccbp/viz.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ccbp/error.hpp"
#include "ccbp/gradients.hpp"
#include "ccbp/resize.hpp"
#include "ccbp/rng.hpp"

namespace ccbp {

void RenderSpec::Validate() const {
  Require(overlay_alpha >= 0.0 && overlay_alpha <= 1.0, ErrorCode::kInvalidArgument,
          "overlay_alpha must lie in [0, 1]");
  Require(scale >= 1, ErrorCode::kInvalidArgument, "scale must be >= 1");
}

std::array<double, 3> DivergingColor(double v) {
  v = std::clamp(v, -1.0, 1.0);
  if (v >= 0.0) return {1.0, 1.0 - v, 1.0 - v};
  return {1.0 + v, 1.0 + v, 1.0};
}

Tensor CenteredNorm(const Tensor& map, bool median_center, bool* all_zero) {
  Require(map.AllFinite(), ErrorCode::kInvalidArgument, "map has non-finite values");
  Tensor out = map;
  if (median_center && !out.empty()) {
    std::vector<double> v = out.storage();
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
    double med = v[mid];
    if (v.size() % 2 == 0) {
      med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<long>(mid)));
    }
    for (double& x : out.storage()) x -= med;
  }
  const double m = out.MaxAbs();
  if (all_zero != nullptr) *all_zero = m == 0.0;
  if (m > 0.0) {
    for (double& x : out.storage()) x /= m;
  }
  return out;
}

namespace {

std::uint8_t ToByte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Tensor PrepareMap(const Tensor& map, std::size_t h, std::size_t w, const RenderSpec& spec,
                  bool* all_zero) {
  Require(map.rank() == 2, ErrorCode::kShapeMismatch,
          "render expects an (H, W) map, got " + ShapeString(map.shape()));
  const Tensor sized = map.dim(0) == h && map.dim(1) == w ? map : BilinearResize(map, h, w);
  return CenteredNorm(sized, spec.median_center, all_zero);
}

RgbImage Magnify(const RgbImage& src, std::size_t s) {
  if (s == 1) return src;
  RgbImage out(src.width * s, src.height * s);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      std::copy_n(src.px(x / s, y / s), 3, out.px(x, y));
    }
  }
  return out;
}

}  // namespace

RgbImage RenderHeatmap(const Tensor& map, std::size_t height, std::size_t width,
                       const RenderSpec& spec, bool* all_zero) {
  spec.Validate();
  const Tensor v = PrepareMap(map, height, width, spec, all_zero);
  RgbImage out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const auto c = DivergingColor(v.at(y, x));
      std::uint8_t* p = out.px(x, y);
      for (int k = 0; k < 3; ++k) p[k] = ToByte(c[k]);
    }
  }
  return Magnify(out, spec.scale);
}

RgbImage RenderOverlay(const Tensor& image, const Tensor& map, const RenderSpec& spec,
                       bool* all_zero) {
  spec.Validate();
  Require(image.rank() == 3 && image.dim(0) == 3, ErrorCode::kShapeMismatch,
          "overlay expects a (3, H, W) image, got " + ShapeString(image.shape()));
  const std::size_t H = image.dim(1), W = image.dim(2);
  const Tensor v = PrepareMap(map, H, W, spec, all_zero);
  const double a = spec.overlay_alpha;
  RgbImage out(W, H);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const auto c = DivergingColor(v.at(y, x));
      std::uint8_t* p = out.px(x, y);
      for (std::size_t k = 0; k < 3; ++k) {
        p[k] = ToByte(a * c[k] + (1.0 - a) * image.at(k, y, x));
      }
    }
  }
  return Magnify(out, spec.scale);
}

GridFigure RenderGrid(const std::vector<GridCell>& cells, std::size_t cols,
                      const RenderSpec& spec, std::size_t frame) {
  Require(!cells.empty(), ErrorCode::kInvalidArgument, "grid needs at least one cell");
  Require(cols >= 1, ErrorCode::kInvalidArgument, "grid needs at least one column");
  cols = std::min(cols, cells.size());
  const std::size_t rows = (cells.size() + cols - 1) / cols;

  std::vector<RgbImage> tiles;
  GridFigure g;
  g.rows = rows;
  g.cols = cols;
  g.frame = frame;
  for (const auto& c : cells) {
    bool zero = false;
    tiles.push_back(RenderOverlay(c.image, c.map, spec, &zero));
    g.warnings += zero ? 1 : 0;
    g.labels.push_back(c.label);
  }
  std::vector<std::size_t> col_w(cols, 0), row_h(rows, 0);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::size_t r = i / cols, c = i % cols;
    if (r > 0) {
      Require(tiles[i].width == tiles[c].width, ErrorCode::kShapeMismatch,
              "grid column " + std::to_string(c) + " mixes image sizes");
    }
    col_w[c] = std::max(col_w[c], tiles[i].width);
    row_h[r] = std::max(row_h[r], tiles[i].height);
  }
  std::size_t total_w = 0, total_h = 0;
  for (auto w : col_w) total_w += w + 2 * frame;
  for (auto h : row_h) total_h += h + 2 * frame;
  g.raster = RgbImage(total_w, total_h, 255);
  std::size_t oy = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ox = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (i < tiles.size()) {
        const RgbImage& t = tiles[i];
        for (std::size_t y = 0; y < t.height; ++y) {
          std::copy_n(t.px(0, y), 3 * t.width, g.raster.px(ox + frame, oy + frame + y));
        }
      }
      ox += col_w[c] + 2 * frame;
    }
    oy += row_h[r] + 2 * frame;
  }
  return g;
}

void SaveGrid(const GridFigure& grid, const std::string& path, const nlohmann::json& metadata) {
  std::map<std::string, std::string> text;
  char key[32];
  for (std::size_t i = 0; i < grid.labels.size(); ++i) {
    std::snprintf(key, sizeof key, "cell_%03zu", i);
    text[key] = grid.labels[i];
  }
  for (auto it = metadata.begin(); it != metadata.end(); ++it) {
    if (it->is_string()) text[it.key()] = it->get<std::string>();
  }
  text["layout"] = std::to_string(grid.rows) + "x" + std::to_string(grid.cols);
  WritePng(path, grid.raster, text);
  nlohmann::json side = {{"rows", grid.rows},         {"cols", grid.cols},
                         {"frame", grid.frame},       {"labels", grid.labels},
                         {"warnings", grid.warnings}, {"metadata", metadata}};
  std::ofstream out(path + ".json");
  Require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path + ".json");
  out << side.dump(2) << '\n';
}

nlohmann::json SampleSelection::ToJson() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& x : samples) {
    s.push_back({{"index", x.index},
                 {"id", x.id},
                 {"label", x.label},
                 {"classes", x.classes},
                 {"probs", x.probs}});
  }
  return {{"status", status}, {"qualifying", qualifying}, {"samples", s}};
}

SampleSelection SelectSamples(const Classifier& model, const Dataset& data,
                              const Threshold& threshold, std::size_t count,
                              std::uint64_t seed) {
  Require(threshold.rank >= 2 && threshold.rank <= 3, ErrorCode::kInvalidArgument,
          "sample thresholds test p2 or p3, got " + threshold.ToString());
  Require(model.num_classes() >= 3, ErrorCode::kInvalidArgument,
          "sample selection records the top three classes");
  std::vector<SelectedSample> qualifying;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto y = model.Logits(AsBatch(data.image(i))).storage();
    const auto p = Softmax(y);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    if (!threshold.Accept(p[order[threshold.rank - 1]])) continue;
    SelectedSample s;
    s.index = i;
    s.id = data.id(i);
    s.label = data.label(i);
    for (std::size_t k = 0; k < 3; ++k) {
      s.classes[k] = order[k];
      s.probs[k] = p[order[k]];
    }
    qualifying.push_back(s);
  }
  SampleSelection sel;
  sel.qualifying = qualifying.size();
  if (qualifying.empty()) {
    sel.status = "empty_result";
    return sel;
  }
  Rng rng(seed);
  const std::size_t take = std::min(count, qualifying.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(qualifying[i], qualifying[i + rng.Index(qualifying.size() - i)]);
    sel.samples.push_back(qualifying[i]);
  }
  return sel;
}

std::array<std::uint8_t, 3> SelectorColor(Combinator c) {
  switch (c) {
    case Combinator::kOriginal: return {31, 119, 180};
    case Combinator::kMean: return {255, 127, 14};
    case Combinator::kMax: return {44, 160, 44};
    case Combinator::kWeighted: return {214, 39, 40};
  }
  return {0, 0, 0};
}

namespace {

void Put(RgbImage& img, long x, long y, const std::array<std::uint8_t, 3>& c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) {
    return;
  }
  std::copy(c.begin(), c.end(), img.px(static_cast<std::size_t>(x), static_cast<std::size_t>(y)));
}

void Line(RgbImage& img, long x0, long y0, long x1, long y1,
          const std::array<std::uint8_t, 3>& c) {
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    Put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

std::vector<TracePlot> PlotTraces(const PerturbationTrace& trace, std::size_t width,
                                  std::size_t height) {
  Require(!trace.series.empty(), ErrorCode::kInvalidArgument, "trace has no selectors");
  Require(width >= 80 && height >= 60, ErrorCode::kInvalidArgument, "plot too small");
  const std::size_t n = trace.n_total + 1;
  for (const auto& s : trace.series) {
    Require(s.accuracy.size() == n && s.mean_y_t.size() == n && s.mean_p_t.size() == n,
            ErrorCode::kInvalidArgument,
            "series '" + ToString(s.selector) + "' length differs from n_total + 1");
  }
  const char* names[3] = {"accuracy", "y_t", "p_t"};
  const long left = 40, right = 12, top = 24, bottom = 24;
  const long pw = static_cast<long>(width) - left - right;
  const long ph = static_cast<long>(height) - top - bottom;
  std::vector<TracePlot> plots;
  for (int panel = 0; panel < 3; ++panel) {
    auto values = [&](const SelectorSeries& s) -> const std::vector<double>& {
      return panel == 0 ? s.accuracy : (panel == 1 ? s.mean_y_t : s.mean_p_t);
    };
    double lo = values(trace.series[0])[0], hi = lo;
    for (const auto& s : trace.series) {
      for (double v : values(s)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const double pad = hi > lo ? 0.05 * (hi - lo) : std::max(1e-3, 0.05 * std::abs(hi));
    lo -= pad;
    hi += pad;

    TracePlot plot;
    plot.panel = names[panel];
    plot.raster = RgbImage(width, height, 255);
    const std::array<std::uint8_t, 3> black{0, 0, 0}, grey{200, 200, 200};
    for (int k = 1; k < 4; ++k) {
      const long gy = top + ph * k / 4;
      Line(plot.raster, left, gy, left + pw, gy, grey);
    }
    Line(plot.raster, left, top, left, top + ph, black);
    Line(plot.raster, left, top + ph, left + pw, top + ph, black);

    auto px = [&](std::size_t i) {
      return n == 1 ? left : left + static_cast<long>(std::lround(
                                        static_cast<double>(pw) * static_cast<double>(i) /
                                        static_cast<double>(n - 1)));
    };
    auto py = [&](double v) {
      return top + ph - static_cast<long>(std::lround((v - lo) / (hi - lo) * ph));
    };
    std::string legend;
    for (std::size_t si = 0; si < trace.series.size(); ++si) {
      const auto& s = trace.series[si];
      const auto color = SelectorColor(s.selector);
      const auto& v = values(s);
      if (n == 1) {
        Line(plot.raster, left, py(v[0]), left + pw, py(v[0]), color);
      }
      for (std::size_t i = 1; i < n; ++i) {
        Line(plot.raster, px(i - 1), py(v[i - 1]), px(i), py(v[i]), color);
      }
      const long lx = left + pw - 10 - 12 * static_cast<long>(trace.series.size() - 1 - si);
      for (long dy = 0; dy < 8; ++dy) {
        for (long dx = 0; dx < 8; ++dx) Put(plot.raster, lx + dx, 6 + dy, color);
      }
      char hex[16];
      std::snprintf(hex, sizeof hex, "#%02x%02x%02x", color[0], color[1], color[2]);
      legend += (legend.empty() ? "" : ",") + ToString(s.selector) + "=" + hex;
    }
    char buf[64];
    plot.text["panel"] = names[panel];
    plot.text["model_id"] = trace.model_id;
    plot.text["dataset_id"] = trace.dataset_id;
    std::snprintf(buf, sizeof buf, "%g", trace.epsilon);
    plot.text["epsilon"] = buf;
    plot.text["n_total"] = std::to_string(trace.n_total);
    plot.text["legend"] = legend;
    std::snprintf(buf, sizeof buf, "%.6g..%.6g", lo, hi);
    plot.text["y_range"] = buf;
    plots.push_back(std::move(plot));
  }
  return plots;
}

double RegressionReport::Evaluate(double y) const {
  return coefficients[0] + coefficients[1] * y + coefficients[2] * y * y;
}

double RegressionReport::SlopeAt(double y) const {
  return coefficients[1] + 2.0 * coefficients[2] * y;
}

double RegressionReport::RelativeCurvature() const {
  double mean = 0.0;
  for (const auto& p : points) mean += p.second;
  mean /= static_cast<double>(std::max<std::size_t>(points.size(), 1));
  const double span = y_max - y_min;
  return mean > 0.0 ? std::abs(coefficients[2]) * span * span / mean : 0.0;
}

nlohmann::json RegressionReport::ToJson() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& [y, n] : points) pts.push_back({y, n});
  return {{"coefficients", coefficients},
          {"r_squared", r_squared},
          {"y_min", y_min},
          {"y_max", y_max},
          {"slope_at_max", SlopeAt(y_max)},
          {"relative_curvature", RelativeCurvature()},
          {"points", pts}};
}

RgbImage PlotRegression(const RegressionReport& report, std::size_t width, std::size_t height) {
  Require(!report.points.empty(), ErrorCode::kInvalidArgument, "regression has no points");
  Require(width >= 80 && height >= 60, ErrorCode::kInvalidArgument, "plot too small");
  const long left = 40, right = 12, top = 12, bottom = 24;
  const long pw = static_cast<long>(width) - left - right;
  const long ph = static_cast<long>(height) - top - bottom;
  double lo = report.points[0].second, hi = lo;
  for (const auto& p : report.points) {
    lo = std::min(lo, p.second);
    hi = std::max(hi, p.second);
  }
  const int steps = 64;
  for (int i = 0; i <= steps; ++i) {
    const double v = report.Evaluate(report.y_min + (report.y_max - report.y_min) * i / steps);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double pad = hi > lo ? 0.05 * (hi - lo) : std::max(1e-3, 0.05 * std::abs(hi));
  lo -= pad;
  hi += pad;
  const double span = report.y_max > report.y_min ? report.y_max - report.y_min : 1.0;
  auto px = [&](double y) {
    return left + static_cast<long>(std::lround((y - report.y_min) / span * pw));
  };
  auto py = [&](double v) {
    return top + ph - static_cast<long>(std::lround((v - lo) / (hi - lo) * ph));
  };
  RgbImage img(width, height, 255);
  const std::array<std::uint8_t, 3> black{0, 0, 0}, grey{150, 150, 150}, red{214, 39, 40};
  Line(img, left, top, left, top + ph, black);
  Line(img, left, top + ph, left + pw, top + ph, black);
  for (const auto& [y, n] : report.points) {
    const long cx = px(y), cy = py(n);
    Line(img, cx - 1, cy, cx + 1, cy, grey);
    Line(img, cx, cy - 1, cx, cy + 1, grey);
  }
  for (int i = 1; i <= steps; ++i) {
    const double a = report.y_min + span * (i - 1) / steps, b = report.y_min + span * i / steps;
    Line(img, px(a), py(report.Evaluate(a)), px(b), py(report.Evaluate(b)), red);
  }
  return img;
}

RegressionReport FitQuadratic(std::vector<std::pair<double, double>> points) {
  Require(points.size() >= 3, ErrorCode::kInvalidArgument,
          "a degree-2 fit needs at least three points");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd b(n);
  RegressionReport r;
  r.y_min = r.y_max = points[0].first;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = points[static_cast<std::size_t>(i)].first;
    A(i, 0) = 1.0;
    A(i, 1) = y;
    A(i, 2) = y * y;
    b(i) = points[static_cast<std::size_t>(i)].second;
    r.y_min = std::min(r.y_min, y);
    r.y_max = std::max(r.y_max, y);
  }
  Require(r.y_max > r.y_min, ErrorCode::kInvalidArgument,
          "degenerate regression: all logits are equal");
  const auto qr = A.colPivHouseholderQr();
  Require(qr.rank() == 3, ErrorCode::kInvalidArgument,
          "degenerate regression: fewer than three distinct logits");
  const Eigen::Vector3d c = qr.solve(b);
  for (int k = 0; k < 3; ++k) r.coefficients[k] = c(k);
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  const double ss_res = (A * c - b).squaredNorm();
  r.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  r.points = std::move(points);
  return r;
}

RegressionReport NormLogitRegression(const Classifier& model, const Dataset& data,
                                     std::size_t num_images, std::size_t classes_per_image,
                                     std::uint64_t seed, NormKind norm) {
  Require(num_images >= 1 && classes_per_image >= 1, ErrorCode::kInvalidArgument,
          "num_images and classes_per_image must be >= 1");
  Require(!data.empty(), ErrorCode::kInvalidArgument, "dataset is empty");
  Rng rng(seed);
  std::vector<std::size_t> images(data.size());
  std::iota(images.begin(), images.end(), 0);
  const std::size_t take = std::min(num_images, images.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(images[i], images[i + rng.Index(images.size() - i)]);
  const std::size_t C = model.num_classes();
  const std::size_t k = std::min(classes_per_image, C);

  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < take; ++i) {
    const Tensor& x = data.image(images[i]);
    std::vector<std::size_t> classes(C);
    std::iota(classes.begin(), classes.end(), 0);
    for (std::size_t j = 0; j < k; ++j) std::swap(classes[j], classes[j + rng.Index(C - j)]);
    const auto y = model.Logits(AsBatch(x)).storage();
    for (std::size_t j = 0; j < k; ++j) {
      const Tensor g = GradWrtInput(model, x, {SeedMode::kLogit, classes[j]});
      double v = 0.0;
      if (norm == NormKind::kL2) {
        v = g.Norm2();
      } else {
        for (double e : g.storage()) v += std::abs(e);
      }
      pts.emplace_back(y[classes[j]], v);
    }
  }
  return FitQuadratic(std::move(pts));
}

}  // namespace ccbp
