#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "topogan/error.hpp"
#include "topogan/experiment.hpp"
#include "topogan/io.hpp"

namespace topogan::exp {

using Json = nlohmann::ordered_json;

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{
      "variant",        "width",       "data_condition", "balancing",   "status",        "folds",
      "accuracy_mean",  "accuracy_std", "precision_mean", "precision_std", "recall_mean",  "recall_std",
      "f1_mean",        "f1_std",      "degenerate",     "cell_seed",   "error"};
  return cols;
}

std::string report_csv(const ExperimentReport& r) {
  std::ostringstream s;
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) s << (i ? "," : "") << cols[i];
  s << "\n";
  auto f = [](double v) { return io::format_double(v); };
  for (const auto& c : r.cells) {
    s << c.variant << ',' << c.width << ',' << to_string(c.condition) << ',' << to_string(c.balancing) << ','
      << (c.ok ? "ok" : "failed") << ',' << c.folds.size() << ',' << f(c.accuracy.mean) << ',' << f(c.accuracy.std)
      << ',' << f(c.precision.mean) << ',' << f(c.precision.std) << ',' << f(c.recall.mean) << ',' << f(c.recall.std)
      << ',' << f(c.f1.mean) << ',' << f(c.f1.std) << ',' << c.degenerate << ',' << c.seed << ',' << c.error << "\n";
  }
  return s.str();
}

std::vector<CellResult> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("report.csv: empty");
  if (io::split(line, ',') != report_columns()) throw IoError("report.csv: unexpected header '" + line + "'");
  std::vector<CellResult> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto v = io::split(line, ',');
    if (v.size() != report_columns().size()) throw IoError("report.csv: bad row '" + line + "'");
    CellResult c;
    try {
      c.variant = v[0];
      c.width = std::stoull(v[1]);
      c.condition = parse_condition(v[2]);
      c.balancing = parse_balancing(v[3]);
      if (v[4] != "ok" && v[4] != "failed") throw IoError("report.csv: bad status '" + v[4] + "'");
      c.ok = v[4] == "ok";
      c.folds.resize(std::stoull(v[5]));
      c.accuracy = {io::parse_double(v[6]), io::parse_double(v[7])};
      c.precision = {io::parse_double(v[8]), io::parse_double(v[9])};
      c.recall = {io::parse_double(v[10]), io::parse_double(v[11])};
      c.f1 = {io::parse_double(v[12]), io::parse_double(v[13])};
      c.degenerate = std::stoull(v[14]);
      c.seed = std::stoull(v[15]);
      c.error = v[16];
    } catch (const std::logic_error& e) {
      throw IoError("report.csv: bad row '" + line + "': " + e.what());
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

namespace {

// Finite numbers as JSON numbers; "inf", "-inf", "nan" as strings.
Json number(double v) {
  if (std::isfinite(v)) return v;
  return io::format_double(v);
}

Json mean_std_json(const MeanStd& m) { return Json{{"mean", number(m.mean)}, {"std", number(m.std)}}; }

}  // namespace

std::string report_json(const ExperimentReport& r) {
  Json j;
  j["version"] = r.version;
  j["master_seed"] = r.master_seed;
  j["profile"] = r.profile;
  j["num_classes"] = r.num_classes;
  j["cv_folds"] = r.cv_folds;
  j["corpus_images"] = r.corpus_images;
  j["seed_derivation"] = "cell_seed = splitmix64(splitmix64(master_seed) xor fnv1a64(descriptor)), "
                         "descriptor = cell/<variant>/<data_condition>/<balancing>";
  j["aggregation"] = "mean and sample standard deviation (n-1) over cross-validation folds; macro-averaged per fold";
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    Json folds = Json::array();
    for (const auto& f : c.folds)
      folds.push_back(Json{{"accuracy", number(f.macro.accuracy)},
                           {"precision", number(f.macro.precision)},
                           {"recall", number(f.macro.recall)},
                           {"f1", number(f.macro.f1)},
                           {"degenerate", f.macro.degenerate},
                           {"train_images", f.train_images},
                           {"test_images", f.test_images}});
    cells.push_back(Json{{"variant", c.variant},
                         {"width", c.width},
                         {"data_condition", to_string(c.condition)},
                         {"balancing", to_string(c.balancing)},
                         {"status", c.ok ? "ok" : "failed"},
                         {"error", c.error},
                         {"cell_seed", c.seed},
                         {"accuracy", mean_std_json(c.accuracy)},
                         {"precision", mean_std_json(c.precision)},
                         {"recall", mean_std_json(c.recall)},
                         {"f1", mean_std_json(c.f1)},
                         {"degenerate", c.degenerate},
                         {"folds", folds}});
  }
  j["cells"] = cells;
  if (r.has_quality) {
    const auto& q = r.quality;
    j["quality"] = Json{{"n", q.n},
                        {"mean_ssim", number(q.ssim)},
                        {"mean_psnr", number(q.psnr)},
                        {"mean_mse", number(q.mse)},
                        {"fid", number(q.fid)},
                        {"fid_classes", q.fid_classes},
                        {"skipped_classes", q.skipped_classes},
                        {"reference_ssim", kReferenceSsim},
                        {"reference_psnr", kReferencePsnr}};
  } else {
    j["quality"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string quality_csv(const QualityResult& q) {
  std::ostringstream s;
  s << "n,mean_ssim,mean_psnr,mean_mse,fid,fid_classes,reference_ssim,reference_psnr\n"
    << q.n << ',' << io::format_double(q.ssim) << ',' << io::format_double(q.psnr) << ',' << io::format_double(q.mse)
    << ',' << io::format_double(q.fid) << ',' << q.fid_classes << ',' << io::format_double(kReferenceSsim) << ','
    << io::format_double(kReferencePsnr) << "\n";
  return s.str();
}

std::string att_csv(const std::vector<AttRow>& rows) {
  std::ostringstream s;
  s << "variant,width,parameters,att_mean_s,att_std_s\n";
  char buf[64];
  for (const auto& r : rows) {
    s << r.variant << ',' << r.width << ',' << r.parameters << ',';
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", r.att.mean_seconds, r.att.std_seconds);
    s << buf << "\n";
  }
  return s.str();
}

// ---------------------------------------------------------------- images

namespace {

constexpr std::size_t kTile = data::kImageSize;
constexpr std::size_t kGap = 2;
constexpr std::uint8_t kBackground = 32;

data::Image canvas(std::size_t w, std::size_t h, std::uint8_t fill) {
  data::Image img;
  img.width = w;
  img.height = h;
  img.pixels.assign(w * h * data::kChannels, fill);
  return img;
}

void blit(data::Image& dst, const data::Image& src, std::size_t x0, std::size_t y0) {
  for (std::size_t y = 0; y < src.height; ++y)
    for (std::size_t x = 0; x < src.width; ++x)
      for (std::size_t c = 0; c < data::kChannels; ++c) dst.at(y0 + y, x0 + x, c) = src.at(y, x, c);
}

void set_px(data::Image& img, long x, long y, std::array<std::uint8_t, 3> rgb) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  for (std::size_t c = 0; c < 3; ++c) img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = rgb[c];
}

// Bresenham.
void line(data::Image& img, long x0, long y0, long x1, long y1, std::array<std::uint8_t, 3> rgb) {
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    set_px(img, x0, y0, rgb);
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

data::Image grid_generated(const data::Dataset& generated, std::size_t num_classes, std::size_t per_row) {
  const std::size_t w = per_row * (kTile + kGap) + kGap, h = num_classes * (kTile + kGap) + kGap;
  auto img = canvas(w, h, kBackground);
  std::vector<std::size_t> used(num_classes, 0);
  for (const auto& im : generated.images) {
    const auto c = static_cast<std::size_t>(im.class_label);
    if (c >= num_classes || used[c] >= per_row) continue;
    blit(img, im.image, kGap + used[c] * (kTile + kGap), kGap + c * (kTile + kGap));
    ++used[c];
  }
  return img;
}

data::Image grid_pairs(const data::Dataset& generated, const data::Dataset& real,
                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t max_rows) {
  // One pair per class first, so every class shows up when possible.
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  std::vector<int> seen;
  for (const auto& p : pairs) {
    const int c = generated.images.at(p.first).class_label;
    if (std::find(seen.begin(), seen.end(), c) == seen.end() && chosen.size() < max_rows) {
      seen.push_back(c);
      chosen.push_back(p);
    }
  }
  for (const auto& p : pairs)
    if (chosen.size() < max_rows && std::find(chosen.begin(), chosen.end(), p) == chosen.end()) chosen.push_back(p);
  const std::size_t rows = std::max<std::size_t>(chosen.size(), 1);
  auto img = canvas(2 * (kTile + kGap) + kGap + 4, rows * (kTile + kGap) + kGap, kBackground);
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    const std::size_t y = kGap + r * (kTile + kGap);
    blit(img, real.images.at(chosen[r].second).image, kGap, y);
    blit(img, generated.images.at(chosen[r].first).image, kGap + kTile + kGap + 4, y);
  }
  return img;
}

data::Image plot_losses(const std::vector<gan::GanHistory>& runs) {
  constexpr std::size_t W = 480, H = 160, margin = 12;
  const std::size_t panels = std::max<std::size_t>(runs.size(), 1);
  auto img = canvas(W, panels * H, 255);
  constexpr std::array<std::uint8_t, 3> axis{0, 0, 0}, red{200, 30, 30}, blue{30, 60, 200}, grid{225, 225, 225};
  for (std::size_t p = 0; p < panels; ++p) {
    const long top = static_cast<long>(p * H + margin), bottom = static_cast<long>((p + 1) * H - margin);
    const long left = static_cast<long>(margin), right = static_cast<long>(W - margin);
    for (int q = 1; q < 4; ++q) {
      const long y = bottom - (bottom - top) * q / 4;
      line(img, left, y, right, y, grid);
    }
    line(img, left, top, left, bottom, axis);
    line(img, left, bottom, right, bottom, axis);
    if (p >= runs.size() || runs[p].size() == 0) continue;
    const auto& h = runs[p];
    double hi = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (std::isfinite(h.loss_d[i])) hi = std::max(hi, h.loss_d[i]);
      if (std::isfinite(h.loss_g[i])) hi = std::max(hi, h.loss_g[i]);
    }
    if (hi <= 0) hi = 1;
    auto px = [&](std::size_t i) {
      return left + (h.size() > 1 ? static_cast<long>(std::lround(static_cast<double>(i) * (right - left) /
                                                                  static_cast<double>(h.size() - 1)))
                                  : 0);
    };
    auto py = [&](double v) {
      v = std::clamp(std::isfinite(v) ? v : hi, 0.0, hi);
      return bottom - static_cast<long>(std::lround(v / hi * static_cast<double>(bottom - top)));
    };
    for (const auto* series : {&h.loss_d, &h.loss_g}) {
      const auto color = series == &h.loss_d ? red : blue;
      for (std::size_t i = 1; i < h.size(); ++i) line(img, px(i - 1), py((*series)[i - 1]), px(i), py((*series)[i]), color);
      if (h.size() == 1) set_px(img, px(0), py((*series)[0]), color);
    }
  }
  return img;
}

void emit(const ExperimentConfig& cfg, const RunArtifacts& run) {
  const io::fs::path dir = cfg.output_dir;
  io::ensure_dir(dir);
  io::write_text(dir / "config.resolved.txt", to_config_text(cfg));
  if (cfg.formats.csv) {
    io::write_text(dir / "report.csv", report_csv(run.report));
    if (run.report.has_quality) io::write_text(dir / "quality.csv", quality_csv(run.report.quality));
    if (!run.att.empty()) io::write_text(dir / "att.csv", att_csv(run.att));
    for (const auto& g : run.quality_generators) {
      const std::string tag = g.target_class ? std::to_string(*g.target_class) : "conditional";
      io::write_gan_history(dir / ("gan_history_" + tag + ".csv"), g.history);
    }
  }
  if (cfg.formats.json) io::write_text(dir / "report.json", report_json(run.report));
  if (cfg.formats.png) {
    io::write_png(dir / "grid_generated.png", grid_generated(run.quality_generated, run.report.num_classes));
    if (run.report.has_quality)
      io::write_png(dir / "grid_pairs.png", grid_pairs(run.quality_generated, run.quality_real, run.report.quality.pairs));
    else
      io::write_png(dir / "grid_pairs.png", grid_pairs({}, {}, {}));
    std::vector<gan::GanHistory> runs;
    for (const auto& g : run.quality_generators) runs.push_back(g.history);
    io::write_png(dir / "gan_losses.png", plot_losses(runs));
  }
}

}  // namespace topogan::exp
