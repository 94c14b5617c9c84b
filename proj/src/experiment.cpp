#include "topogan/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "topogan/error.hpp"

namespace topogan::exp {

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double s = 0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double q = 0;
    for (double x : v) q += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(q / static_cast<double>(v.size() - 1));
  }
  return r;
}

std::string CellResult::descriptor() const {
  return "cell/" + variant + "/" + to_string(condition) + "/" + to_string(balancing);
}

namespace {

std::string variant_name(std::size_t width) { return "cnn_w" + std::to_string(width); }

// Keeps report.csv one row per cell.
std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = c == ',' ? ';' : ' ';
  return s;
}

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

// Training-side data of one (balancing, fold) pair. GANs and synthetic images
// are built on first use.
struct FoldData {
  data::Dataset train_real, val, test;
  std::optional<std::vector<gan::TrainedGenerator>> gans;
  std::optional<data::Dataset> synthetic;
};

class Context {
 public:
  Context(const ExperimentConfig& cfg, Progress progress) : cfg_(cfg), progress_(std::move(progress)) {
    data::CorpusOptions o;
    o.counts = cfg.corpus_counts;
    o.seed = cfg.master_seed;
    o.margin = cfg.margin;
    corpus_ = data::generate_corpus(o);
    k_ = active_classes(cfg);
    folds_ = data::kfold_patient_split(corpus_, cfg.cv_folds, derive_seed(cfg.master_seed, "split"));
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const data::Dataset& corpus() const { return corpus_; }
  std::size_t num_classes() const { return k_; }
  const Progress& progress() const { return progress_; }

  FoldData& fold(Balancing b, std::size_t f) {
    const auto key = std::make_pair(b, f);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(key, prepare(b, f)).first->second;
  }

  const std::vector<gan::TrainedGenerator>& gans(Balancing b, std::size_t f) {
    auto& fd = fold(b, f);
    if (!fd.gans) {
      say(progress_, "fold " + std::to_string(f) + " (" + to_string(b) + "): training GANs on " +
                         std::to_string(fd.train_real.size()) + " images");
      auto g = cfg_.gan;
      g.seed = derive_seed(cfg_.master_seed, "gan/" + to_string(b) + "/fold" + std::to_string(f));
      fd.gans = gan::train_gans(fd.train_real, k_, g);
    }
    return *fd.gans;
  }

  const data::Dataset& synthetic(Balancing b, std::size_t f) {
    auto& fd = fold(b, f);
    if (!fd.synthetic) {
      const auto& g = gans(b, f);
      fd.synthetic = gan::synthesize(g, cfg_.synthetic_per_class, k_,
                                     derive_seed(cfg_.master_seed, "synth/" + to_string(b) + "/fold" + std::to_string(f)));
    }
    return *fd.synthetic;
  }

 private:
  FoldData prepare(Balancing b, std::size_t f) {
    const auto& split = folds_.at(f);
    FoldData fd;
    fd.test = corpus_.subset(split.test);
    const auto train_all = corpus_.subset(split.train);
    if (cfg_.val_fraction > 0) {
      auto [tr, va] = data::patient_holdout(train_all, cfg_.val_fraction,
                                            derive_seed(cfg_.master_seed, "val/fold" + std::to_string(f)));
      fd.train_real = std::move(tr);
      fd.val = std::move(va);
    } else {
      fd.train_real = train_all;
    }
    Rng rng(derive_seed(cfg_.master_seed, "balance/" + to_string(b) + "/fold" + std::to_string(f)));
    if (b == Balancing::ovs) fd.train_real = data::oversample(fd.train_real, rng, k_);
    if (b == Balancing::uns) fd.train_real = data::undersample(fd.train_real, rng, k_);

    const auto test_patients = fd.test.patients();
    const std::set<int> held(test_patients.begin(), test_patients.end());
    for (const auto* ds : {&fd.train_real, &fd.val})
      for (const auto& im : ds->images)
        if (held.count(im.patient_id))
          throw ValueError("leakage: test patient " + std::to_string(im.patient_id) + " appears in training data of fold " +
                           std::to_string(f));
    return fd;
  }

  ExperimentConfig cfg_;
  Progress progress_;
  data::Dataset corpus_;
  std::size_t k_ = 0;
  std::vector<data::Fold> folds_;
  std::map<std::pair<Balancing, std::size_t>, FoldData> cache_;
};

data::Dataset training_set(Context& ctx, DataCondition c, Balancing b, std::size_t f) {
  const auto& fd = ctx.fold(b, f);
  switch (c) {
    case DataCondition::original:
      return fd.train_real;
    case DataCondition::synthesized:
      return ctx.synthetic(b, f);
    case DataCondition::original_plus_synthesized: {
      auto d = fd.train_real;
      d.append(ctx.synthetic(b, f));
      return d;
    }
  }
  return {};
}

CellResult run_cell_in(Context& ctx, std::size_t width, DataCondition condition, Balancing balancing) {
  const auto& cfg = ctx.cfg();
  CellResult cell;
  cell.variant = variant_name(width);
  cell.width = width;
  cell.condition = condition;
  cell.balancing = balancing;
  cell.seed = derive_seed(cfg.master_seed, cell.descriptor());
  say(ctx.progress(), cell.descriptor());
  try {
    std::vector<double> acc, prec, rec, f1;
    for (std::size_t f = 0; f < cfg.cv_folds; ++f) {
      const auto train = training_set(ctx, condition, balancing, f);
      const auto& fd = ctx.fold(balancing, f);
      const std::uint64_t seed = derive_seed(cell.seed, "fold/" + std::to_string(f));
      auto model = clf::build_classifier(clf::ClassifierConfig::with_base_width(width, ctx.num_classes()), seed);
      auto tc = cfg.classifier;
      tc.seed = seed;
      clf::train_classifier(model, train, fd.val, tc);
      const auto pred = clf::predict_batch(model, fd.test);
      const auto truth = fd.test.labels();
      const auto m = metrics::macro_metrics(metrics::confusion_matrix(pred.labels, truth, ctx.num_classes()));
      cell.folds.push_back({m, train.size(), fd.test.size()});
      acc.push_back(m.accuracy);
      prec.push_back(m.precision);
      rec.push_back(m.recall);
      f1.push_back(m.f1);
      cell.degenerate += m.degenerate;
      say(ctx.progress(), "  fold " + std::to_string(f) + ": accuracy " + std::to_string(m.accuracy));
    }
    cell.accuracy = mean_std(acc);
    cell.precision = mean_std(prec);
    cell.recall = mean_std(rec);
    cell.f1 = mean_std(f1);
    cell.ok = true;
  } catch (const std::exception& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    cell.ok = false;
    cell.error = sanitize(e.what());
    cell.folds.clear();
    cell.degenerate = 0;
    cell.accuracy = cell.precision = cell.recall = cell.f1 = {nan, nan};
    say(ctx.progress(), "  failed: " + cell.error);
  }
  return cell;
}

}  // namespace

CellResult run_cell(const ExperimentConfig& cfg, std::size_t width, DataCondition condition, Balancing balancing,
                    const Progress& progress) {
  Context ctx(cfg, progress);
  return run_cell_in(ctx, width, condition, balancing);
}

data::Dataset sample_for_quality(const std::vector<gan::TrainedGenerator>& gens, std::size_t n, std::size_t num_classes,
                                 std::uint64_t seed) {
  std::vector<int> covered;
  for (std::size_t c = 0; c < num_classes; ++c)
    for (const auto& g : gens)
      if (!g.target_class || *g.target_class == static_cast<int>(c)) {
        covered.push_back(static_cast<int>(c));
        break;
      }
  if (covered.empty() || n == 0) throw ValueError("sample_for_quality: no generators or n = 0");
  data::Dataset out;
  for (std::size_t i = 0; i < covered.size(); ++i) {
    const std::size_t share = n / covered.size() + (i < n % covered.size() ? 1 : 0);
    if (share == 0) continue;
    const int c = covered[i];
    for (const auto& g : gens)
      if (!g.target_class || *g.target_class == c) {
        out.append(gan::synthesize(*g.generator, share, c, seed));
        break;
      }
  }
  return out;
}

QualityResult quality_study(const data::Dataset& generated, const data::Dataset& real,
                            const std::function<Tensor<double>(const data::Dataset&)>& embed, const Progress& warn) {
  if (generated.size() == 0) throw ValueError("quality_study: no generated images");
  QualityResult q;
  std::map<int, std::vector<std::size_t>> real_by_class, gen_by_class;
  for (std::size_t i = 0; i < real.size(); ++i) real_by_class[real.images[i].class_label].push_back(i);
  for (std::size_t i = 0; i < generated.size(); ++i) gen_by_class[generated.images[i].class_label].push_back(i);

  double ssim_sum = 0, psnr_sum = 0, mse_sum = 0;
  for (const auto& [c, gen_idx] : gen_by_class) {
    const auto it = real_by_class.find(c);
    if (it == real_by_class.end()) {
      q.skipped_classes.push_back(c);
      say(warn, "quality: class " + std::to_string(c) + " has no real images; skipped");
      continue;
    }
    for (std::size_t gi : gen_idx) {
      std::size_t best = it->second.front();
      double best_mse = std::numeric_limits<double>::infinity();
      for (std::size_t ri : it->second) {
        const double m = metrics::mse(generated.images[gi].image, real.images[ri].image);
        if (m < best_mse) {
          best_mse = m;
          best = ri;
        }
      }
      q.pairs.emplace_back(gi, best);
      mse_sum += best_mse;
      psnr_sum += metrics::psnr_from_mse(best_mse);
      ssim_sum += metrics::ssim(generated.images[gi].image, real.images[best].image);
    }
  }
  q.n = q.pairs.size();
  if (q.n == 0) throw ValueError("quality_study: no generated image has a real image of its class");
  q.ssim = ssim_sum / static_cast<double>(q.n);
  q.psnr = psnr_sum / static_cast<double>(q.n);
  q.mse = mse_sum / static_cast<double>(q.n);

  double fid_sum = 0;
  for (const auto& [c, gen_idx] : gen_by_class) {
    const auto it = real_by_class.find(c);
    if (it == real_by_class.end()) continue;
    if (gen_idx.size() < 2 || it->second.size() < 2) {
      say(warn, "quality: class " + std::to_string(c) + " has fewer than 2 images on one side; left out of FID");
      continue;
    }
    fid_sum += metrics::fid(embed(real.subset(it->second)), embed(generated.subset(gen_idx)));
    ++q.fid_classes;
  }
  q.fid = q.fid_classes ? fid_sum / static_cast<double>(q.fid_classes) : std::numeric_limits<double>::quiet_NaN();
  return q;
}

std::vector<AttRow> timing_study(const std::vector<std::size_t>& widths, std::size_t num_classes,
                                 const data::Dataset& images, std::size_t repetitions, std::uint64_t seed) {
  if (images.size() < 100) throw ValueError("timing_study: needs at least 100 images, got " + std::to_string(images.size()));
  std::vector<AttRow> rows;
  for (std::size_t w : widths) {
    auto m = clf::build_classifier(clf::ClassifierConfig::with_base_width(w, num_classes),
                                   derive_seed(seed, "att/" + variant_name(w)));
    rows.push_back({variant_name(w), w, m.parameter_count(), clf::measure_att(m, images, repetitions)});
  }
  return rows;
}

RunArtifacts run_experiment(const ExperimentConfig& cfg, const Progress& progress) {
  Context ctx(cfg, progress);
  RunArtifacts out;
  auto& r = out.report;
  r.master_seed = cfg.master_seed;
  r.profile = gan::to_string(cfg.profile);
  r.num_classes = ctx.num_classes();
  r.cv_folds = cfg.cv_folds;
  r.corpus_images = ctx.corpus().size();

  for (auto b : cfg.balancings)
    for (auto c : cfg.data_conditions)
      for (auto w : cfg.widths) r.cells.push_back(run_cell_in(ctx, w, c, b));

  // Quality block and image grids come from the fold-0 GANs on unbalanced data.
  try {
    const auto& gens = ctx.gans(Balancing::none, 0);
    out.quality_generators = gens;
    out.quality_real = ctx.fold(Balancing::none, 0).train_real;
    out.quality_generated =
        sample_for_quality(gens, cfg.quality_samples, ctx.num_classes(), derive_seed(cfg.master_seed, "quality/sample"));
    say(progress, "quality: training the embedding network");
    auto embedder = clf::build_classifier(clf::ClassifierConfig::with_base_width(cfg.widths.back(), ctx.num_classes()),
                                          derive_seed(cfg.master_seed, "quality/embedder"));
    auto tc = cfg.classifier;
    tc.seed = derive_seed(cfg.master_seed, "quality/embedder");
    clf::train_classifier(embedder, out.quality_real, {}, tc);
    r.quality = quality_study(out.quality_generated, out.quality_real,
                              [&](const data::Dataset& d) { return clf::extract_embeddings(embedder, d); }, progress);
    r.has_quality = true;
  } catch (const std::exception& e) {
    say(progress, std::string("quality: skipped: ") + e.what());
  }

  // Timing runs last, alone.
  if (cfg.att_images >= 100 && ctx.corpus().size() >= cfg.att_images) {
    std::vector<std::size_t> picks(cfg.att_images);
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i * ctx.corpus().size() / cfg.att_images;
    out.att = timing_study(cfg.widths, ctx.num_classes(), ctx.corpus().subset(picks), cfg.att_repetitions,
                           cfg.master_seed);
  } else {
    say(progress, "timing: skipped (needs att_images >= 100 and that many corpus images)");
  }
  return out;
}

}  // namespace topogan::exp
