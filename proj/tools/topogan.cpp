// topogan command-line interface.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "topogan/error.hpp"
#include "topogan/experiment.hpp"
#include "topogan/io.hpp"

using namespace topogan;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kConfigError = 1, kRuntimeError = 2;

struct Common {
  std::string config_path, profile, out, formats;
  std::optional<std::uint64_t> seed;
};

void log(const std::string& msg) { std::cerr << "[topogan] " << msg << "\n"; }

exp::ExperimentConfig load_config(const Common& c) {
  exp::KeyValues kv;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw ConfigError("cannot read config file " + c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    kv = exp::parse_key_values(ss.str());
  }
  if (c.seed) kv["master_seed"] = std::to_string(*c.seed);
  if (!c.out.empty()) kv["output_dir"] = c.out;
  if (!c.formats.empty()) kv["formats"] = c.formats;
  std::optional<gan::Profile> profile;
  if (!c.profile.empty()) {
    try {
      profile = gan::parse_profile(c.profile);
    } catch (const ValueError& e) {
      throw ConfigError(e.what());
    }
  }
  return exp::resolve_config(kv, profile);
}

data::Dataset corpus_from(const exp::ExperimentConfig& cfg, const std::string& dir) {
  if (!dir.empty()) return io::read_corpus(dir).dataset;
  data::CorpusOptions o;
  o.counts = cfg.corpus_counts;
  o.seed = cfg.master_seed;
  o.margin = cfg.margin;
  return data::generate_corpus(o);
}

std::size_t classes_in(const data::Dataset& ds) {
  int hi = -1;
  for (const auto& im : ds.images) hi = std::max(hi, im.class_label);
  if (hi < 1) throw ValueError("dataset needs at least two classes");
  return static_cast<std::size_t>(hi + 1);
}

std::vector<gan::TrainedGenerator> load_generators(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".bin") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no generator .bin files in " + dir.string());
  std::vector<gan::TrainedGenerator> gens;
  for (const auto& f : files) gens.push_back(io::load_generator(f));
  return gens;
}

int cmd_corpus(const exp::ExperimentConfig& cfg) {
  const auto ds = corpus_from(cfg, "");
  io::write_corpus(cfg.output_dir, ds, cfg.master_seed);
  log("wrote " + std::to_string(ds.size()) + " images to " + cfg.output_dir);
  return kOk;
}

int cmd_train_gan(const exp::ExperimentConfig& cfg, const std::string& corpus_dir, std::optional<int> only_class) {
  const auto ds = corpus_from(cfg, corpus_dir);
  const std::size_t k = classes_in(ds);
  auto g = cfg.gan;
  g.seed = cfg.master_seed;
  std::vector<gan::TrainedGenerator> gens;
  if (only_class) {
    g.seed = derive_seed(cfg.master_seed, "gan/class/" + std::to_string(*only_class));
    gens.push_back(gan::train_cgan(ds, *only_class, k, g));
  } else {
    gens = gan::train_gans(ds, k, g);
  }
  const fs::path out = cfg.output_dir;
  std::vector<gan::GanHistory> runs;
  for (const auto& t : gens) {
    const std::string tag = t.target_class ? std::to_string(*t.target_class) : "conditional";
    io::save_generator(out / ("generator_" + tag + ".bin"), t, cfg.profile);
    if (cfg.formats.csv) io::write_gan_history(out / ("gan_history_" + tag + ".csv"), t.history);
    runs.push_back(t.history);
    log("generator " + tag + ": " + std::to_string(t.history.size()) + " iterations, final loss_d " +
        io::format_double(t.history.loss_d.back()));
  }
  if (cfg.formats.png) io::write_png(out / "gan_losses.png", exp::plot_losses(runs));
  return kOk;
}

int cmd_synthesize(const exp::ExperimentConfig& cfg, const std::string& gen_dir, std::size_t n) {
  const auto gens = load_generators(gen_dir);
  std::size_t k = 0;
  for (const auto& g : gens)
    k = std::max(k, g.target_class ? static_cast<std::size_t>(*g.target_class) + 1 : g.generator->config().label_classes);
  const auto ds = gan::synthesize(gens, n ? n : cfg.synthetic_per_class, k, derive_seed(cfg.master_seed, "synthesize"));
  io::write_synthesized(cfg.output_dir, ds);
  if (cfg.formats.png) io::write_png(fs::path(cfg.output_dir) / "grid_generated.png", exp::grid_generated(ds, k));
  log("wrote " + std::to_string(ds.size()) + " images to " + cfg.output_dir);
  return kOk;
}

int cmd_train_classifier(const exp::ExperimentConfig& cfg, const std::string& corpus_dir, const std::string& synth_dir,
                         std::size_t width) {
  auto ds = corpus_from(cfg, corpus_dir);
  const std::size_t k = classes_in(ds);
  auto [train, val] = data::patient_holdout(ds, cfg.val_fraction, derive_seed(cfg.master_seed, "val"));
  if (!synth_dir.empty()) train.append(io::read_synthesized(synth_dir));
  const std::size_t w = width ? width : cfg.widths.front();
  auto model = clf::build_classifier(clf::ClassifierConfig::with_base_width(w, k), cfg.master_seed);
  auto tc = cfg.classifier;
  tc.seed = cfg.master_seed;
  const auto r = clf::train_classifier(model, train, val, tc, [](std::size_t e, const clf::TrainHistory& h) {
    log("epoch " + std::to_string(e + 1) + ": loss " + io::format_double(h.train_loss.back()) + ", val_acc " +
        io::format_double(h.val_acc.back()));
  });
  const fs::path out = cfg.output_dir;
  io::save_classifier(out / "classifier.bin", model);
  io::write_history(out / "history.csv", r.history);
  return kOk;
}

int cmd_evaluate(const exp::ExperimentConfig& cfg, const std::string& model_path, const std::string& corpus_dir,
                 const std::string& synth_dir) {
  auto model = io::load_classifier(model_path);
  const auto ds = synth_dir.empty() ? corpus_from(cfg, corpus_dir) : io::read_synthesized(synth_dir);
  const std::size_t k = model.config().num_classes;
  const auto pred = clf::predict_batch(model, ds);
  const auto cm = metrics::confusion_matrix(pred.labels, ds.labels(), k);
  const auto m = metrics::macro_metrics(cm);
  const fs::path out = cfg.output_dir;
  if (cfg.formats.csv) {
    std::ostringstream s;
    s << "images,accuracy,precision,recall,f1,degenerate\n"
      << ds.size() << ',' << io::format_double(m.accuracy) << ',' << io::format_double(m.precision) << ','
      << io::format_double(m.recall) << ',' << io::format_double(m.f1) << ',' << m.degenerate << "\n";
    io::write_text(out / "evaluation.csv", s.str());
    std::ostringstream c;
    c << "true\\pred";
    for (std::size_t j = 0; j < k; ++j) c << ',' << j;
    c << "\n";
    for (std::size_t i = 0; i < k; ++i) {
      c << i;
      for (std::size_t j = 0; j < k; ++j) c << ',' << cm.at(i, j);
      c << "\n";
    }
    io::write_text(out / "confusion.csv", c.str());
  }
  if (cfg.formats.json) {
    nlohmann::ordered_json j{{"images", ds.size()},  {"accuracy", m.accuracy}, {"precision", m.precision},
                             {"recall", m.recall},   {"f1", m.f1},             {"degenerate", m.degenerate}};
    io::write_text(out / "evaluation.json", j.dump(2) + "\n");
  }
  std::printf("accuracy %.4f precision %.4f recall %.4f f1 %.4f (%zu images)\n", m.accuracy, m.precision, m.recall,
              m.f1, ds.size());
  return kOk;
}

int cmd_run(const exp::ExperimentConfig& cfg) {
  const auto run = exp::run_experiment(cfg, log);
  exp::emit(cfg, run);
  std::size_t failed = 0;
  for (const auto& c : run.report.cells) {
    failed += !c.ok;
    std::printf("%-8s %-22s %-5s %s\n", c.variant.c_str(), exp::to_string(c.condition).c_str(),
                exp::to_string(c.balancing).c_str(),
                c.ok ? ("accuracy " + io::format_double(c.accuracy.mean) + " +- " + io::format_double(c.accuracy.std)).c_str()
                     : ("FAILED: " + c.error).c_str());
  }
  log("outputs in " + cfg.output_dir);
  return failed == run.report.cells.size() ? kRuntimeError : kOk;
}

int cmd_quality(const exp::ExperimentConfig& cfg, const std::string& gen_dir, const std::string& corpus_dir) {
  const auto gens = load_generators(gen_dir);
  const auto real = corpus_from(cfg, corpus_dir);
  const std::size_t k = classes_in(real);
  const auto generated = exp::sample_for_quality(gens, cfg.quality_samples, k, derive_seed(cfg.master_seed, "quality/sample"));
  auto embedder = clf::build_classifier(clf::ClassifierConfig::with_base_width(cfg.widths.back(), k),
                                        derive_seed(cfg.master_seed, "quality/embedder"));
  auto tc = cfg.classifier;
  tc.seed = derive_seed(cfg.master_seed, "quality/embedder");
  log("training the embedding network on " + std::to_string(real.size()) + " images");
  clf::train_classifier(embedder, real, {}, tc);
  const auto q = exp::quality_study(generated, real,
                                    [&](const data::Dataset& d) { return clf::extract_embeddings(embedder, d); }, log);
  const fs::path out = cfg.output_dir;
  io::write_text(out / "quality.csv", exp::quality_csv(q));
  if (cfg.formats.png) {
    io::write_png(out / "grid_generated.png", exp::grid_generated(generated, k));
    io::write_png(out / "grid_pairs.png", exp::grid_pairs(generated, real, q.pairs));
  }
  std::printf("n %zu  SSIM %s  PSNR %s  MSE %s  FID %s\n", q.n, io::format_double(q.ssim).c_str(),
              io::format_double(q.psnr).c_str(), io::format_double(q.mse).c_str(), io::format_double(q.fid).c_str());
  return kOk;
}

int cmd_timing(const exp::ExperimentConfig& cfg, const std::string& corpus_dir) {
  const auto ds = corpus_from(cfg, corpus_dir);
  std::vector<std::size_t> picks(std::min(cfg.att_images, ds.size()));
  for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i * ds.size() / picks.size();
  const auto rows = exp::timing_study(cfg.widths, classes_in(ds), ds.subset(picks), cfg.att_repetitions, cfg.master_seed);
  const auto csv = exp::att_csv(rows);
  io::write_text(fs::path(cfg.output_dir) / "att.csv", csv);
  std::cout << csv;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topogan: phantom corneal-topography GAN augmentation experiments"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "flat key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "master seed (overrides master_seed)");
    sub->add_option("--profile", common.profile, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    sub->add_option("--out", common.out, "output directory (overrides output_dir)");
    sub->add_option("--formats", common.formats, "comma list of csv,json,png");
  };

  std::string corpus_dir, synth_dir, gen_dir, model_path;
  std::optional<int> only_class;
  std::size_t n = 0, width = 0;

  auto* corpus = app.add_subcommand("corpus", "generate the phantom corpus (PNG + manifest.csv)");
  auto* train_gan = app.add_subcommand("train-gan", "train per-class (or conditional) GANs");
  train_gan->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  train_gan->add_option("--class", only_class, "train only this class");
  auto* synth = app.add_subcommand("synthesize", "sample images from trained generators");
  synth->add_option("--generators", gen_dir, "directory of generator .bin files")->required();
  synth->add_option("--n", n, "images per class (default: synthetic_per_class)");
  auto* train_clf = app.add_subcommand("train-classifier", "train one classifier");
  train_clf->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  train_clf->add_option("--synthetic", synth_dir, "synthesized image directory to add to training");
  train_clf->add_option("--width", width, "base width (default: first of widths)");
  auto* evaluate = app.add_subcommand("evaluate", "score a trained classifier");
  evaluate->add_option("--model", model_path, "classifier .bin")->required();
  evaluate->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  evaluate->add_option("--synthetic", synth_dir, "score on a synthesized image directory instead");
  auto* run = app.add_subcommand("run", "full cross-validated grid plus quality and timing studies");
  auto* quality = app.add_subcommand("quality", "SSIM / PSNR / MSE / FID of trained generators");
  quality->add_option("--generators", gen_dir, "directory of generator .bin files")->required();
  quality->add_option("--corpus", corpus_dir, "real corpus directory (default: generate from config)");
  auto* timing = app.add_subcommand("timing", "average test time per classifier width");
  timing->add_option("--corpus", corpus_dir, "corpus directory (default: generate from config)");
  for (auto* s : {corpus, train_gan, synth, train_clf, evaluate, run, quality, timing}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    const auto cfg = load_config(common);
    if (*corpus) return cmd_corpus(cfg);
    if (*train_gan) return cmd_train_gan(cfg, corpus_dir, only_class);
    if (*synth) return cmd_synthesize(cfg, gen_dir, n);
    if (*train_clf) return cmd_train_classifier(cfg, corpus_dir, synth_dir, width);
    if (*evaluate) return cmd_evaluate(cfg, model_path, corpus_dir, synth_dir);
    if (*run) return cmd_run(cfg);
    if (*quality) return cmd_quality(cfg, gen_dir, corpus_dir);
    if (*timing) return cmd_timing(cfg, corpus_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}
