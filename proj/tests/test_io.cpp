#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "topogan/error.hpp"
#include "topogan/io.hpp"

using namespace topogan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("topogan_test_io_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

data::Image random_image(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  data::Image img;
  img.width = w;
  img.height = h;
  img.pixels.resize(w * h * 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

}  // namespace

TEST_CASE("png round trip") {
  const auto dir = scratch("png");
  std::mt19937_64 rng(1);
  for (auto [w, h] : {std::pair{64, 64}, {7, 3}, {1, 1}}) {
    const auto img = random_image(w, h, rng);
    io::write_png(dir / "a.png", img);
    CHECK(io::read_png(dir / "a.png") == img);
  }
  CHECK_THROWS_AS(io::read_png(dir / "missing.png"), IoError);
  io::write_text(dir / "junk.png", "not a png");
  CHECK_THROWS_AS(io::read_png(dir / "junk.png"), IoError);
  data::Image bad;
  bad.pixels.resize(5);
  CHECK_THROWS_AS(io::write_png(dir / "b.png", bad), ShapeError);
}

TEST_CASE("weights container byte layout") {
  const auto dir = scratch("layout");
  io::WeightsFile f;
  f.meta["k"] = "v";
  f.entries.push_back({"w", {2}, {1.0f, -2.5f}});
  io::write_weights(dir / "w.bin", f);

  std::string want = "TOPOGANW";
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) want += static_cast<char>((v >> (8 * i)) & 0xff);
  };
  auto u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) want += static_cast<char>((v >> (8 * i)) & 0xff);
  };
  auto f32 = [&](float x) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    u32(bits);
  };
  u32(1);                  // version
  u32(1);                  // metadata count
  u32(1), want += "k";     // key
  u32(1), want += "v";     // value
  u32(1);                  // entries
  u32(1), want += "w";     // name
  u32(1), u64(2);          // rank, dims
  f32(1.0f), f32(-2.5f);   // values
  CHECK(slurp(dir / "w.bin") == want);

  const auto back = io::read_weights(dir / "w.bin");
  CHECK(back.meta == f.meta);
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].shape == Shape{2});
  CHECK(back.entries[0].values == f.entries[0].values);

  io::write_text(dir / "bad_magic.bin", "TOPOGANX" + want.substr(8));
  CHECK_THROWS_AS(io::read_weights(dir / "bad_magic.bin"), IoError);
  std::string v2 = want;
  v2[8] = 2;
  io::write_text(dir / "v2.bin", v2);
  CHECK_THROWS_AS(io::read_weights(dir / "v2.bin"), IoError);
  io::write_text(dir / "short.bin", want.substr(0, want.size() - 3));
  CHECK_THROWS_AS(io::read_weights(dir / "short.bin"), IoError);
  io::write_text(dir / "long.bin", want + "x");
  CHECK_THROWS_AS(io::read_weights(dir / "long.bin"), IoError);
}

TEST_CASE("generator weights reload to bit-identical outputs") {
  const auto dir = scratch("gen");
  data::CorpusOptions o;
  o.counts = {4, 0, 0, 0, 0, 0, 0, 0};
  gan::GanTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  const auto g = gan::train_cgan(data::generate_corpus(o), 0, 2, cfg);
  io::save_generator(dir / "g.bin", g, gan::Profile::desk);
  const auto back = io::load_generator(dir / "g.bin");
  CHECK(back.target_class == 0);
  const auto a = gan::synthesize(*g.generator, 4, 0, 3);
  const auto b = gan::synthesize(*back.generator, 4, 0, 3);
  Rng rng(5);
  const auto z = gan::sample_noise<float>(3, rng);
  CHECK(g.generator->forward(z, {}, ad::Mode::eval).value().vec() ==
        back.generator->forward(z, {}, ad::Mode::eval).value().vec());
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.images[i].image == b.images[i].image);
  CHECK_THROWS_AS(io::load_classifier(dir / "g.bin"), IoError);
}

TEST_CASE("classifier weights reload to bit-identical outputs") {
  const auto dir = scratch("clf");
  data::CorpusOptions o;
  o.counts = {6, 6, 0, 0, 0, 0, 0, 0};
  const auto ds = data::generate_corpus(o);
  clf::ClassifierConfig cc;
  cc.num_classes = 2;
  auto m = clf::build_classifier(cc, 2);
  clf::ClassifierTrainConfig tc;
  tc.epochs = 2;
  clf::train_classifier(m, ds, {}, tc);
  io::save_classifier(dir / "c.bin", m);
  auto back = io::load_classifier(dir / "c.bin");
  CHECK(back.config().widths == m.config().widths);
  CHECK(back.config().num_classes == 2);
  const auto pa = clf::predict_batch(m, ds), pb = clf::predict_batch(back, ds);
  CHECK(pa.labels == pb.labels);
  CHECK(pa.probabilities == pb.probabilities);

  auto other = clf::build_classifier(clf::ClassifierConfig::with_base_width(8, 2), 2);
  CHECK_THROWS_AS(io::unpack(io::read_weights(dir / "c.bin"), other.store()), IoError);
}

TEST_CASE("corpus directory round trip") {
  const auto dir = scratch("corpus");
  data::CorpusOptions o;
  o.counts = {2, 1, 0, 1, 0, 0, 1, 2};
  o.seed = 99;
  const auto ds = data::generate_corpus(o);
  io::write_corpus(dir, ds, 99);
  const auto lines = io::read_lines(dir / "manifest.csv");
  CHECK(lines[0].rfind("# master_seed=99", 0) == 0);
  CHECK(lines[1] == "path,class_label,map_type,condition,patient_id,provenance,seed");
  CHECK(fs::exists(dir / "images" / "7_1.png"));

  const auto back = io::read_corpus(dir);
  CHECK(back.master_seed == 99);
  REQUIRE(back.dataset.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto &x = ds.images[i], &y = back.dataset.images[i];
    CHECK(x.image == y.image);
    CHECK(x.class_label == y.class_label);
    CHECK(x.patient_id == y.patient_id);
    CHECK(x.provenance == y.provenance);
    CHECK(x.seed == y.seed);
  }

  // Same seed, same bytes.
  const auto dir2 = scratch("corpus2");
  io::write_corpus(dir2, data::generate_corpus(o), 99);
  CHECK(slurp(dir / "manifest.csv") == slurp(dir2 / "manifest.csv"));
  CHECK_THROWS_AS(io::read_corpus(scratch("nothing")), IoError);
}

TEST_CASE("synthesized manifest round trip") {
  const auto dir = scratch("synth");
  gan::Generator<float> g(gan::GeneratorConfig::for_profile(gan::Profile::desk));
  Rng rng(4);
  nn::init_weights(g.store(), 0.02, rng);
  auto ds = gan::synthesize(g, 3, 5, 1);
  io::write_synthesized(dir, ds);
  CHECK(io::read_lines(dir / "manifest.csv")[0] == "path,class,provenance,seed");
  CHECK(fs::exists(dir / "5_2.png"));
  const auto back = io::read_synthesized(dir);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.images[i].image == ds.images[i].image);
    CHECK(back.images[i].seed == ds.images[i].seed);
    CHECK(back.images[i].provenance == data::Provenance::synthesized);
  }
}

TEST_CASE("history csv") {
  const auto dir = scratch("hist");
  clf::TrainHistory h;
  h.train_loss = {0.5, 0.25};
  h.train_acc = {0.75, 1.0};
  h.val_acc = {0.5, 0.875};
  io::write_history(dir / "h.csv", h);
  const auto lines = io::read_lines(dir / "h.csv");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch,train_loss,train_acc,val_acc");
  CHECK(lines[1] == "1,0.5,0.75,0.5");
  CHECK(lines[2] == "2,0.25,1,0.875");
}

TEST_CASE("property: number formatting round-trips exactly") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    double v = u(rng);
    if (i % 3 == 0) v = std::ldexp(v, static_cast<int>(rng() % 600) - 300);
    CHECK(io::parse_double(io::format_double(v)) == v);
  }
  CHECK(io::format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(std::isinf(io::parse_double("inf")));
  CHECK(io::parse_double(io::format_double(std::numeric_limits<double>::denorm_min())) ==
        std::numeric_limits<double>::denorm_min());
  CHECK_THROWS_AS(io::parse_double("1.5x"), ValueError);
  CHECK(io::split("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
}
