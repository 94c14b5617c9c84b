#pragma once

// On-disk formats: PNG images, the binary weights container, corpus and
// synthesis manifests, and training-history CSVs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "topogan/cgan.hpp"
#include "topogan/classifier.hpp"
#include "topogan/nn.hpp"
#include "topogan/phantom.hpp"

namespace topogan::io {

namespace fs = std::filesystem;

// 8-bit RGB, no alpha. Any width and height.
void write_png(const fs::path& path, const data::Image& image);
data::Image read_png(const fs::path& path);

// Weights container, all integers little-endian:
//   magic "TOPOGANW" (8 bytes), u32 version (= 1)
//   u32 n_meta, then n_meta x (string key, string value)
//   u32 n_entries, then per entry:
//     string name, u32 rank, rank x u64 dims, prod(dims) x f32 values
// where string = u32 byte length + bytes. Entries are the store's parameters
// in registration order, then every batch-norm buffer as "<name>.mean" and
// "<name>.var".
inline constexpr char kWeightsMagic[8] = {'T', 'O', 'P', 'O', 'G', 'A', 'N', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

using Metadata = std::map<std::string, std::string>;

struct WeightsEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct WeightsFile {
  Metadata meta;
  std::vector<WeightsEntry> entries;
};

void write_weights(const fs::path& path, const WeightsFile& file);
WeightsFile read_weights(const fs::path& path);

WeightsFile pack(const nn::ParamStore<float>& store, Metadata meta = {});
// Copies values into `store`; names, order and shapes must match exactly.
void unpack(const WeightsFile& file, nn::ParamStore<float>& store);

void save_generator(const fs::path& path, const gan::TrainedGenerator& g, gan::Profile profile);
gan::TrainedGenerator load_generator(const fs::path& path);
void save_classifier(const fs::path& path, const clf::Model& model);
clf::Model load_classifier(const fs::path& path);

// Corpus directory: images/<class>_<index>.png plus manifest.csv with a
// "# master_seed=<seed>" first line and the columns
//   path,class_label,map_type,condition,patient_id,provenance,seed
struct Corpus {
  data::Dataset dataset;
  std::uint64_t master_seed = 0;
};
void write_corpus(const fs::path& dir, const data::Dataset& dataset, std::uint64_t master_seed);
Corpus read_corpus(const fs::path& dir);

// Synthesized images: <class>_<index>.png plus manifest.csv with the columns
//   path,class,provenance,seed
void write_synthesized(const fs::path& dir, const data::Dataset& dataset);
data::Dataset read_synthesized(const fs::path& dir);

// epoch,train_loss,train_acc,val_acc (epochs count from 1).
void write_history(const fs::path& path, const clf::TrainHistory& history);
// iteration,loss_d,loss_g,d_real,d_fake
void write_gan_history(const fs::path& path, const gan::GanHistory& history);

// Shortest text that parses back to the same double; "inf", "-inf", "nan"
// for non-finite values.
std::string format_double(double v);
double parse_double(const std::string& s);

std::vector<std::string> split(const std::string& line, char sep);
// Reads a file into lines, stripping any trailing '\r'.
std::vector<std::string> read_lines(const fs::path& path);
// Creates parent directories; throws IoError naming the path on failure.
void write_text(const fs::path& path, const std::string& text);
void ensure_dir(const fs::path& dir);

}  // namespace topogan::io
