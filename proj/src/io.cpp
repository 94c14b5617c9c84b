#include "topogan/io.hpp"

#include <png.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "topogan/error.hpp"

namespace topogan::io {

static_assert(std::endian::native == std::endian::little, "weights container I/O assumes a little-endian host");

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ValueError("not a number: '" + s + "'");
  return v;
}

// ---------------------------------------------------------------- PNG

void write_png(const fs::path& path, const data::Image& image) {
  if (image.pixels.size() != image.width * image.height * data::kChannels)
    throw ShapeError("write_png: pixel buffer does not match " + std::to_string(image.width) + "x" +
                     std::to_string(image.height));
  ensure_dir(path.parent_path());
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + png.message);
}

data::Image read_png(const fs::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) throw IoError("cannot read " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  data::Image img;
  img.width = png.width;
  img.height = png.height;
  img.pixels.assign(PNG_IMAGE_SIZE(png), 0);
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("cannot decode " + path.string() + ": " + png.message);
  }
  return img;
}

// ---------------------------------------------------------------- weights

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
  std::istream& in;
  const fs::path& path;

  void bytes(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw IoError(path.string() + ": truncated weights file");
  }
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) throw IoError(path.string() + ": implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

}  // namespace

void write_weights(const fs::path& path, const WeightsFile& file) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kWeightsMagic, sizeof kWeightsMagic);
  put<std::uint32_t>(out, kWeightsVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.meta.size()));
  for (const auto& [k, v] : file.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.entries.size()));
  for (const auto& e : file.entries) {
    if (shape_numel(e.shape) != e.values.size()) throw ShapeError("write_weights: " + e.name + " size/shape mismatch");
    put_string(out, e.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(e.values.data()), static_cast<std::streamsize>(e.values.size() * 4));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

WeightsFile read_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r{in, path};
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kWeightsMagic, 8) != 0) throw IoError(path.string() + ": not a weights file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightsVersion)
    throw IoError(path.string() + ": unsupported weights version " + std::to_string(version));
  WeightsFile f;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.string();
    f.meta[k] = r.string();
  }
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    WeightsEntry e;
    e.name = r.string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw IoError(path.string() + ": implausible rank for " + e.name);
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.get<std::uint64_t>());
    const std::size_t count = shape_numel(e.shape);
    if (count > (std::size_t{1} << 32)) throw IoError(path.string() + ": implausible size for " + e.name);
    e.values.resize(count);
    r.bytes(e.values.data(), count * 4);
    f.entries.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after last entry");
  return f;
}

WeightsFile pack(const nn::ParamStore<float>& store, Metadata meta) {
  WeightsFile f;
  f.meta = std::move(meta);
  for (const auto& e : store.entries())
    f.entries.push_back({e.param.name(), e.param.value().shape(), e.param.value().vec()});
  for (const auto& b : store.buffers()) {
    f.entries.push_back({b.name + ".mean", b.stats->running_mean.shape(), b.stats->running_mean.vec()});
    f.entries.push_back({b.name + ".var", b.stats->running_var.shape(), b.stats->running_var.vec()});
  }
  return f;
}

void unpack(const WeightsFile& file, nn::ParamStore<float>& store) {
  const std::size_t expected = store.entries().size() + 2 * store.buffers().size();
  if (file.entries.size() != expected)
    throw IoError("weights: " + std::to_string(file.entries.size()) + " entries, network expects " +
                  std::to_string(expected));
  std::size_t i = 0;
  auto take = [&](const std::string& name, Tensor<float>& dst) {
    const auto& e = file.entries[i++];
    if (e.name != name) throw IoError("weights: expected entry '" + name + "', found '" + e.name + "'");
    if (e.shape != dst.shape())
      throw IoError("weights: " + name + " has shape " + shape_str(e.shape) + ", network expects " + shape_str(dst.shape()));
    dst = Tensor<float>(e.shape, e.values);
  };
  for (const auto& e : store.entries()) {
    auto p = e.param;
    take(p.name(), p.value());
  }
  for (const auto& b : store.buffers()) {
    take(b.name + ".mean", b.stats->running_mean);
    take(b.name + ".var", b.stats->running_var);
  }
}

namespace {

template <std::size_t N>
std::string join(const std::array<std::size_t, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s;
}

template <std::size_t N>
std::array<std::size_t, N> parse_array(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != N) throw IoError("weights metadata: expected " + std::to_string(N) + " values in '" + s + "'");
  std::array<std::size_t, N> a{};
  for (std::size_t i = 0; i < N; ++i) a[i] = std::stoull(parts[i]);
  return a;
}

const std::string& meta_at(const Metadata& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw IoError("weights metadata: missing key '" + key + "'");
  return it->second;
}

}  // namespace

void save_generator(const fs::path& path, const gan::TrainedGenerator& g, gan::Profile profile) {
  const auto& c = g.generator->config();
  Metadata m{{"kind", "generator"},
             {"profile", gan::to_string(profile)},
             {"z_dim", std::to_string(c.z_dim)},
             {"base_channels", std::to_string(c.base_channels)},
             {"channels", join(c.channels)},
             {"kernel", std::to_string(c.kernel)},
             {"stride", std::to_string(c.stride)},
             {"pad", std::to_string(c.pad)},
             {"output_pad", std::to_string(c.output_pad)},
             {"label_classes", std::to_string(c.label_classes)},
             {"target_class", g.target_class ? std::to_string(*g.target_class) : "none"}};
  write_weights(path, pack(g.generator->store(), std::move(m)));
}

gan::TrainedGenerator load_generator(const fs::path& path) {
  const auto f = read_weights(path);
  try {
    if (meta_at(f.meta, "kind") != "generator") throw IoError(path.string() + ": not a generator");
    gan::GeneratorConfig c;
    c.z_dim = std::stoull(meta_at(f.meta, "z_dim"));
    c.base_channels = std::stoull(meta_at(f.meta, "base_channels"));
    c.channels = parse_array<4>(meta_at(f.meta, "channels"));
    c.kernel = std::stoull(meta_at(f.meta, "kernel"));
    c.stride = std::stoull(meta_at(f.meta, "stride"));
    c.pad = std::stoull(meta_at(f.meta, "pad"));
    c.output_pad = std::stoull(meta_at(f.meta, "output_pad"));
    c.label_classes = std::stoull(meta_at(f.meta, "label_classes"));
    gan::TrainedGenerator g;
    g.generator = std::make_shared<gan::Generator<float>>(c);
    const auto& t = meta_at(f.meta, "target_class");
    if (t != "none") g.target_class = std::stoi(t);
    unpack(f, g.generator->store());
    return g;
  } catch (const std::logic_error& e) {
    throw IoError(path.string() + ": bad generator metadata: " + e.what());
  }
}

void save_classifier(const fs::path& path, const clf::Model& model) {
  const auto& c = model.config();
  Metadata m{{"kind", "classifier"},
             {"widths", join(c.widths)},
             {"num_classes", std::to_string(c.num_classes)},
             {"leaky_slope", format_double(c.leaky_slope)}};
  write_weights(path, pack(model.store(), std::move(m)));
}

clf::Model load_classifier(const fs::path& path) {
  const auto f = read_weights(path);
  clf::ClassifierConfig c;
  try {
    if (meta_at(f.meta, "kind") != "classifier") throw IoError(path.string() + ": not a classifier");
    c.widths = parse_array<4>(meta_at(f.meta, "widths"));
    c.num_classes = std::stoull(meta_at(f.meta, "num_classes"));
    c.leaky_slope = parse_double(meta_at(f.meta, "leaky_slope"));
  } catch (const std::logic_error& e) {
    throw IoError(path.string() + ": bad classifier metadata: " + e.what());
  }
  clf::Model m(c);
  unpack(f, m.store());
  return m;
}

// ---------------------------------------------------------------- manifests

namespace {

constexpr const char* kCorpusHeader = "path,class_label,map_type,condition,patient_id,provenance,seed";
constexpr const char* kSynthHeader = "path,class,provenance,seed";

// <class>_<index>.png with a running per-class index.
std::vector<std::string> image_names(const data::Dataset& ds) {
  std::map<int, std::size_t> next;
  std::vector<std::string> names;
  names.reserve(ds.size());
  for (const auto& im : ds.images)
    names.push_back(std::to_string(im.class_label) + "_" + std::to_string(next[im.class_label]++) + ".png");
  return names;
}

std::vector<std::string> expect_header(const std::vector<std::string>& lines, std::size_t at, const char* header,
                                       const fs::path& path) {
  if (lines.size() <= at || lines[at] != header)
    throw IoError(path.string() + ": expected header '" + std::string(header) + "'");
  return {lines.begin() + static_cast<std::ptrdiff_t>(at) + 1, lines.end()};
}

}  // namespace

void write_corpus(const fs::path& dir, const data::Dataset& dataset, std::uint64_t master_seed) {
  ensure_dir(dir / "images");
  const auto names = image_names(dataset);
  std::ostringstream m;
  m << "# master_seed=" << master_seed << " label=2*map_type+condition\n" << kCorpusHeader << "\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& im = dataset.images[i];
    const std::string rel = "images/" + names[i];
    write_png(dir / rel, im.image);
    m << rel << ',' << im.class_label << ',' << data::to_string(data::label_map_type(im.class_label)) << ','
      << data::to_string(data::label_condition(im.class_label)) << ',' << im.patient_id << ','
      << data::to_string(im.provenance) << ',' << im.seed << "\n";
  }
  write_text(dir / "manifest.csv", m.str());
}

Corpus read_corpus(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.csv";
  const auto lines = read_lines(manifest);
  Corpus c;
  const std::string prefix = "# master_seed=";
  if (lines.empty() || lines[0].rfind(prefix, 0) != 0) throw IoError(manifest.string() + ": missing master_seed header");
  try {
    c.master_seed = std::stoull(lines[0].substr(prefix.size()));
    for (const auto& line : expect_header(lines, 1, kCorpusHeader, manifest)) {
      if (line.empty()) continue;
      const auto f = split(line, ',');
      if (f.size() != 7) throw IoError(manifest.string() + ": bad row '" + line + "'");
      data::LabeledImage im;
      im.image = read_png(dir / f[0]);
      im.class_label = std::stoi(f[1]);
      if (data::class_label(data::parse_map_type(f[2]), data::parse_condition(f[3])) != im.class_label)
        throw IoError(manifest.string() + ": label/map/condition disagree in '" + line + "'");
      im.patient_id = std::stoi(f[4]);
      im.provenance = data::parse_provenance(f[5]);
      im.seed = std::stoull(f[6]);
      c.dataset.images.push_back(std::move(im));
    }
  } catch (const std::logic_error& e) {
    throw IoError(manifest.string() + ": " + e.what());
  }
  return c;
}

void write_synthesized(const fs::path& dir, const data::Dataset& dataset) {
  ensure_dir(dir);
  const auto names = image_names(dataset);
  std::ostringstream m;
  m << kSynthHeader << "\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& im = dataset.images[i];
    write_png(dir / names[i], im.image);
    m << names[i] << ',' << im.class_label << ',' << data::to_string(im.provenance) << ',' << im.seed << "\n";
  }
  write_text(dir / "manifest.csv", m.str());
}

data::Dataset read_synthesized(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.csv";
  const auto lines = read_lines(manifest);
  data::Dataset ds;
  try {
    for (const auto& line : expect_header(lines, 0, kSynthHeader, manifest)) {
      if (line.empty()) continue;
      const auto f = split(line, ',');
      if (f.size() != 4) throw IoError(manifest.string() + ": bad row '" + line + "'");
      data::LabeledImage im;
      im.image = read_png(dir / f[0]);
      im.class_label = std::stoi(f[1]);
      im.patient_id = -1;
      im.provenance = data::parse_provenance(f[2]);
      im.seed = std::stoull(f[3]);
      ds.images.push_back(std::move(im));
    }
  } catch (const std::logic_error& e) {
    throw IoError(manifest.string() + ": " + e.what());
  }
  return ds;
}

void write_history(const fs::path& path, const clf::TrainHistory& h) {
  std::ostringstream s;
  s << "epoch,train_loss,train_acc,val_acc\n";
  for (std::size_t i = 0; i < h.size(); ++i)
    s << i + 1 << ',' << format_double(h.train_loss[i]) << ',' << format_double(h.train_acc[i]) << ','
      << format_double(h.val_acc[i]) << "\n";
  write_text(path, s.str());
}

void write_gan_history(const fs::path& path, const gan::GanHistory& h) {
  std::ostringstream s;
  s << "iteration,loss_d,loss_g,d_real,d_fake\n";
  for (std::size_t i = 0; i < h.size(); ++i)
    s << i + 1 << ',' << format_double(h.loss_d[i]) << ',' << format_double(h.loss_g[i]) << ','
      << format_double(h.d_real[i]) << ',' << format_double(h.d_fake[i]) << "\n";
  write_text(path, s.str());
}

}  // namespace topogan::io
