#include "topogan/config.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>

#include "topogan/error.hpp"
#include "topogan/io.hpp"

namespace topogan::exp {

std::string to_string(DataCondition c) {
  switch (c) {
    case DataCondition::original: return "original";
    case DataCondition::synthesized: return "synthesized";
    case DataCondition::original_plus_synthesized: return "original+synthesized";
  }
  return "?";
}

std::string to_string(Balancing b) {
  switch (b) {
    case Balancing::none: return "none";
    case Balancing::ovs: return "ovs";
    case Balancing::uns: return "uns";
  }
  return "?";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

DataCondition parse_condition(const std::string& s) {
  const auto v = lower(s);
  if (v == "original") return DataCondition::original;
  if (v == "synthesized") return DataCondition::synthesized;
  if (v == "original+synthesized") return DataCondition::original_plus_synthesized;
  throw ConfigError("unknown data_condition '" + s + "' (expected original, synthesized or original+synthesized)");
}

Balancing parse_balancing(const std::string& s) {
  const auto v = lower(s);
  if (v == "none") return Balancing::none;
  if (v == "ovs") return Balancing::ovs;
  if (v == "uns") return Balancing::uns;
  throw ConfigError("unknown balancing '" + s + "' (expected none, ovs or uns)");
}

Formats parse_formats(const std::string& s) {
  Formats f{false, false, false};
  for (const auto& part : io::split(s, ',')) {
    const auto v = lower(trim(part));
    if (v == "csv") f.csv = true;
    else if (v == "json") f.json = true;
    else if (v == "png") f.png = true;
    else throw ConfigError("unknown format '" + part + "' (expected csv, json, png)");
  }
  return f;
}

std::string to_string(const Formats& f) {
  std::vector<std::string> v;
  if (f.csv) v.push_back("csv");
  if (f.json) v.push_back("json");
  if (f.png) v.push_back("png");
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

ExperimentConfig ExperimentConfig::defaults(gan::Profile p) {
  ExperimentConfig c;
  c.profile = p;
  c.gan = gan::GanTrainConfig::for_profile(p);
  c.widths = p == gan::Profile::desk ? std::vector<std::size_t>{8, 16} : std::vector<std::size_t>{16, 32, 64};
  return c;
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return to_config_text(*this) == to_config_text(o); }

std::size_t active_classes(const ExperimentConfig& cfg) {
  std::size_t k = 0;
  for (std::size_t c = 0; c < cfg.corpus_counts.size(); ++c)
    if (cfg.corpus_counts[c] > 0) k = c + 1;
  return k;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key=value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw ConfigError("line " + std::to_string(no) + ": duplicate key '" + key + "'");
  }
  return kv;
}

namespace {

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range: '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto l = lower(v);
  if (l == "true" || l == "1") return true;
  if (l == "false" || l == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, F parse_one) {
  std::vector<T> out;
  for (const auto& part : io::split(v, ',')) {
    const auto p = trim(part);
    if (p.empty()) throw ConfigError(key + ": empty list element in '" + v + "'");
    out.push_back(parse_one(p));
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F fmt) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string num(double v) { return io::format_double(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    auto add_u = [&v](std::string key, auto member) {
      v.push_back({key, [key, member](ExperimentConfig& c, const std::string& s) { member(c) = to_u64(key, s); },
                   [member](const ExperimentConfig& c) { return std::to_string(member(c)); }});
    };
    auto add_d = [&v](std::string key, auto member) {
      v.push_back({key, [key, member](ExperimentConfig& c, const std::string& s) { member(c) = to_double(key, s); },
                   [member](const ExperimentConfig& c) { return num(member(c)); }});
    };
    add_u("master_seed", [](auto& c) -> auto& { return c.master_seed; });
    v.push_back({"profile",
                 [](ExperimentConfig& c, const std::string& s) {
                   try {
                     c.profile = gan::parse_profile(lower(s));
                   } catch (const ValueError& e) {
                     throw ConfigError(std::string("profile: ") + e.what());
                   }
                 },
                 [](const ExperimentConfig& c) { return gan::to_string(c.profile); }});
    v.push_back({"corpus_counts",
                 [](ExperimentConfig& c, const std::string& s) {
                   const auto l = to_list<std::size_t>("corpus_counts", s, [](const std::string& p) { return to_u64("corpus_counts", p); });
                   if (l.size() != data::kNumClasses)
                     throw ConfigError("corpus_counts: expected " + std::to_string(data::kNumClasses) + " values, got " +
                                       std::to_string(l.size()));
                   std::copy(l.begin(), l.end(), c.corpus_counts.begin());
                 },
                 [](const ExperimentConfig& c) {
                   return join(std::vector<std::size_t>(c.corpus_counts.begin(), c.corpus_counts.end()),
                               [](std::size_t x) { return std::to_string(x); });
                 }});
    add_d("margin", [](auto& c) -> auto& { return c.margin; });
    v.push_back({"data_condition",
                 [](ExperimentConfig& c, const std::string& s) {
                   c.data_conditions = to_list<DataCondition>("data_condition", s, parse_condition);
                 },
                 [](const ExperimentConfig& c) { return join(c.data_conditions, [](DataCondition x) { return to_string(x); }); }});
    v.push_back({"balancing",
                 [](ExperimentConfig& c, const std::string& s) { c.balancings = to_list<Balancing>("balancing", s, parse_balancing); },
                 [](const ExperimentConfig& c) { return join(c.balancings, [](Balancing x) { return to_string(x); }); }});
    v.push_back({"widths",
                 [](ExperimentConfig& c, const std::string& s) {
                   c.widths = to_list<std::size_t>("widths", s, [](const std::string& p) { return to_u64("widths", p); });
                 },
                 [](const ExperimentConfig& c) { return join(c.widths, [](std::size_t x) { return std::to_string(x); }); }});
    add_u("cv_folds", [](auto& c) -> auto& { return c.cv_folds; });
    add_d("val_fraction", [](auto& c) -> auto& { return c.val_fraction; });
    add_u("synthetic_per_class", [](auto& c) -> auto& { return c.synthetic_per_class; });
    add_u("gan_epochs", [](auto& c) -> auto& { return c.gan.epochs; });
    add_d("gan_lr", [](auto& c) -> auto& { return c.gan.lr; });
    add_u("gan_batch", [](auto& c) -> auto& { return c.gan.batch_size; });
    add_d("gan_init_std", [](auto& c) -> auto& { return c.gan.init_std; });
    v.push_back({"gan_mode",
                 [](ExperimentConfig& c, const std::string& s) {
                   try {
                     c.gan.mode = gan::parse_train_mode(lower(s));
                   } catch (const ValueError& e) {
                     throw ConfigError(std::string("gan_mode: ") + e.what());
                   }
                 },
                 [](const ExperimentConfig& c) { return gan::to_string(c.gan.mode); }});
    v.push_back({"gan_objective",
                 [](ExperimentConfig& c, const std::string& s) {
                   try {
                     c.gan.objective = gan::parse_objective(lower(s));
                   } catch (const ValueError& e) {
                     throw ConfigError(std::string("gan_objective: ") + e.what());
                   }
                 },
                 [](const ExperimentConfig& c) { return gan::to_string(c.gan.objective); }});
    v.push_back({"gan_class_head", [](ExperimentConfig& c, const std::string& s) { c.gan.class_head = to_bool("gan_class_head", s); },
                 [](const ExperimentConfig& c) { return std::string(c.gan.class_head ? "true" : "false"); }});
    add_d("gan_aux_weight", [](auto& c) -> auto& { return c.gan.aux_weight; });
    add_u("clf_epochs", [](auto& c) -> auto& { return c.classifier.epochs; });
    add_u("clf_batch", [](auto& c) -> auto& { return c.classifier.batch_size; });
    add_d("clf_lr", [](auto& c) -> auto& { return c.classifier.lr; });
    add_u("quality_samples", [](auto& c) -> auto& { return c.quality_samples; });
    add_u("att_images", [](auto& c) -> auto& { return c.att_images; });
    add_u("att_repetitions", [](auto& c) -> auto& { return c.att_repetitions; });
    v.push_back({"output_dir",
                 [](ExperimentConfig& c, const std::string& s) {
                   if (s.empty()) throw ConfigError("output_dir: empty path");
                   c.output_dir = s;
                 },
                 [](const ExperimentConfig& c) { return c.output_dir; }});
    v.push_back({"formats", [](ExperimentConfig& c, const std::string& s) { c.formats = parse_formats(s); },
                 [](const ExperimentConfig& c) { return to_string(c.formats); }});
    return v;
  }();
  return f;
}

void validate(const ExperimentConfig& c) {
  if (active_classes(c) < 2) throw ConfigError("corpus_counts: need at least two classes");
  if (c.data_conditions.empty() || c.balancings.empty() || c.widths.empty())
    throw ConfigError("data_condition, balancing and widths must be non-empty");
  for (auto w : c.widths)
    if (w == 0) throw ConfigError("widths: must be >= 1");
  if (c.cv_folds < 2) throw ConfigError("cv_folds: must be >= 2");
  if (!(c.val_fraction >= 0 && c.val_fraction < 1)) throw ConfigError("val_fraction: must lie in [0, 1)");
  if (!(c.margin >= 0)) throw ConfigError("margin: must be >= 0");
  if (c.gan.epochs == 0 || c.gan.batch_size == 0 || !(c.gan.lr > 0) || !(c.gan.init_std > 0))
    throw ConfigError("gan_epochs, gan_batch, gan_lr and gan_init_std must be positive");
  if (!(c.gan.aux_weight >= 0)) throw ConfigError("gan_aux_weight: must be >= 0");
  if (c.classifier.epochs == 0 || c.classifier.batch_size == 0 || !(c.classifier.lr > 0))
    throw ConfigError("clf_epochs, clf_batch and clf_lr must be positive");
  if (c.att_repetitions == 0) throw ConfigError("att_repetitions: must be >= 1");
  const bool needs_synthetic = std::any_of(c.data_conditions.begin(), c.data_conditions.end(),
                                           [](DataCondition d) { return d != DataCondition::original; });
  if (needs_synthetic && c.synthetic_per_class == 0)
    throw ConfigError("synthetic_per_class: must be >= 1 for synthesized data conditions");
}

}  // namespace

ExperimentConfig resolve_config(const KeyValues& kv, std::optional<gan::Profile> profile_override) {
  gan::Profile profile = gan::Profile::desk;
  if (profile_override) {
    profile = *profile_override;
  } else if (const auto it = kv.find("profile"); it != kv.end()) {
    try {
      profile = gan::parse_profile(lower(it->second));
    } catch (const ValueError& e) {
      throw ConfigError(std::string("profile: ") + e.what());
    }
  }
  auto cfg = ExperimentConfig::defaults(profile);
  for (const auto& [key, value] : kv) {
    const auto& f = fields();
    const auto it = std::find_if(f.begin(), f.end(), [&](const Field& x) { return x.key == key; });
    if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
    if (key == "profile") continue;
    it->set(cfg, value);
  }
  validate(cfg);
  return cfg;
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::string s;
  for (const auto& f : fields()) s += f.key + "=" + f.get(cfg) + "\n";
  return s;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

}  // namespace topogan::exp
