#pragma once

// Flat key=value experiment configuration. Every key has a default that may
// depend on the profile; unknown keys are rejected.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topogan/cgan.hpp"
#include "topogan/classifier.hpp"
#include "topogan/phantom.hpp"

namespace topogan::exp {

enum class DataCondition { original, synthesized, original_plus_synthesized };
enum class Balancing { none, ovs, uns };

std::string to_string(DataCondition c);
std::string to_string(Balancing b);
DataCondition parse_condition(const std::string& s);
Balancing parse_balancing(const std::string& s);

struct Formats {
  bool csv = true, json = true, png = true;
  bool operator==(const Formats&) const = default;
};
Formats parse_formats(const std::string& s);
std::string to_string(const Formats& f);

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  gan::Profile profile = gan::Profile::desk;

  std::array<std::size_t, data::kNumClasses> corpus_counts = data::CorpusOptions{}.counts;
  double margin = data::kDefaultMargin;

  std::vector<DataCondition> data_conditions{DataCondition::original};
  std::vector<Balancing> balancings{Balancing::none};
  std::vector<std::size_t> widths;  // classifier base widths, one variant each
  std::size_t cv_folds = 8;
  double val_fraction = 0.1;
  std::size_t synthetic_per_class = 400;

  gan::GanTrainConfig gan;  // gan.seed is unused; seeds are derived per fold
  clf::ClassifierTrainConfig classifier;

  std::size_t quality_samples = 100;
  std::size_t att_images = 100;
  std::size_t att_repetitions = 3;

  std::string output_dir = "out";
  Formats formats;

  static ExperimentConfig defaults(gan::Profile p);
  bool operator==(const ExperimentConfig&) const;
};

// Highest label with a non-zero count, plus one.
std::size_t active_classes(const ExperimentConfig& cfg);

using KeyValues = std::map<std::string, std::string>;

// Parses "key = value" lines; '#' starts a comment. Duplicate keys and lines
// without '=' are errors (ConfigError, with the line number).
KeyValues parse_key_values(const std::string& text);

// Starts from defaults(profile) and applies `kv` on top. The profile is read
// from `profile_override`, else kv["profile"], else desk.
ExperimentConfig resolve_config(const KeyValues& kv, std::optional<gan::Profile> profile_override = {});

// key=value text listing every key; resolve_config(parse_key_values(x)) == cfg.
std::string to_config_text(const ExperimentConfig& cfg);

// Every recognised key, in the order to_config_text writes them.
const std::vector<std::string>& config_keys();

}  // namespace topogan::exp
