#include "styleswin/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "styleswin/io.hpp"

namespace styleswin {

namespace pt = boost::property_tree;

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "two-blobs") return DatasetKind::TwoBlobs;
  if (name == "ring-gaussians") return DatasetKind::RingGaussians;
  if (name == "checker-shapes") return DatasetKind::CheckerShapes;
  if (name == "image-folder") return DatasetKind::ImageFolder;
  throw ConfigError("unknown dataset kind '" + name + "'");
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::TwoBlobs: return "two-blobs";
    case DatasetKind::RingGaussians: return "ring-gaussians";
    case DatasetKind::CheckerShapes: return "checker-shapes";
    case DatasetKind::ImageFolder: return "image-folder";
  }
  return "?";
}

void DatasetSpec::validate() const {
  if (image_size < 4) throw ConfigError("dataset image_size must be >= 4");
  if (count < 0) throw ConfigError("dataset count must be >= 0");
  if (kind == DatasetKind::ImageFolder && path.empty())
    throw ConfigError("image-folder dataset needs a path");
}

DiscriminatorConfig RunConfig::default_discriminator(std::int64_t image_size) {
  DiscriminatorConfig d;
  d.image_size = image_size;
  return d;
}

void RunConfig::validate() const {
  generator.validate();
  discriminator.validate();
  train.validate();
  augment.validate();
  dataset.validate();
  if (generator.target_size != discriminator.image_size || generator.target_size != dataset.image_size)
    throw ConfigError("generator, discriminator and dataset image sizes differ");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (checkpoint_interval < 0 || eval_interval < 0) throw ConfigError("intervals must be >= 0");
  if (eval_samples < 2 || blocking_samples < 1) throw ConfigError("eval sample counts too small");
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, value);
  if (r.ec != std::errc() || r.ptr != end)
    throw ConfigError("invalid value '" + text + "' for " + key);
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  return out;
}

std::string format_scales(const std::vector<ScaleSpec>& scales) {
  std::string s;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(scales[i].channels) + ":" + std::to_string(scales[i].window) + ":" +
         std::to_string(scales[i].heads);
  }
  return s;
}

std::vector<ScaleSpec> parse_scales(const std::string& key, const std::string& text) {
  std::vector<ScaleSpec> scales;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) throw ConfigError("scales entries are channels:window:heads in " + key);
    scales.push_back({parse_number<std::int64_t>(key, parts[0]),
                      parse_number<std::int64_t>(key, parts[1]),
                      parse_number<std::int64_t>(key, parts[2])});
  }
  return scales;
}

std::string format_ints(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::int64_t> parse_ints(const std::string& key, const std::string& text) {
  std::vector<std::int64_t> v;
  for (const auto& item : split(text, ',')) v.push_back(parse_number<std::int64_t>(key, item));
  return v;
}

/// Binds each key of a section to a field of a RunConfig for both directions.
struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

using Schema = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>;

#define INT_FIELD(expr)                                                              \
  Field {                                                                            \
    [](const RunConfig& c) { return std::to_string(c.expr); },                       \
        [](RunConfig& c, const std::string& k, const std::string& v) {               \
          c.expr = parse_number<decltype(c.expr)>(k, v);                             \
        }                                                                            \
  }
#define DOUBLE_FIELD(expr)                                                           \
  Field {                                                                            \
    [](const RunConfig& c) { return format_double(c.expr); },                        \
        [](RunConfig& c, const std::string& k, const std::string& v) {               \
          c.expr = parse_number<double>(k, v);                                       \
        }                                                                            \
  }
#define BOOL_FIELD(expr)                                                             \
  Field {                                                                            \
    [](const RunConfig& c) { return format_bool(c.expr); },                          \
        [](RunConfig& c, const std::string& k, const std::string& v) {               \
          c.expr = parse_bool(k, v);                                                 \
        }                                                                            \
  }
#define ENUM_FIELD(expr, parser)                                                     \
  Field {                                                                            \
    [](const RunConfig& c) { return to_string(c.expr); },                            \
        [](RunConfig& c, const std::string&, const std::string& v) { c.expr = parser(v); } \
  }

const Schema& schema() {
  static const Schema s = {
      {"run",
       {{"output_dir", Field{[](const RunConfig& c) { return c.output_dir; },
                             [](RunConfig& c, const std::string&, const std::string& v) {
                               c.output_dir = v;
                             }}},
        {"seed", INT_FIELD(train.seed)},
        {"checkpoint_interval", INT_FIELD(checkpoint_interval)},
        {"eval_interval", INT_FIELD(eval_interval)},
        {"eval_samples", INT_FIELD(eval_samples)},
        {"blocking_samples", INT_FIELD(blocking_samples)}}},
      {"generator",
       {{"start_size", INT_FIELD(generator.start_size)},
        {"target_size", INT_FIELD(generator.target_size)},
        {"scales", Field{[](const RunConfig& c) { return format_scales(c.generator.scales); },
                         [](RunConfig& c, const std::string& k, const std::string& v) {
                           c.generator.scales = parse_scales(k, v);
                         }}},
        {"style", ENUM_FIELD(generator.style, parse_style_variant)},
        {"attention", ENUM_FIELD(generator.attention, parse_block_attention)},
        {"use_spe", BOOL_FIELD(generator.use_spe)},
        {"use_rpe", BOOL_FIELD(generator.use_rpe)},
        {"z_dim", INT_FIELD(generator.z_dim)},
        {"w_dim", INT_FIELD(generator.w_dim)},
        {"mapping_depth", INT_FIELD(generator.mapping_depth)},
        {"mlp_ratio", DOUBLE_FIELD(generator.mlp_ratio)},
        {"spe_divisor", DOUBLE_FIELD(generator.spe_divisor)},
        {"style_tokens", INT_FIELD(generator.style_tokens)}}},
      {"discriminator",
       {{"kind", ENUM_FIELD(discriminator.kind, parse_discriminator_kind)},
        {"image_size", INT_FIELD(discriminator.image_size)},
        {"channels",
         Field{[](const RunConfig& c) { return format_ints(c.discriminator.channels); },
               [](RunConfig& c, const std::string& k, const std::string& v) {
                 c.discriminator.channels = parse_ints(k, v);
               }}},
        {"spectral_norm", BOOL_FIELD(discriminator.spectral_norm)},
        {"combine_spatial", BOOL_FIELD(discriminator.combine_spatial)},
        {"patch_stages", INT_FIELD(discriminator.patch_stages)}}},
      {"train",
       {{"lr_g", DOUBLE_FIELD(train.lr_g)},
        {"lr_d", DOUBLE_FIELD(train.lr_d)},
        {"beta1", DOUBLE_FIELD(train.beta1)},
        {"beta2", DOUBLE_FIELD(train.beta2)},
        {"adam_eps", DOUBLE_FIELD(train.adam_eps)},
        {"r1_gamma", DOUBLE_FIELD(train.r1_gamma)},
        {"r1_interval", INT_FIELD(train.r1_interval)},
        {"bcr_enabled", BOOL_FIELD(train.bcr_enabled)},
        {"bcr_lambda_real", DOUBLE_FIELD(train.bcr_lambda_real)},
        {"bcr_lambda_fake", DOUBLE_FIELD(train.bcr_lambda_fake)},
        {"tv_enabled", BOOL_FIELD(train.tv_enabled)},
        {"tv_weight_initial", DOUBLE_FIELD(train.tv_weight_initial)},
        {"tv_anneal_end_iter", INT_FIELD(train.tv_anneal_end_iter)},
        {"ema_decay", DOUBLE_FIELD(train.ema_decay)},
        {"batch_size", INT_FIELD(train.batch_size)},
        {"total_iters", INT_FIELD(train.total_iters)},
        {"lr_decay_start", INT_FIELD(train.lr_decay_start)}}},
      {"augment",
       {{"flip_p", DOUBLE_FIELD(augment.flip_p)},
        {"color_p", DOUBLE_FIELD(augment.color_p)},
        {"translation_p", DOUBLE_FIELD(augment.translation_p)},
        {"cutout_p", DOUBLE_FIELD(augment.cutout_p)},
        {"translation_frac", DOUBLE_FIELD(augment.translation_frac)},
        {"cutout_frac", DOUBLE_FIELD(augment.cutout_frac)}}},
      {"dataset",
       {{"kind", ENUM_FIELD(dataset.kind, parse_dataset_kind)},
        {"image_size", INT_FIELD(dataset.image_size)},
        {"count", INT_FIELD(dataset.count)},
        {"seed", INT_FIELD(dataset.seed)},
        {"path", Field{[](const RunConfig& c) { return c.dataset.path; },
                       [](RunConfig& c, const std::string&, const std::string& v) {
                         c.dataset.path = v;
                       }}}}},
  };
  return s;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef ENUM_FIELD

}  // namespace

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.message() + " at line " +
                      std::to_string(e.line()));
  }
  std::map<std::string, const std::vector<std::pair<std::string, Field>>*> sections;
  for (const auto& [name, fields] : schema()) sections[name] = &fields;

  RunConfig config;
  for (const auto& [section, body] : tree) {
    const auto it = sections.find(section);
    if (it == sections.end() || !body.data().empty())
      throw ConfigError("unknown config section '" + section + "'");
    for (const auto& [key, value] : body) {
      const auto field = std::find_if(it->second->begin(), it->second->end(),
                                      [&](const auto& f) { return f.first == key; });
      if (field == it->second->end())
        throw ConfigError("unknown config key '" + section + "." + key + "'");
      field->second.set(config, section + "." + key, value.data());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [section, fields] : schema()) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& [key, field] : fields) out += key + " = " + field.get(config) + "\n";
  }
  return out;
}

}  // namespace styleswin
