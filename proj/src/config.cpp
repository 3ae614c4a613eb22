#include "copp/config.hpp"

#include "copp/errors.hpp"
#include "copp/io/text.hpp"

namespace copp {

Config Config::defaults() {
  Config c;
  c.values_ = {
      {"sampler.C", "4"},
      {"sampler.K", "256"},
      {"sampler.R_t", "128"},
      {"sampler.R_s", "64"},
      {"sampler.radius", "1000"},
      {"arkp.levels", "2:16:32,64;4:16:64,128;8:16:128,64"},
      {"arkp.pre_conv", "32"},
      {"arkp.d_branch", "64"},
      {"arkp.head_hidden", "64"},
      {"cora.hidden", "128"},
      {"cora.blocks", "4"},
      {"cora.heads", "4"},
      {"cora.ff_mult", "2"},
      {"cora.class_weights", "1.0,0.5,0.1"},
      {"cora.softmax_axis", "class"},
      {"train.stage1_batch", "32"},
      {"train.stage2_batch", "4"},
      {"train.lr", "1e-2"},
      {"train.stage2_lr", "1e-4"},
      {"train.momentum", "0.9"},
      {"train.epochs1", "30"},
      {"train.epochs2", "30"},
      {"train.patience", "0"},
      {"train.min_delta", "1e-4"},
      {"train.rotate", "1"},
      {"train.pooling", "cora"},
      {"data.contents", "24"},
      {"data.kinds", "geometry_noise,color_noise,downsample"},
      {"data.levels", "5"},
      {"data.points", "4096"},
      {"data.test_fraction", "0.2"},
      {"data.max_geometry_sigma", "0.04"},
      {"data.max_color_sigma", "40"},
      {"data.min_keep", "0.3"},
      {"data.max_quant_step", "0.05"},
      {"data.mos_min", "0"},
      {"data.mos_max", "100"},
  };
  return c;
}

void Config::merge_file(const std::filesystem::path& path) { merge_text(io::read_file(path.string()), path.string()); }

void Config::merge_text(std::string_view text, const std::string& origin) {
  const auto lines = io::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(i + 1) + ": expected 'key = value'");
    }
    try {
      set(std::string(io::trim(line.substr(0, eq))), std::string(io::trim(line.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

void Config::merge_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set(std::string(io::trim(assignment.substr(0, eq))), std::string(io::trim(assignment.substr(eq + 1))));
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const auto v = io::parse_double(get(key));
  if (!v) throw ConfigError(key + " = '" + get(key) + "' is not a number");
  return *v;
}

std::size_t Config::get_size(const std::string& key) const {
  const auto v = io::parse_int(get(key));
  if (!v || *v < 0) throw ConfigError(key + " = '" + get(key) + "' is not a non-negative integer");
  return static_cast<std::size_t>(*v);
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (auto tok : io::split_on(get(key), ',')) {
    const auto v = io::parse_double(io::trim(tok));
    if (!v) throw ConfigError(key + ": '" + std::string(tok) + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  for (auto tok : io::split_on(get(key), ',')) {
    const auto t = io::trim(tok);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace copp
