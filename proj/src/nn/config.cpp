#include "cd3net/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cd3net/errors.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidArgument("config: " + key + " expects a non-negative integer, got '" +
                          v + "'");
  }
  return out;
}

Real to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<Real>(d);
  } catch (const std::exception&) {
    throw InvalidArgument("config: " + key + " expects a number, got '" + v + "'");
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("line " + std::to_string(number) +
                            ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw InvalidArgument("line " + std::to_string(number) + ": empty key");
    }
    if (!seen.insert(key).second) {
      throw InvalidArgument("line " + std::to_string(number) +
                            ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::size_t NetConfig::trunk_channels() const {
  return d3_blocks.empty() ? bnc_out : d3_blocks.back().transition;
}

ConvSpec NetConfig::final_conv() const {
  return ConvSpec::same(trunk_channels(), mask_channels(), final_kernel, 1, true);
}

void NetConfig::validate() const {
  if (input_channels != 4) {
    throw InvalidArgument("config: input_channels must be 4 (P, Q, P+Q, P-Q)");
  }
  if (bnc_out == 0) throw InvalidArgument("config: bnc_out must be >= 1");
  if (final_kernel == 0 || final_kernel % 2 == 0) {
    throw InvalidArgument("config: final_kernel must be odd");
  }
  for (std::size_t i = 0; i < d3_blocks.size(); ++i) {
    const D3Spec& d = d3_blocks[i];
    const std::string tag = "config: d3." + std::to_string(i);
    if (d.num_d2 == 0 || d.d2_layers == 0 || d.growth == 0 || d.transition == 0) {
      throw InvalidArgument(tag + " requires num_d2, layers, growth, transition >= 1");
    }
    if (d.kernel == 0 || d.kernel % 2 == 0) {
      throw InvalidArgument(tag + ".kernel must be odd");
    }
    if (d.d2_layers > 12) {
      throw InvalidArgument(tag + ".layers above 12 give dilations beyond 2^11");
    }
  }
  if (!(leaky_slope > 0 && leaky_slope < 1)) {
    throw InvalidArgument("config: leaky_slope must lie in (0, 1)");
  }
  if (!(bn_eps > 0)) throw InvalidArgument("config: bn_eps must be positive");
  if (!(bn_momentum > 0 && bn_momentum <= 1)) {
    throw InvalidArgument("config: bn_momentum must lie in (0, 1]");
  }
}

NetConfig NetConfig::parse(const std::string& text) {
  NetConfig cfg;
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : parse_key_values(text)) kv.emplace(k, v);

  std::size_t blocks = 0;
  if (auto it = kv.find("d3_blocks"); it != kv.end()) {
    blocks = to_count(it->first, it->second);
    kv.erase(it);
  }
  cfg.d3_blocks.resize(blocks);

  for (const auto& [key, value] : kv) {
    if (key == "input_channels") {
      cfg.input_channels = to_count(key, value);
    } else if (key == "mask_mode") {
      if (value == "dual") cfg.mask_mode = MaskMode::dual;
      else if (value == "single") cfg.mask_mode = MaskMode::single;
      else throw InvalidArgument("config: mask_mode must be single or dual");
    } else if (key == "bnc_out") {
      cfg.bnc_out = to_count(key, value);
    } else if (key == "final_kernel") {
      cfg.final_kernel = to_count(key, value);
    } else if (key == "leaky_slope") {
      cfg.leaky_slope = to_real(key, value);
    } else if (key == "bn_eps") {
      cfg.bn_eps = to_real(key, value);
    } else if (key == "bn_momentum") {
      cfg.bn_momentum = to_real(key, value);
    } else if (key == "init_seed") {
      cfg.init_seed = to_count(key, value);
    } else if (key == "mask_init") {
      if (value == "identity") cfg.identity_mask_init = true;
      else if (value == "random") cfg.identity_mask_init = false;
      else throw InvalidArgument("config: mask_init must be identity or random");
    } else if (key.rfind("d3.", 0) == 0) {
      const auto dot = key.find('.', 3);
      if (dot == std::string::npos) {
        throw InvalidArgument("config: malformed key '" + key + "'");
      }
      const std::size_t index = to_count(key, key.substr(3, dot - 3));
      if (index >= blocks) {
        throw InvalidArgument("config: '" + key + "' exceeds d3_blocks = " +
                              std::to_string(blocks));
      }
      const std::string field = key.substr(dot + 1);
      D3Spec& d = cfg.d3_blocks[index];
      if (field == "num_d2") d.num_d2 = to_count(key, value);
      else if (field == "layers") d.d2_layers = to_count(key, value);
      else if (field == "growth") d.growth = to_count(key, value);
      else if (field == "kernel") d.kernel = to_count(key, value);
      else if (field == "transition") d.transition = to_count(key, value);
      else throw InvalidArgument("config: unknown key '" + key + "'");
    } else {
      throw InvalidArgument("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

NetConfig NetConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string NetConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "input_channels = " << input_channels << '\n'
     << "mask_mode = " << (mask_mode == MaskMode::dual ? "dual" : "single") << '\n'
     << "bnc_out = " << bnc_out << '\n'
     << "d3_blocks = " << d3_blocks.size() << '\n';
  for (std::size_t i = 0; i < d3_blocks.size(); ++i) {
    const D3Spec& d = d3_blocks[i];
    const std::string p = "d3." + std::to_string(i) + ".";
    os << p << "num_d2 = " << d.num_d2 << '\n'
       << p << "layers = " << d.d2_layers << '\n'
       << p << "growth = " << d.growth << '\n'
       << p << "kernel = " << d.kernel << '\n'
       << p << "transition = " << d.transition << '\n';
  }
  os << "final_kernel = " << final_kernel << '\n'
     << "leaky_slope = " << double(leaky_slope) << '\n'
     << "bn_eps = " << double(bn_eps) << '\n'
     << "bn_momentum = " << double(bn_momentum) << '\n'
     << "init_seed = " << init_seed << '\n'
     << "mask_init = " << (identity_mask_init ? "identity" : "random") << '\n';
  return os.str();
}

void NetConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << serialize();
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
