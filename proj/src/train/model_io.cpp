#include "cd3net/model_io.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "cd3net/errors.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

constexpr const char* kFormat = "cd3net-model 1";

struct Entry {
  std::string kind;
  Shape shape;
  std::size_t offset = 0;
  std::size_t count = 0;
  std::uint64_t checksum = 0;
};

const char* precision_name(std::size_t bytes) { return bytes == 4 ? "f32" : "f64"; }

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::string shape_field(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out.empty() ? "scalar" : out;
}

Shape parse_shape(const std::string& field) {
  Shape s;
  if (field == "scalar") return s;
  std::istringstream in(field);
  std::string part;
  while (std::getline(in, part, 'x')) s.push_back(std::stoul(part));
  return s;
}

std::string read_text(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("missing model file " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
void load_values(const std::vector<char>& blob, const Entry& e, std::span<Real> out,
                 const std::string& name) {
  const std::size_t bytes = e.count * sizeof(T);
  if (e.offset + bytes > blob.size()) throw InvalidData("params.bin truncated at " + name);
  const auto* raw = reinterpret_cast<const unsigned char*>(blob.data() + e.offset);
  if (fnv1a({raw, bytes}) != e.checksum) throw InvalidData("checksum mismatch for " + name);
  for (std::size_t i = 0; i < e.count; ++i) {
    T v;
    std::memcpy(&v, raw + i * sizeof(T), sizeof(T));
    out[i] = Real(v);
  }
}

}  // namespace

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_model(const std::filesystem::path& dir, Cd3Net& net) {
  std::filesystem::create_directories(dir);
  net.config().save(dir / "config.cfg");
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  std::ostringstream manifest;
  manifest << "format = " << kFormat << "\n"
           << "precision = " << precision_name(sizeof(Real)) << "\n";
  std::size_t offset = 0;
  auto emit = [&](const std::string& name, const char* kind, const Shape& shape,
                  std::span<const Real> values) {
    const auto* raw = reinterpret_cast<const unsigned char*>(values.data());
    const std::size_t bytes = values.size() * sizeof(Real);
    bin.write(reinterpret_cast<const char*>(raw), std::streamsize(bytes));
    manifest << "entry = " << name << ' ' << kind << ' ' << shape_field(shape) << ' ' << offset
             << ' ' << values.size() << ' ' << hex(fnv1a({raw, bytes})) << "\n";
    offset += bytes;
  };
  for (const auto& p : net.parameters()) emit(p.name, "param", p.tensor.shape(), p.tensor.data());
  for (const auto& b : net.buffers()) emit(b.name, "buffer", {b.values->size()}, *b.values);
  if (!bin) throw IoError("cannot write " + (dir / "params.bin").string());
  std::ofstream(dir / "manifest.txt") << manifest.str();
}

Cd3Net load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFound("model directory " + dir.string() + " not found");
  NetConfig cfg;
  try {
    cfg = NetConfig::parse(read_text(dir / "config.cfg"));
  } catch (const InvalidArgument& e) {
    throw InvalidData(std::string("model config: ") + e.what());
  }
  const std::string manifest = read_text(dir / "manifest.txt");
  const std::string blob_text = read_text(dir / "params.bin");
  const std::vector<char> blob(blob_text.begin(), blob_text.end());

  std::string precision;
  std::map<std::string, Entry> entries;
  std::istringstream lines(manifest);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("format = ", 0) == 0) {
      if (line.substr(9) != kFormat) throw InvalidData("unsupported model format '" + line.substr(9) + "'");
    } else if (line.rfind("precision = ", 0) == 0) {
      precision = line.substr(12);
    } else if (line.rfind("entry = ", 0) == 0) {
      std::istringstream f(line.substr(8));
      std::string name, shape, sum;
      Entry e;
      if (!(f >> name >> e.kind >> shape >> e.offset >> e.count >> sum)) {
        throw InvalidData("malformed manifest line: " + line);
      }
      try {
        e.shape = parse_shape(shape);
        e.checksum = std::stoull(sum, nullptr, 16);
      } catch (const std::exception&) {
        throw InvalidData("malformed manifest line: " + line);
      }
      entries[name] = e;
    } else if (!line.empty()) {
      throw InvalidData("unexpected manifest line: " + line);
    }
  }
  if (precision != "f32" && precision != "f64") throw InvalidData("manifest lacks a valid precision");

  Cd3Net net(cfg);
  auto fill = [&](const std::string& name, const Shape& shape, std::span<Real> out) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw InvalidData("model is missing " + name);
    const Entry& e = it->second;
    if (e.shape != shape || e.count != out.size()) {
      throw InvalidData("shape mismatch for " + name + ": stored " + shape_field(e.shape) +
                        ", expected " + shape_field(shape));
    }
    if (precision == "f32") load_values<float>(blob, e, out, name);
    else load_values<double>(blob, e, out, name);
    entries.erase(it);
  };
  for (auto& p : net.parameters()) {
    Tensor t = p.tensor;
    fill(p.name, t.shape(), t.mutable_data());
  }
  for (auto& b : net.buffers()) fill(b.name, {b.values->size()}, *b.values);
  if (!entries.empty()) throw InvalidData("model has unknown entry " + entries.begin()->first);
  return net;
}

void copy_weights(Cd3Net& from, Cd3Net& to) {
  auto src = from.parameters();
  auto dst = to.parameters();
  auto sb = from.buffers();
  auto db = to.buffers();
  if (src.size() != dst.size() || sb.size() != db.size()) {
    throw InvalidArgument("copy_weights: layouts differ");
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name || src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw InvalidArgument("copy_weights: layouts differ at " + src[i].name);
    }
    Tensor t = dst[i].tensor;
    auto out = t.mutable_data();
    auto in = src[i].tensor.data();
    std::copy(in.begin(), in.end(), out.begin());
  }
  for (std::size_t i = 0; i < sb.size(); ++i) *db[i].values = *sb[i].values;
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
