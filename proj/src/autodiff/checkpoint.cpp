#include "copp/autodiff/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "copp/errors.hpp"

namespace copp::ad {

namespace {

constexpr char kMagic[4] = {'C', 'O', 'P', 'P'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint64_t bits;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(std::string name, Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size()) throw DimensionError("checkpoint entry '" + name + "' has inconsistent shape");
  auto it = std::find_if(arrays_.begin(), arrays_.end(), [&](const NamedArray& a) { return a.name == name; });
  if (it != arrays_.end()) {
    *it = {std::move(name), std::move(shape), std::move(data)};
  } else {
    arrays_.push_back({std::move(name), std::move(shape), std::move(data)});
  }
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(arrays_.begin(), arrays_.end(), [&](const NamedArray& a) { return a.name == name; });
}

const NamedArray& Checkpoint::get(const std::string& name) const {
  auto it = std::find_if(arrays_.begin(), arrays_.end(), [&](const NamedArray& a) { return a.name == name; });
  if (it == arrays_.end()) throw ConfigError("checkpoint has no entry '" + name + "'");
  return *it;
}

double Checkpoint::scalar(const std::string& name) const {
  const auto& a = get(name);
  if (a.data.size() != 1) throw ConfigError("checkpoint entry '" + name + "' is not a scalar");
  return a.data[0];
}

void Checkpoint::load_into(const std::string& name, Tensor& t) const {
  const auto& a = get(name);
  if (a.shape != t.shape()) {
    throw DimensionError("checkpoint entry '" + name + "' has shape " + shape_string(a.shape) + ", model expects " +
                         shape_string(t.shape()));
  }
  std::copy(a.data.begin(), a.data.end(), t.mutable_data().begin());
}

std::vector<std::uint8_t> Checkpoint::to_bytes() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays_.size()));
  for (const auto& a : arrays_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_le<std::uint64_t>(out, d);
    for (double v : a.data) put_le<double>(out, v);
  }
  return out;
}

Checkpoint Checkpoint::from_bytes(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a checkpoint (bad magic)");
  std::vector<std::uint8_t> rest(bytes.begin() + 4, bytes.end());
  Reader r(rest);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    a.data.resize(shape_size(a.shape));
    for (auto& v : a.data) v = r.get<double>();
    ck.arrays_.push_back(std::move(a));
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return from_bytes(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace copp::ad
