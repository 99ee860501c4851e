#include "partwise/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace partwise {

namespace {

constexpr char kMagic[4] = {'P', 'W', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("tensor file truncated at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw IoError(std::string(what) + " exceeds u32 range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_tensors(std::span<const NamedTensor> tensors) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, checked_u32(tensors.size(), "tensor count"));
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, checked_u32(name.size(), "name length"));
    out += name;
    put_u32(out, checked_u32(tensor.rank(), "rank"));
    for (auto d : tensor.shape()) put_u32(out, checked_u32(d, "dimension"));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kMagic, 4)) throw IoError("bad tensor file magic");
  const auto count = in.u32();
  std::vector<NamedTensor> result;
  result.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = in.u32();
    std::string name(in.take(name_len));
    const auto rank = in.u32();
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) v = std::bit_cast<float>(in.u32());
    result.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (!in.done()) throw IoError("trailing bytes after tensor records");
  return result;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  write_file(path, encode_tensors(tensors));
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  try {
    return decode_tensors(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

const Tensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw IoError("tensor '" + std::string(name) + "' not found");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace partwise
