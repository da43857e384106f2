#include "ppd/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ppd {

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

// Sequential little-endian reader that reports the byte offset of any failure.
class ByteReader {
 public:
  ByteReader(std::string bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  uint32_t u32() { return static_cast<uint32_t>(raw(4)); }
  uint64_t u64() { return raw(8); }

  double f64() {
    const uint64_t bits = raw(8);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }

  std::string str(size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  [[noreturn]] void malformed(const std::string& what) {
    fail(ErrorKind::io_error,
         origin_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  uint64_t raw(size_t n) {
    need(n);
    uint64_t v = 0;
    for (size_t i = 0; i < n; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return v;
  }

  void need(size_t n) {
    if (pos_ + n > bytes_.size()) malformed("truncated file");
  }

  std::string bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::string out;
  out.append(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, params.size());
  for (const auto& e : params.entries()) {
    put_u32(out, static_cast<uint32_t>(e.name.size()));
    out.append(e.name);
    put_u32(out, static_cast<uint32_t>(e.value.rank()));
    for (int64_t d : e.value.shape()) put_u64(out, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < e.value.numel(); ++i) put_f64(out, e.value[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io_error, "cannot write '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::io_error, "write failed for '" + path.string() + "'");
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  ByteReader r(read_file(path), path.string());
  if (r.str(8) != std::string(kCheckpointMagic, 8)) {
    fail(ErrorKind::io_error, path.string() + ": unknown checkpoint magic");
  }
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::io_error,
         path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const uint64_t count = r.u64();
  ParamStore params;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 4096) r.malformed("implausible name length");
    const std::string name = r.str(name_len);
    const uint32_t rank = r.u32();
    if (rank > 8) r.malformed("implausible rank");
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int64_t>(r.u64());
      if (shape[d] <= 0 || shape[d] > (1 << 24)) r.malformed("implausible dimension");
      numel *= shape[d];
    }
    std::vector<double> values(static_cast<size_t>(numel));
    for (auto& v : values) v = r.f64();
    params.add(name, Tensor::from(std::move(shape), std::move(values)));
  }
  if (!r.at_end()) r.malformed("trailing bytes");
  return params;
}

}  // namespace ppd
