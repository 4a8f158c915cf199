#include "ctap/checkpoint.hpp"

#include "ctap/audio_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ctap {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'A', 'P', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void put_matrix(const Matrix<float>& m) {
    put(static_cast<std::uint32_t>(m.rows()));
    put(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put(m(r, c));
    }
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : buf_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix<float> get_matrix() {
    const auto rows = get<std::uint32_t>();
    const auto cols = get<std::uint32_t>();
    need(static_cast<std::size_t>(rows) * cols * sizeof(float));
    Matrix<float> m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<float>();
    }
    return m;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IoError("checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::int64_t>(ckpt.params.step));
  w.put_string(ckpt.model.serialize());
  w.put_string(ckpt.run_config);
  std::string trained;
  for (const auto& t : ckpt.trained) trained += (trained.empty() ? "" : ",") + t;
  w.put_string(trained);
  const std::uint32_t n =
      static_cast<std::uint32_t>(ckpt.params.tensors.size() + ckpt.adam.m.size() + ckpt.adam.v.size());
  w.put(n);
  auto section = [&w](const std::map<std::string, Matrix<float>>& tensors, std::uint8_t tag) {
    for (const auto& [name, m] : tensors) {
      w.put_string(name);
      w.put(tag);
      w.put_matrix(m);
    }
  };
  section(ckpt.params.tensors, 0);
  section(ckpt.adam.m, 1);
  section(ckpt.adam.v, 2);
  w.put(fnv1a(w.bytes().data(), w.bytes().size()));
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file");
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a(bytes.data(), bytes.size() - 8)) throw IoError("checkpoint checksum mismatch");
  const std::string body = bytes.substr(0, bytes.size() - 8);
  Reader r(body);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>();
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  Checkpoint c;
  c.params.step = r.get<std::int64_t>();
  c.model = ModelConfig::deserialize(r.get_string());
  c.run_config = r.get_string();
  std::stringstream trained(r.get_string());
  for (std::string item; std::getline(trained, item, ',');) {
    if (!item.empty()) c.trained.insert(item);
  }
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.get_string();
    const auto tag = r.get<std::uint8_t>();
    Matrix<float> m = r.get_matrix();
    switch (tag) {
      case 0:
        c.params.tensors.emplace(std::move(name), std::move(m));
        break;
      case 1:
        c.adam.m.emplace(std::move(name), std::move(m));
        break;
      case 2:
        c.adam.v.emplace(std::move(name), std::move(m));
        break;
      default:
        throw IoError("unknown checkpoint section");
    }
  }
  if (r.pos() != body.size()) throw IoError("trailing bytes in checkpoint");
  for (const auto& spec : parameter_specs(c.model)) {
    const auto it = c.params.tensors.find(spec.name);
    if (it == c.params.tensors.end() || it->second.rows() != spec.rows || it->second.cols() != spec.cols) {
      throw IoError("checkpoint parameter " + spec.name + " missing or misshapen");
    }
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::uint64_t checkpoint_hash(const Checkpoint& ckpt) {
  Checkpoint copy = ckpt;
  copy.run_config.clear();
  const std::string bytes = serialize_checkpoint(copy);
  return fnv1a(bytes.data(), bytes.size());
}

}  // namespace ctap
