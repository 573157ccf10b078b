#include "topicbot/blobfile.hpp"

#include "topicbot/hash.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace topicbot {

static_assert(std::endian::native == std::endian::little,
              "blob files are written in host byte order, which must be little-endian");

namespace {

constexpr char kMagic[8] = {'T', 'O', 'P', 'I', 'C', 'B', 'O', 'T'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("blob file truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

const Matrix& BlobFile::blob(const std::string& name) const {
  for (const auto& [n, m] : blobs) {
    if (n == name) return m;
  }
  throw std::runtime_error("blob file has no blob named " + name);
}

bool BlobFile::has_blob(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.first == name) return true;
  }
  return false;
}

std::string encode_blob_file(const BlobFile& file) {
  std::string payload;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, m] : file.blobs) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()},
                     {"offset", payload.size()}});
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) put<double>(payload, m(i, j));
    }
  }
  Fnv1a h;
  h.update(payload);
  nlohmann::json manifest = {{"kind", file.kind},
                             {"meta", file.meta},
                             {"blobs", index},
                             {"payload_bytes", payload.size()},
                             {"payload_fnv1a", to_hex(h.digest())}};
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kBlobFormatVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out += payload;
  return out;
}

BlobFile decode_blob_file(const std::string& bytes, const std::string& expected_kind) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a topicbot container (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kBlobFormatVersion) {
    throw std::runtime_error("unsupported container version " + std::to_string(version) +
                             " (expected " + std::to_string(kBlobFormatVersion) + ")");
  }
  const auto manifest_len = get<std::uint64_t>(bytes, pos);
  if (pos + manifest_len > bytes.size()) throw std::runtime_error("blob file truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(pos, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt container manifest: ") + e.what());
  }
  pos += manifest_len;

  BlobFile file;
  file.kind = manifest.at("kind").get<std::string>();
  if (file.kind != expected_kind) {
    throw std::runtime_error("container holds a '" + file.kind + "', expected '" +
                             expected_kind + "'");
  }
  const auto payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
  if (bytes.size() - pos != payload_bytes) {
    throw std::runtime_error("blob file truncated: payload has " +
                             std::to_string(bytes.size() - pos) + " bytes, manifest says " +
                             std::to_string(payload_bytes));
  }
  Fnv1a h;
  h.update(std::string_view(bytes).substr(pos));
  if (to_hex(h.digest()) != manifest.at("payload_fnv1a").get<std::string>()) {
    throw std::runtime_error("blob file checksum mismatch");
  }
  file.meta = manifest.at("meta");
  const std::size_t base = pos;
  for (const auto& entry : manifest.at("blobs")) {
    const auto rows = entry.at("rows").get<Index>();
    const auto cols = entry.at("cols").get<Index>();
    std::size_t p = base + entry.at("offset").get<std::size_t>();
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = get<double>(bytes, p);
    }
    file.blobs.emplace_back(entry.at("name").get<std::string>(), std::move(m));
  }
  return file;
}

void save_blob_file(const BlobFile& file, const std::filesystem::path& path) {
  const std::string bytes = encode_blob_file(file);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

BlobFile load_blob_file(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_blob_file(ss.str(), expected_kind);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace topicbot
