#pragma once

// Vector pool persistence: fixed 24-byte header + little-endian float32 rows,
// with a JSON manifest sidecar carrying count, dim and a CRC-64 of the payload.

#include <array>
#include <bit>
#include <cctype>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <boost/crc.hpp>
#include <json.hpp>

#include "curatekit/core.hpp"

namespace curatekit {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

struct VectorPool {
  Matrix vectors;
  std::vector<Id> ids;  // empty: implicit 0..count-1

  VectorPool() = default;
  explicit VectorPool(Matrix m, std::vector<Id> explicit_ids = {})
      : vectors(std::move(m)), ids(std::move(explicit_ids)) {}

  std::size_t count() const noexcept { return vectors.rows(); }
  std::size_t dim() const noexcept { return vectors.cols(); }
  Id id_at(std::size_t row) const noexcept {
    return ids.empty() ? static_cast<Id>(row) : ids[row];
  }

  // Throws ValidationError naming the first violated invariant.
  void validate() const {
    if (dim() == 0) throw ValidationError("pool dim must be positive");
    if (vectors.values().size() != count() * dim()) {
      throw ValidationError("pool data length != count*dim");
    }
    if (!ids.empty()) {
      if (ids.size() != count()) throw ValidationError("explicit id list length != count");
      std::unordered_set<Id> seen;
      seen.reserve(ids.size());
      for (Id id : ids) {
        if (!seen.insert(id).second) {
          throw ValidationError("duplicate id " + std::to_string(id));
        }
      }
    }
    for (std::size_t r = 0; r < count(); ++r) {
      if (!all_finite(vectors.row(r))) {
        throw ValidationError("non-finite value in row " + std::to_string(r));
      }
    }
  }

  friend bool operator==(const VectorPool&, const VectorPool&) = default;
};

/// Maps ids to row positions; identity for implicit ids.
class IdMap {
 public:
  IdMap() = default;
  IdMap(std::span<const Id> ids, std::size_t count) : count_(count) {
    if (!ids.empty()) {
      rows_.reserve(ids.size());
      for (std::size_t r = 0; r < ids.size(); ++r) rows_.emplace(ids[r], r);
    }
  }
  std::optional<std::size_t> row_of(Id id) const {
    if (rows_.empty()) {
      if (id < 0 || static_cast<std::size_t>(id) >= count_) return std::nullopt;
      return static_cast<std::size_t>(id);
    }
    auto it = rows_.find(id);
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::size_t count_ = 0;
  std::unordered_map<Id, std::size_t> rows_;
};

struct LabeledPool {
  std::vector<Id> ids;
  std::vector<int> labels;

  std::size_t size() const noexcept { return ids.size(); }
  void add(Id id, int label) {
    ids.push_back(id);
    labels.push_back(label);
  }
  std::size_t distinct_labels() const {
    return std::unordered_set<int>(labels.begin(), labels.end()).size();
  }
  friend bool operator==(const LabeledPool&, const LabeledPool&) = default;
};

struct Manifest {
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
  std::uint64_t checksum = 0;
  std::string created;
  std::vector<Id> ids;
};

inline constexpr std::array<char, 8> kPoolMagic = {'C', 'K', 'V', 'P', 'O', 'O', 'L', '\0'};
inline constexpr std::uint32_t kPoolVersion = 1;
inline constexpr std::size_t kPoolHeaderBytes = 24;

/// CRC-64/XZ (ECMA-182 polynomial, reflected).
using Crc64 = boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true>;

inline std::uint64_t crc64(const void* data, std::size_t n) {
  Crc64 crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::uint64_t parse_hex64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 16);
  if (pos != s.size()) throw ValidationError("bad hex checksum '" + s + "'");
  return v;
}

inline std::string manifest_path(const std::filesystem::path& pool_path) {
  return pool_path.string() + ".json";
}

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j;
  j["count"] = m.count;
  j["dim"] = m.dim;
  j["checksum"] = hex64(m.checksum);
  j["created"] = m.created;
  if (!m.ids.empty()) j["ids"] = m.ids;
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.count = j.at("count").get<std::uint64_t>();
    m.dim = j.at("dim").get<std::uint32_t>();
    m.checksum = parse_hex64(j.at("checksum").get<std::string>());
    m.created = j.value("created", "");
    if (j.contains("ids")) m.ids = j.at("ids").get<std::vector<Id>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

inline Manifest write_pool(const VectorPool& pool, const std::filesystem::path& path) {
  pool.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kPoolMagic.data(), kPoolMagic.size());
  detail::put_le<std::uint32_t>(out, kPoolVersion);
  detail::put_le<std::uint64_t>(out, pool.count());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(pool.dim()));
  const auto* payload = reinterpret_cast<const char*>(pool.vectors.data());
  const std::size_t payload_bytes = pool.count() * pool.dim() * sizeof(float);
  out.write(payload, static_cast<std::streamsize>(payload_bytes));
  out.close();
  if (!out) throw IoError("write failed for " + path.string());

  Manifest m;
  m.count = pool.count();
  m.dim = static_cast<std::uint32_t>(pool.dim());
  m.checksum = crc64(payload, payload_bytes);
  m.created = detail::utc_timestamp();
  m.ids = pool.ids;
  std::ofstream mj(manifest_path(path), std::ios::trunc);
  if (!mj) throw IoError("cannot write manifest for " + path.string());
  mj << to_json(m).dump(2) << '\n';
  if (!mj) throw IoError("manifest write failed for " + path.string());
  return m;
}

/// Loads a pool. The manifest sidecar is verified when present.
inline VectorPool read_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, kPoolHeaderBytes> hdr{};
  in.read(hdr.data(), hdr.size());
  if (in.gcount() != static_cast<std::streamsize>(hdr.size())) {
    throw ValidationError("corrupt header: file shorter than 24 bytes");
  }
  if (!std::equal(kPoolMagic.begin(), kPoolMagic.end(), hdr.begin())) {
    throw ValidationError("corrupt header: bad magic");
  }
  const auto version = detail::get_le<std::uint32_t>(hdr.data() + 8);
  if (version != kPoolVersion) {
    throw ValidationError("unsupported pool version " + std::to_string(version));
  }
  const auto count = detail::get_le<std::uint64_t>(hdr.data() + 12);
  const auto dim = detail::get_le<std::uint32_t>(hdr.data() + 20);
  if (dim == 0) throw ValidationError("corrupt header: dim is zero");

  const std::size_t expected = count * dim;
  std::vector<float> data(expected);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(expected * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(float)) {
    throw ValidationError("payload shorter than count×dim (" + std::to_string(count) + "×" +
                          std::to_string(dim) + ")");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError("payload longer than count×dim");
  }

  std::vector<Id> ids;
  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    std::ifstream mj(mpath);
    nlohmann::json j;
    try {
      mj >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    const Manifest m = manifest_from_json(j);
    if (m.count != count || m.dim != dim) {
      throw ValidationError("manifest count/dim disagree with header");
    }
    const auto sum = crc64(data.data(), expected * sizeof(float));
    if (sum != m.checksum) {
      throw ValidationError("checksum mismatch: manifest " + hex64(m.checksum) + ", payload " +
                            hex64(sum));
    }
    ids = m.ids;
  }

  VectorPool pool(Matrix(count, dim, std::move(data)), std::move(ids));
  for (std::size_t r = 0; r < pool.count(); ++r) {
    if (!all_finite(pool.vectors.row(r))) {
      throw ValidationError("non-finite value in row " + std::to_string(r));
    }
  }
  pool.validate();
  return pool;
}

// --- CSV label files (id,label) ---

inline void write_labels(const LabeledPool& labeled, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "id,label\n";
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    out << labeled.ids[i] << ',' << labeled.labels[i] << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline LabeledPool read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LabeledPool lp;
  std::string line;
  std::size_t lineno = 0;
  std::unordered_set<Id> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("id", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected id,label");
    }
    try {
      const Id id = std::stoll(line.substr(0, comma));
      const int label = std::stoi(line.substr(comma + 1));
      if (!seen.insert(id).second) {
        throw ValidationError(path.string() + ": duplicate id " + std::to_string(id));
      }
      lp.add(id, label);
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return lp;
}

/// Reads the first CSV column as ids, skipping a header line.
inline std::vector<Id> read_id_column(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Id> ids;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto field = line.substr(0, line.find(','));
    if (first && !field.empty() && !(std::isdigit(static_cast<unsigned char>(field[0])) || field[0] == '-')) {
      first = false;
      continue;
    }
    first = false;
    try {
      ids.push_back(std::stoll(field));
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + ": bad id '" + field + "'");
    }
  }
  return ids;
}

}  // namespace curatekit
