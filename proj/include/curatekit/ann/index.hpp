#pragma once

// Searchable vector index over a pool: exhaustive Flat, inverted-file
// partitions (IVF-Flat, IVF-PQ) and HNSW graphs. Immutable after build, so
// const methods may be called concurrently.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "curatekit/ann/hnsw.hpp"
#include "curatekit/ann/pq.hpp"
#include "curatekit/binary_io.hpp"
#include "curatekit/core.hpp"
#include "curatekit/kmeans.hpp"
#include "curatekit/store.hpp"

namespace curatekit {

enum class IndexKind { Flat, IvfFlat, IvfPq, Hnsw };

inline std::string_view to_string(IndexKind k) {
  switch (k) {
    case IndexKind::Flat: return "flat";
    case IndexKind::IvfFlat: return "ivfflat";
    case IndexKind::IvfPq: return "ivfpq";
    case IndexKind::Hnsw: return "hnsw";
  }
  return "?";
}

inline IndexKind parse_index_kind(std::string_view s) {
  if (s == "flat") return IndexKind::Flat;
  if (s == "ivfflat" || s == "ivf") return IndexKind::IvfFlat;
  if (s == "ivfpq") return IndexKind::IvfPq;
  if (s == "hnsw") return IndexKind::Hnsw;
  throw ValidationError("unknown index kind '" + std::string(s) + "'");
}

struct IndexConfig {
  IndexKind kind = IndexKind::Flat;
  std::size_t nlist = 0;  // 0: 4 * ceil(sqrt(N))
  std::size_t nprobe = 8;
  std::size_t pq_m = 16;
  std::size_t pq_bits = 8;
  std::size_t hnsw_m = 32;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 64;
  std::size_t kmeans_iterations = 25;
  std::size_t train_size = 0;  // 0: min(N, max(64 * nlist, 16384))
  std::uint64_t seed = 1234;

  static std::size_t default_nlist(std::size_t n) {
    return 4 * static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  }

  /// Fills automatic fields for a pool of `n` vectors and checks invariants.
  IndexConfig resolved(std::size_t n, std::size_t dim) const {
    IndexConfig c = *this;
    const bool ivf = kind == IndexKind::IvfFlat || kind == IndexKind::IvfPq;
    if (ivf) {
      if (c.nlist == 0) c.nlist = default_nlist(n);
      if (n < c.nlist) {
        throw ValidationError("IVF needs at least nlist=" + std::to_string(c.nlist) + " points, have " +
                              std::to_string(n));
      }
      if (c.nprobe == 0 || c.nprobe > c.nlist) throw ValidationError("nprobe must be in [1, nlist]");
      if (c.train_size == 0) c.train_size = std::min(n, std::max<std::size_t>(64 * c.nlist, 16384));
      c.train_size = std::clamp(c.train_size, c.nlist, n);
    }
    if (kind == IndexKind::IvfPq) {
      if (c.pq_m == 0 || dim % c.pq_m != 0) {
        throw ValidationError("pq_m=" + std::to_string(c.pq_m) + " does not divide dim=" + std::to_string(dim));
      }
      if (c.pq_bits != 4 && c.pq_bits != 8) throw ValidationError("pq_bits must be 4 or 8");
    }
    if (kind == IndexKind::Hnsw && (c.hnsw_m < 2 || c.ef_construction == 0 || c.ef_search == 0)) {
      throw ValidationError("hnsw parameters must be positive (m >= 2)");
    }
    return c;
  }
};

struct SearchStats {
  std::size_t cells_visited = 0;
  std::size_t candidates_scanned = 0;
};

class AnnIndex {
 public:
  AnnIndex() = default;

  static AnnIndex build(VectorPool pool, const IndexConfig& config) {
    if (pool.count() == 0) throw ValidationError("build_index: pool is empty");
    pool.validate();
    AnnIndex idx;
    idx.config_ = config.resolved(pool.count(), pool.dim());
    idx.dim_ = pool.dim();
    idx.size_ = pool.count();
    idx.ids_ = std::move(pool.ids);
    idx.id_map_ = IdMap(idx.ids_, idx.size_);
    switch (idx.config_.kind) {
      case IndexKind::Flat:
        idx.vectors_ = std::move(pool.vectors);
        break;
      case IndexKind::Hnsw:
        idx.vectors_ = std::move(pool.vectors);
        idx.graph_.build(idx.vectors_, {.m = idx.config_.hnsw_m,
                                        .ef_construction = idx.config_.ef_construction,
                                        .seed = idx.config_.seed});
        break;
      case IndexKind::IvfFlat:
      case IndexKind::IvfPq:
        idx.build_ivf(pool.vectors);
        break;
    }
    idx.trained_ = true;
    return idx;
  }

  const IndexConfig& config() const noexcept { return config_; }
  IndexKind kind() const noexcept { return config_.kind; }
  bool trained() const noexcept { return trained_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }
  Id id_at(std::size_t row) const noexcept { return ids_.empty() ? static_cast<Id>(row) : ids_[row]; }
  std::optional<std::size_t> row_of(Id id) const { return id_map_.row_of(id); }
  bool contains(Id id) const { return id_map_.row_of(id).has_value(); }

  const Matrix& centroids() const noexcept { return centroids_; }
  const std::vector<std::vector<Id>>& lists() const noexcept { return list_ids_; }
  const ProductQuantizer& pq() const noexcept { return pq_; }
  const HnswGraph& graph() const noexcept { return graph_; }
  double pq_training_distortion() const noexcept { return pq_distortion_; }

  /// Bytes of encoded payload per vector (PQ codes, or raw floats otherwise).
  std::size_t code_size() const noexcept {
    return config_.kind == IndexKind::IvfPq ? pq_.code_size() : dim_ * sizeof(float);
  }

  /// Bytes held by the index structures.
  std::size_t memory_bytes() const noexcept {
    std::size_t b = ids_.size() * sizeof(Id) + vectors_.values().size() * sizeof(float);
    b += centroids_.values().size() * sizeof(float);
    b += pq_.codebooks().size() * sizeof(float);
    for (const auto& l : list_ids_) b += l.size() * sizeof(Id);
    for (const auto& l : list_vectors_) b += l.size() * sizeof(float);
    for (const auto& l : list_codes_) b += l.size();
    b += location_.size() * sizeof(std::uint64_t);
    b += graph_.memory_bytes();
    return b;
  }

  /// Nearest `k` neighbors, ascending by L2 distance, ties by ascending id.
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k, SearchStats* stats = nullptr,
                               std::optional<std::size_t> nprobe = std::nullopt) const {
    if (!trained_ || size_ == 0) throw ValidationError("search: index is not trained or empty");
    if (query.size() != dim_) {
      throw ValidationError("search: query dim " + std::to_string(query.size()) + " != index dim " +
                            std::to_string(dim_));
    }
    if (k == 0 || k > size_) throw ValidationError("search: k must be in [1, size]");
    std::vector<std::pair<double, Id>> hits;
    SearchStats local;
    switch (config_.kind) {
      case IndexKind::Flat:
        hits.reserve(size_);
        for (std::size_t r = 0; r < size_; ++r) hits.emplace_back(l2_sq(query, vectors_.row(r)), id_at(r));
        local.candidates_scanned = size_;
        break;
      case IndexKind::Hnsw: {
        for (const auto& [d, node] : graph_.search(vectors_, query, k, config_.ef_search)) {
          hits.emplace_back(d, id_at(node));
        }
        break;
      }
      case IndexKind::IvfFlat:
      case IndexKind::IvfPq:
        search_ivf(query, nprobe.value_or(config_.nprobe), hits, local);
        break;
    }
    const std::size_t take = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end());
    std::vector<Neighbor> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
      out.push_back({hits[i].second, static_cast<float>(std::sqrt(hits[i].first))});
    }
    if (stats) *stats = local;
    return out;
  }

  /// Full-precision rows (decoded approximations for IVF-PQ), one per id.
  Matrix reconstruct_batch(std::span<const Id> ids) const {
    Matrix out(ids.size(), dim_);
    for (std::size_t i = 0; i < ids.size(); ++i) reconstruct_into(ids[i], out.row(i));
    return out;
  }

  void reconstruct_into(Id id, std::span<float> out) const {
    const auto row = id_map_.row_of(id);
    if (!row) throw ValidationError("reconstruct: unknown id " + std::to_string(id));
    switch (config_.kind) {
      case IndexKind::Flat:
      case IndexKind::Hnsw: {
        const auto r = vectors_.row(*row);
        std::copy(r.begin(), r.end(), out.begin());
        break;
      }
      case IndexKind::IvfFlat: {
        const auto [list, off] = location(*row);
        const float* p = list_vectors_[list].data() + off * dim_;
        std::copy(p, p + dim_, out.begin());
        break;
      }
      case IndexKind::IvfPq: {
        const auto [list, off] = location(*row);
        const auto code = std::span<const std::uint8_t>(list_codes_[list].data() + off * pq_.code_size(),
                                                        pq_.code_size());
        pq_.decode(code, out);
        const auto c = centroids_.row(list);
        for (std::size_t j = 0; j < dim_; ++j) out[j] += c[j];
        break;
      }
    }
  }

  void save(const std::filesystem::path& path) const;
  static AnnIndex load(const std::filesystem::path& path);

 private:
  std::pair<std::size_t, std::size_t> location(std::size_t row) const noexcept {
    return {static_cast<std::size_t>(location_[row] >> 32), static_cast<std::size_t>(location_[row] & 0xFFFFFFFFu)};
  }

  void build_ivf(const Matrix& data) {
    const auto& c = config_;
    std::vector<std::size_t> perm(size_);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(c.seed);
    for (std::size_t i = 0; i < c.train_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, size_ - 1);
      std::swap(perm[i], perm[pick(rng)]);
    }
    Matrix train(c.train_size, dim_);
    for (std::size_t i = 0; i < c.train_size; ++i) {
      std::copy(data.row(perm[i]).begin(), data.row(perm[i]).end(), train.row(i).begin());
    }
    centroids_ = kmeans(train, {.k = c.nlist, .iterations = c.kmeans_iterations, .seed = c.seed}).centroids;
    const auto assign = assign_nearest(data, centroids_);

    list_ids_.assign(c.nlist, {});
    location_.resize(size_);
    for (std::size_t r = 0; r < size_; ++r) {
      location_[r] = (static_cast<std::uint64_t>(assign[r]) << 32) | list_ids_[assign[r]].size();
      list_ids_[assign[r]].push_back(id_at(r));
    }
    if (c.kind == IndexKind::IvfFlat) {
      list_vectors_.assign(c.nlist, {});
      for (std::size_t r = 0; r < size_; ++r) {
        const auto row = data.row(r);
        list_vectors_[assign[r]].insert(list_vectors_[assign[r]].end(), row.begin(), row.end());
      }
      return;
    }
    // IVF-PQ encodes residuals against the coarse centroid.
    pq_ = ProductQuantizer(dim_, c.pq_m, c.pq_bits);
    const auto train_assign = assign_nearest(train, centroids_);
    Matrix train_res = residuals(train, train_assign);
    pq_distortion_ = pq_.train(train_res, c.kmeans_iterations, c.seed + 7919);
    list_codes_.assign(c.nlist, {});
    const std::size_t cs = pq_.code_size();
    for (std::size_t l = 0; l < c.nlist; ++l) list_codes_[l].resize(list_ids_[l].size() * cs);
    constexpr std::size_t kBlock = 65536;
    for (std::size_t begin = 0; begin < size_; begin += kBlock) {
      const std::size_t end = std::min(size_, begin + kBlock);
      Matrix block(end - begin, dim_);
      for (std::size_t r = begin; r < end; ++r) {
        const auto x = data.row(r);
        const auto cen = centroids_.row(assign[r]);
        auto out = block.row(r - begin);
        for (std::size_t j = 0; j < dim_; ++j) out[j] = x[j] - cen[j];
      }
      const auto codes = pq_.encode_batch(block);
      for (std::size_t r = begin; r < end; ++r) {
        const auto [list, off] = location(r);
        std::copy_n(codes.data() + (r - begin) * cs, cs, list_codes_[list].data() + off * cs);
      }
    }
  }

  Matrix residuals(const Matrix& x, const std::vector<std::uint32_t>& assign) const {
    Matrix out(x.rows(), dim_);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto cen = centroids_.row(assign[i]);
      const auto src = x.row(i);
      auto dst = out.row(i);
      for (std::size_t j = 0; j < dim_; ++j) dst[j] = src[j] - cen[j];
    }
    return out;
  }

  void search_ivf(std::span<const float> q, std::size_t nprobe, std::vector<std::pair<double, Id>>& hits,
                  SearchStats& stats) const {
    nprobe = std::clamp<std::size_t>(nprobe, 1, centroids_.rows());
    std::vector<std::pair<double, std::size_t>> cd(centroids_.rows());
    for (std::size_t l = 0; l < centroids_.rows(); ++l) cd[l] = {l2_sq(q, centroids_.row(l)), l};
    std::partial_sort(cd.begin(), cd.begin() + static_cast<std::ptrdiff_t>(nprobe), cd.end());
    stats.cells_visited = nprobe;
    std::vector<float> resid(dim_);
    for (std::size_t p = 0; p < nprobe; ++p) {
      const std::size_t l = cd[p].second;
      const auto& ids = list_ids_[l];
      stats.candidates_scanned += ids.size();
      if (config_.kind == IndexKind::IvfFlat) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          hits.emplace_back(l2_sq(q, {list_vectors_[l].data() + i * dim_, dim_}), ids[i]);
        }
      } else {
        const auto cen = centroids_.row(l);
        for (std::size_t j = 0; j < dim_; ++j) resid[j] = q[j] - cen[j];
        const auto table = pq_.distance_table(resid);
        const std::size_t cs = pq_.code_size();
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto code = std::span<const std::uint8_t>(list_codes_[l].data() + i * cs, cs);
          hits.emplace_back(pq_.table_distance(table, code), ids[i]);
        }
      }
    }
  }

  IndexConfig config_;
  bool trained_ = false;
  std::size_t dim_ = 0;
  std::size_t size_ = 0;
  std::vector<Id> ids_;
  IdMap id_map_;
  Matrix vectors_;  // Flat, Hnsw
  Matrix centroids_;
  std::vector<std::vector<Id>> list_ids_;
  std::vector<std::vector<float>> list_vectors_;
  std::vector<std::vector<std::uint8_t>> list_codes_;
  std::vector<std::uint64_t> location_;  // row -> (list << 32 | offset)
  ProductQuantizer pq_;
  double pq_distortion_ = 0.0;
  HnswGraph graph_;
};

inline AnnIndex build_index(VectorPool pool, const IndexConfig& config) {
  return AnnIndex::build(std::move(pool), config);
}

inline constexpr std::array<char, 8> kIndexMagic = {'C', 'K', 'I', 'N', 'D', 'E', 'X', '\0'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline void AnnIndex::save(const std::filesystem::path& path) const {
  if (!trained_) throw ValidationError("save: index not trained");
  BinaryWriter w(path);
  w.magic(kIndexMagic);
  w.scalar<std::uint32_t>(kIndexVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(config_.kind));
  for (std::size_t v : {config_.nlist, config_.nprobe, config_.pq_m, config_.pq_bits, config_.hnsw_m,
                        config_.ef_construction, config_.ef_search, config_.kmeans_iterations, config_.train_size}) {
    w.scalar<std::uint64_t>(v);
  }
  w.scalar<std::uint64_t>(config_.seed);
  w.scalar<std::uint64_t>(dim_);
  w.scalar<std::uint64_t>(size_);
  w.vec(ids_);
  switch (config_.kind) {
    case IndexKind::Flat:
      w.matrix(vectors_);
      break;
    case IndexKind::Hnsw: {
      w.matrix(vectors_);
      w.scalar<std::uint32_t>(graph_.entry_point());
      w.scalar<std::uint32_t>(graph_.max_level());
      for (const auto& node : graph_.raw_links()) {
        w.scalar<std::uint32_t>(static_cast<std::uint32_t>(node.size()));
        for (const auto& l : node) w.vec(l);
      }
      break;
    }
    case IndexKind::IvfFlat:
    case IndexKind::IvfPq:
      w.matrix(centroids_);
      w.vec(location_);
      for (const auto& l : list_ids_) w.vec(l);
      if (config_.kind == IndexKind::IvfFlat) {
        for (const auto& l : list_vectors_) w.vec(l);
      } else {
        w.vec(pq_.codebooks());
        w.scalar<double>(pq_distortion_);
        for (const auto& l : list_codes_) w.vec(l);
      }
      break;
  }
  w.finish();
}

inline AnnIndex AnnIndex::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kIndexMagic);
  const auto version = r.scalar<std::uint32_t>();
  if (version != kIndexVersion) throw ValidationError("unsupported index version " + std::to_string(version));
  AnnIndex idx;
  const auto kind = r.scalar<std::uint32_t>();
  if (kind > static_cast<std::uint32_t>(IndexKind::Hnsw)) throw ValidationError("bad index kind");
  auto& c = idx.config_;
  c.kind = static_cast<IndexKind>(kind);
  for (std::size_t* f : {&c.nlist, &c.nprobe, &c.pq_m, &c.pq_bits, &c.hnsw_m, &c.ef_construction, &c.ef_search,
                         &c.kmeans_iterations, &c.train_size}) {
    *f = r.scalar<std::uint64_t>();
  }
  c.seed = r.scalar<std::uint64_t>();
  idx.dim_ = r.scalar<std::uint64_t>();
  idx.size_ = r.scalar<std::uint64_t>();
  idx.ids_ = r.vec<Id>();
  if (!idx.ids_.empty() && idx.ids_.size() != idx.size_) throw ValidationError("index id list length mismatch");
  idx.id_map_ = IdMap(idx.ids_, idx.size_);
  switch (c.kind) {
    case IndexKind::Flat:
      idx.vectors_ = r.matrix();
      break;
    case IndexKind::Hnsw: {
      idx.vectors_ = r.matrix();
      const auto entry = r.scalar<std::uint32_t>();
      const auto max_level = r.scalar<std::uint32_t>();
      auto& links = idx.graph_.raw_links();
      auto& levels = idx.graph_.raw_levels();
      links.resize(idx.size_);
      levels.resize(idx.size_);
      for (std::size_t n = 0; n < idx.size_; ++n) {
        const auto nl = r.scalar<std::uint32_t>();
        if (nl == 0 || nl > 64) throw ValidationError("corrupt hnsw level count");
        links[n].resize(nl);
        levels[n] = nl - 1;
        for (auto& l : links[n]) {
          l = r.vec<std::uint32_t>();
          for (auto v : l) {
            if (v >= idx.size_) throw ValidationError("corrupt hnsw link");
          }
        }
      }
      idx.graph_.set_entry(entry, max_level);
      idx.graph_.set_params({.m = c.hnsw_m, .ef_construction = c.ef_construction, .seed = c.seed});
      break;
    }
    case IndexKind::IvfFlat:
    case IndexKind::IvfPq: {
      idx.centroids_ = r.matrix();
      idx.location_ = r.vec<std::uint64_t>();
      idx.list_ids_.resize(idx.centroids_.rows());
      for (auto& l : idx.list_ids_) l = r.vec<Id>();
      if (c.kind == IndexKind::IvfFlat) {
        idx.list_vectors_.resize(idx.centroids_.rows());
        for (auto& l : idx.list_vectors_) l = r.vec<float>();
      } else {
        idx.pq_ = ProductQuantizer(idx.dim_, c.pq_m, c.pq_bits);
        auto books = r.vec<float>();
        if (books.size() != idx.pq_.codebooks().size()) throw ValidationError("corrupt pq codebooks");
        idx.pq_.codebooks() = std::move(books);
        idx.pq_distortion_ = r.scalar<double>();
        idx.list_codes_.resize(idx.centroids_.rows());
        for (auto& l : idx.list_codes_) l = r.vec<std::uint8_t>();
      }
      break;
    }
  }
  r.expect_end();
  idx.trained_ = true;
  return idx;
}

}  // namespace curatekit
