#pragma once

// Heap high-water-mark instrumentation. Expanding
// CURATEKIT_TRACK_ALLOCATIONS() in exactly one translation unit of an
// executable interposes the glibc allocator entry points so that every heap
// allocation (operator new, Eigen, C code) is counted. Without it, peaks fall
// back to the process maximum resident set size.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>

#include <sys/resource.h>

namespace curatekit::memtrack {

inline constinit std::atomic<std::int64_t> g_current{0};
inline constinit std::atomic<std::int64_t> g_peak{0};
inline constinit std::atomic<bool> g_installed{false};

inline void on_alloc(std::size_t bytes) noexcept {
  const auto now = g_current.fetch_add(static_cast<std::int64_t>(bytes), std::memory_order_relaxed) +
                   static_cast<std::int64_t>(bytes);
  auto peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

inline void on_free(std::size_t bytes) noexcept {
  g_current.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
}

inline bool installed() noexcept { return g_installed.load(std::memory_order_relaxed); }
inline std::int64_t current_bytes() noexcept { return g_current.load(std::memory_order_relaxed); }

inline std::uint64_t max_rss_bytes() noexcept {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return static_cast<std::uint64_t>(ru.ru_maxrss) * 1024u;
}

/// Peak heap growth over a scope. With the tracker installed this is the
/// high-water mark above the heap size at construction; otherwise it is the
/// process max RSS.
class PeakScope {
 public:
  PeakScope() noexcept : base_(current_bytes()) { g_peak.store(base_, std::memory_order_relaxed); }

  std::uint64_t peak_bytes() const noexcept {
    if (!installed()) return max_rss_bytes();
    return static_cast<std::uint64_t>(std::max<std::int64_t>(0, g_peak.load(std::memory_order_relaxed) - base_));
  }

 private:
  std::int64_t base_;
};

}  // namespace curatekit::memtrack

#if defined(__GLIBC__)
#include <cerrno>
#include <malloc.h>

extern "C" {
void* __libc_malloc(std::size_t);
void* __libc_calloc(std::size_t, std::size_t);
void* __libc_realloc(void*, std::size_t);
void* __libc_memalign(std::size_t, std::size_t);
void* __libc_valloc(std::size_t);
void* __libc_pvalloc(std::size_t);
void __libc_free(void*);
}

#define CURATEKIT_TRACK_ALLOCATIONS()                                                              \
  namespace {                                                                                      \
  struct CuratekitTrackerFlag {                                                                    \
    CuratekitTrackerFlag() noexcept { ::curatekit::memtrack::g_installed.store(true); }            \
  } curatekit_tracker_flag;                                                                        \
  void* curatekit_counted(void* p) noexcept {                                                      \
    if (p) ::curatekit::memtrack::on_alloc(malloc_usable_size(p));                                 \
    return p;                                                                                      \
  }                                                                                                \
  }                                                                                                \
  extern "C" {                                                                                     \
  void* malloc(std::size_t n) noexcept { return curatekit_counted(__libc_malloc(n)); }                      \
  void* calloc(std::size_t n, std::size_t s) noexcept { return curatekit_counted(__libc_calloc(n, s)); }   \
  void free(void* p) noexcept {                                                                             \
    if (p) ::curatekit::memtrack::on_free(malloc_usable_size(p));                                  \
    __libc_free(p);                                                                                \
  }                                                                                                \
  void* realloc(void* p, std::size_t n) noexcept {                                                          \
    const std::size_t old = p ? malloc_usable_size(p) : 0;                                         \
    void* q = __libc_realloc(p, n);                                                                \
    if (q || n == 0) ::curatekit::memtrack::on_free(old);                                          \
    return q ? curatekit_counted(q) : q;                                                           \
  }                                                                                                \
  void* memalign(std::size_t a, std::size_t n) noexcept { return curatekit_counted(__libc_memalign(a, n)); } \
  void* aligned_alloc(std::size_t a, std::size_t n) noexcept { return curatekit_counted(__libc_memalign(a, n)); } \
  void* valloc(std::size_t n) noexcept { return curatekit_counted(__libc_valloc(n)); }                      \
  void* pvalloc(std::size_t n) noexcept { return curatekit_counted(__libc_pvalloc(n)); }                    \
  int posix_memalign(void** out, std::size_t a, std::size_t n) noexcept {                                   \
    if (a % sizeof(void*) != 0 || (a & (a - 1)) != 0) return EINVAL;                               \
    void* p = __libc_memalign(a, n);                                                               \
    if (!p) return ENOMEM;                                                                         \
    *out = curatekit_counted(p);                                                                   \
    return 0;                                                                                      \
  }                                                                                                \
  }
#else
#define CURATEKIT_TRACK_ALLOCATIONS()
#endif
