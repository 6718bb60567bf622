#pragma once

// Pointer chasing (PC) and stream processing (SP) benchmarks: host-side image
// generators, the worker kernels, and plain reference checks of the output.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "svmsim/config.hpp"
#include "svmsim/memory.hpp"
#include "svmsim/runtime/interpreter.hpp"

namespace svmsim {

struct PcSpec {
  std::uint32_t vertices = 10000;
  std::uint32_t degree_min = 4;
  std::uint32_t degree_max = 4;
  std::uint32_t payload = 64;
  std::string topology = "random";  // or "ring"
  std::uint64_t seed = 1;
};

struct SpSpec {
  std::uint64_t buffer_bytes = 4u << 20;
  std::uint32_t block_bytes = 1024;
  std::uint64_t seed = 1;
};

/// A generated image plus the kernel that processes it.
struct WorkloadInstance {
  std::string name;
  std::string source;
  std::vector<rt::Word> args;
  std::size_t intensity_arg = 0;  // index of the milli-cycles-per-byte argument
  rt::Word items = 0;             // iterations of the parallel loop
  std::uint64_t image_hash = 0;
  std::uint64_t mapped_pages = 0;
  /// Empty when the final memory image is correct, else the first mismatch.
  std::function<std::string(AddressSpace&)> verify;
};

namespace detail {

inline std::string substitute(std::string text, const std::string& key, std::uint64_t value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key))
    text.replace(pos, key.size(), std::to_string(value));
  return text;
}

inline std::uint32_t pow2_at_least(std::uint32_t v) {
  std::uint32_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

inline std::uint64_t hash_words(std::uint64_t h, std::uint32_t w) {
  for (int i = 0; i < 4; ++i) {
    h ^= (w >> (8 * i)) & 0xFF;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t pages_for(std::uint64_t bytes) { return (bytes + kPageSize - 1) / kPageSize; }

}  // namespace detail

inline const char* kPcKernel = R"(// Pointer chasing: each vertex pushes its transformed payload to every successor.
// The pushes of one vertex drain while the next vertex is fetched and computed.
kernel pc(svm int* vertices, int vsize, int payload, int milli) {
  local int pay[@PW@];
  local int out[@PW@];
  local int succ[@DW@];
  parallel_for (v in chunk_begin() .. chunk_end()) {
    svm int* vp = vertices + v * vsize;
    int deg = vp[0];
    svm int* sp = vp[1];
    int h = dma_in(pay, 0, vp + 8, payload);
    int g = dma_in(succ, 0, sp, deg * 4);
    dma_wait(h);
    dma_wait(g);
    compute(milli * payload / 1000);
    dma_wait_all();
    apply(out, 0, pay, 0, payload);
    for (k in 0 .. deg) {
      svm int* dst = succ[k];
      dma_out(dst + 8 + payload, out, 0, payload);
    }
  }
  dma_wait_all();
}
)";

inline const char* kSpKernel = R"(// Streaming: blocks of one buffer are transformed in place, double-buffered in L1.
kernel sp(svm int* data, int block, int milli) {
  local int buf[@BW2@];
  int first = chunk_begin();
  int hin = 0;
  int hout = -1;
  if (first < chunk_end()) {
    hin = dma_in(buf, 0, data + first * block, block);
  }
  parallel_for (b in first .. chunk_end()) {
    int s = (b - first) % 2;
    svm int* cur = data + b * block;
    dma_wait(hin);
    if (hout >= 0) {
      dma_wait(hout);
    }
    if (b + 1 < chunk_end()) {
      hin = dma_in(buf, (1 - s) * @BW@, cur + block, block);
    }
    compute(milli * block / 1000);
    apply(buf, s * @BW@, buf, s * @BW@, block);
    hout = dma_out(cur, buf, s * @BW@, block);
  }
  dma_wait_all();
}
)";

/// Kernel text for the given sizes; local buffers are sized at generation time.
inline std::string pc_source(const PcSpec& s) {
  return detail::substitute(detail::substitute(kPcKernel, "@PW@", s.payload / 4), "@DW@", s.degree_max);
}

inline std::string sp_source(const SpSpec& s) {
  return detail::substitute(detail::substitute(kSpKernel, "@BW2@", s.block_bytes / 2), "@BW@", s.block_bytes / 4);
}

/// Vertex record: degree, successor-array pointer, input payload, output
/// payload. Records are a power of two so none straddles a page.
struct PcLayout {
  std::uint32_t vertex_bytes = 0;
  std::uint32_t succ_stride = 0;
  std::uint64_t vertex_region = 0;
  std::uint64_t succ_region = 0;

  static PcLayout of(const PcSpec& s) {
    PcLayout l;
    l.vertex_bytes = detail::pow2_at_least(8 + 2 * s.payload);
    l.succ_stride = detail::pow2_at_least(4 * s.degree_max);
    l.vertex_region = std::uint64_t{s.vertices} * l.vertex_bytes;
    l.succ_region = std::uint64_t{s.vertices} * l.succ_stride;
    return l;
  }
  std::uint64_t pages() const { return detail::pages_for(vertex_region) + detail::pages_for(succ_region); }
};

inline void validate(const PcSpec& s, const SimConfig& cfg) {
  if (s.vertices == 0) throw ConfigError("pc.vertices must be >= 1");
  if (s.degree_min < 1 || s.degree_min > s.degree_max) throw ConfigError("pc degree range must satisfy 1 <= min <= max");
  if (s.degree_max > s.vertices) throw ConfigError("pc.degree_max exceeds the vertex count");
  if (s.payload == 0 || s.payload % 4 != 0) throw ConfigError("pc.payload must be a positive multiple of 4");
  if (8 + 2 * s.payload > kPageSize) throw ConfigError("pc vertex record exceeds a page");
  if (s.topology != "random" && s.topology != "ring") throw ConfigError("pc.topology must be random or ring");
  const std::uint64_t l1_need = 2ull * s.payload + 4ull * s.degree_max;
  if (l1_need > cfg.cluster.l1_bytes / cfg.cluster.pes) throw ConfigError("pc buffers exceed a PE's L1 share");
}

inline WorkloadInstance gen_pc(const PcSpec& s, const SimConfig& cfg, AddressSpace& as) {
  validate(s, cfg);
  const PcLayout lay = PcLayout::of(s);
  const VirtAddr vbase = as.allocate(lay.vertex_region);
  const VirtAddr sbase = as.allocate(lay.succ_region);
  std::mt19937_64 rng(s.seed);

  std::vector<std::vector<std::uint32_t>> succ(s.vertices);
  for (std::uint32_t v = 0; v < s.vertices; ++v) {
    const std::uint32_t deg =
        s.degree_min + static_cast<std::uint32_t>(rng() % (s.degree_max - s.degree_min + 1));
    if (s.topology == "ring") {
      for (std::uint32_t j = 1; j <= deg; ++j) succ[v].push_back((v + j) % s.vertices);
      continue;
    }
    while (succ[v].size() < deg) {
      const auto w = static_cast<std::uint32_t>(rng() % s.vertices);
      if (std::find(succ[v].begin(), succ[v].end(), w) == succ[v].end()) succ[v].push_back(w);
    }
  }

  auto vaddr = [vbase, lay](std::uint32_t v) { return VirtAddr{vbase.value + v * lay.vertex_bytes}; };
  std::vector<std::uint32_t> initial(std::size_t{s.vertices} * (s.payload / 4));
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint32_t v = 0; v < s.vertices; ++v) {
    const VirtAddr rec = vaddr(v);
    const VirtAddr sarr{sbase.value + v * lay.succ_stride};
    as.write32(rec, static_cast<std::uint32_t>(succ[v].size()));
    as.write32(VirtAddr{rec.value + 4}, sarr.value);
    for (std::size_t j = 0; j < succ[v].size(); ++j)
      as.write32(VirtAddr{static_cast<std::uint32_t>(sarr.value + 4 * j)}, vaddr(succ[v][j]).value);
    for (std::uint32_t w = 0; w < s.payload / 4; ++w) {
      const auto word = static_cast<std::uint32_t>(rng());
      initial[std::size_t{v} * (s.payload / 4) + w] = word;
      as.write32(VirtAddr{rec.value + 8 + 4 * w}, word);
      h = detail::hash_words(h, word);
    }
    for (auto w : succ[v]) h = detail::hash_words(h, w);
  }

  std::vector<std::vector<std::uint32_t>> preds(s.vertices);
  for (std::uint32_t v = 0; v < s.vertices; ++v)
    for (auto w : succ[v]) preds[w].push_back(v);

  WorkloadInstance w;
  w.name = "pc";
  w.source = pc_source(s);
  w.args = {vbase.value, lay.vertex_bytes, s.payload, 0};
  w.intensity_arg = 3;
  w.items = s.vertices;
  w.image_hash = h;
  w.mapped_pages = lay.pages();
  w.verify = [=](AddressSpace& mem) -> std::string {
    const std::uint32_t words = s.payload / 4;
    for (std::uint32_t v = 0; v < s.vertices; ++v) {
      const VirtAddr rec = vaddr(v);
      for (std::uint32_t j = 0; j < words; ++j)
        if (mem.read32(VirtAddr{rec.value + 8 + 4 * j}) != initial[std::size_t{v} * words + j])
          return "vertex " + std::to_string(v) + " input payload was modified";
      std::vector<std::uint32_t> out(words);
      for (std::uint32_t j = 0; j < words; ++j) out[j] = mem.read32(VirtAddr{rec.value + 8 + s.payload + 4 * j});
      bool match = false;
      if (preds[v].empty()) match = std::all_of(out.begin(), out.end(), [](auto x) { return x == 0; });
      for (auto u : preds[v]) {
        bool same = true;
        for (std::uint32_t j = 0; j < words && same; ++j)
          same = out[j] == rt::apply_word(initial[std::size_t{u} * words + j]);
        match = match || same;
      }
      if (!match) return "vertex " + std::to_string(v) + " output payload matches no predecessor";
    }
    return {};
  };
  return w;
}

inline void validate(const SpSpec& s, const SimConfig& cfg) {
  if (s.block_bytes == 0 || s.block_bytes % 4 != 0) throw ConfigError("sp.block_bytes must be a positive multiple of 4");
  if (s.buffer_bytes == 0 || s.buffer_bytes % s.block_bytes != 0)
    throw ConfigError("sp.block_bytes must divide sp.buffer_bytes");
  // Input and output double buffers are budgeted even though the kernel transforms in place.
  if (4ull * s.block_bytes > cfg.cluster.l1_bytes / cfg.cluster.pes)
    throw ConfigError("sp block too large for L1 double-buffering");
  if (s.block_bytes > cfg.dma.max_command) throw ConfigError("sp block exceeds the maximum DMA command");
}

inline WorkloadInstance gen_sp(const SpSpec& s, const SimConfig& cfg, AddressSpace& as) {
  validate(s, cfg);
  const VirtAddr base = as.allocate(s.buffer_bytes);
  std::mt19937_64 rng(s.seed);
  const std::uint64_t words = s.buffer_bytes / 4;
  std::vector<std::uint32_t> initial(words);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint64_t i = 0; i < words; ++i) {
    initial[i] = static_cast<std::uint32_t>(rng());
    h = detail::hash_words(h, initial[i]);
  }
  std::vector<std::uint8_t> bytes(s.buffer_bytes);
  std::memcpy(bytes.data(), initial.data(), bytes.size());
  as.write(base, bytes);

  WorkloadInstance w;
  w.name = "sp";
  w.source = sp_source(s);
  w.args = {base.value, s.block_bytes, 0};
  w.intensity_arg = 2;
  w.items = static_cast<rt::Word>(s.buffer_bytes / s.block_bytes);
  w.image_hash = h;
  w.mapped_pages = detail::pages_for(s.buffer_bytes);
  w.verify = [=](AddressSpace& mem) -> std::string {
    std::vector<std::uint8_t> now(s.buffer_bytes);
    mem.read(base, now);
    for (std::uint64_t i = 0; i < words; ++i) {
      std::uint32_t v;
      std::memcpy(&v, now.data() + 4 * i, 4);
      if (v != rt::apply_word(initial[i])) return "word " + std::to_string(i) + " of the stream is wrong";
    }
    return {};
  };
  return w;
}

}  // namespace svmsim
