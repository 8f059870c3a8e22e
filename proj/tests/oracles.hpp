// Test-only reference implementations. These stay independent of the library
// code paths they check.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "evgraph/events.hpp"
#include "evgraph/representations.hpp"
#include "evgraph/rng.hpp"
#include "evgraph/tensor.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), used as the file-digest oracle.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    h_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
          0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    buf_.clear();
    total_ = 0;
  }

  void update(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    total_ += len;
    buf_.insert(buf_.end(), p, p + len);
    while (buf_.size() >= 64) {
      compress(buf_.data());
      buf_.erase(buf_.begin(), buf_.begin() + 64);
    }
  }

  std::string hex_digest() {
    std::vector<unsigned char> pad = buf_;
    const std::uint64_t bits = total_ * 8;
    pad.push_back(0x80);
    while (pad.size() % 64 != 56) pad.push_back(0);
    for (int i = 7; i >= 0; --i) pad.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    auto h = h_;
    for (size_t off = 0; off < pad.size(); off += 64) compress_into(pad.data() + off, h);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (std::uint32_t w : h)
      for (int i = 7; i >= 0; --i) out += hex[(w >> (4 * i)) & 0xf];
    return out;
  }

 private:
  static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void compress(const unsigned char* block) { compress_into(block, h_); }

  static void compress_into(const unsigned char* block, std::array<std::uint32_t, 8>& h) {
    static constexpr std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
        0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
        0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
        0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
        0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
        0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
        0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(block[4 * i]) << 24) | (std::uint32_t(block[4 * i + 1]) << 16) |
             (std::uint32_t(block[4 * i + 2]) << 8) | block[4 * i + 3];
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + s1 + ch + k[i] + w[i];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }

  std::array<std::uint32_t, 8> h_;
  std::vector<unsigned char> buf_;
  std::uint64_t total_ = 0;
};

inline std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex_digest();
}

// ---------------------------------------------------------------------------
// Brute-force KNN: full sort by (distance, index).
template <typename T>
std::vector<std::vector<int>> knn_bruteforce(const evg::Mat<T>& pts, int k, bool exclude_self) {
  const int n = pts.rows;
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<T, int>> d;
    for (int j = 0; j < n; ++j) {
      if (exclude_self && j == i) continue;
      T acc = 0;
      for (int c = 0; c < pts.cols; ++c) {
        const T diff = pts.at(i, c) - pts.at(j, c);
        acc += diff * diff;
      }
      d.push_back({acc, j});
    }
    std::sort(d.begin(), d.end());
    const int kk = std::min<int>(k, static_cast<int>(d.size()));
    for (int j = 0; j < kk; ++j) out[i].push_back(d[j].second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive voxel bucketing: count, rank and accumulate without hash maps.
struct VoxelOracleVertex {
  std::uint64_t tb, yb, xb;
  int count = 0;
  std::vector<double> cells;
};

inline std::vector<VoxelOracleVertex> voxelize_bruteforce(const evg::events::EventStream& s,
                                                          int v_x, int v_y, double v_t_ms,
                                                          int n_keep) {
  const auto v_t_us = static_cast<std::uint64_t>(v_t_ms * 1000.0 + 0.5);
  std::map<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>, VoxelOracleVertex> m;
  for (const auto& e : s.events) {
    const std::uint64_t tb = e.t / v_t_us, yb = e.y / v_y, xb = e.x / v_x;
    auto& v = m[{tb, yb, xb}];
    if (v.cells.empty()) {
      v.tb = tb;
      v.yb = yb;
      v.xb = xb;
      v.cells.assign(static_cast<size_t>(v_x) * v_y, 0.0);
    }
    v.count += 1;
    v.cells[(e.y - yb * v_y) * v_x + (e.x - xb * v_x)] += e.p;
  }
  std::vector<VoxelOracleVertex> all;
  for (auto& [key, v] : m) all.push_back(std::move(v));
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return std::tie(a.tb, a.yb, a.xb) < std::tie(b.tb, b.yb, b.xb);
  });
  if (static_cast<int>(all.size()) > n_keep) all.resize(n_keep);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return std::tie(a.tb, a.yb, a.xb) < std::tie(b.tb, b.yb, b.xb);
  });
  return all;
}

// ---------------------------------------------------------------------------
// Random labeled streams and graphs for property tests.
inline evg::events::EventStream random_stream(evg::Rng& rng, int width, int height,
                                              size_t n_events, std::uint64_t max_t) {
  evg::events::EventStream s;
  s.sensor_width = static_cast<std::uint16_t>(width);
  s.sensor_height = static_cast<std::uint16_t>(height);
  std::vector<std::uint64_t> ts(n_events);
  for (auto& t : ts) t = rng.uniform_int(max_t);
  std::sort(ts.begin(), ts.end());
  for (size_t i = 0; i < n_events; ++i) {
    evg::events::Event e;
    e.t = ts[i];
    e.x = static_cast<std::uint16_t>(rng.uniform_int(width));
    e.y = static_cast<std::uint16_t>(rng.uniform_int(height));
    e.p = rng.coin() ? 1 : -1;
    s.events.push_back(e);
  }
  s.duration = s.max_t();
  return s;
}

template <typename T>
evg::Mat<T> random_mat(evg::Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  evg::Mat<T> m(rows, cols);
  for (auto& x : m.v) x = static_cast<T>(rng.uniform(lo, hi));
  return m;
}

inline evg::repr::VoxelGraph random_graph(evg::Rng& rng, int n, int d_inp) {
  evg::repr::VoxelGraph g;
  g.coords = random_mat<double>(rng, n, 3, 0.0, 1.0);
  g.semantics = random_mat<double>(rng, n, d_inp, -2.0, 2.0);
  g.normalized = true;
  return g;
}

}  // namespace oracle
