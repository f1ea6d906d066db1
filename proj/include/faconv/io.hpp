#pragma once

// Binary tensor files ("T4D") and parameter checkpoints.
//
// T4D layout, all little-endian:
//   bytes 0..7   magic "T4DFILE\0"
//   bytes 8..11  u32 version (1)
//   bytes 12..15 u32 reserved (0)
//   4 x u64      dims n, h, w, c
//   n*h*w*c x f64 payload in row-major (n, h, w, c) order
//
// Checkpoint layout: a text manifest
//   FACKPT 1
//   <count>
//   <path> <n> <h> <w> <c> <offset>     (one line per parameter)
//   <blank line>
// followed by the concatenated T4D blobs; offsets count from the first blob.

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "faconv/autodiff.hpp"

namespace faconv {

namespace io_detail {

inline constexpr char kMagic[8] = {'T', '4', 'D', 'F', 'I', 'L', 'E', '\0'};
inline constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::ostream& os, T v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError(std::string("truncated T4D stream reading ") + what);
  return to_le(v);
}

}  // namespace io_detail

inline std::size_t t4d_size(const Shape& s) { return 16 + 4 * 8 + s.numel() * 8; }

inline void write_t4d(std::ostream& os, const Tensor4D& t) {
  using namespace io_detail;
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, 0);
  for (std::size_t d : {t.n(), t.h(), t.w(), t.c()}) put<std::uint64_t>(os, d);
  for (double v : t.raw()) put<double>(os, v);
  if (!os) throw IoError("failed writing T4D stream");
}

inline Tensor4D read_t4d(std::istream& is) {
  using namespace io_detail;
  char magic[8];
  if (!is.read(magic, sizeof(magic))) throw IoError("truncated T4D stream reading magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("bad T4D magic");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw IoError("unsupported T4D version " + std::to_string(version));
  (void)get<std::uint32_t>(is, "reserved");
  Shape s;
  s.n = get<std::uint64_t>(is, "dims");
  s.h = get<std::uint64_t>(is, "dims");
  s.w = get<std::uint64_t>(is, "dims");
  s.c = get<std::uint64_t>(is, "dims");
  if (s.n && s.h && s.w && s.c && s.numel() / s.n / s.h / s.w != s.c) throw IoError("T4D dims overflow");
  Tensor4D t(s);
  for (auto& v : t.raw()) v = get<double>(is, "payload");
  return t;
}

inline void save_t4d(const std::string& path, const Tensor4D& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_t4d(os, t);
}

inline Tensor4D load_t4d(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_t4d(is);
}

// A sequence is stored as one T4D with n = T.
inline Tensor4D stack_sequence(const std::vector<Tensor4D>& xs) {
  if (xs.empty()) throw ArgumentError("cannot stack an empty sequence");
  const Shape s = xs.front().shape();
  if (s.n != 1) throw DimensionError("sequence frames must have n = 1");
  Tensor4D out({xs.size(), s.h, s.w, s.c});
  for (std::size_t t = 0; t < xs.size(); ++t) {
    require_shape(xs[t], s, "sequence frame " + std::to_string(t));
    std::copy(xs[t].raw().begin(), xs[t].raw().end(), out.raw().begin() + t * s.numel());
  }
  return out;
}

inline std::vector<Tensor4D> unstack_sequence(const Tensor4D& seq) {
  std::vector<Tensor4D> out;
  const Shape frame{1, seq.h(), seq.w(), seq.c()};
  for (std::size_t t = 0; t < seq.n(); ++t) {
    Tensor4D x(frame);
    std::copy_n(seq.raw().begin() + t * frame.numel(), frame.numel(), x.raw().begin());
    out.push_back(std::move(x));
  }
  return out;
}

// ---------------------------------------------------------------------------

inline void write_checkpoint(std::ostream& os, const ParameterStore& store) {
  os << "FACKPT 1\n" << store.count() << "\n";
  std::size_t offset = 0;
  for (const auto& [path, e] : store) {
    const auto& s = e.value.shape();
    os << path << " " << s.n << " " << s.h << " " << s.w << " " << s.c << " " << offset << "\n";
    offset += t4d_size(s);
  }
  os << "\n";
  for (const auto& [_, e] : store) write_t4d(os, e.value);
  if (!os) throw IoError("failed writing checkpoint");
}

// Loads every tensor of a checkpoint into a fresh store.
inline ParameterStore read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "FACKPT 1") throw IoError("not a version-1 checkpoint");
  std::size_t count = 0;
  if (!std::getline(is, line)) throw IoError("truncated checkpoint manifest");
  try {
    count = std::stoul(line);
  } catch (const std::exception&) {
    throw IoError("bad checkpoint parameter count '" + line + "'");
  }
  struct Item {
    std::string path;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw IoError("truncated checkpoint manifest");
    std::istringstream ls(line);
    Item it;
    if (!(ls >> it.path >> it.shape.n >> it.shape.h >> it.shape.w >> it.shape.c >> it.offset)) {
      throw IoError("bad checkpoint manifest line '" + line + "'");
    }
    items.push_back(it);
  }
  if (!std::getline(is, line) || !line.empty()) throw IoError("checkpoint manifest not terminated");
  ParameterStore store;
  std::size_t offset = 0;
  for (const auto& it : items) {
    if (it.offset != offset) throw IoError("checkpoint offset mismatch for '" + it.path + "'");
    Tensor4D t = read_t4d(is);
    if (t.shape() != it.shape) throw IoError("checkpoint shape mismatch for '" + it.path + "'");
    offset += t4d_size(it.shape);
    store.add(it.path, std::move(t));
  }
  return store;
}

inline void save_checkpoint(const std::string& path, const ParameterStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_checkpoint(os, store);
}

inline ParameterStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_checkpoint(is);
}

// Copies checkpoint values into an initialized store; every path and shape
// must match.
inline void assign_parameters(ParameterStore& dst, const ParameterStore& src) {
  if (dst.count() != src.count()) {
    throw IoError("checkpoint has " + std::to_string(src.count()) + " parameters, model expects " +
                  std::to_string(dst.count()));
  }
  for (auto& [path, e] : dst) {
    if (!src.contains(path)) throw IoError("checkpoint lacks parameter '" + path + "'");
    const auto& v = src.value(path);
    if (v.shape() != e.value.shape()) throw IoError("checkpoint shape mismatch for '" + path + "'");
    e.value = v;
  }
}

}  // namespace faconv
