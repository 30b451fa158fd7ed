#include "lgseg/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace lgseg::io {

static_assert(std::endian::native == std::endian::little,
              "dense-array container assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'G', 'D', 'A'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kDtypeF64 = 1;
constexpr uint32_t kDtypeI32 = 2;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  return out;
}

// Reads the next whitespace-delimited header token of a netpbm file,
// skipping '#' comments.
std::string pnm_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  if (tok.empty()) throw IngestionError("truncated netpbm header in " + path.string());
  return tok;
}

int pnm_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = pnm_token(in, path);
  try {
    size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IngestionError("bad netpbm header field '" + tok + "' in " + path.string());
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw IngestionError("truncated dense-array file " + path.string());
  return v;
}

void write_header(std::ostream& out, uint32_t dtype, const std::vector<uint64_t>& dims,
                  std::string_view meta) {
  out.write(kMagic, 4);
  put<uint32_t>(out, kVersion);
  put<uint32_t>(out, dtype);
  put<uint32_t>(out, static_cast<uint32_t>(dims.size()));
  for (uint64_t d : dims) put<uint64_t>(out, d);
  put<uint32_t>(out, static_cast<uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
}

struct Header {
  uint32_t dtype;
  std::vector<uint64_t> dims;
  std::string meta;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IngestionError("not a dense-array file: " + path.string());
  const auto version = get<uint32_t>(in, path);
  if (version != kVersion)
    throw IngestionError("unsupported dense-array version " + std::to_string(version) + " in " +
                         path.string());
  Header h;
  h.dtype = get<uint32_t>(in, path);
  const auto ndim = get<uint32_t>(in, path);
  if (ndim == 0 || ndim > 8) throw IngestionError("bad dense-array rank in " + path.string());
  for (uint32_t i = 0; i < ndim; ++i) h.dims.push_back(get<uint64_t>(in, path));
  const auto meta_len = get<uint32_t>(in, path);
  if (meta_len > (1u << 20)) throw IngestionError("bad dense-array metadata in " + path.string());
  h.meta.resize(meta_len);
  if (meta_len && !in.read(h.meta.data(), meta_len))
    throw IngestionError("truncated dense-array file " + path.string());
  return h;
}

void expect_eof(std::istream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof())
    throw IngestionError("trailing bytes in " + path.string());
}

}  // namespace

DenseMap read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (pnm_token(in, path) != "P6") throw IngestionError("expected binary PPM (P6): " + path.string());
  const int w = pnm_int(in, path);
  const int h = pnm_int(in, path);
  const int maxval = pnm_int(in, path);
  if (maxval != 255) throw IngestionError("only 8-bit PPM supported: " + path.string());
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw IngestionError("truncated PPM payload: " + path.string());
  DenseMap img(h, w, 3);
  for (size_t i = 0; i < buf.size(); ++i) img.values.data()[i] = buf[i] / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const DenseMap& image) {
  if (image.channels() != 3) throw ShapeError("write_ppm expects 3 channels");
  auto out = open_out(path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> buf(static_cast<size_t>(image.values.size()));
  for (size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(image.values.data()[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

LabelMap read_pgm_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (pnm_token(in, path) != "P5") throw IngestionError("expected binary PGM (P5): " + path.string());
  const int w = pnm_int(in, path);
  const int h = pnm_int(in, path);
  const int maxval = pnm_int(in, path);
  if (maxval > 65535) throw IngestionError("bad PGM maxval in " + path.string());
  const bool wide = maxval > 255;
  LabelMap labels(h, w);
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * (wide ? 2 : 1));
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw IngestionError("truncated PGM payload: " + path.string());
  for (size_t i = 0; i < labels.ids.size(); ++i) {
    labels.ids[i] = wide ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
  }
  return labels;
}

void write_pgm_labels(const std::filesystem::path& path, const LabelMap& labels) {
  std::vector<unsigned char> buf(labels.ids.size() * 2);
  for (size_t i = 0; i < labels.ids.size(); ++i) {
    const int32_t v = labels.ids[i];
    if (v < 0 || v > 65535) throw ShapeError("label id out of 16-bit PGM range: " + std::to_string(v));
    buf[2 * i] = static_cast<unsigned char>(v >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  auto out = open_out(path);
  out << "P5\n" << labels.width << " " << labels.height << "\n65535\n";
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void write_dense_array(const std::filesystem::path& path, const DenseMap& map, std::string_view meta) {
  auto out = open_out(path);
  write_header(out, kDtypeF64,
               {static_cast<uint64_t>(map.height), static_cast<uint64_t>(map.width),
                static_cast<uint64_t>(map.channels())},
               meta);
  out.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(map.values.size() * sizeof(double)));
}

DenseMap read_dense_array(const std::filesystem::path& path, std::string* meta) {
  auto in = open_in(path);
  const Header h = read_header(in, path);
  if (h.dtype != kDtypeF64 || h.dims.size() != 3)
    throw IngestionError("expected an (H, W, C) float64 dense array: " + path.string());
  DenseMap map(static_cast<int>(h.dims[0]), static_cast<int>(h.dims[1]), static_cast<int>(h.dims[2]));
  if (!in.read(reinterpret_cast<char*>(map.values.data()),
               static_cast<std::streamsize>(map.values.size() * sizeof(double))))
    throw IngestionError("truncated dense-array payload: " + path.string());
  expect_eof(in, path);
  if (meta) *meta = h.meta;
  return map;
}

void write_label_array(const std::filesystem::path& path, const LabelMap& labels, std::string_view meta) {
  auto out = open_out(path);
  write_header(out, kDtypeI32,
               {static_cast<uint64_t>(labels.height), static_cast<uint64_t>(labels.width)}, meta);
  out.write(reinterpret_cast<const char*>(labels.ids.data()),
            static_cast<std::streamsize>(labels.ids.size() * sizeof(int32_t)));
}

LabelMap read_label_array(const std::filesystem::path& path, std::string* meta) {
  auto in = open_in(path);
  const Header h = read_header(in, path);
  if (h.dtype != kDtypeI32 || h.dims.size() != 2)
    throw IngestionError("expected an (H, W) int32 dense array: " + path.string());
  LabelMap labels(static_cast<int>(h.dims[0]), static_cast<int>(h.dims[1]));
  if (!in.read(reinterpret_cast<char*>(labels.ids.data()),
               static_cast<std::streamsize>(labels.ids.size() * sizeof(int32_t))))
    throw IngestionError("truncated dense-array payload: " + path.string());
  expect_eof(in, path);
  if (meta) *meta = h.meta;
  return labels;
}

LabelMap read_label_file(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pgm") return read_pgm_labels(path);
  if (ext == ".lgda") return read_label_array(path);
  throw IngestionError("unsupported label file type '" + ext + "': " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

uint64_t fnv1a(std::string_view bytes, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix_seed(mix_seed(mix_seed(a, b), c), d);
}

}  // namespace lgseg::io
