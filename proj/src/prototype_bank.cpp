#include "lgseg/prototype_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace lgseg {

Mat PrototypeBank::all() const {
  Mat out(size(), dim());
  if (k()) out.topRows(k()) = known;
  if (u()) out.bottomRows(u()) = unknown;
  return out;
}

void PrototypeBank::validate() const {
  if (static_cast<int>(known_names.size()) != k()) throw ShapeError("prototype bank: name count != k");
  if (size() == 0) throw ShapeError("prototype bank is empty");
  if (k() && u() && known.cols() != unknown.cols()) throw ShapeError("prototype bank: dimension mismatch");
  const Mat a = all();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    if (std::abs(a.row(i).norm() - 1.0) > 1e-5) throw NumericError("prototype bank: non-unit prototype");
}

namespace {

constexpr char kBankMagic[4] = {'L', 'G', 'P', 'B'};
constexpr uint32_t kBankVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IngestionError("truncated prototype bank " + path.string());
  return v;
}

}  // namespace

void PrototypeBank::save(const std::filesystem::path& path) const {
  validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out.write(kBankMagic, 4);
  put<uint32_t>(out, kBankVersion);
  put<uint32_t>(out, static_cast<uint32_t>(dim()));
  put<uint32_t>(out, static_cast<uint32_t>(k()));
  put<uint32_t>(out, static_cast<uint32_t>(u()));
  for (const std::string& n : known_names) {
    put<uint32_t>(out, static_cast<uint32_t>(n.size()));
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
  }
  out.write(reinterpret_cast<const char*>(known.data()), static_cast<std::streamsize>(known.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(unknown.data()), static_cast<std::streamsize>(unknown.size() * sizeof(double)));
}

PrototypeBank PrototypeBank::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open prototype bank " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kBankMagic, 4) != 0)
    throw IngestionError("not a prototype bank file: " + path.string());
  if (get<uint32_t>(in, path) != kBankVersion) throw IngestionError("unsupported prototype bank version: " + path.string());
  const auto d = get<uint32_t>(in, path);
  const auto k = get<uint32_t>(in, path);
  const auto u = get<uint32_t>(in, path);
  if (d == 0 || d > 65536 || k > 1000000 || u > 1000000) throw IngestionError("corrupt prototype bank header: " + path.string());
  PrototypeBank bank;
  for (uint32_t i = 0; i < k; ++i) {
    const auto len = get<uint32_t>(in, path);
    if (len > 4096) throw IngestionError("corrupt class name in " + path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IngestionError("truncated prototype bank " + path.string());
    bank.known_names.push_back(std::move(name));
  }
  bank.known = Mat(k, d);
  bank.unknown = Mat(u, d);
  if (!in.read(reinterpret_cast<char*>(bank.known.data()), static_cast<std::streamsize>(bank.known.size() * sizeof(double))) ||
      !in.read(reinterpret_cast<char*>(bank.unknown.data()), static_cast<std::streamsize>(bank.unknown.size() * sizeof(double))))
    throw IngestionError("truncated prototype bank " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) throw IngestionError("trailing bytes in " + path.string());
  bank.validate();
  return bank;
}

std::vector<std::vector<int>> top_m_segments(const Mat& text, const Mat& segments, int m) {
  if (text.rows() == 0) throw ConfigError("build_known_prototypes: no known classes");
  if (m < 1) throw ConfigError("top-m must be >= 1");
  if (segments.rows() < m)
    throw ConfigError("build_known_prototypes: " + std::to_string(segments.rows()) + " segments < m=" + std::to_string(m));
  if (text.cols() != segments.cols()) throw ShapeError("build_known_prototypes: dimension mismatch");

  // Softmax over classes, per segment.
  Mat scores = cosine_matrix(segments, text);  // n x k
  for (Eigen::Index s = 0; s < scores.rows(); ++s) {
    const double mx = scores.row(s).maxCoeff();
    scores.row(s) = (scores.row(s).array() - mx).exp().matrix();
    scores.row(s) /= scores.row(s).sum();
  }
  std::vector<std::vector<int>> out(text.rows());
  std::vector<int> order(segments.rows());
  for (Eigen::Index c = 0; c < text.rows(); ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a, c) > scores(b, c); });
    out[c].assign(order.begin(), order.begin() + m);
  }
  return out;
}

Mat build_known_prototypes(const Mat& text, const Mat& segments, int m) {
  const auto top = top_m_segments(text, segments, m);
  Mat protos(text.rows(), text.cols());
  for (Eigen::Index c = 0; c < text.rows(); ++c) {
    RowVec sum = RowVec::Zero(segments.cols());
    for (int s : top[c]) sum += segments.row(s);
    sum /= static_cast<double>(m);
    const double n = sum.norm();
    if (n < 1e-12) throw NumericError("known prototype collapsed to zero (antipodal top-m segments)");
    protos.row(c) = sum / n;
  }
  return protos;
}

std::vector<int> sample_without_replacement(int n, int u, uint64_t seed) {
  if (u < 0) throw ConfigError("unknown prototype count must be >= 0");
  if (n < u)
    throw ConfigError("init_unknown_prototypes: " + std::to_string(n) + " segments < u=" + std::to_string(u));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < u; ++i) {
    const int j = std::uniform_int_distribution<int>(i, n - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(u);
  return idx;
}

Mat init_unknown_prototypes(const Mat& segments, int u, uint64_t seed) {
  const auto idx = sample_without_replacement(static_cast<int>(segments.rows()), u, seed);
  Mat out(u, segments.cols());
  for (int i = 0; i < u; ++i) out.row(i) = segments.row(idx[i]);
  renormalize_rows(out);
  return out;
}

int pseudo_label(const Eigen::Ref<const RowVec>& feature, const Mat& prototypes) {
  if (prototypes.rows() == 0) throw ShapeError("pseudo_label: empty prototype set");
  const Mat unit = normalized_rows(prototypes);
  const Vec sims = unit * feature.transpose();
  int best = 0;
  for (Eigen::Index l = 1; l < sims.size(); ++l)
    if (sims[l] > sims[best]) best = static_cast<int>(l);
  return best;
}

int pseudo_label(const Eigen::Ref<const RowVec>& feature, const PrototypeBank& bank) {
  return pseudo_label(feature, bank.all());
}

std::vector<int> pseudo_labels(const Mat& features, const Mat& prototypes) {
  if (prototypes.rows() == 0) throw ShapeError("pseudo_label: empty prototype set");
  const Mat sims = features * normalized_rows(prototypes).transpose();
  std::vector<int> out(features.rows());
  for (Eigen::Index s = 0; s < sims.rows(); ++s) {
    int best = 0;
    for (Eigen::Index l = 1; l < sims.cols(); ++l)
      if (sims(s, l) > sims(s, best)) best = static_cast<int>(l);
    out[s] = best;
  }
  return out;
}

UnknownLossResult unknown_update_loss(const Mat& unknown, const Mat& features, std::span<const int> labels, int k) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw ShapeError("unknown_update_loss: label count != feature rows");
  if (features.rows() && features.cols() != unknown.cols()) throw ShapeError("unknown_update_loss: dimension mismatch");
  UnknownLossResult r;
  r.grad_unknown = Mat::Zero(unknown.rows(), unknown.cols());
  r.occupancy.assign(unknown.rows(), 0);
  for (int y : labels) {
    if (y < k) continue;
    if (y - k >= unknown.rows()) throw ShapeError("unknown_update_loss: label beyond prototype range");
    ++r.occupancy[y - k];
    ++r.assigned;
  }
  if (r.assigned == 0) return r;

  const double inv = 1.0 / r.assigned;
  for (size_t s = 0; s < labels.size(); ++s) {
    const int y = labels[s];
    if (y < k) continue;
    const auto c = unknown.row(y - k);
    const double cn = c.norm();
    const double fn = features.row(s).norm();
    if (cn == 0 || fn == 0) {
      r.loss += inv;
      continue;
    }
    const RowVec c_hat = c / cn;
    const RowVec f_hat = features.row(s) / fn;
    const double cos = c_hat.dot(f_hat);
    r.loss += (1.0 - cos) * inv;
    r.grad_unknown.row(y - k) -= inv * (f_hat - cos * c_hat) / cn;
  }
  return r;
}

void renormalize_rows(Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0) m.row(i) /= n;
  }
}

}  // namespace lgseg
