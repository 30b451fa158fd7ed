#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lgseg/config.hpp"
#include "lgseg/eval_suite.hpp"
#include "lgseg/geometry_augment.hpp"
#include "lgseg/guidance_losses.hpp"
#include "lgseg/pipeline.hpp"
#include "lgseg/prototype_bank.hpp"
#include "lgseg/segmentation_core.hpp"
#include "lgseg/synth.hpp"

namespace py = pybind11;
using namespace lgseg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int32_t, py::array::c_style | py::array::forcecast>;

Mat to_mat(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Mat m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

Array from_mat(const Mat& m) {
  Array a({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), a.mutable_data());
  return a;
}

DenseMap to_dense(const Array& a) {
  if (a.ndim() != 3) throw ShapeError("expected an H x W x C array");
  DenseMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), m.values.data());
  return m;
}

Array from_dense(const DenseMap& m) {
  Array a({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width),
           static_cast<py::ssize_t>(m.channels())});
  std::copy(m.values.data(), m.values.data() + m.values.size(), a.mutable_data());
  return a;
}

LabelMap to_labels(const IntArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected an H x W integer array");
  LabelMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.ids.begin());
  return m;
}

IntArray from_labels(const LabelMap& m) {
  IntArray a({m.height, m.width});
  std::copy(m.ids.begin(), m.ids.end(), a.mutable_data());
  return a;
}

std::vector<int> to_ints(const IntArray& a) { return std::vector<int>(a.data(), a.data() + a.size()); }

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["per_class_iou"] = r.per_class_iou;
  d["mIoU"] = r.miou;
  d["pAcc"] = r.pacc;
  d["mIoU_k"] = r.miou_known;
  d["mIoU_u"] = r.miou_unknown;
  d["hIoU"] = r.hiou;
  d["avgsim"] = r.avgsim;
  d["J_mean"] = r.j_mean;
  d["F_mean"] = r.f_mean;
  return d;
}

RunConfig load_config(const std::filesystem::path& path, const std::optional<std::filesystem::path>& out) {
  RunConfig c = RunConfig::load(path);
  if (out) c.output = *out;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Language-guided pixel embedding segmentation (C++ core)";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IngestionError>(m, "IngestionError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<AlignmentError>(m, "AlignmentError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());

  m.attr("IGNORE_LABEL") = kIgnoreLabel;

  m.def("normalize_embeddings", [](const Array& raw, double eps) {
    return from_dense(normalize_embeddings(to_dense(raw), eps).map);
  }, py::arg("raw"), py::arg("eps") = 1e-12);

  m.def("pool_segments", [](const Array& emb, const IntArray& ids) {
    const SegmentSet s = pool_segments(to_dense(emb), to_labels(ids));
    return py::make_tuple(from_labels(s.ids), from_mat(s.embeddings), s.counts);
  }, py::arg("emb"), py::arg("ids"), "Returns (compact ids, unit segment embeddings, pixel counts).");

  m.def("cluster_to_segments", [](const Array& emb, int k, int iterations, uint64_t seed) {
    return from_labels(cluster_to_segments(to_dense(emb), {k, iterations, seed}));
  }, py::arg("emb"), py::arg("k") = 36, py::arg("iterations") = 10, py::arg("seed") = 0);

  m.def("slic_regions", [](const Array& image, int n_regions, double compactness, int iterations) {
    return from_labels(slic_regions(to_dense(image), {n_regions, compactness, iterations}).ids);
  }, py::arg("image"), py::arg("n_regions") = 16, py::arg("compactness") = 10.0, py::arg("iterations") = 10);

  m.def("sample_transform", [](uint64_t seed, int height, int width) {
    const ViewTransform t = sample_transform(seed, AugmentConfig{}, {height, width});
    py::dict d;
    d["crop"] = py::make_tuple(t.crop.top, t.crop.left, t.crop.height, t.crop.width);
    d["flip"] = t.flip_h;
    d["out_size"] = py::make_tuple(t.out_size.height, t.out_size.width);
    return d;
  }, py::arg("seed"), py::arg("height"), py::arg("width"));

  m.def("embedding_consistency_loss", [](const Array& v, const Array& i) {
    return embedding_consistency_loss(to_mat(v), to_mat(i)).loss;
  }, py::arg("v"), py::arg("i"));

  m.def("semantic_consistency_loss", [](const Array& v, const Array& protos, const IntArray& labels, double t) {
    const auto y = to_ints(labels);
    return semantic_consistency_loss(to_mat(v), to_mat(protos), y, t).loss;
  }, py::arg("v"), py::arg("prototypes"), py::arg("labels"), py::arg("temperature") = 1.0);

  m.def("unknown_update_loss", [](const Array& unknown, const Array& feats, const IntArray& labels, int k) {
    const auto y = to_ints(labels);
    const auto r = unknown_update_loss(to_mat(unknown), to_mat(feats), y, k);
    return py::make_tuple(r.loss, from_mat(r.grad_unknown));
  }, py::arg("unknown"), py::arg("features"), py::arg("labels"), py::arg("k"));

  m.def("build_known_prototypes", [](const Array& text, const Array& segs, int top_m) {
    return from_mat(build_known_prototypes(to_mat(text), to_mat(segs), top_m));
  }, py::arg("text"), py::arg("segments"), py::arg("top_m") = 32);

  m.def("init_unknown_prototypes", [](const Array& segs, int u, uint64_t seed) {
    return from_mat(init_unknown_prototypes(to_mat(segs), u, seed));
  }, py::arg("segments"), py::arg("u") = 64, py::arg("seed") = 0);

  m.def("pseudo_labels", [](const Array& feats, const Array& protos) {
    return pseudo_labels(to_mat(feats), to_mat(protos));
  }, py::arg("features"), py::arg("prototypes"));

  m.def("langseg_predict", [](const Array& emb, const Array& text) {
    return from_labels(langseg_predict(to_dense(emb), to_mat(text)));
  }, py::arg("emb"), py::arg("class_text"));

  m.def("knn_classify_segments", [](const Array& q, const Array& train, const IntArray& labels, int k) {
    const auto y = to_ints(labels);
    return knn_classify_segments(to_mat(q), to_mat(train), y, k);
  }, py::arg("queries"), py::arg("train"), py::arg("labels"), py::arg("k") = 20);

  m.def("compute_miou", [](const IntArray& pred, const IntArray& gt, std::vector<int> classes) {
    return compute_miou(to_labels(pred), to_labels(gt), classes);
  }, py::arg("pred"), py::arg("gt"), py::arg("class_ids") = std::vector<int>{});
  m.def("compute_pacc", [](const IntArray& pred, const IntArray& gt) {
    return compute_pacc(to_labels(pred), to_labels(gt));
  }, py::arg("pred"), py::arg("gt"));
  m.def("compute_hiou", &compute_hiou, py::arg("miou_unknown"), py::arg("miou_known"));
  m.def("compute_avgsim", [](const Array& v, const Array& i) { return compute_avgsim(to_mat(v), to_mat(i)); },
        py::arg("v"), py::arg("i"));

  m.def("propagate_masks", [](const std::vector<Array>& frames, const IntArray& first) {
    std::vector<DenseMap> f;
    for (const auto& a : frames) f.push_back(to_dense(a));
    std::vector<IntArray> out;
    for (const auto& l : propagate_masks(f, to_labels(first))) out.push_back(from_labels(l));
    return out;
  }, py::arg("frames"), py::arg("first_mask"));

  m.def("gen_synth", [](const std::filesystem::path& out, uint64_t seed, int train_images, int eval_images, int dim) {
    synth::CorpusOptions o;
    o.seed = seed;
    o.train_images = train_images;
    o.eval_images = eval_images;
    o.dim = dim;
    synth::write_corpus(out, o);
  }, py::arg("out"), py::arg("seed") = 1, py::arg("train_images") = 32, py::arg("eval_images") = 16,
        py::arg("dim") = 16);

  m.def("config_hash", [](const std::filesystem::path& path) { return RunConfig::load(path).hash_hex(); },
        py::arg("config"));

  m.def("build_prototypes", [](const std::filesystem::path& config, std::optional<std::filesystem::path> out) {
    const PrototypeBank b = pipeline::cmd_build_prototypes(load_config(config, out));
    return py::make_tuple(b.known_names, from_mat(b.known), from_mat(b.unknown));
  }, py::arg("config"), py::arg("out") = py::none());

  m.def("train", [](const std::filesystem::path& config, std::optional<std::filesystem::path> out,
                    std::optional<std::filesystem::path> resume) {
    py::gil_scoped_release release;
    const auto r = pipeline::cmd_train(load_config(config, out), resume.value_or(std::filesystem::path{}));
    std::vector<double> totals;
    for (const auto& b : r.trace) totals.push_back(b.total);
    return totals;
  }, py::arg("config"), py::arg("out") = py::none(), py::arg("resume") = py::none(),
        "Trains and returns the per-iteration total loss.");

  m.def("evaluate", [](const std::filesystem::path& config, const std::string& mode,
                       std::optional<std::filesystem::path> out) {
    const auto r = pipeline::cmd_eval(load_config(config, out), pipeline::parse_eval_mode(mode));
    py::dict d = report_dict(r.metrics);
    d["unknown_names"] = r.unknown_names;
    d["unknown_proto_cos"] = r.unknown_proto_cos;
    d["unknown_label_rate"] = r.unknown_label_rate;
    d["j_per_frame"] = r.j_per_frame;
    d["f_per_frame"] = r.f_per_frame;
    return d;
  }, py::arg("config"), py::arg("mode") = "langseg", py::arg("out") = py::none());
}
