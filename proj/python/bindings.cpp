#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "icgmvs/evaluation.hpp"
#include "icgmvs/fusion.hpp"
#include "icgmvs/io.hpp"
#include "icgmvs/network.hpp"
#include "icgmvs/parallel.hpp"
#include "icgmvs/pipeline.hpp"
#include "icgmvs/synth.hpp"

namespace py = pybind11;
using namespace icgmvs;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

Tensor from_numpy(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<Eigen::Vector3d> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw DimensionError("expected an (N, 3) point array");
  std::vector<Eigen::Vector3d> p(static_cast<std::size_t>(a.shape(0)));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = Eigen::Vector3d(a.at(i, 0), a.at(i, 1), a.at(i, 2));
  return p;
}

Array points_array(const std::vector<Eigen::Vector3d>& p) {
  Array a({static_cast<py::ssize_t>(p.size()), py::ssize_t{3}});
  for (std::size_t i = 0; i < p.size(); ++i)
    for (py::ssize_t k = 0; k < 3; ++k) a.mutable_at(i, k) = p[i][k];
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cascade multi-view stereo core";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("set_num_threads", &set_num_threads);

  py::class_<Camera>(m, "Camera")
      .def(py::init<>())
      .def_readwrite("K", &Camera::K)
      .def_readwrite("R", &Camera::R)
      .def_readwrite("t", &Camera::t)
      .def_readwrite("dmin", &Camera::dmin)
      .def_readwrite("dmax", &Camera::dmax)
      .def("validate", &Camera::validate)
      .def("scaled", &Camera::scaled)
      .def("center", &Camera::center)
      .def("project", &Camera::project)
      .def("unproject", &Camera::unproject);

  m.def("homography", &homography, py::arg("ref"), py::arg("src"), py::arg("depth"));
  m.def("look_at", &look_at, py::arg("eye"), py::arg("target"), py::arg("K"));
  m.def("default_intrinsics", &default_intrinsics, py::arg("H"), py::arg("W"), py::arg("focal_scale") = 1.0);
  m.def(
      "initial_hypotheses",
      [](double dmin, double dmax, std::size_t count) { 
        auto v = initial_hypotheses(dmin, dmax, count).values;
        return Array(static_cast<py::ssize_t>(v.size()), v.data());
      },
      py::arg("dmin"), py::arg("dmax"), py::arg("count"));

  py::class_<SyntheticView>(m, "SyntheticView")
      .def_property_readonly("image", [](const SyntheticView& v) { return to_numpy(v.image); })
      .def_property_readonly("depth", [](const SyntheticView& v) { return to_numpy(v.depth); })
      .def_readonly("cam", &SyntheticView::cam);
  py::class_<SyntheticScene>(m, "SyntheticScene")
      .def_readonly("name", &SyntheticScene::name)
      .def_readonly("views", &SyntheticScene::views)
      .def_readonly("pairs", &SyntheticScene::pairs);
  m.def(
      "make_scene",
      [](std::size_t index, std::size_t views, std::size_t height, std::size_t width, std::uint64_t seed) {
        DatasetSpec spec;
        spec.num_scenes = index + 1;
        spec.views_per_scene = views;
        spec.height = height;
        spec.width = width;
        spec.seed = seed;
        return make_scene(spec, index);
      },
      py::arg("index") = 0, py::arg("views") = 3, py::arg("height") = 64, py::arg("width") = 80, py::arg("seed") = 1);

  m.def(
      "depth_errors",
      [](const Array& pred, const Array& gt) {
        Tensor g = from_numpy(gt);
        std::vector<unsigned char> mask(g.numel());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = g[i] > 0.0;
        DepthErrorReport r = depth_errors(from_numpy(pred), g, mask);
        py::dict d;
        d["ade"] = r.ade;
        d["tde"] = r.tde;
        d["valid_count"] = r.valid_count;
        d["empty"] = r.empty;
        return d;
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "cloud_metrics",
      [](const Array& recon, const Array& gt, double cap, double tau) {
        auto r = to_points(recon), g = to_points(gt);
        CloudMetricsReport c = cloud_distance_metrics(r, g, cap);
        ThresholdReport t = threshold_metrics(r, g, tau);
        py::dict d;
        d["acc"] = c.acc;
        d["comp"] = c.comp;
        d["overall"] = c.overall;
        d["precision"] = t.precision;
        d["recall"] = t.recall;
        d["fscore"] = t.fscore;
        return d;
      },
      py::arg("recon"), py::arg("gt"), py::arg("outlier_cap") = 20.0, py::arg("tau") = 0.5);
  m.def("fscore", &fscore);

  m.def("read_pfm", [](const std::string& path) { return to_numpy(read_pfm(path)); });
  m.def("write_pfm", [](const std::string& path, const Array& a) { write_pfm(path, from_numpy(a)); });
  m.def("read_ply", [](const std::string& path) { return points_array(read_ply(path).points); });

  m.def(
      "fuse_depths",
      [](const std::vector<Array>& depths, const std::vector<Camera>& cams, std::size_t min_views) {
        if (depths.size() != cams.size()) throw ParameterError("one camera per depth map required");
        std::vector<FusionView> views;
        for (std::size_t i = 0; i < depths.size(); ++i) {
          Tensor d = from_numpy(depths[i]);
          views.push_back({d, Tensor(d.shape(), 1.0), Tensor({3, d.dim(0), d.dim(1)}, 1.0), cams[i]});
        }
        FusionConfig cfg;
        cfg.min_consistent_views = min_views;
        return points_array(fuse(views, cfg).points);
      },
      py::arg("depths"), py::arg("cams"), py::arg("min_consistent_views") = 2);

  py::class_<IcgMvsNet>(m, "Network")
      .def(py::init([](std::uint64_t seed) { return std::make_unique<IcgMvsNet>(NetworkConfig{}, seed); }),
           py::arg("seed") = 1)
      .def("parameter_count", [](const IcgMvsNet& n) { return n.parameters().parameter_count(); })
      .def("load", [](IcgMvsNet& n, const std::string& path) { load_checkpoint(path, n.parameters()); })
      .def(
          "infer",
          [](IcgMvsNet& n, const std::vector<Array>& images, const std::vector<Camera>& cams) {
            MvsSample s;
            for (const auto& a : images) s.images.push_back(from_numpy(a));
            s.cams = cams;
            InferenceResult r = infer_sample(n, s);
            return py::make_tuple(to_numpy(r.depth.depth), to_numpy(r.depth.confidence));
          },
          py::arg("images"), py::arg("cams"));
}
