#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "lenslike/calibrate.hpp"
#include "lenslike/cli.hpp"
#include "lenslike/d4.hpp"
#include "lenslike/errors.hpp"
#include "lenslike/io.hpp"
#include "lenslike/parallel.hpp"
#include "lenslike/posterior.hpp"
#include "lenslike/rng.hpp"
#include "lenslike/scattering.hpp"
#include "lenslike/scoring.hpp"

namespace py = pybind11;
using namespace lenslike;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Map2D to_map(const Array& a, const std::optional<MaskArray>& mask) {
  if (a.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
  const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
  Map2D m(h, w, std::vector<double>(a.data(), a.data() + h * w));
  if (mask) {
    if (mask->ndim() != 2 || mask->shape(0) != a.shape(0) || mask->shape(1) != a.shape(1))
      throw Error(ErrorCode::ShapeMismatch, "mask shape differs from the map");
    std::vector<std::uint8_t> v(mask->data(), mask->data() + h * w);
    for (auto& b : v) b = b != 0;
    m.mask = std::move(v);
  }
  return m;
}

Array from_map(const Map2D& m) {
  Array out({m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

D4 parse_d4(const std::string& name) {
  for (D4 t : kD4Elements)
    if (name == to_string(t)) return t;
  throw Error(ErrorCode::InvalidArgument, "unknown D4 element '" + name + "'");
}

GridPtr grid_from(const Eigen::MatrixX2d& pts) {
  std::vector<GridPoint> v;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) v.push_back({pts(i, 0), pts(i, 1)});
  return std::make_shared<const CosmologyGrid>(std::move(v));
}

Eigen::MatrixX2d grid_array(const CosmologyGrid& g) {
  Eigen::MatrixX2d out(g.size(), 2);
  for (int i = 0; i < g.size(); ++i) out.row(i) = g.theta(i).transpose();
  return out;
}

// Rows (member_id, map_id, truth or None, (pred_om, pred_s8)).
std::vector<RawRecord> records_from(const py::iterable& rows) {
  std::vector<RawRecord> out;
  for (const auto& item : rows) {
    const auto t = item.cast<py::tuple>();
    if (t.size() != 4) throw Error(ErrorCode::InvalidArgument, "record must have four fields");
    RawRecord r;
    r.member_id = t[0].cast<int>();
    r.map_id = t[1].cast<std::string>();
    if (!t[2].is_none()) r.truth = t[2].cast<Vec2>();
    r.pred = t[3].cast<Vec2>();
    out.push_back(std::move(r));
  }
  return out;
}

py::dict result_dict(const PosteriorResult& r) {
  py::dict d;
  d["map_id"] = r.map_id;
  d["mean"] = r.mean;
  d["sigma"] = r.sigma;
  d["weights"] = r.weights;
  d["top_index"] = r.top_index;
  d["entropy"] = r.entropy;
  d["status"] = r.status == PosteriorStatus::Ok ? "ok" : "underflow";
  return d;
}

}  // namespace

PYBIND11_MODULE(_lenslike, m) {
  m.doc() = "Calibrated grid likelihoods for ensemble cosmology predictions";

  static py::exception<Error> error_type(m, "LenslikeError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object gi = e.grid_index() ? py::object(py::int_(*e.grid_index())) : py::object(py::none());
      PyErr_SetObject(error_type.ptr(), py::make_tuple(e.what(), to_string(e.code()), gi).ptr());
    }
  });

  m.attr("SCHEMA") = io::kSchema;
  m.attr("RNG_NAME") = Philox::kName;
  m.attr("MORLET_FAMILY") = kMorletFamily;
  m.attr("SIGMA_FLOOR") = kSigmaFloor;

  m.def("set_threads", [](unsigned n) { set_thread_count(n); }, py::arg("n"));

  m.def("hartlap_factor", &hartlap_factor, py::arg("n_samples"), py::arg("dim") = 2);
  m.def("shrink_covariance", &shrink_covariance, py::arg("sigma"), py::arg("lambda_lw"));
  m.def("median_knn_distance",
        [](const Eigen::MatrixX2d& pts, int k) { return median_knn_distance(*grid_from(pts), k); },
        py::arg("grid"), py::arg("k") = 5);
  m.def(
      "kernel_weights",
      [](const Eigen::MatrixX2d& pts, double sigma_bw) {
        const auto g = grid_from(pts);
        const auto k = build_kernel(*g, sigma_bw);
        return py::make_tuple(grid_array(*g), k.weights, k.bandwidth);
      },
      py::arg("grid"), py::arg("sigma_bw"),
      "Sorted grid, row-stochastic weights and bandwidth.");
  m.def("score", &score_single, py::arg("estimate"), py::arg("sigma"), py::arg("truth"),
        py::arg("lambda_") = kDefaultLambda);

  m.def(
      "calibrate",
      [](const Eigen::MatrixX2d& pts, const py::iterable& rows, const py::dict& config) {
        const auto grid = grid_from(pts);
        const auto raw = records_from(rows);
        const auto cfg = io::config_from_json(nlohmann::json::parse(py::str(py::module_::import("json").attr("dumps")(config)).cast<std::string>()));
        cfg.validate();
        const auto val = bind_predictions(grid, raw, SetKind::Validation);
        return io::dump_json(io::model_to_json(calibrate_full(val, cfg)));
      },
      py::arg("grid"), py::arg("records"), py::arg("config") = py::dict(),
      "Calibrate on validation records and return the model document as JSON text.");

  m.def(
      "infer",
      [](const std::string& model_json, const py::iterable& rows, bool hartlap_in_logdet) {
        const auto model = io::model_from_json(nlohmann::json::parse(model_json));
        LikelihoodOptions opt;
        opt.hartlap_in_logdet = hartlap_in_logdet;
        const GridLikelihood lik(model, opt);
        const auto raw = records_from(rows);
        const auto batch = infer_batch(bind_predictions(model.grid, raw, SetKind::Test), lik);
        py::list results;
        for (const auto& r : batch.results) results.append(result_dict(r));
        py::dict out;
        out["results"] = results;
        out["member_ids"] = batch.member_ids;
        out["member_nll"] = batch.member_nll;
        out["ensemble_weights"] = batch.ensemble_weights;
        return out;
      },
      py::arg("model"), py::arg("records"), py::arg("hartlap_in_logdet") = false);

  m.def(
      "format_predictions",
      [](const py::iterable& rows, const std::string& comment) {
        const auto raw = records_from(rows);
        return io::format_predictions(raw, comment);
      },
      py::arg("records"), py::arg("comment") = "",
      "Prediction file text in the core schema.");

  m.def(
      "d4_apply",
      [](const std::string& element, const Array& a) { return from_map(apply(parse_d4(element), to_map(a, std::nullopt))); },
      py::arg("element"), py::arg("map"));
  m.def("d4_elements", [](bool rect_only) {
    std::vector<std::string> names;
    if (rect_only)
      for (D4 t : kRectElements) names.push_back(to_string(t));
    else
      for (D4 t : kD4Elements) names.push_back(to_string(t));
    return names;
  }, py::arg("rect_only") = false);
  m.def(
      "tta_average",
      [](const std::function<Vec2(Array)>& predict, const Array& a, bool rect_only) {
        const MapPredictor f = [&](const Map2D& img) { return predict(from_map(img)); };
        return tta_average(f, to_map(a, std::nullopt), rect_only);
      },
      py::arg("predict"), py::arg("map"), py::arg("rect_only") = false);

  m.def(
      "scattering",
      [](const Array& a, std::optional<MaskArray> mask, int J, int L, bool iso) {
        const Map2D map = to_map(a, mask);
        const auto bank = build_bank(map.height, map.width, J, L);
        const auto sv = scattering_cov(map, bank);
        const auto v = iso ? isotropic_reduce(sv) : sv.flatten();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
      },
      py::arg("map"), py::arg("mask") = py::none(), py::arg("J") = 6, py::arg("L") = 4,
      py::arg("iso") = false);
  m.def("isotropic_dimension", &isotropic_dimension, py::arg("J") = 6, py::arg("L") = 4);

  py::class_<Philox>(m, "Philox")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
      .def("next_u64", &Philox::next_u64)
      .def("uniform", &Philox::uniform)
      .def("normal", &Philox::normal)
      .def("below", &Philox::below, py::arg("n"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
