#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "geoclip/accountant.hpp"
#include "geoclip/estimator.hpp"
#include "geoclip/geometry.hpp"
#include "geoclip/modeling.hpp"
#include "geoclip/privatizer.hpp"
#include "geoclip/rng.hpp"

namespace py = pybind11;
using namespace geoclip;

namespace {

TransformPair transform_from_cov(const MatrixXd& cov, double gamma, double h1,
                                 double h2) {
  return optimal_transform_clamped(eigendecompose(cov), gamma, h1, h2);
}

PrivatizedGradient py_geoclip_step(const MatrixXd& grads,
                                   const TransformPair& transform,
                                   const VectorXd& mean, double sigma,
                                   std::uint64_t seed, std::uint64_t step) {
  SplitRng rng = SplitRng::for_step(seed, 2, step);
  return geoclip_step(grads, transform, mean, sigma, rng);
}

PrivatizedGradient py_vanilla_step(const MatrixXd& grads, double clip_norm,
                                   double sigma, std::uint64_t seed,
                                   std::uint64_t step) {
  SplitRng rng = SplitRng::for_step(seed, 2, step);
  return vanilla_step(grads, clip_norm, sigma, rng);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Differentially private SGD with covariance-adapted clipping";

  py::class_<TransformPair>(m, "TransformPair")
      .def_readonly("forward", &TransformPair::forward)
      .def_readonly("inverse", &TransformPair::inverse)
      .def_readonly("gamma", &TransformPair::gamma)
      .def_property_readonly("rank", &TransformPair::rank)
      .def_property_readonly("dim", &TransformPair::dim);

  py::class_<PrivatizedGradient>(m, "PrivatizedGradient")
      .def_readonly("value", &PrivatizedGradient::value)
      .def_readonly("clipped_fraction", &PrivatizedGradient::clipped_fraction);

  py::class_<LowRankState>(m, "StreamingCovariance")
      .def(py::init([](Index dim, Index rank, double beta1, double beta3,
                       int batch_size, bool scale_by_batch) {
             return LowRankState::init(dim, rank, beta1, beta3, batch_size,
                                       scale_by_batch);
           }),
           py::arg("dim"), py::arg("rank"), py::arg("beta1") = 0.99,
           py::arg("beta3") = 0.99, py::arg("batch_size") = 1,
           py::arg("scale_by_batch") = true)
      .def("observe", &LowRankState::observe, py::arg("gradient"))
      .def_readonly("mean", &LowRankState::mean)
      .def_readonly("basis", &LowRankState::basis)
      .def_readonly("values", &LowRankState::values)
      .def_readonly("steps", &LowRankState::steps);

  m.def("optimal_transform", &transform_from_cov, py::arg("cov"),
        py::arg("gamma") = 1.0, py::arg("h1") = 1e-15, py::arg("h2") = 10.0,
        "Clipping-space transform pair from a covariance matrix");
  m.def("transformed_covariance_diag",
        [](const MatrixXd& cov, double gamma) {
          return transformed_covariance_diag(eigendecompose(cov), gamma);
        },
        py::arg("cov"), py::arg("gamma") = 1.0);
  m.def("geoclip_objective", &geoclip_objective, py::arg("eigenvalues"),
        py::arg("gamma") = 1.0);
  m.def("whitening_objective", &whitening_objective, py::arg("eigenvalues"),
        py::arg("gamma") = 1.0);

  m.def("geoclip_step", &py_geoclip_step, py::arg("per_sample_grads"),
        py::arg("transform"), py::arg("mean"), py::arg("sigma"),
        py::arg("seed") = 0, py::arg("step") = 0);
  m.def("vanilla_step", &py_vanilla_step, py::arg("per_sample_grads"),
        py::arg("clip_norm"), py::arg("sigma"), py::arg("seed") = 0,
        py::arg("step") = 0);

  m.def("rdp_subsampled_gaussian", &rdp_subsampled_gaussian, py::arg("sigma"),
        py::arg("q"), py::arg("alpha"));
  m.def("epsilon_of",
        [](double sigma, double q, std::int64_t steps, double delta) {
          return epsilon_of({sigma, q, steps, delta});
        },
        py::arg("sigma"), py::arg("q"), py::arg("steps"), py::arg("delta"));
  m.def("sigma_for_target", &sigma_for_target, py::arg("epsilon_target"),
        py::arg("q"), py::arg("steps"), py::arg("delta"));

  m.def("gen_synthetic_regression",
        [](Index n, Index p, Index corr_block, std::uint64_t seed) {
          Dataset d = gen_synthetic_regression(n, p, corr_block, seed);
          return py::make_tuple(d.features, d.targets);
        },
        py::arg("n") = 20000, py::arg("p") = 10, py::arg("corr_block") = 5,
        py::arg("seed") = 0);
  m.def("gen_synthetic_classification",
        [](Index n, Index p, Index corr_block, std::uint64_t seed) {
          Dataset d = gen_synthetic_classification(n, p, corr_block, seed);
          return py::make_tuple(d.features, d.targets);
        },
        py::arg("n") = 20000, py::arg("p") = 400, py::arg("corr_block") = 50,
        py::arg("seed") = 0);
}
