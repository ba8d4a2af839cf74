#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtebounds/bounds.hpp"
#include "mtebounds/estimate.hpp"
#include "mtebounds/pipeline.hpp"
#include "mtebounds/simulate.hpp"
#include "mtebounds/symmetric.hpp"

namespace py = pybind11;
using namespace mte;

namespace {

MisclassSpec make_misclass(const std::string& mechanism, double alpha, double rho) {
    MisclassSpec mis;
    if (mechanism == "copula") mis.kind = MisclassKind::CopulaDependent;
    else if (mechanism == "threshold-low") mis.kind = MisclassKind::ThresholdLow;
    else if (mechanism == "threshold-high") mis.kind = MisclassKind::ThresholdHigh;
    else throw std::invalid_argument("mechanism must be copula | threshold-low | threshold-high");
    mis.alpha = alpha;
    mis.rho = rho;
    mis.validate();
    return mis;
}

CellTable table_from_arrays(const std::vector<double>& y, const std::vector<int>& d,
                            const std::vector<double>& z, int z_cells, int y_bins) {
    if (y.size() != d.size() || y.size() != z.size())
        throw std::invalid_argument("y, d, z must have equal length");
    std::vector<Observation> obs(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) obs[i] = Observation{y[i], d[i], z[i], {}};
    if (z_cells <= 0) return cell_stats_discrete_z(obs, y_bins);
    return cell_stats(obs, quantile_z_edges(obs, z_cells), y_bins);
}

}  // namespace

PYBIND11_MODULE(_mtebounds, m) {
    m.doc() = "Partial-identification bounds for marginal treatment effects under a misclassified treatment";

    py::class_<Interval>(m, "Interval")
        .def_readonly("lo", &Interval::lo)
        .def_readonly("hi", &Interval::hi)
        .def_readonly("empty_set", &Interval::empty_set)
        .def_readonly("unbounded_lo", &Interval::unbounded_lo)
        .def_readonly("unbounded_hi", &Interval::unbounded_hi)
        .def_readonly("binding_lo", &Interval::binding_lo)
        .def_readonly("binding_hi", &Interval::binding_hi)
        .def("contains", &Interval::contains, py::arg("x"), py::arg("tol") = 0.0)
        .def("__repr__", [](const Interval& iv) {
            if (iv.empty_set) return std::string("Interval(EMPTY)");
            return "Interval(" + std::to_string(iv.lo) + ", " + std::to_string(iv.hi) + ")";
        });

    py::class_<CellTable>(m, "CellTable")
        .def("__len__", [](const CellTable& t) { return t.cells.size(); })
        .def("reported_propensities", [](const CellTable& t) {
            std::vector<double> out;
            for (const auto& c : t.cells) out.push_back(c.pD1);
            return out;
        });

    py::class_<TvPair>(m, "TvPair")
        .def_readonly("tv1", &TvPair::tv1)
        .def_readonly("tv0", &TvPair::tv0)
        .def_readonly("tv_y", &TvPair::tv_y);

    // probability kernel
    m.def("std_normal_cdf", &std_normal_cdf, py::arg("x"));
    m.def("std_normal_quantile", &std_normal_quantile, py::arg("p"));
    m.def("gaussian_copula", &gaussian_copula, py::arg("u"), py::arg("v"), py::arg("rho"));
    m.def("bvn_cdf", &bvn_cdf, py::arg("x"), py::arg("y"), py::arg("rho"));

    // closed-form model oracles
    m.def("true_mte", &true_mte, py::arg("p"));
    m.def("true_liv_rho0", &true_liv_rho0, py::arg("p_obs"), py::arg("alpha"));
    m.def("mte_upper_limit_oracle", &mte_upper_limit_oracle, py::arg("p"), py::arg("alpha"), py::arg("rho"));
    m.def(
        "observed_pscore",
        [](double p_true, double alpha, double rho, const std::string& mechanism) {
            return observed_pscore(p_true, make_misclass(mechanism, alpha, rho));
        },
        py::arg("p_true"), py::arg("alpha"), py::arg("rho") = 0.0, py::arg("mechanism") = "copula");
    m.def(
        "cond_cdf_v_given_eps",
        [](double p, int e, double alpha, double rho, const std::string& mechanism) {
            return cond_cdf_v_given_eps(make_misclass(mechanism, alpha, rho), p, e);
        },
        py::arg("p"), py::arg("e"), py::arg("alpha"), py::arg("rho") = 0.0,
        py::arg("mechanism") = "copula");
    m.def("closed_form_mte_bounds", &closed_form_mte_bounds, py::arg("p"), py::arg("alpha"),
          py::arg("rho"), py::arg("fd_step") = 1e-4);

    // simulation
    m.def(
        "sample_dgp",
        [](std::int64_t n, std::uint64_t seed, double alpha, double rho, const std::string& mechanism) {
            DgpSpec spec;
            spec.n = n;
            spec.seed = seed;
            spec.misclass = make_misclass(mechanism, alpha, rho);
            spec.sync_rho();
            const SampleResult s = sample_dgp(spec);
            py::dict out;
            std::vector<double> y, z, v;
            std::vector<int> d, dstar, eps;
            for (std::size_t i = 0; i < s.obs.size(); ++i) {
                y.push_back(s.obs[i].y);
                d.push_back(s.obs[i].d);
                z.push_back(s.obs[i].z);
                dstar.push_back(s.latent[i].dstar);
                eps.push_back(s.latent[i].eps);
                v.push_back(s.latent[i].v);
            }
            out["y"] = y;
            out["d"] = d;
            out["z"] = z;
            out["dstar"] = dstar;
            out["eps"] = eps;
            out["v"] = v;
            return out;
        },
        py::arg("n"), py::arg("seed"), py::arg("alpha"), py::arg("rho") = 0.0,
        py::arg("mechanism") = "copula");

    // bounds engine
    m.def("pointwise_pscore_bounds", &pointwise_pscore_bounds, py::arg("q"), py::arg("alpha_bar"));
    m.def(
        "pscore_diff_bounds",
        [](double tv1, double tv0, double delta_dz, double alpha) {
            return pscore_diff_bounds(TvPair{tv1, tv0, 0.0}, delta_dz, alpha);
        },
        py::arg("tv1"), py::arg("tv0"), py::arg("delta_dz"), py::arg("alpha"));
    m.def("ura_pdiff_lower", &ura_pdiff_lower, py::arg("tv"));
    m.def("cell_stats", &table_from_arrays, py::arg("y"), py::arg("d"), py::arg("z"),
          py::arg("z_cells") = 0, py::arg("y_bins") = 50,
          "z_cells = 0 treats the instrument as discrete with exact levels");
    m.def(
        "tv_distances",
        [](const CellTable& t, int i, int j) {
            return tv_distances(t.cells.at(static_cast<std::size_t>(i)),
                                t.cells.at(static_cast<std::size_t>(j)));
        },
        py::arg("table"), py::arg("i"), py::arg("j"));
    m.def(
        "mte_bounds_at",
        [](double p_eval, const CellTable& t, double alpha_bar, double fd_step, bool robust) {
            IdentConfig cfg;
            cfg.alpha_bar = alpha_bar;
            cfg.fd_step = fd_step;
            return robust ? robust_mte_bounds_at(p_eval, t, cfg) : mte_bounds_at(p_eval, t, cfg);
        },
        py::arg("p_eval"), py::arg("table"), py::arg("alpha_bar"), py::arg("fd_step") = 0.1,
        py::arg("robust") = false);
    m.def(
        "late_bounds_discrete",
        [](const CellTable& t, int ell, double alpha_bar) {
            const DiscreteLateBounds b = late_bounds_discrete(t, ell, alpha_bar);
            py::dict out;
            out["late"] = b.late;
            out["lb_p"] = b.lb_p;
            out["ub_p"] = b.ub_p;
            out["delta_yz"] = b.delta_yz;
            return out;
        },
        py::arg("table"), py::arg("ell"), py::arg("alpha_bar"));

    // symmetric identification
    m.def(
        "alpha_identified_set",
        [](const std::vector<double>& q, double alpha_bar, int grid_size) {
            return alpha_identified_set(q, alpha_bar, grid_size);
        },
        py::arg("q_values"), py::arg("alpha_bar"), py::arg("grid_size"));
    m.def("true_pscore_from_alpha", &true_pscore_from_alpha, py::arg("q"), py::arg("alpha"));
    m.def(
        "mte_symmetric",
        [](double p, double alpha, const std::function<double(double)>& liv) {
            return mte_symmetric(p, alpha, liv);
        },
        py::arg("p"), py::arg("alpha"), py::arg("liv"));

    // estimation primitives
    m.def(
        "local_poly_deriv",
        [](const std::vector<double>& x, const std::vector<double>& y,
           const std::vector<double>& eval, int degree, const std::string& kernel, double h) {
            const KernelKind k = (kernel == "epanechnikov") ? KernelKind::Epanechnikov
                                                            : KernelKind::Gaussian;
            return local_poly_deriv(x, y, Grid::from_points(eval), degree, k, h);
        },
        py::arg("x"), py::arg("y"), py::arg("eval"), py::arg("degree") = 2,
        py::arg("kernel") = "gaussian", py::arg("h") = 0.27);
    m.def(
        "fit_logit",
        [](const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
            if (rows.empty()) throw std::invalid_argument("fit_logit: empty design");
            Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()),
                                   static_cast<Eigen::Index>(rows[0].size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows[0].size())
                    throw std::invalid_argument("fit_logit: ragged design");
                for (std::size_t j = 0; j < rows[i].size(); ++j)
                    design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
            }
            const LogitFit fit = fit_logit(design, labels);
            std::vector<double> coef(fit.coef.data(), fit.coef.data() + fit.coef.size());
            return coef;
        },
        py::arg("design"), py::arg("labels"));

    m.attr("__version__") = "0.1.0";
}
