#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sympflow/checkpoint.hpp"
#include "sympflow/commands.hpp"
#include "sympflow/integrators.hpp"
#include "sympflow/sympflow.hpp"
#include "sympflow/training.hpp"

namespace py = pybind11;
using namespace sympflow;

namespace {

PhasePoint to_point(const Vector& x)
{
    if (x.size() % 2 != 0 || x.size() == 0) {
        throw InvalidArgument("state must have even, non-zero length (q..., p...)");
    }
    return PhasePoint::from_state(x);
}

// One row per sample: t, then the state.
Matrix trajectory_rows(const std::vector<TrajectoryPoint>& pts)
{
    const Eigen::Index n = pts.empty() ? 0 : pts.front().x.state().size();
    Matrix out(static_cast<Eigen::Index>(pts.size()), n + 1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out(r, 0) = pts[i].t;
        out.row(r).tail(n) = pts[i].x.state().transpose();
    }
    return out;
}

Matrix step_rows(const std::vector<StepRecord>& rs)
{
    std::vector<TrajectoryPoint> pts;
    pts.reserve(rs.size());
    for (const auto& r : rs) {
        pts.push_back({r.t, r.x});
    }
    return trajectory_rows(pts);
}

Activation activation_of(const std::string& name) { return parse_activation(name); }

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Symplectic neural flow maps for Hamiltonian systems";

    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<UnsupportedError>(m, "UnsupportedError", PyExc_NotImplementedError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const InvalidArgument& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<HamiltonianSystem>(m, "System")
        .def(py::init(&make_system), py::arg("name"))
        .def_readonly("name", &HamiltonianSystem::name)
        .def_readonly("dim", &HamiltonianSystem::dim)
        .def_readonly("separable", &HamiltonianSystem::separable)
        .def("energy", [](const HamiltonianSystem& s, const Vector& x) { return eval_energy(s, to_point(x)); })
        .def("vector_field", [](const HamiltonianSystem& s, const Vector& x) { return vector_field(s, to_point(x)); })
        .def("__repr__", [](const HamiltonianSystem& s) { return "<System " + s.name + ">"; });
    m.def("registered_systems", &registered_systems);

    py::class_<SympFlowModel>(m, "SympFlow")
        .def_static(
            "random",
            [](int dim, int pairs, const std::vector<int>& widths, const std::string& act, std::uint64_t seed,
               double dt) { return SympFlowModel::random(dim, pairs, widths, activation_of(act), seed, dt); },
            py::arg("dim"), py::arg("pairs"), py::arg("widths"), py::arg("activation") = "tanh",
            py::arg("seed") = 0, py::arg("dt") = 1.0)
        .def_property_readonly("dim", &SympFlowModel::dim)
        .def_property_readonly("pairs", &SympFlowModel::pairs)
        .def_property_readonly("dt", &SympFlowModel::dt)
        .def("parameters", &SympFlowModel::parameters)
        .def("set_parameters", &SympFlowModel::set_parameters)
        .def("__call__", [](const SympFlowModel& f, double t, const Vector& x) { return forward(f, t, to_point(x)).state(); },
             py::arg("t"), py::arg("x"))
        .def("inverse", [](const SympFlowModel& f, double t, const Vector& y) { return inverse(f, t, to_point(y)).state(); },
             py::arg("t"), py::arg("y"))
        .def("time_derivative",
             [](const SympFlowModel& f, double t, const Vector& x) { return time_derivative(f, t, to_point(x)); })
        .def("jacobian", [](const SympFlowModel& f, double t, const Vector& x) { return jacobian(f, t, to_point(x)); })
        .def("hamiltonian",
             [](const SympFlowModel& f, double t, const Vector& x) { return network_hamiltonian(f, t, to_point(x)); })
        .def(
            "rollout",
            [](const SympFlowModel& f, double t_final, const Vector& x0, std::size_t samples) {
                return trajectory_rows(rollout(f, t_final, to_point(x0), samples));
            },
            py::arg("t_final"), py::arg("x0"), py::arg("samples"))
        .def("inject_sign_fault", &SympFlowModel::inject_sign_fault);

    py::class_<BaselineFlowNet>(m, "Baseline")
        .def_static(
            "random",
            [](int dim, const std::vector<int>& widths, const std::string& act, std::uint64_t seed) {
                return init_baseline(dim, widths, activation_of(act), seed);
            },
            py::arg("dim"), py::arg("widths"), py::arg("activation") = "tanh", py::arg("seed") = 0)
        .def_property_readonly("dim", &BaselineFlowNet::dim)
        .def("parameters", &BaselineFlowNet::parameters)
        .def("__call__",
             [](const BaselineFlowNet& n, double t, const Vector& x) { return eval_baseline(n, t, to_point(x)).state(); },
             py::arg("t"), py::arg("x"));

    m.def("symplecticity_defect", &symplecticity_defect, py::arg("jacobian"));

    py::class_<TrainingConfig>(m, "TrainingConfig")
        .def(py::init<>())
        .def_readwrite("dt", &TrainingConfig::dt)
        .def_readwrite("n_collocation", &TrainingConfig::n_collocation)
        .def_readwrite("n_matching", &TrainingConfig::n_matching)
        .def_readwrite("epochs", &TrainingConfig::epochs)
        .def_readwrite("batch_size", &TrainingConfig::batch_size)
        .def_readwrite("learning_rate", &TrainingConfig::learning_rate)
        .def_readwrite("seed", &TrainingConfig::seed)
        .def_readwrite("w_pi", &TrainingConfig::w_pi)
        .def_readwrite("w_match", &TrainingConfig::w_match)
        .def_readwrite("threads", &TrainingConfig::threads);

    // Returns (trained model, per-epoch [total, pi, match] rows).
    auto history_rows = [](const std::vector<EpochRecord>& h) {
        Matrix out(static_cast<Eigen::Index>(h.size()), 3);
        for (std::size_t i = 0; i < h.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) << h[i].total, h[i].pi, h[i].match;
        }
        return out;
    };
    m.def(
        "train",
        [history_rows](SympFlowModel model, const HamiltonianSystem& s, const TrainingConfig& c) {
            auto r = [&] {
                py::gil_scoped_release release;
                return train(std::move(model), s, c);
            }();
            return py::make_tuple(std::move(r.model), history_rows(r.history));
        },
        py::arg("model"), py::arg("system"), py::arg("config"));
    m.def(
        "train",
        [history_rows](BaselineFlowNet net, const HamiltonianSystem& s, const TrainingConfig& c) {
            auto r = [&] {
                py::gil_scoped_release release;
                return train(std::move(net), s, c);
            }();
            return py::make_tuple(std::move(r.model), history_rows(r.history));
        },
        py::arg("model"), py::arg("system"), py::arg("config"));

    m.def(
        "rk45",
        [](const HamiltonianSystem& s, const Vector& x0, double t_final, double rtol, double atol) {
            AdaptiveConfig c;
            c.rtol = rtol;
            c.atol = atol;
            return step_rows(rk45_integrate(s, to_point(x0), t_final, c));
        },
        py::arg("system"), py::arg("x0"), py::arg("t_final"), py::arg("rtol") = 1e-3, py::arg("atol") = 1e-6);
    m.def(
        "stormer_verlet",
        [](const HamiltonianSystem& s, const Vector& x0, double h, std::size_t n) {
            return step_rows(stormer_verlet(s, to_point(x0), h, n));
        },
        py::arg("system"), py::arg("x0"), py::arg("h"), py::arg("steps"));

    m.def(
        "save_checkpoint",
        [](const std::filesystem::path& path, const SympFlowModel& f, const std::string& system, std::uint64_t seed) {
            save_checkpoint(path, {system, seed, f.dt(), f});
        },
        py::arg("path"), py::arg("model"), py::arg("system"), py::arg("seed") = 0);
    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& path) -> py::object {
            auto c = load_checkpoint(path);
            if (c.is_sympflow()) {
                return py::cast(std::get<SympFlowModel>(c.model));
            }
            return py::cast(std::get<BaselineFlowNet>(c.model));
        },
        py::arg("path"));

    m.def(
        "check",
        [](std::uint64_t seed, bool inject_fault) {
            const auto r = cmd_check(seed, inject_fault);
            return py::make_tuple(r.all_pass(), format_check_report(r));
        },
        py::arg("seed") = 0, py::arg("inject_fault") = false);
}
