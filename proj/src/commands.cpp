#include "sympflow/commands.hpp"

#include "sympflow/diffeng.hpp"
#include "sympflow/integrators.hpp"
#include "sympflow/random.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace sympflow {

namespace fs = std::filesystem;

namespace {

PhasePoint resolve_x0(const std::optional<Vector>& x0, const std::string& system, int dim)
{
    const Vector x = x0 ? *x0 : default_initial_state(system);
    if (x.size() != 2 * dim) {
        throw InvalidArgument("x0 has " + std::to_string(x.size()) + " entries, the model needs " +
                              std::to_string(2 * dim));
    }
    return PhasePoint::from_state(x);
}

void check_horizon(double t_final, std::size_t samples)
{
    if (!(t_final >= 0.0) || !std::isfinite(t_final)) {
        throw InvalidArgument("t_final must be finite and non-negative");
    }
    if (samples < 1) {
        throw InvalidArgument("samples must be at least 1");
    }
}

Checkpoint load_for_system(const fs::path& path)
{
    auto c = load_checkpoint(path);
    make_system(c.system); // rejects unknown systems
    return c;
}

} // namespace

// ---------------------------------------------------------------------------
// train

TrainOutcome cmd_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log)
{
    cfg.validate();
    const auto system = make_system(cfg.system);
    TrainingConfig tc = cfg.training;
    tc.seed = cfg.sampling_seed();

    const std::size_t every = std::max<std::size_t>(1, tc.epochs / 10);
    auto progress = [&](const EpochRecord& r) {
        if (r.epoch % every == 0 || r.epoch == tc.epochs) {
            log << "epoch " << r.epoch << "/" << tc.epochs << "  loss " << format_double(r.total) << "  (pi "
                << format_double(r.pi) << ", match " << format_double(r.match) << ")\n"
                << std::flush;
        }
    };

    Checkpoint ckpt;
    ckpt.system = cfg.system;
    ckpt.seed = cfg.seed;
    ckpt.dt = tc.dt;
    TrainOutcome outcome;
    if (cfg.model.kind == "sympflow") {
        auto model = SympFlowModel::random(system.dim, cfg.model.pairs, cfg.model.widths, cfg.model.activation,
                                           cfg.init_seed(), tc.dt);
        auto result = train(std::move(model), system, tc, progress);
        ckpt.model = std::move(result.model);
        outcome.history = std::move(result.history);
    } else {
        auto net = init_baseline(system.dim, cfg.model.widths, cfg.model.activation, cfg.init_seed());
        auto result = train(std::move(net), system, tc, progress);
        ckpt.model = std::move(result.model);
        outcome.history = std::move(result.history);
    }

    outcome.checkpoint = out_dir / "checkpoint.json";
    outcome.loss_csv = out_dir / "loss.csv";
    AtomicOutputs files;
    files.stage(outcome.checkpoint, checkpoint_to_json(ckpt));
    files.stage(outcome.loss_csv, loss_history_csv(outcome.history));
    files.commit();

    if (outcome.history.empty()) {
        log << "epochs=0: saved the initial " << cfg.model.kind << " model\n";
    } else {
        const auto& last = outcome.history.back();
        log << "final loss_total " << format_double(last.total) << " loss_pi " << format_double(last.pi)
            << " loss_match " << format_double(last.match) << "\n";
    }
    log << "wrote " << outcome.checkpoint.string() << " and " << outcome.loss_csv.string() << "\n";
    return outcome;
}

// ---------------------------------------------------------------------------
// rollout / energy-drift

std::vector<TrajectoryPoint> rollout_checkpoint(const Checkpoint& c, double t_final, const PhasePoint& x0,
                                                std::size_t samples)
{
    check_horizon(t_final, samples);
    const auto times = sample_times(t_final, samples);
    if (const auto* m = std::get_if<SympFlowModel>(&c.model)) {
        return rollout_windows([m](double t, const PhasePoint& x) { return forward(*m, t, x); }, m->dt(), times,
                               x0);
    }
    const auto& net = std::get<BaselineFlowNet>(c.model);
    return rollout_windows([&net](double t, const PhasePoint& x) { return eval_baseline(net, t, x); }, c.dt, times,
                           x0);
}

RolloutOutcome cmd_rollout(const RolloutRequest& req)
{
    check_horizon(req.t_final, req.samples);
    const auto ckpt = load_for_system(req.checkpoint);
    const auto system = make_system(ckpt.system);
    const auto x0 = resolve_x0(req.x0, ckpt.system, ckpt.dim());

    RolloutOutcome out;
    out.model = rollout_checkpoint(ckpt, req.t_final, x0, req.samples);
    out.csv = req.out_dir / "trajectory.csv";
    AtomicOutputs files;
    files.stage(out.csv, trajectory_csv(system, out.model));
    if (req.with_rk45) {
        out.rk45 = rk45_sample(system, x0, sample_times(req.t_final, req.samples));
        out.rk45_csv = req.out_dir / "trajectory_rk45.csv";
        files.stage(*out.rk45_csv, trajectory_csv(system, out.rk45));
    }
    files.commit();
    return out;
}

std::vector<DriftRow> cmd_energy_drift(const DriftRequest& req)
{
    check_horizon(req.t_final, req.samples);
    std::vector<Checkpoint> ckpts;
    for (const auto& p : req.checkpoints) {
        ckpts.push_back(load_for_system(p));
    }
    std::string system_name;
    if (!ckpts.empty()) {
        system_name = ckpts.front().system;
        for (const auto& c : ckpts) {
            if (c.system != system_name) {
                throw InvalidArgument("checkpoints were trained on different systems (" + system_name + ", " +
                                      c.system + ")");
            }
        }
        if (req.system && *req.system != system_name) {
            throw InvalidArgument("--system " + *req.system + " does not match the checkpoints (" + system_name +
                                  ")");
        }
    } else if (req.system) {
        system_name = *req.system;
    } else {
        throw InvalidArgument("energy-drift needs at least one checkpoint or --system");
    }
    const auto system = make_system(system_name);
    const auto x0 = resolve_x0(req.x0, system_name, system.dim);
    const double h0 = eval_energy(system, x0);
    const auto times = sample_times(req.t_final, req.samples);

    std::vector<DriftRow> rows;
    auto emit = [&](const std::string& method, const std::vector<TrajectoryPoint>& pts) {
        for (const auto& pt : pts) {
            rows.push_back({method, pt.t, eval_energy(system, pt.x) - h0});
        }
    };
    std::vector<std::string> used;
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
        std::string method = ckpts[i].is_sympflow() ? "sympflow" : "baseline";
        if (std::count(used.begin(), used.end(), method)) {
            method += "_" + std::to_string(i + 1);
        }
        used.push_back(method);
        emit(method, rollout_checkpoint(ckpts[i], req.t_final, x0, req.samples));
    }
    if (req.exact) {
        if (!system.exact_flow) {
            throw InvalidArgument("no exact flow is available for system '" + system_name + "'");
        }
        std::vector<TrajectoryPoint> pts;
        for (double t : times) {
            pts.push_back({t, (*system.exact_flow)(t, x0)});
        }
        emit("exact", pts);
    }
    if (req.rk45) {
        emit("rk45", rk45_sample(system, x0, times));
    }
    if (req.verlet) {
        // Evaluated at step boundaries nearest to each sample time.
        const auto n = static_cast<std::size_t>(std::ceil(req.t_final / req.verlet_step - 1e-9));
        const auto steps = stormer_verlet(system, x0, req.verlet_step, n);
        std::vector<TrajectoryPoint> pts;
        for (double t : times) {
            const auto k = std::min(steps.size() - 1, static_cast<std::size_t>(std::llround(t / req.verlet_step)));
            pts.push_back({t, steps[k].x});
        }
        emit("verlet", pts);
    }
    if (rows.empty()) {
        throw InvalidArgument("energy-drift: no methods selected");
    }
    write_file_atomic(req.out_dir / "drift.csv", drift_csv(rows));
    return rows;
}

// ---------------------------------------------------------------------------
// check

bool CheckReport::all_pass() const
{
    return std::all_of(items.begin(), items.end(), [](const CheckItem& i) { return i.pass; });
}

namespace {

double rel_error(const Vector& a, const Vector& b)
{
    return (a - b).norm() / std::max(b.norm(), 1e-12);
}

Vector random_vector(Rng& rng, Eigen::Index n, double lo, double hi)
{
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = rng.uniform(lo, hi);
    }
    return v;
}

struct MapCase {
    SympFlowModel model;
    double t;
    PhasePoint x;
};

MapCase random_case(Rng& rng, std::size_t index, bool fault)
{
    const int dim = 1 + static_cast<int>(index % 2);
    const int pairs = 1 + static_cast<int>((index / 2) % 3);
    auto model = SympFlowModel::random(dim, pairs, {8, 8}, Activation::Tanh, rng.next());
    if (fault) {
        model.inject_sign_fault(0);
    }
    const double t = rng.uniform(0.0, 1.0);
    auto x = PhasePoint::from_state(random_vector(rng, 2 * dim, -1.0, 1.0));
    return {std::move(model), t, std::move(x)};
}

Vector fd_time_derivative(const SympFlowModel& m, double t, const PhasePoint& x, double h)
{
    return (forward(m, t + h, x).state() - forward(m, t - h, x).state()) / (2.0 * h);
}

Vector fd_hamiltonian_gradient(const SympFlowModel& m, double t, const Vector& y, double h)
{
    Vector g(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        Vector a = y, b = y;
        a(i) += h;
        b(i) -= h;
        g(i) = (network_hamiltonian(m, t, PhasePoint::from_state(a)) -
                network_hamiltonian(m, t, PhasePoint::from_state(b))) /
               (2.0 * h);
    }
    return g;
}

CheckItem item(std::string name, double measured, double tol, std::size_t cases)
{
    return {std::move(name), measured <= tol, measured, tol, cases};
}

} // namespace

CheckReport cmd_check(std::uint64_t seed, bool inject_fault)
{
    CheckReport report;
    Rng rng(derive_seed(seed, 0));
    const double fd1 = 1e-5;
    const double fd2 = 1e-4;

    // Map-level invariants.
    double sym = 0.0, vol = 0.0, inv = 0.0, ident = 0.0, prop1 = 0.0, tdot = 0.0;
    const std::size_t n_map = 50;
    for (std::size_t i = 0; i < n_map; ++i) {
        const auto c = random_case(rng, i, inject_fault);
        const Matrix m = jacobian(c.model, c.t, c.x);
        sym = std::max(sym, symplecticity_defect(m));
        vol = std::max(vol, std::abs(m.determinant() - 1.0));
        const auto y = forward(c.model, c.t, c.x);
        inv = std::max(inv, (inverse(c.model, c.t, y).state() - c.x.state()).cwiseAbs().maxCoeff());
        tdot = std::max(tdot, rel_error(time_derivative(c.model, c.t, c.x), fd_time_derivative(c.model, c.t, c.x, fd1)));
        const Vector lhs = fd_time_derivative(c.model, c.t, c.x, fd1);
        const Vector rhs = apply_symplectic_j(fd_hamiltonian_gradient(c.model, c.t, y.state(), fd1));
        prop1 = std::max(prop1, rel_error(lhs, rhs));
    }
    const std::size_t n_ident = 1000;
    for (std::size_t i = 0; i < n_ident; ++i) {
        const auto c = random_case(rng, i, inject_fault);
        ident = std::max(ident, (forward(c.model, 0.0, c.x).state() - c.x.state()).cwiseAbs().maxCoeff());
    }
    report.items.push_back(item("symplecticity ||M^T J M - J||_inf", sym, 1e-5, n_map));
    report.items.push_back(item("volume |det M - 1|", vol, 1e-5, n_map));
    report.items.push_back(item("identity at t=0 ||psi_0(x) - x||_inf", ident, 0.0, n_ident));
    report.items.push_back(item("inverse round trip", inv, 1e-10, n_map));
    report.items.push_back(item("Hamiltonian consistency d/dt psi = J grad H", prop1, 1e-4, n_map));
    report.items.push_back(item("time_derivative vs finite differences", tdot, 1e-6, n_map));

    // Potential derivatives.
    double gi = 0.0, tp = 0.0, mg = 0.0;
    const std::size_t n_pot = 50;
    for (std::size_t i = 0; i < n_pot; ++i) {
        const int dim = 1 + static_cast<int>(i % 2);
        const auto v = init_potential(dim, {8, 8}, Activation::Tanh, rng.next());
        const double t = rng.uniform(0.0, 1.0);
        const Vector z = random_vector(rng, dim, -1.0, 1.0);
        Vector g_fd(dim), m_fd(dim);
        for (int j = 0; j < dim; ++j) {
            Vector zp = z, zm = z;
            zp(j) += fd1;
            zm(j) -= fd1;
            g_fd(j) = (eval_potential(v, t, zp) - eval_potential(v, t, zm)) / (2.0 * fd1);
            Vector zp2 = z, zm2 = z;
            zp2(j) += fd2;
            zm2(j) -= fd2;
            m_fd(j) = (eval_potential(v, t + fd2, zp2) - eval_potential(v, t + fd2, zm2) -
                       eval_potential(v, t - fd2, zp2) + eval_potential(v, t - fd2, zm2)) /
                      (4.0 * fd2 * fd2);
        }
        const double t_fd = (eval_potential(v, t + fd1, z) - eval_potential(v, t - fd1, z)) / (2.0 * fd1);
        gi = std::max(gi, rel_error(grad_input(v, t, z), g_fd));
        tp = std::max(tp, std::abs(time_partial(v, t, z) - t_fd) / std::max(std::abs(t_fd), 1e-12));
        mg = std::max(mg, rel_error(mixed_grad_time(v, t, z), m_fd));
    }
    report.items.push_back(item("grad_input vs finite differences", gi, 1e-6, n_pot));
    report.items.push_back(item("time_partial vs finite differences", tp, 1e-6, n_pot));
    report.items.push_back(item("mixed_grad_time vs finite differences", mg, 1e-4, n_pot));

    // Parameter gradient of the full loss on a tiny model.
    {
        const auto system = harmonic_oscillator();
        auto model = SympFlowModel::random(1, 1, {4}, Activation::Tanh, rng.next());
        const auto pi = sample_collocation(system.domain, 1.0, 16, rng.next());
        const auto match = sample_collocation(system.domain, 1.0, 16, rng.next());
        TrainingConfig cfg;
        const Vector g = total_loss_gradient(model, system, pi, match, cfg).gradient;
        const Vector theta = model.parameters();
        const std::size_t n_params = 20;
        Vector exact(static_cast<Eigen::Index>(n_params)), fd(static_cast<Eigen::Index>(n_params));
        for (std::size_t k = 0; k < n_params; ++k) {
            const auto idx = static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(theta.size()));
            auto shifted = [&](double delta) {
                SympFlowModel m = model;
                Vector th = theta;
                th(idx) += delta;
                m.set_parameters(th);
                return total_loss(m, system, pi, match).total;
            };
            exact(static_cast<Eigen::Index>(k)) = g(idx);
            fd(static_cast<Eigen::Index>(k)) = (shifted(fd1) - shifted(-fd1)) / (2.0 * fd1);
        }
        report.items.push_back(item("parameter gradient of total loss vs finite differences", rel_error(exact, fd),
                                    1e-5, n_params));
    }
    return report;
}

std::string format_check_report(const CheckReport& r)
{
    std::ostringstream os;
    for (const auto& i : r.items) {
        char line[256];
        std::snprintf(line, sizeof(line), "%s  %-56s measured %.3e  tol %.1e  (%zu cases)\n",
                      i.pass ? "PASS" : "FAIL", i.name.c_str(), i.measured, i.tolerance, i.cases);
        os << line;
    }
    const auto failed = std::count_if(r.items.begin(), r.items.end(), [](const CheckItem& i) { return !i.pass; });
    os << (failed == 0 ? "all checks passed\n" : std::to_string(failed) + " check(s) failed\n");
    return os.str();
}

// ---------------------------------------------------------------------------
// command line

namespace {

const char* kSchemas = R"(Config file (JSON, every key optional):
  {"system": "harmonic" | "henon-heiles", "seed": 0, "output_dir": "runs",
   "model": {"kind": "sympflow" | "baseline", "pairs": 3, "widths": [32, 32],
             "activation": "tanh" | "identity"},
   "training": {"dt": 1.0, "n_collocation": 2048, "n_matching": 2048, "epochs": 5000,
                "batch_size": 256, "learning_rate": 0.001, "beta1": 0.9, "beta2": 0.999,
                "epsilon": 1e-8, "w_pi": 1.0, "w_match": 1.0, "threads": 1, "chunk_rows": 32},
   "rollout": {"t_final": 100.0, "samples": 1001, "x0": [q..., p...]}}

Outputs:
  train         <out>/checkpoint.json, <out>/loss.csv  (epoch,loss_total,loss_pi,loss_match)
  rollout       <out>/trajectory.csv [, <out>/trajectory_rk45.csv]  (t,q1..qd,p1..pd,energy)
  energy-drift  <out>/drift.csv  (method,t,drift)  drift = H(x(t)) - H(x0)

Exit codes: 0 success, 1 usage error, 2 numerical or training failure, 3 invariant check failed.)";

std::optional<Vector> to_vector(const std::vector<double>& v)
{
    if (v.empty()) {
        return std::nullopt;
    }
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"SympFlow: symplectic neural flow maps for Hamiltonian systems", "sympflow"};
    app.footer(kSchemas);
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    int threads = 0;
    app.add_option("--config", config_path, "Run configuration file (JSON)");
    app.add_option("--seed", seed, "Override the configured seed");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--threads", threads, "Worker threads for batch evaluation (default 1)")->check(CLI::PositiveNumber);

    auto* train_cmd = app.add_subcommand("train", "Train a SympFlow or baseline model from --config");

    std::string rollout_ckpt;
    double roll_t = 10.0;
    std::size_t roll_n = 101;
    std::vector<double> roll_x0;
    bool roll_rk45 = false;
    auto* rollout_cmd = app.add_subcommand("rollout", "Long-horizon trajectory of a checkpoint");
    rollout_cmd->add_option("checkpoint", rollout_ckpt, "Checkpoint file")->required();
    rollout_cmd->add_option("--t-final", roll_t, "Horizon");
    rollout_cmd->add_option("--samples", roll_n, "Number of evenly spaced output times");
    rollout_cmd->add_option("--x0", roll_x0, "Initial state q...,p...")->delimiter(',');
    rollout_cmd->add_flag("--rk45", roll_rk45, "Also write the rk45 reference on the same grid");

    std::vector<std::string> drift_ckpts;
    double drift_t = 100.0;
    std::size_t drift_n = 1001;
    std::vector<double> drift_x0;
    std::string drift_system;
    bool drift_exact = false, drift_rk45 = false, drift_verlet = false;
    double verlet_step = 0.01;
    auto* drift_cmd = app.add_subcommand("energy-drift", "Energy drift H(x(t)) - H(x0) per method");
    drift_cmd->add_option("checkpoints", drift_ckpts, "Checkpoint files");
    drift_cmd->add_option("--t-final", drift_t, "Horizon");
    drift_cmd->add_option("--samples", drift_n, "Number of evenly spaced output times");
    drift_cmd->add_option("--x0", drift_x0, "Initial state q...,p...")->delimiter(',');
    drift_cmd->add_option("--system", drift_system, "System name when no checkpoint is given");
    drift_cmd->add_flag("--exact", drift_exact, "Include the exact flow (harmonic only)");
    drift_cmd->add_flag("--rk45", drift_rk45, "Include the rk45 reference");
    drift_cmd->add_flag("--verlet", drift_verlet, "Include Stormer-Verlet");
    drift_cmd->add_option("--verlet-step", verlet_step, "Stormer-Verlet step size");

    bool inject_fault = false;
    auto* check_cmd = app.add_subcommand("check", "Run the invariant suite on random small models");
    check_cmd->add_flag("--inject-fault", inject_fault, "Corrupt a layer sign (the suite must then fail)");

    for (auto* sub : {train_cmd, rollout_cmd, drift_cmd, check_cmd}) {
        sub->fallthrough();
        sub->footer(kSchemas);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        std::optional<RunConfig> cfg;
        if (!config_path.empty()) {
            cfg = load_run_config(config_path);
        }
        auto apply_overrides = [&](RunConfig& c) {
            if (seed) {
                c.seed = *seed;
            }
            if (threads > 0) {
                c.training.threads = threads;
            }
        };

        if (train_cmd->parsed()) {
            if (!cfg) {
                err << "train: --config is required\n";
                return kExitUsage;
            }
            apply_overrides(*cfg);
            cmd_train(*cfg, out_dir.empty() ? fs::path(cfg->output_dir) : fs::path(out_dir), out);
            return kExitOk;
        }
        if (rollout_cmd->parsed()) {
            RolloutRequest req;
            req.checkpoint = rollout_ckpt;
            req.t_final = roll_t;
            req.samples = roll_n;
            req.x0 = to_vector(roll_x0);
            if (cfg) {
                if (rollout_cmd->count("--t-final") == 0) {
                    req.t_final = cfg->rollout.t_final;
                }
                if (rollout_cmd->count("--samples") == 0) {
                    req.samples = cfg->rollout.samples;
                }
                if (!req.x0) {
                    req.x0 = cfg->rollout.x0;
                }
            }
            req.with_rk45 = roll_rk45;
            req.out_dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
            const auto r = cmd_rollout(req);
            out << "wrote " << r.csv.string() << " (" << r.model.size() << " rows)";
            if (r.rk45_csv) {
                out << " and " << r.rk45_csv->string();
            }
            out << "\n";
            return kExitOk;
        }
        if (drift_cmd->parsed()) {
            DriftRequest req;
            req.checkpoints.assign(drift_ckpts.begin(), drift_ckpts.end());
            req.t_final = drift_t;
            req.samples = drift_n;
            req.x0 = to_vector(drift_x0);
            if (cfg) {
                if (drift_cmd->count("--t-final") == 0) {
                    req.t_final = cfg->rollout.t_final;
                }
                if (drift_cmd->count("--samples") == 0) {
                    req.samples = cfg->rollout.samples;
                }
                if (!req.x0) {
                    req.x0 = cfg->rollout.x0;
                }
            }
            if (!drift_system.empty()) {
                req.system = drift_system;
            }
            req.exact = drift_exact;
            req.rk45 = drift_rk45;
            req.verlet = drift_verlet;
            req.verlet_step = verlet_step;
            req.out_dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
            const auto rows = cmd_energy_drift(req);
            out << "wrote " << (req.out_dir / "drift.csv").string() << " (" << rows.size() << " rows)\n";
            return kExitOk;
        }
        if (check_cmd->parsed()) {
            const std::uint64_t s = seed ? *seed : (cfg ? cfg->seed : 0);
            const auto report = cmd_check(s, inject_fault);
            out << format_check_report(report);
            return report.all_pass() ? kExitOk : kExitCheckFailed;
        }
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << " (no outputs written)\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UnsupportedError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace sympflow
