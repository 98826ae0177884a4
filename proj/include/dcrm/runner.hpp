#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcrm/concentration.hpp"
#include "dcrm/config.hpp"
#include "dcrm/flows.hpp"
#include "dcrm/report_io.hpp"
#include "dcrm/wep.hpp"

namespace dcrm {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Exit codes of the command runner.
enum ExitCode : int {
    kExitOk = 0,
    kExitVerdictFailed = 1,
    kExitConfigError = 2,
    kExitRuntimeError = 3,
};

namespace detail_run {

inline std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Tracks files created during a run so partial output can be removed when
// the run fails.
class OutputTracker {
  public:
    explicit OutputTracker(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::filesystem::path file(const std::string& name) {
        written_.push_back(dir_ / name);
        return written_.back();
    }

    void discard_all() {
        for (const auto& p : written_) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    }

  private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> written_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline MeasureSpec u_only_sampler(const MeasureSpec& m) {
    MeasureSpec out = m;
    for (std::size_t i = kConfigDim; i < kPhaseDim; ++i) out.sigma[i] = 1e-12;
    return out;
}

}  // namespace detail_run

// Executes one experiment command and writes manifest.json, the experiment
// CSV, and summary.json into out_dir.  Timestamps appear only in the
// manifest, so the scientific outputs are byte-reproducible.
inline int run_command(const std::string& command, const RunConfig& cfg,
                       const std::filesystem::path& out_dir, unsigned threads = 1) {
    const auto started = std::chrono::system_clock::now();
    detail_run::OutputTracker out(out_dir);
    json verdicts = json::object();
    json metrics = json::object();

    try {
        ExperimentOptions opts = cfg.experiment;
        opts.threads = threads;

        if (command == "simulate") {
            PhaseState st = sample_state(cfg.model.measure, cfg.model.n_factors,
                                         cfg.model.seed, cfg.simulate.member);
            if (cfg.model.t_horizon > 0) {
                const auto segs = flatten_schedule(cfg.model.schedule);
                advance_segments(st, cfg.model, segs, opts.ut_step);
            }
            const Trajectory traj =
                integrate_utau(st, cfg.model, st.tau + cfg.simulate.tau_end, cfg.simulate.dtau);
            write_trajectory_csv(traj, out.file("trajectory.csv"));
            verdicts["simulate"] = true;
            metrics["samples"] = traj.samples.size();
            metrics["final_hamiltonian"] = hamiltonian_at(traj.samples.back(), cfg.model);
        } else if (command == "concentration") {
            const auto rep = concentration_experiment(cfg.model, cfg.observable, cfg.count, opts);
            write_concentration_csv(rep, out.file("concentration.csv"));
            verdicts["concentration"] = rep.verdict;
            metrics["sigma_f"] = rep.sigma_f;
            metrics["m_f"] = rep.m_f;
            metrics["fitted_exponent"] = rep.fitted_exponent;
        } else if (command == "reduction") {
            const auto rep = reduction_experiment(cfg.model, cfg.observable, cfg.count, opts);
            write_reduction_csv(rep, out.file("reduction.csv"));
            verdicts["reduction"] = rep.verdict;
            metrics["contraction_ratio"] = rep.contraction_ratio;
            metrics["predicted_ratio"] = rep.predicted_ratio;
        } else if (command == "wep") {
            Vec grid(cfg.wep.tau_points);
            for (std::size_t j = 0; j < grid.size(); ++j)
                grid[j] = cfg.wep.tau_end * static_cast<double>(j) /
                          static_cast<double>(cfg.wep.tau_points - 1);
            WepOptions wopts;
            wopts.ut_step = opts.ut_step;
            wopts.threads = threads;
            const auto rep = wep_experiment(cfg.model, cfg.wep.n_a, cfg.wep.n_b, cfg.wep.h,
                                            grid, cfg.wep.count, wopts);
            write_wep_csv(rep, out.file("wep.csv"));
            verdicts["wep"] = rep.verdict;
            metrics["eotvos"] = rep.eotvos;
            metrics["tail_exponent"] = rep.tail_exponent;
        } else if (command == "lipschitz") {
            RegimeKind kind = RegimeKind::concentration;
            if (cfg.lipschitz.map == "expansion") kind = RegimeKind::expansion;
            if (cfg.lipschitz.map == "ergodic") kind = RegimeKind::ergodic;
            const MeasureSpec sampler = cfg.lipschitz.u_only
                                            ? detail_run::u_only_sampler(cfg.model.measure)
                                            : cfg.model.measure;
            const auto cert =
                estimate_lipschitz(regime_flow(cfg.model, kind, cfg.lipschitz.duration),
                                   sampler, cfg.model.n_factors, cfg.lipschitz.pairs,
                                   cfg.model.seed);
            write_lipschitz_csv(cert, out.file("lipschitz.csv"));
            verdicts["lipschitz"] = cert.passed;
            metrics["estimate"] = cert.estimate;
            metrics["pairs_tested"] = cert.pairs_tested;
        } else {
            throw config_error("", "unknown command: " + command);
        }

        json summary;
        summary["command"] = command;
        summary["verdicts"] = verdicts;
        summary["metrics"] = metrics;
        detail_run::write_json(out.file("summary.json"), summary);

        json manifest;
        manifest["run_id"] = content_hash(cfg.resolved.dump());
        manifest["artifact_version"] = kArtifactVersion;
        manifest["command"] = command;
        manifest["seed"] = cfg.model.seed;
        manifest["threads"] = threads;
        manifest["config"] = cfg.resolved;
        manifest["started"] = detail_run::iso8601_utc(started);
        manifest["finished"] = detail_run::iso8601_utc(std::chrono::system_clock::now());
        manifest["verdicts"] = verdicts;
        detail_run::write_json(out.file("manifest.json"), manifest);

        for (const auto& [key, ok] : verdicts.items())
            if (!ok.get<bool>()) return kExitVerdictFailed;
        return kExitOk;
    } catch (const config_error&) {
        out.discard_all();
        throw;
    } catch (const std::exception&) {
        out.discard_all();
        throw;
    }
}

}  // namespace dcrm
