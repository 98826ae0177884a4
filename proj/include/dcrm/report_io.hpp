#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcrm/concentration.hpp"
#include "dcrm/flows.hpp"
#include "dcrm/wep.hpp"

namespace dcrm {

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    std::array<char, 32> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

// ---------------------------------------------------------------------------
// RFC-4180 CSV
// ---------------------------------------------------------------------------

class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) out_ << ',';
            out_ << escape(fields[i]);
        }
        out_ << "\r\n";
        if (!out_) throw std::runtime_error("CSV write failed");
    }

    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("CSV close failed");
    }

  private:
    static std::string escape(const std::string& f) {
        if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
        std::string q = "\"";
        for (char c : f) {
            q += c;
            if (c == '"') q += '"';
        }
        q += '"';
        return q;
    }

    std::ofstream out_;
};

inline void write_concentration_csv(const ConcentrationReport& rep,
                                    const std::filesystem::path& path) {
    CsvWriter csv(path);
    csv.row({"rho", "empirical_tail", "dkw_margin", "bound_log", "fitted_exponent"});
    for (std::size_t j = 0; j < rep.rho_grid.size(); ++j)
        csv.row({format_double(rep.rho_grid[j]), format_double(rep.empirical_tail[j]),
                 format_double(rep.dkw_margin[j]), format_double(rep.bound_log[j]),
                 format_double(rep.fitted_exponent)});
    csv.close();
}

inline void write_wep_csv(const WepReport& rep, const std::filesystem::path& path) {
    CsvWriter csv(path);
    csv.row({"tau", "system", "mu", "x_mean", "x_stderr", "m_ref"});
    const SystemSeries* systems[3] = {&rep.a, &rep.b, &rep.s};
    for (std::size_t j = 0; j < rep.tau_grid.size(); ++j) {
        for (const SystemSeries* sys : systems) {
            for (std::size_t mu = 0; mu < 4; ++mu) {
                csv.row({format_double(rep.tau_grid[j]), sys->name,
                         std::to_string(mu + 1), format_double(sys->mean[j][mu]),
                         format_double(sys->se[j][mu]),
                         format_double(rep.com_reference[j][mu])});
            }
        }
    }
    csv.close();
}

inline void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
    CsvWriter csv(path);
    const std::size_t dim = traj.samples.empty() ? 0 : traj.samples.front().u.size();
    std::vector<std::string> header = {"tau"};
    for (std::size_t i = 0; i < dim; ++i) header.push_back("u_" + std::to_string(i));
    for (std::size_t i = 0; i < dim; ++i) header.push_back("p_" + std::to_string(i));
    csv.row(header);
    for (const auto& s : traj.samples) {
        std::vector<std::string> row = {format_double(s.tau)};
        for (double x : s.u) row.push_back(format_double(x));
        for (double x : s.p) row.push_back(format_double(x));
        csv.row(row);
    }
    csv.close();
}

inline void write_reduction_csv(const ReductionReport& rep,
                                const std::filesystem::path& path) {
    CsvWriter csv(path);
    csv.row({"dispersion_before", "dispersion_after", "contraction_ratio", "predicted_ratio",
             "ratio_stderr", "verdict"});
    csv.row({format_double(rep.dispersion_before), format_double(rep.dispersion_after),
             format_double(rep.contraction_ratio), format_double(rep.predicted_ratio),
             format_double(rep.ratio_stderr), rep.verdict ? "true" : "false"});
    csv.close();
}

inline void write_lipschitz_csv(const LipschitzCertificate& cert,
                                const std::filesystem::path& path) {
    CsvWriter csv(path);
    csv.row({"estimate", "pairs_tested", "passed"});
    csv.row({format_double(cert.estimate), std::to_string(cert.pairs_tested),
             cert.passed ? "true" : "false"});
    csv.close();
}

// ---------------------------------------------------------------------------
// Content hash for run identifiers (FNV-1a 64)
// ---------------------------------------------------------------------------

inline std::string content_hash(const std::string& data) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    std::array<char, 17> buf{};
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[h & 0xF];
        h >>= 4;
    }
    return std::string(buf.data(), 16);
}

}  // namespace dcrm
