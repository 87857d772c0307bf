#include "sympflow/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace sympflow {

namespace fs = std::filesystem;

namespace {

fs::path temp_sibling(const fs::path& path)
{
    auto tmp = path;
    tmp += ".tmp";
    return tmp;
}

void write_raw(const fs::path& path, const std::string& contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void ensure_parent(const fs::path& path)
{
    const auto parent = path.parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(parent, ec);
        if (ec) {
            throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
        }
    }
}

} // namespace

void write_file_atomic(const fs::path& path, const std::string& contents)
{
    AtomicOutputs out;
    out.stage(path, contents);
    out.commit();
}

AtomicOutputs::~AtomicOutputs()
{
    for (const auto& [tmp, target] : staged_) {
        std::error_code ec;
        fs::remove(tmp, ec);
    }
}

void AtomicOutputs::stage(const fs::path& path, const std::string& contents)
{
    ensure_parent(path);
    const auto tmp = temp_sibling(path);
    try {
        write_raw(tmp, contents);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    staged_.emplace_back(tmp, path);
}

void AtomicOutputs::commit()
{
    while (!staged_.empty()) {
        const auto [tmp, target] = staged_.front();
        std::error_code ec;
        fs::rename(tmp, target, ec);
        if (ec) {
            throw IoError("cannot rename " + tmp.string() + " to " + target.string() + ": " + ec.message());
        }
        staged_.erase(staged_.begin());
    }
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double x)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

std::string trajectory_csv(const HamiltonianSystem& system, const std::vector<TrajectoryPoint>& points)
{
    std::ostringstream os;
    os << "t";
    for (int i = 1; i <= system.dim; ++i) {
        os << ",q" << i;
    }
    for (int i = 1; i <= system.dim; ++i) {
        os << ",p" << i;
    }
    os << ",energy\n";
    for (const auto& pt : points) {
        os << format_double(pt.t);
        for (int i = 0; i < system.dim; ++i) {
            os << ',' << format_double(pt.x.q(i));
        }
        for (int i = 0; i < system.dim; ++i) {
            os << ',' << format_double(pt.x.p(i));
        }
        os << ',' << format_double(eval_energy(system, pt.x)) << '\n';
    }
    return os.str();
}

std::string loss_history_csv(const std::vector<EpochRecord>& history)
{
    std::ostringstream os;
    os << "epoch,loss_total,loss_pi,loss_match\n";
    for (const auto& r : history) {
        os << r.epoch << ',' << format_double(r.total) << ',' << format_double(r.pi) << ','
           << format_double(r.match) << '\n';
    }
    return os.str();
}

std::string drift_csv(const std::vector<DriftRow>& rows)
{
    std::ostringstream os;
    os << "method,t,drift\n";
    for (const auto& r : rows) {
        os << r.method << ',' << format_double(r.t) << ',' << format_double(r.drift) << '\n';
    }
    return os.str();
}

} // namespace sympflow
