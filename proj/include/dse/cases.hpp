#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dse {

enum class BusKind { Slack, PV, PQ };

std::string_view to_string(BusKind kind);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;      // p.u.
    double q_load = 0.0;      // p.u.
    double v_setpoint = 0.0;  // p.u., meaningful for Slack/PV only
    std::complex<double> shunt{0.0, 0.0};

    bool operator==(const Bus&) const = default;
};

/// Pi-model line or transformer. `b_shunt` is total line charging; `tap` is
/// the off-nominal ratio on the `from` side.
struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_shunt = 0.0;
    double tap = 1.0;

    bool operator==(const Branch&) const = default;
};

/// Classical-model machine parameters on the system base.
struct Machine {
    int bus = 0;
    double h = 0.0;         // inertia constant, s
    double d = 0.0;         // damping, p.u.
    double xd_prime = 0.0;  // transient reactance, p.u.
    double p_gen = 0.0;     // scheduled active power, p.u.
    double q_gen = 0.0;     // reported reactive power, p.u. (informational)

    bool operator==(const Machine&) const = default;
};

/// Static description of a test system. Immutable after loading.
struct NetworkCase {
    std::string name;
    double base_mva = 100.0;
    double frequency = 60.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Machine> machines;

    bool operator==(const NetworkCase&) const = default;

    std::size_t bus_count() const { return buses.size(); }
    std::size_t machine_count() const { return machines.size(); }

    /// Position of bus `id` in `buses`; throws ValidationError if unknown.
    std::size_t bus_index(int id) const;
    std::optional<std::size_t> find_bus(int id) const;
    /// Index into `machines` of the machine sitting on bus `id`, if any.
    std::optional<std::size_t> machine_at(int bus_id) const;
    /// Index of the (unique) slack bus in `buses`.
    std::size_t slack_index() const;
};

/// Parses the line-oriented case format (see data/README.md).
NetworkCase parse_case(std::istream& in, std::string_view source = "<stream>");
NetworkCase load_case(const std::filesystem::path& path);

/// Throws ValidationError naming the offending record.
void validate(const NetworkCase& network);

/// Writes `network` in the same format parse_case reads, at full precision.
void write_case(std::ostream& out, const NetworkCase& network);

struct LoadTotals {
    double mw = 0.0;
    double mvar = 0.0;
};

/// Sum of bus loads in MW/MVar on the case base.
LoadTotals total_load(const NetworkCase& network);

/// Directory holding the bundled case files. Honors the DSE_DATA_DIR
/// environment variable before falling back to the build-time location.
std::filesystem::path data_directory();

/// Resolves "wecc9"/"ne39" style names to bundled files; any other string is
/// treated as a path.
std::filesystem::path resolve_case_path(std::string_view name_or_path);

}  // namespace dse
