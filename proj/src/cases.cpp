#include "dse/cases.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "dse/errors.hpp"

namespace dse {

namespace {

BusKind parse_kind(const std::string& token, std::string_view where) {
    if (token == "slack") return BusKind::Slack;
    if (token == "pv") return BusKind::PV;
    if (token == "pq") return BusKind::PQ;
    throw ParseError(fmt::format("{}: unknown bus kind '{}'", where, token));
}

double parse_real(const std::string& token, std::string_view where) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != token.size() || !std::isfinite(value)) {
        throw ParseError(fmt::format("{}: expected a finite number, got '{}'", where, token));
    }
    return value;
}

int parse_int(const std::string& token, std::string_view where) {
    std::size_t used = 0;
    long value = 0;
    try {
        value = std::stol(token, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != token.size()) {
        throw ParseError(fmt::format("{}: expected an integer, got '{}'", where, token));
    }
    return static_cast<int>(value);
}

std::string fmt_real(double v) { return fmt::format("{}", v); }

}  // namespace

std::string_view to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "?";
}

std::optional<std::size_t> NetworkCase::find_bus(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == id) return i;
    }
    return std::nullopt;
}

std::size_t NetworkCase::bus_index(int id) const {
    if (auto idx = find_bus(id)) return *idx;
    throw ValidationError(fmt::format("case '{}': unknown bus {}", name, id));
}

std::optional<std::size_t> NetworkCase::machine_at(int bus_id) const {
    for (std::size_t i = 0; i < machines.size(); ++i) {
        if (machines[i].bus == bus_id) return i;
    }
    return std::nullopt;
}

std::size_t NetworkCase::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].kind == BusKind::Slack) return i;
    }
    throw ValidationError(fmt::format("case '{}': no slack bus", name));
}

NetworkCase parse_case(std::istream& in, std::string_view source) {
    NetworkCase result;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream tokens(line);
        std::vector<std::string> fields;
        for (std::string t; tokens >> t;) fields.push_back(t);
        if (fields.empty()) continue;

        const std::string where = fmt::format("{}:{}", source, line_no);
        const auto& key = fields[0];
        auto expect = [&](std::size_t n) {
            if (fields.size() != n + 1) {
                throw ParseError(fmt::format("{}: '{}' record needs {} fields, got {}", where, key, n,
                                             fields.size() - 1));
            }
        };

        if (key == "case") {
            expect(1);
            result.name = fields[1];
        } else if (key == "base_mva") {
            expect(1);
            result.base_mva = parse_real(fields[1], where);
        } else if (key == "frequency") {
            expect(1);
            result.frequency = parse_real(fields[1], where);
        } else if (key == "bus") {
            expect(7);
            Bus b;
            b.id = parse_int(fields[1], where);
            b.kind = parse_kind(fields[2], where);
            b.p_load = parse_real(fields[3], where);
            b.q_load = parse_real(fields[4], where);
            b.v_setpoint = parse_real(fields[5], where);
            b.shunt = {parse_real(fields[6], where), parse_real(fields[7], where)};
            result.buses.push_back(b);
        } else if (key == "branch") {
            expect(6);
            Branch br;
            br.from = parse_int(fields[1], where);
            br.to = parse_int(fields[2], where);
            br.r = parse_real(fields[3], where);
            br.x = parse_real(fields[4], where);
            br.b_shunt = parse_real(fields[5], where);
            br.tap = parse_real(fields[6], where);
            result.branches.push_back(br);
        } else if (key == "machine") {
            expect(6);
            Machine m;
            m.bus = parse_int(fields[1], where);
            m.h = parse_real(fields[2], where);
            m.d = parse_real(fields[3], where);
            m.xd_prime = parse_real(fields[4], where);
            m.p_gen = parse_real(fields[5], where);
            m.q_gen = parse_real(fields[6], where);
            result.machines.push_back(m);
        } else {
            throw ParseError(fmt::format("{}: unknown record '{}'", where, key));
        }
    }
    validate(result);
    return result;
}

NetworkCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open case file '{}'", path.string()));
    return parse_case(in, path.string());
}

void validate(const NetworkCase& network) {
    const auto& name = network.name;
    if (!(network.base_mva > 0.0)) throw ValidationError(fmt::format("case '{}': base_mva must be positive", name));
    if (!(network.frequency > 0.0)) throw ValidationError(fmt::format("case '{}': frequency must be positive", name));
    if (network.buses.empty()) throw ValidationError(fmt::format("case '{}': no buses", name));

    std::set<int> ids;
    std::vector<int> slacks;
    for (const auto& b : network.buses) {
        if (!ids.insert(b.id).second) throw ValidationError(fmt::format("case '{}': duplicate bus id {}", name, b.id));
        if (b.kind == BusKind::Slack) slacks.push_back(b.id);
        if (b.kind != BusKind::PQ && !(b.v_setpoint > 0.0)) {
            throw ValidationError(fmt::format("case '{}': bus {} needs a positive voltage setpoint", name, b.id));
        }
    }
    if (slacks.empty()) throw ValidationError(fmt::format("case '{}': missing slack bus", name));
    if (slacks.size() > 1) {
        throw ValidationError(fmt::format("case '{}': multiple slack buses {}", name, fmt::join(slacks, ", ")));
    }

    for (std::size_t k = 0; k < network.branches.size(); ++k) {
        const auto& br = network.branches[k];
        const auto tag = fmt::format("case '{}': branch #{} ({}-{})", name, k + 1, br.from, br.to);
        if (br.from == br.to) throw ValidationError(tag + ": endpoints coincide");
        if (!ids.contains(br.from) || !ids.contains(br.to)) throw ValidationError(tag + ": references unknown bus");
        if (br.r == 0.0 && br.x == 0.0) throw ValidationError(tag + ": zero impedance");
        if (!(br.tap > 0.0)) throw ValidationError(tag + ": tap must be positive");
    }

    std::set<int> machine_buses;
    for (const auto& m : network.machines) {
        const auto tag = fmt::format("case '{}': machine at bus {}", name, m.bus);
        if (!ids.contains(m.bus)) throw ValidationError(tag + ": unknown bus");
        if (!machine_buses.insert(m.bus).second) throw ValidationError(tag + ": more than one machine on the bus");
        if (!(m.h > 0.0)) throw ValidationError(tag + ": inertia must be positive");
        if (!(m.xd_prime > 0.0)) throw ValidationError(tag + ": xd' must be positive");
        if (!(m.d >= 0.0)) throw ValidationError(tag + ": damping must be non-negative");
    }
}

void write_case(std::ostream& out, const NetworkCase& network) {
    out << "case " << (network.name.empty() ? "unnamed" : network.name) << '\n';
    out << "base_mva " << fmt_real(network.base_mva) << '\n';
    out << "frequency " << fmt_real(network.frequency) << '\n';
    for (const auto& b : network.buses) {
        out << fmt::format("bus {} {} {} {} {} {} {}\n", b.id, to_string(b.kind), fmt_real(b.p_load),
                           fmt_real(b.q_load), fmt_real(b.v_setpoint), fmt_real(b.shunt.real()),
                           fmt_real(b.shunt.imag()));
    }
    for (const auto& br : network.branches) {
        out << fmt::format("branch {} {} {} {} {} {}\n", br.from, br.to, fmt_real(br.r), fmt_real(br.x),
                           fmt_real(br.b_shunt), fmt_real(br.tap));
    }
    for (const auto& m : network.machines) {
        out << fmt::format("machine {} {} {} {} {} {}\n", m.bus, fmt_real(m.h), fmt_real(m.d),
                           fmt_real(m.xd_prime), fmt_real(m.p_gen), fmt_real(m.q_gen));
    }
}

LoadTotals total_load(const NetworkCase& network) {
    LoadTotals totals;
    for (const auto& b : network.buses) {
        totals.mw += b.p_load;
        totals.mvar += b.q_load;
    }
    totals.mw *= network.base_mva;
    totals.mvar *= network.base_mva;
    return totals;
}

std::filesystem::path data_directory() {
    if (const char* env = std::getenv("DSE_DATA_DIR"); env && *env) return env;
#ifdef DSE_DATA_DIR
    return DSE_DATA_DIR;
#else
    return "data";
#endif
}

std::filesystem::path resolve_case_path(std::string_view name_or_path) {
    std::filesystem::path p{std::string(name_or_path)};
    if (!p.has_extension() && !p.has_parent_path()) {
        auto bundled = data_directory() / (p.string() + ".case");
        if (std::filesystem::exists(bundled)) return bundled;
    }
    return p;
}

}  // namespace dse
