#include "vopf/network.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <regex>
#include <sstream>

namespace vopf {
namespace {

using Table = std::vector<std::vector<double>>;

std::string strip_comments(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_comment = false;
    bool in_string = false;
    for (char c : text) {
        if (c == '\n') {
            in_comment = false;
            in_string = false;
            out.push_back(c);
            continue;
        }
        if (in_comment) continue;
        if (c == '\'') in_string = !in_string;
        if (c == '%' && !in_string) {
            in_comment = true;
            continue;
        }
        out.push_back(c);
    }
    return out;
}

double parse_number(const std::string& tok, std::string_view table) {
    if (tok == "Inf" || tok == "inf") return std::numeric_limits<double>::infinity();
    if (tok == "-Inf" || tok == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        throw MalformedCase("mpc." + std::string(table) + ": cannot parse number '" + tok + "'");
    }
    return v;
}

std::optional<Table> find_table(const std::string& text, std::string_view name) {
    const std::regex head("mpc\\." + std::string(name) + "\\s*=\\s*\\[");
    std::smatch m;
    if (!std::regex_search(text, m, head)) return std::nullopt;
    const auto start = static_cast<std::size_t>(m.position(0) + m.length(0));
    const auto stop = text.find(']', start);
    if (stop == std::string::npos) throw MalformedCase("mpc." + std::string(name) + ": unterminated matrix");

    Table rows;
    std::vector<double> row;
    std::string tok;
    auto flush_tok = [&] {
        if (!tok.empty()) {
            row.push_back(parse_number(tok, name));
            tok.clear();
        }
    };
    auto flush_row = [&] {
        flush_tok();
        if (!row.empty()) rows.push_back(std::move(row));
        row.clear();
    };
    for (std::size_t i = start; i < stop; ++i) {
        const char c = text[i];
        if (c == ';' || c == '\n' || c == '\r') {
            flush_row();
        } else if (c == ' ' || c == '\t' || c == ',') {
            flush_tok();
        } else if (c == '.' && i + 2 < stop && text[i + 1] == '.' && text[i + 2] == '.') {
            // MATLAB line continuation
            flush_tok();
            while (i < stop && text[i] != '\n') ++i;
        } else {
            tok.push_back(c);
        }
    }
    flush_row();
    return rows;
}

Table require_table(const std::string& text, std::string_view name, std::size_t min_cols) {
    auto t = find_table(text, name);
    if (!t) throw MalformedCase("missing table mpc." + std::string(name));
    if (t->empty()) throw MalformedCase("table mpc." + std::string(name) + " is empty");
    for (std::size_t r = 0; r < t->size(); ++r) {
        if ((*t)[r].size() < min_cols) {
            throw MalformedCase("mpc." + std::string(name) + " row " + std::to_string(r + 1) + " has " +
                                std::to_string((*t)[r].size()) + " columns, need at least " +
                                std::to_string(min_cols));
        }
    }
    return *t;
}

int as_int(double v, std::string_view what) {
    if (v != std::floor(v) || !std::isfinite(v)) throw MalformedCase(std::string(what) + " must be an integer");
    return static_cast<int>(v);
}

double finite_or_large(double v) {
    // Inf limits are common for Q; keep them finite so constraint rows stay evaluable.
    if (std::isinf(v)) return v > 0 ? 1e10 : -1e10;
    return v;
}

}  // namespace

Network parse_case(std::string_view raw) {
    const std::string text = strip_comments(raw);
    Network net;

    const std::regex base_re("mpc\\.baseMVA\\s*=\\s*([-+0-9.eE]+)");
    std::smatch m;
    if (!std::regex_search(text, m, base_re)) throw MalformedCase("missing mpc.baseMVA");
    net.base_mva = parse_number(m[1].str(), "baseMVA");
    if (!(net.base_mva > 0.0)) throw MalformedCase("mpc.baseMVA must be positive");
    const double base = net.base_mva;

    const auto bus = require_table(text, "bus", 13);
    const auto gen = require_table(text, "gen", 10);
    const auto branch = require_table(text, "branch", 11);
    const auto gencost = require_table(text, "gencost", 4);

    for (const auto& r : bus) {
        BusRecord b;
        b.id = as_int(r[0], "bus number");
        switch (as_int(r[1], "bus type")) {
            case 1: b.kind = BusKind::PQ; break;
            case 2: b.kind = BusKind::PV; break;
            case 3: b.kind = BusKind::Slack; break;
            case 4: throw UnsupportedFeature("isolated bus " + std::to_string(b.id) + " (type 4)");
            default: throw MalformedCase("bus " + std::to_string(b.id) + ": unknown bus type");
        }
        b.pd = r[2] / base;
        b.qd = r[3] / base;
        b.gs = r[4] / base;
        b.bs = r[5] / base;
        b.vmax = r[11];
        b.vmin = r[12];
        net.buses.push_back(b);
    }

    if (gencost.size() < gen.size()) {
        throw MalformedCase("mpc.gencost has fewer rows than mpc.gen");
    }
    if (gencost.size() > gen.size()) {
        throw UnsupportedFeature("reactive power costs (extra gencost rows) are not supported");
    }
    for (std::size_t i = 0; i < gen.size(); ++i) {
        const auto& r = gen[i];
        const auto& c = gencost[i];
        if (r[7] <= 0) continue;  // out of service

        const int model = as_int(c[0], "gencost model");
        if (model == 1) throw UnsupportedFeature("piecewise-linear generator cost");
        if (model != 2) throw MalformedCase("unknown gencost model " + std::to_string(model));
        const int ncoef = as_int(c[3], "gencost n");
        if (ncoef < 0 || c.size() < 4 + static_cast<std::size_t>(ncoef)) {
            throw MalformedCase("gencost row " + std::to_string(i + 1) + ": bad coefficient count");
        }
        // Coefficients are listed highest order first.
        std::vector<double> coef(c.begin() + 4, c.begin() + 4 + ncoef);
        for (int k = 0; k + 3 < ncoef; ++k) {
            if (coef[static_cast<std::size_t>(k)] != 0.0) {
                throw UnsupportedFeature("generator cost of degree above 2");
            }
        }
        auto coef_of = [&](int degree) {
            const int pos = ncoef - 1 - degree;
            return pos >= 0 ? coef[static_cast<std::size_t>(pos)] : 0.0;
        };

        GeneratorRecord g;
        g.bus = as_int(r[0], "generator bus");
        g.qmax = finite_or_large(r[3]) / base;
        g.qmin = finite_or_large(r[4]) / base;
        g.pmax = finite_or_large(r[8]) / base;
        g.pmin = finite_or_large(r[9]) / base;
        g.cost.a2 = coef_of(2) * base * base;
        g.cost.a1 = coef_of(1) * base;
        g.cost.a0 = coef_of(0);
        net.gens.push_back(g);
    }

    for (const auto& r : branch) {
        if (r[10] <= 0) continue;
        BranchRecord br;
        br.from = as_int(r[0], "branch from bus");
        br.to = as_int(r[1], "branch to bus");
        br.r = r[2];
        br.x = r[3];
        br.b = r[4];
        br.smax = r[5] / base;
        br.tap = r[8] == 0.0 ? 1.0 : r[8];
        br.shift = r[9] * std::numbers::pi / 180.0;
        net.branches.push_back(br);
    }

    net.finalize();
    return net;
}

Network parse_case_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MalformedCase("cannot open case file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_case(ss.str());
}

std::string serialize_case(const Network& net, std::string_view name) {
    std::ostringstream os;
    os << std::setprecision(17);
    const double base = net.base_mva;
    os << "function mpc = " << name << "\n";
    os << "mpc.version = '2';\n";
    os << "mpc.baseMVA = " << base << ";\n\n";
    os << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    os << "mpc.bus = [\n";
    for (const auto& b : net.buses) {
        const int type = b.kind == BusKind::Slack ? 3 : (b.kind == BusKind::PV ? 2 : 1);
        os << '\t' << b.id << '\t' << type << '\t' << b.pd * base << '\t' << b.qd * base << '\t' << b.gs * base
           << '\t' << b.bs * base << "\t1\t1\t0\t0\t1\t" << b.vmax << '\t' << b.vmin << ";\n";
    }
    os << "];\n\n";
    os << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
    os << "mpc.gen = [\n";
    for (const auto& g : net.gens) {
        os << '\t' << g.bus << "\t0\t0\t" << g.qmax * base << '\t' << g.qmin * base << "\t1\t" << base << "\t1\t"
           << g.pmax * base << '\t' << g.pmin * base << ";\n";
    }
    os << "];\n\n";
    os << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n";
    os << "mpc.branch = [\n";
    for (const auto& br : net.branches) {
        os << '\t' << br.from << '\t' << br.to << '\t' << br.r << '\t' << br.x << '\t' << br.b << '\t'
           << br.smax * base << "\t0\t0\t" << (br.tap == 1.0 ? 0.0 : br.tap) << '\t'
           << br.shift * 180.0 / std::numbers::pi << "\t1;\n";
    }
    os << "];\n\n";
    os << "mpc.gencost = [\n";
    for (const auto& g : net.gens) {
        os << "\t2\t0\t0\t3\t" << g.cost.a2 / (base * base) << '\t' << g.cost.a1 / base << '\t' << g.cost.a0
           << ";\n";
    }
    os << "];\n";
    return os.str();
}

std::string network_json(const Network& net) {
    using nlohmann::json;
    json j;
    j["base_mva"] = net.base_mva;
    j["slack_bus"] = net.buses[net.slack_bus].id;
    auto& buses = j["buses"] = json::array();
    for (const auto& b : net.buses) {
        const char* kind = b.kind == BusKind::Slack ? "slack" : (b.kind == BusKind::PV ? "PV" : "PQ");
        buses.push_back({{"id", b.id}, {"kind", kind}, {"pd", b.pd}, {"qd", b.qd}, {"gs", b.gs}, {"bs", b.bs},
                         {"vmin", b.vmin}, {"vmax", b.vmax}});
    }
    auto& gens = j["gens"] = json::array();
    for (const auto& g : net.gens) {
        gens.push_back({{"bus", g.bus}, {"pmin", g.pmin}, {"pmax", g.pmax}, {"qmin", g.qmin}, {"qmax", g.qmax},
                        {"cost", {g.cost.a2, g.cost.a1, g.cost.a0}}});
    }
    auto& branches = j["branches"] = json::array();
    for (const auto& br : net.branches) {
        branches.push_back({{"from", br.from}, {"to", br.to}, {"r", br.r}, {"x", br.x}, {"b", br.b},
                            {"tap", br.tap}, {"shift", br.shift}, {"smax", br.smax}});
    }
    return j.dump(2);
}

}  // namespace vopf
