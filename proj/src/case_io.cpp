#include "circuitflow/case_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace circuitflow {

using json = nlohmann::ordered_json;

CaseSyntaxError::CaseSyntaxError(int line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

CaseSemanticError::CaseSemanticError(int record_id, const std::string& what, std::vector<ValidationError> errors)
    : std::runtime_error(what), record_id_(record_id), errors_(std::move(errors)) {}

namespace {

std::string format_double(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

double to_number(std::string_view token, int line) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    if (!token.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        throw CaseSyntaxError(line, "expected a number, got '" + std::string(token) + "'");
    return value;
}

int to_integer(std::string_view token, int line) {
    const double value = to_number(token, line);
    if (!std::isfinite(value) || value != std::floor(value))
        throw CaseSyntaxError(line, "expected an integer, got '" + std::string(token) + "'");
    return static_cast<int>(value);
}

struct Record {
    int line;
    std::vector<std::string_view> fields;

    double num(std::size_t i) const { return to_number(fields.at(i), line); }
    int integer(std::size_t i) const { return to_integer(fields.at(i), line); }
    bool has(std::size_t i) const { return i < fields.size(); }
};

void require_columns(const Record& r, std::size_t min, std::size_t max, const char* section) {
    if (r.fields.size() < min || r.fields.size() > max)
        throw CaseSyntaxError(r.line, std::string(section) + " record needs " + std::to_string(min) +
                                          (min == max ? "" : " to " + std::to_string(max)) + " columns, got " +
                                          std::to_string(r.fields.size()));
}

ComplexMatrix scalar_matrix(Complex value) { return ComplexMatrix::Constant(1, 1, value); }

Complex series_from_impedance(double r, double x, const Record& rec) {
    if (r == 0.0 && x == 0.0) throw CaseSemanticError(rec.line, "line " + std::to_string(rec.line) + ": zero series impedance");
    return 1.0 / Complex{r, x};
}

void finish(Network& network) {
    network.finalize();
    auto errors = validate(network);
    if (!errors.empty()) {
        const auto& first = errors.front();
        throw CaseSemanticError(first.device_id, std::string(to_string(first.kind)) + ": " + first.message,
                                std::move(errors));
    }
}

}  // namespace

CaseFormat detect_format(std::string_view text) {
    const auto t = trim(text);
    return !t.empty() && t.front() == '{' ? CaseFormat::ThreePhaseJson : CaseFormat::MatpowerLike;
}

Network parse_case(std::string_view text) {
    Network net;
    net.domain = PhaseDomain::PositiveSequence;
    net.name = "case";

    std::map<std::string, std::vector<Record>, std::less<>> sections;
    std::string current;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto c = line.find_first_of("#%"); c != std::string_view::npos) line = line.substr(0, c);
        line = trim(line);
        if (line.empty()) continue;
        auto fields = split_ws(line);

        if (current.empty()) {
            const std::string_view key = fields[0];
            if (key == "CASE") {
                if (fields.size() != 2) throw CaseSyntaxError(line_no, "CASE takes one name");
                net.name = std::string(fields[1]);
            } else if (key == "BASEMVA") {
                if (fields.size() != 2) throw CaseSyntaxError(line_no, "BASEMVA takes one value");
                net.base_mva = to_number(fields[1], line_no);
            } else if (key == "BUS" || key == "GEN" || key == "BRANCH" || key == "TRANSFORMER" || key == "SHUNT" ||
                       key == "LOAD" || key == "BIGLOAD") {
                if (fields.size() != 1) throw CaseSyntaxError(line_no, "section header takes no values");
                if (sections.contains(key)) throw CaseSyntaxError(line_no, "repeated section " + std::string(key));
                current = std::string(key);
                sections[current];
            } else {
                throw CaseSyntaxError(line_no, "unknown keyword '" + std::string(key) + "'");
            }
            continue;
        }
        if (fields.size() == 1 && fields[0] == "END") {
            current.clear();
            continue;
        }
        sections[current].push_back({line_no, std::move(fields)});
    }
    if (!current.empty()) throw CaseSyntaxError(line_no, "section " + current + " not terminated by END");
    if (!sections.contains("BUS")) throw CaseSyntaxError(0, "missing BUS section");
    if (!(net.base_mva > 0.0)) throw CaseSemanticError(0, "BASEMVA must be positive");
    const double base = net.base_mva;

    std::vector<ZipLoad> bus_loads;
    std::vector<Shunt> bus_shunts;
    std::set<int> explicit_vset;
    for (const auto& r : sections["BUS"]) {
        require_columns(r, 9, 10, "BUS");
        Bus bus;
        bus.id = r.integer(0);
        const int type = r.integer(1);
        if (type < 1 || type > 3) throw CaseSyntaxError(r.line, "undefined bus type code " + std::to_string(type));
        bus.slack = type == 3;
        bus.v_init_mag = r.num(6);
        bus.v_init_angle = deg_to_rad(r.num(7));
        if (bus.slack) bus.slack_angle = bus.v_init_angle;
        const double kv = r.num(8);
        bus.base_kv = kv == 0.0 ? 1.0 : kv;
        if (r.has(9)) {
            bus.v_set = r.num(9);
            explicit_vset.insert(bus.id);
        } else if (bus.slack) {
            bus.v_set = bus.v_init_mag;
        }
        bus.kind = bus.slack ? BusKind::Slack : (type == 2 ? BusKind::PV : BusKind::PQ);
        const double pd = r.num(2), qd = r.num(3), gs = r.num(4), bs = r.num(5);
        if (pd != 0.0 || qd != 0.0) {
            ZipLoad load;
            load.bus = bus.id;
            load.admittance = uniform(1, Complex{});
            load.current = uniform(1, Complex{});
            load.power = uniform(1, Complex{pd / base, qd / base});
            bus_loads.push_back(load);
        }
        if (gs != 0.0 || bs != 0.0) bus_shunts.push_back({0, bus.id, uniform(1, Complex{gs / base, bs / base}), {}});
        net.buses.push_back(bus);
    }

    std::map<int, int> type_of;
    for (const auto& b : net.buses) type_of[b.id] = b.kind == BusKind::Slack ? 3 : (b.kind == BusKind::PV ? 2 : 1);
    auto check_bus = [&](int id, const Record& r, const char* what) {
        if (!type_of.contains(id))
            throw CaseSemanticError(static_cast<int>(r.line), "line " + std::to_string(r.line) + ": " + what +
                                                                  " references undefined bus " + std::to_string(id));
    };

    std::vector<std::pair<int, double>> regulation;  // regulated bus, Vg
    for (const auto& r : sections["GEN"]) {
        require_columns(r, 7, 9, "GEN");
        Generator g;
        g.id = static_cast<int>(net.generators.size()) + 1;
        g.bus = r.integer(0);
        check_bus(g.bus, r, "generator");
        g.p = uniform(1, r.num(1) / base);
        g.q = uniform(1, r.num(2) / base);
        g.q_max = uniform(1, r.num(3) / base);
        g.q_min = uniform(1, r.num(4) / base);
        const double vg = r.num(5);
        g.in_service = r.num(6) > 0.0;
        if (r.has(7) && r.integer(7) != 0 && r.integer(7) != g.bus) {
            g.remote_bus = r.integer(7);
            check_bus(*g.remote_bus, r, "generator");
        }
        g.regulating = r.has(8) ? r.integer(8) != 0 : type_of[g.bus] != 1;
        if (g.in_service && g.regulating) regulation.emplace_back(g.regulated_bus(), vg);
        net.generators.push_back(g);
    }
    for (auto& bus : net.buses) {
        if (explicit_vset.contains(bus.id)) continue;
        for (const auto& [target, vg] : regulation)
            if (target == bus.id) {
                bus.v_set = vg;
                break;
            }
    }

    for (const auto& r : sections["BRANCH"]) {
        require_columns(r, 6, 7, "BRANCH");
        Branch br;
        br.id = static_cast<int>(net.branches.size()) + 1;
        br.from = r.integer(0);
        br.to = r.integer(1);
        check_bus(br.from, r, "branch");
        check_bus(br.to, r, "branch");
        br.series = scalar_matrix(series_from_impedance(r.num(2), r.num(3), r));
        br.charging = scalar_matrix({0.0, r.num(4)});
        br.in_service = r.num(5) > 0.0;
        if (r.has(6)) br.rating = r.num(6);
        net.branches.push_back(br);
    }

    for (const auto& r : sections["TRANSFORMER"]) {
        if (r.fields.size() != 8 && r.fields.size() != 13 && r.fields.size() != 14)
            throw CaseSyntaxError(r.line, "TRANSFORMER record needs 8, 13 or 14 columns, got " +
                                              std::to_string(r.fields.size()));
        Transformer tx;
        tx.id = static_cast<int>(net.transformers.size()) + 1;
        tx.from = r.integer(0);
        tx.to = r.integer(1);
        check_bus(tx.from, r, "transformer");
        check_bus(tx.to, r, "transformer");
        tx.series = scalar_matrix(series_from_impedance(r.num(2), r.num(3), r));
        tx.charging = scalar_matrix({0.0, r.num(4)});
        const double tap = r.num(5);
        tx.tap = uniform(1, tap == 0.0 ? 1.0 : tap);
        tx.shift = uniform(1, deg_to_rad(r.num(6)));
        tx.in_service = r.num(7) > 0.0;
        if (r.has(8)) {
            tx.tap_min = r.num(8);
            tx.tap_max = r.num(9);
            tx.tap_step = r.num(10);
            if (const int controlled = r.integer(11); controlled != 0) {
                check_bus(controlled, r, "transformer");
                tx.controlled_bus = controlled;
            }
            tx.v_target = r.num(12);
            if (r.has(13)) tx.v_band = r.num(13);
        }
        net.transformers.push_back(tx);
    }

    std::vector<Shunt> section_shunts;
    for (const auto& r : sections["SHUNT"]) {
        if (r.fields.size() != 3 && r.fields.size() != 9)
            throw CaseSyntaxError(r.line, "SHUNT record needs 3 or 9 columns, got " + std::to_string(r.fields.size()));
        Shunt sh;
        sh.bus = r.integer(0);
        check_bus(sh.bus, r, "shunt");
        sh.admittance = uniform(1, Complex{r.num(1) / base, r.num(2) / base});
        if (r.has(3)) {
            SwitchedBlocks blocks;
            blocks.block = {0.0, r.num(3) / base};
            blocks.min_blocks = r.integer(4);
            blocks.max_blocks = r.integer(5);
            blocks.blocks_on = r.integer(6);
            blocks.v_low = r.num(7);
            blocks.v_high = r.num(8);
            sh.switched = blocks;
        }
        section_shunts.push_back(sh);
    }

    std::vector<ZipLoad> section_loads;
    for (const auto& r : sections["LOAD"]) {
        require_columns(r, 7, 8, "LOAD");
        ZipLoad load;
        load.bus = r.integer(0);
        check_bus(load.bus, r, "load");
        load.admittance = uniform(1, Complex{r.num(1) / base, -r.num(2) / base});
        load.current = uniform(1, Complex{r.num(3) / base, r.num(4) / base});
        load.power = uniform(1, Complex{r.num(5) / base, r.num(6) / base});
        if (r.has(7)) {
            if (r.fields[7] == "delta") load.connection = Connection::Delta;
            else if (r.fields[7] != "wye") throw CaseSyntaxError(r.line, "connection must be wye or delta");
        }
        section_loads.push_back(load);
    }

    for (const auto& r : sections["BIGLOAD"]) {
        require_columns(r, 5, 5, "BIGLOAD");
        BigLoad load;
        load.id = static_cast<int>(net.big_loads.size()) + 1;
        load.bus = r.integer(0);
        check_bus(load.bus, r, "load");
        load.alpha = uniform(1, Complex{r.num(1) / base, r.num(2) / base});
        load.admittance = uniform(1, Complex{r.num(3) / base, r.num(4) / base});
        net.big_loads.push_back(load);
    }

    net.zip_loads = std::move(bus_loads);
    net.zip_loads.insert(net.zip_loads.end(), section_loads.begin(), section_loads.end());
    for (std::size_t i = 0; i < net.zip_loads.size(); ++i) net.zip_loads[i].id = static_cast<int>(i) + 1;
    net.shunts = std::move(bus_shunts);
    net.shunts.insert(net.shunts.end(), section_shunts.begin(), section_shunts.end());
    for (std::size_t i = 0; i < net.shunts.size(); ++i) net.shunts[i].id = static_cast<int>(i) + 1;

    finish(net);
    return net;
}

std::string write_case(const Network& network) {
    if (network.domain != PhaseDomain::PositiveSequence)
        throw std::invalid_argument("the tabular format holds positive-sequence networks only");
    const double base = network.base_mva;
    std::ostringstream out;
    auto num = [](double v) { return format_double(v); };
    out << "CASE " << (network.name.empty() ? "case" : network.name) << "\n";
    out << "BASEMVA " << num(base) << "\n\n";

    out << "BUS\n# id type Pd Qd Gs Bs Vm Va baseKV Vset\n";
    for (const auto& b : network.buses) {
        const int type = b.slack ? 3 : (b.kind == BusKind::PV ? 2 : 1);
        out << b.id << ' ' << type << " 0 0 0 0 " << num(b.v_init_mag) << ' '
            << num(rad_to_deg(b.slack ? b.slack_angle : b.v_init_angle)) << ' ' << num(b.base_kv);
        if (b.v_set) out << ' ' << num(*b.v_set);
        out << "\n";
    }
    out << "END\n\n";

    out << "GEN\n# bus Pg Qg Qmax Qmin Vg status reg_bus regulating\n";
    for (const auto& g : network.generators) {
        double vg = 1.0;
        if (network.has_bus(g.regulated_bus()))
            vg = network.buses[network.bus_index(g.regulated_bus())].v_set.value_or(1.0);
        out << g.bus << ' ' << num(g.p(0) * base) << ' ' << num(g.q(0) * base) << ' ' << num(g.q_max(0) * base)
            << ' ' << num(g.q_min(0) * base) << ' ' << num(vg) << ' ' << (g.in_service ? 1 : 0) << ' '
            << g.remote_bus.value_or(0) << ' ' << (g.regulating ? 1 : 0) << "\n";
    }
    out << "END\n\n";

    out << "BRANCH\n# from to r x b status rating\n";
    for (const auto& br : network.branches) {
        const Complex z = 1.0 / br.series(0, 0);
        out << br.from << ' ' << br.to << ' ' << num(z.real()) << ' ' << num(z.imag()) << ' '
            << num(br.charging(0, 0).imag()) << ' ' << (br.in_service ? 1 : 0) << ' ' << num(br.rating) << "\n";
    }
    out << "END\n\n";

    out << "TRANSFORMER\n# from to r x b tap shift status tap_min tap_max tap_step controlled_bus v_target v_band\n";
    for (const auto& tx : network.transformers) {
        const Complex z = 1.0 / tx.series(0, 0);
        out << tx.from << ' ' << tx.to << ' ' << num(z.real()) << ' ' << num(z.imag()) << ' '
            << num(tx.charging(0, 0).imag()) << ' ' << num(tx.tap(0)) << ' ' << num(rad_to_deg(tx.shift(0))) << ' '
            << (tx.in_service ? 1 : 0) << ' ' << num(tx.tap_min) << ' ' << num(tx.tap_max) << ' '
            << num(tx.tap_step) << ' ' << tx.controlled_bus.value_or(0) << ' ' << num(tx.v_target) << ' '
            << num(tx.v_band) << "\n";
    }
    out << "END\n\n";

    out << "SHUNT\n# bus G B [block_B min_blocks max_blocks blocks_on v_low v_high]\n";
    for (const auto& sh : network.shunts) {
        out << sh.bus << ' ' << num(sh.admittance(0).real() * base) << ' ' << num(sh.admittance(0).imag() * base);
        if (sh.switched) {
            const auto& s = *sh.switched;
            out << ' ' << num(s.block.imag() * base) << ' ' << s.min_blocks << ' ' << s.max_blocks << ' '
                << s.blocks_on << ' ' << num(s.v_low) << ' ' << num(s.v_high);
        }
        out << "\n";
    }
    out << "END\n\n";

    out << "LOAD\n# bus zp zq ip iq sp sq connection\n";
    for (const auto& l : network.zip_loads) {
        out << l.bus << ' ' << num(l.admittance(0).real() * base) << ' ' << num(-l.admittance(0).imag() * base) << ' '
            << num(l.current(0).real() * base) << ' ' << num(l.current(0).imag() * base) << ' '
            << num(l.power(0).real() * base) << ' ' << num(l.power(0).imag() * base) << ' '
            << (l.connection == Connection::Delta ? "delta" : "wye") << "\n";
    }
    out << "END\n\n";

    out << "BIGLOAD\n# bus alpha_r alpha_i g b\n";
    for (const auto& l : network.big_loads) {
        out << l.bus << ' ' << num(l.alpha(0).real() * base) << ' ' << num(l.alpha(0).imag() * base) << ' '
            << num(l.admittance(0).real() * base) << ' ' << num(l.admittance(0).imag() * base) << "\n";
    }
    out << "END\n";
    return out.str();
}

// Three-phase JSON -----------------------------------------------------------

namespace {

int line_of_offset(std::string_view text, std::size_t offset) {
    int line = 1;
    for (std::size_t i = 0; i < std::min(offset, text.size()); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

Vector read_vector(const json& j, const char* key, int phases, std::optional<double> fallback) {
    if (!j.contains(key)) {
        if (!fallback) throw CaseSyntaxError(0, std::string("missing key '") + key + "'");
        return Vector::Constant(phases, *fallback);
    }
    const auto& a = j.at(key);
    if (a.is_number()) return Vector::Constant(phases, a.get<double>());
    if (!a.is_array() || static_cast<int>(a.size()) != phases)
        throw CaseSyntaxError(0, std::string("'") + key + "' must hold " + std::to_string(phases) + " values");
    Vector v(phases);
    for (int p = 0; p < phases; ++p) v(p) = a[p].get<double>();
    return v;
}

ComplexVector read_complex(const json& j, const char* re, const char* im, int phases) {
    const Vector r = read_vector(j, re, phases, 0.0);
    const Vector i = read_vector(j, im, phases, 0.0);
    ComplexVector out(phases);
    for (int p = 0; p < phases; ++p) out(p) = {r(p), i(p)};
    return out;
}

Eigen::MatrixXd read_matrix(const json& j, const char* key, int phases, bool required) {
    if (!j.contains(key)) {
        if (required) throw CaseSyntaxError(0, std::string("missing key '") + key + "'");
        return Eigen::MatrixXd::Zero(phases, phases);
    }
    const auto& a = j.at(key);
    if (!a.is_array() || static_cast<int>(a.size()) != phases)
        throw CaseSyntaxError(0, std::string("'") + key + "' must be a " + std::to_string(phases) + "x" +
                                     std::to_string(phases) + " array");
    Eigen::MatrixXd m(phases, phases);
    for (int r = 0; r < phases; ++r) {
        if (!a[r].is_array() || static_cast<int>(a[r].size()) != phases)
            throw CaseSyntaxError(0, std::string("'") + key + "' row has the wrong length");
        for (int c = 0; c < phases; ++c) m(r, c) = a[r][c].get<double>();
    }
    return m;
}

ComplexMatrix combine(const Eigen::MatrixXd& re, const Eigen::MatrixXd& im) {
    ComplexMatrix out(re.rows(), re.cols());
    for (Eigen::Index r = 0; r < re.rows(); ++r)
        for (Eigen::Index c = 0; c < re.cols(); ++c) out(r, c) = {re(r, c), im(r, c)};
    return out;
}

Connection read_connection(const json& j) {
    const std::string c = j.value("connection", std::string("wye"));
    if (c == "wye") return Connection::Wye;
    if (c == "delta") return Connection::Delta;
    throw CaseSyntaxError(0, "connection must be \"wye\" or \"delta\", got \"" + c + "\"");
}

double normalize_zero(double v) { return v == 0.0 ? 0.0 : v; }

json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(normalize_zero(v(i)));
    return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
    return a;
}

Network build_from_json(const json& doc) {
    for (const char* key : {"base_mva", "buses", "generators", "loads", "branches", "transformers", "shunts"})
        if (!doc.contains(key)) throw CaseSyntaxError(0, std::string("missing top-level key '") + key + "'");

    Network net;
    net.name = doc.value("name", std::string("feeder"));
    const int phases = doc.value("phases", 3);
    if (phases != 1 && phases != 3) throw CaseSyntaxError(0, "phases must be 1 or 3");
    net.domain = phases == 3 ? PhaseDomain::ThreePhase : PhaseDomain::PositiveSequence;
    net.base_mva = doc.at("base_mva").get<double>();
    const std::string units = doc.value("units", std::string("pu"));
    if (units != "pu" && units != "physical") throw CaseSyntaxError(0, "units must be \"pu\" or \"physical\"");
    net.units = units == "physical" ? Units::Physical : Units::PerUnit;

    for (const auto& b : doc.at("buses")) {
        Bus bus;
        bus.id = b.at("id").get<int>();
        bus.slack = b.value("slack", false);
        bus.base_kv = b.value("base_kv", 1.0);
        if (b.contains("v_set") && !b.at("v_set").is_null()) bus.v_set = b.at("v_set").get<double>();
        bus.slack_angle = deg_to_rad(b.value("angle_deg", 0.0));
        bus.v_init_mag = b.value("v_init", bus.v_set.value_or(1.0));
        bus.v_init_angle = deg_to_rad(b.value("angle_init_deg", rad_to_deg(bus.slack_angle)));
        if (bus.slack && !bus.v_set) bus.v_set = 1.0;
        net.buses.push_back(bus);
    }
    for (const auto& g : doc.at("generators")) {
        Generator gen;
        gen.id = g.at("id").get<int>();
        gen.bus = g.at("bus").get<int>();
        gen.in_service = g.value("in_service", true);
        gen.regulating = g.value("regulating", false);
        if (g.contains("remote_bus") && !g.at("remote_bus").is_null()) gen.remote_bus = g.at("remote_bus").get<int>();
        gen.p = read_vector(g, "p", phases, 0.0);
        gen.q = read_vector(g, "q", phases, 0.0);
        gen.q_min = read_vector(g, "q_min", phases, -kInfinity);
        gen.q_max = read_vector(g, "q_max", phases, kInfinity);
        net.generators.push_back(gen);
    }
    for (const auto& l : doc.at("loads")) {
        const std::string model = l.value("model", std::string("zip"));
        if (model == "zip") {
            ZipLoad load;
            load.id = l.at("id").get<int>();
            load.bus = l.at("bus").get<int>();
            load.connection = read_connection(l);
            load.admittance = read_complex(l, "y_real", "y_imag", phases);
            load.current = read_complex(l, "i_real", "i_imag", phases);
            load.power = read_complex(l, "s_real", "s_imag", phases);
            net.zip_loads.push_back(load);
        } else if (model == "big") {
            BigLoad load;
            load.id = l.at("id").get<int>();
            load.bus = l.at("bus").get<int>();
            load.connection = read_connection(l);
            load.alpha = read_complex(l, "alpha_real", "alpha_imag", phases);
            load.admittance = read_complex(l, "g", "b", phases);
            net.big_loads.push_back(load);
        } else {
            throw CaseSyntaxError(0, "load model must be \"zip\" or \"big\", got \"" + model + "\"");
        }
    }
    for (const auto& b : doc.at("branches")) {
        Branch br;
        br.id = b.at("id").get<int>();
        br.from = b.at("from").get<int>();
        br.to = b.at("to").get<int>();
        br.in_service = b.value("in_service", true);
        br.series = combine(read_matrix(b, "y_real", phases, true), read_matrix(b, "y_imag", phases, true));
        br.charging = combine(Eigen::MatrixXd::Zero(phases, phases), read_matrix(b, "b_charging", phases, false));
        br.rating = b.value("rating", 0.0);
        net.branches.push_back(br);
    }
    for (const auto& t : doc.at("transformers")) {
        Transformer tx;
        tx.id = t.at("id").get<int>();
        tx.from = t.at("from").get<int>();
        tx.to = t.at("to").get<int>();
        tx.in_service = t.value("in_service", true);
        tx.series = combine(read_matrix(t, "y_real", phases, true), read_matrix(t, "y_imag", phases, true));
        tx.charging = combine(Eigen::MatrixXd::Zero(phases, phases), read_matrix(t, "b_charging", phases, false));
        tx.tap = read_vector(t, "tap", phases, 1.0);
        tx.shift = read_vector(t, "shift_deg", phases, 0.0).unaryExpr([](double d) { return deg_to_rad(d); });
        tx.tap_min = t.value("tap_min", 0.5);
        tx.tap_max = t.value("tap_max", 1.5);
        tx.tap_step = t.value("tap_step", 0.0);
        if (t.contains("controlled_bus") && !t.at("controlled_bus").is_null())
            tx.controlled_bus = t.at("controlled_bus").get<int>();
        tx.v_target = t.value("v_target", 1.0);
        tx.v_band = t.value("v_band", 0.01);
        tx.rating = t.value("rating", 0.0);
        net.transformers.push_back(tx);
    }
    for (const auto& s : doc.at("shunts")) {
        Shunt sh;
        sh.id = s.at("id").get<int>();
        sh.bus = s.at("bus").get<int>();
        sh.admittance = read_complex(s, "g", "b", phases);
        if (s.contains("switched")) {
            const auto& w = s.at("switched");
            SwitchedBlocks blocks;
            blocks.block = {0.0, w.at("block_b").get<double>()};
            blocks.min_blocks = w.value("min", 0);
            blocks.max_blocks = w.value("max", 0);
            blocks.blocks_on = w.value("on", 0);
            blocks.v_low = w.value("v_low", 0.95);
            blocks.v_high = w.value("v_high", 1.05);
            sh.switched = blocks;
        }
        net.shunts.push_back(sh);
    }

    net.finalize();
    if (net.units == Units::Physical) {
        auto errors = validate(net);
        std::erase_if(errors, [](const ValidationError& e) { return e.kind != ValidationError::Kind::BadBase; });
        if (!errors.empty()) throw CaseSemanticError(errors.front().device_id, errors.front().message, errors);
        net = to_per_unit(net);
    }
    return net;
}

}  // namespace

Network parse_three_phase_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw CaseSyntaxError(line_of_offset(text, e.byte), e.what());
    }
    if (!doc.is_object()) throw CaseSyntaxError(1, "top level must be an object");
    Network net;
    try {
        net = build_from_json(doc);
    } catch (const json::exception& e) {
        throw CaseSyntaxError(0, e.what());
    } catch (const std::out_of_range& e) {
        throw CaseSemanticError(0, e.what());
    }
    finish(net);
    return net;
}

std::string write_three_phase_json(const Network& network) {
    const int phases = network.phases();
    json doc;
    doc["name"] = network.name;
    doc["phases"] = phases;
    doc["units"] = "pu";
    doc["base_mva"] = network.base_mva;
    auto re = [](const ComplexVector& v) { return vector_json(v.real()); };
    auto im = [](const ComplexVector& v) { return vector_json(v.imag()); };

    json buses = json::array();
    for (const auto& b : network.buses) {
        json j;
        j["id"] = b.id;
        j["slack"] = b.slack;
        j["base_kv"] = b.base_kv;
        j["v_set"] = b.v_set ? json(*b.v_set) : json(nullptr);
        j["angle_deg"] = normalize_zero(rad_to_deg(b.slack_angle));
        j["v_init"] = b.v_init_mag;
        j["angle_init_deg"] = normalize_zero(rad_to_deg(b.v_init_angle));
        buses.push_back(j);
    }
    doc["buses"] = buses;

    json gens = json::array();
    for (const auto& g : network.generators) {
        json j;
        j["id"] = g.id;
        j["bus"] = g.bus;
        j["in_service"] = g.in_service;
        j["regulating"] = g.regulating;
        j["remote_bus"] = g.remote_bus ? json(*g.remote_bus) : json(nullptr);
        j["p"] = vector_json(g.p);
        j["q"] = vector_json(g.q);
        // JSON has no infinity; absent limits mean unbounded.
        if (g.q_min.allFinite()) j["q_min"] = vector_json(g.q_min);
        if (g.q_max.allFinite()) j["q_max"] = vector_json(g.q_max);
        gens.push_back(j);
    }
    doc["generators"] = gens;

    json loads = json::array();
    for (const auto& l : network.zip_loads) {
        json j;
        j["id"] = l.id;
        j["bus"] = l.bus;
        j["model"] = "zip";
        j["connection"] = l.connection == Connection::Delta ? "delta" : "wye";
        j["y_real"] = re(l.admittance);
        j["y_imag"] = im(l.admittance);
        j["i_real"] = re(l.current);
        j["i_imag"] = im(l.current);
        j["s_real"] = re(l.power);
        j["s_imag"] = im(l.power);
        loads.push_back(j);
    }
    for (const auto& l : network.big_loads) {
        json j;
        j["id"] = l.id;
        j["bus"] = l.bus;
        j["model"] = "big";
        j["connection"] = l.connection == Connection::Delta ? "delta" : "wye";
        j["alpha_real"] = re(l.alpha);
        j["alpha_imag"] = im(l.alpha);
        j["g"] = re(l.admittance);
        j["b"] = im(l.admittance);
        loads.push_back(j);
    }
    doc["loads"] = loads;

    json branches = json::array();
    for (const auto& br : network.branches) {
        json j;
        j["id"] = br.id;
        j["from"] = br.from;
        j["to"] = br.to;
        j["in_service"] = br.in_service;
        j["y_real"] = matrix_json(br.series.real());
        j["y_imag"] = matrix_json(br.series.imag());
        j["b_charging"] = matrix_json(br.charging.imag());
        j["rating"] = br.rating;
        branches.push_back(j);
    }
    doc["branches"] = branches;

    json transformers = json::array();
    for (const auto& tx : network.transformers) {
        json j;
        j["id"] = tx.id;
        j["from"] = tx.from;
        j["to"] = tx.to;
        j["in_service"] = tx.in_service;
        j["y_real"] = matrix_json(tx.series.real());
        j["y_imag"] = matrix_json(tx.series.imag());
        j["b_charging"] = matrix_json(tx.charging.imag());
        j["tap"] = vector_json(tx.tap);
        j["shift_deg"] = vector_json(tx.shift.unaryExpr([](double r) { return rad_to_deg(r); }));
        j["tap_min"] = tx.tap_min;
        j["tap_max"] = tx.tap_max;
        j["tap_step"] = tx.tap_step;
        j["controlled_bus"] = tx.controlled_bus ? json(*tx.controlled_bus) : json(nullptr);
        j["v_target"] = tx.v_target;
        j["v_band"] = tx.v_band;
        j["rating"] = tx.rating;
        transformers.push_back(j);
    }
    doc["transformers"] = transformers;

    json shunts = json::array();
    for (const auto& sh : network.shunts) {
        json j;
        j["id"] = sh.id;
        j["bus"] = sh.bus;
        j["g"] = re(sh.admittance);
        j["b"] = im(sh.admittance);
        if (sh.switched) {
            const auto& s = *sh.switched;
            j["switched"] = {{"block_b", s.block.imag()}, {"min", s.min_blocks}, {"max", s.max_blocks},
                             {"on", s.blocks_on},         {"v_low", s.v_low},    {"v_high", s.v_high}};
        }
        shunts.push_back(j);
    }
    doc["shunts"] = shunts;
    return doc.dump(2) + "\n";
}

CaseFile read_case(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CaseReadError("cannot open case file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw CaseReadError("cannot read case file '" + path + "'");
    const std::string text = buffer.str();
    CaseFile file;
    file.path = path;
    file.format = detect_format(text);
    file.network = file.format == CaseFormat::ThreePhaseJson ? parse_three_phase_json(text) : parse_case(text);
    return file;
}

// Solutions ------------------------------------------------------------------

namespace {

json residual_json(const ResidualReport& r) {
    return {{"max_kcl", r.max_kcl}, {"max_control", r.max_control}, {"max_source", r.max_source}, {"max", r.max()}};
}

json report_body(const SolveReport& report) {
    json j;
    j["status"] = to_string(report.status);
    j["inner_iterations"] = report.inner_iterations;
    j["homotopy_steps"] = report.homotopy_steps;
    j["outer_passes"] = report.outer_passes;
    json events = json::array();
    for (const auto& e : report.events)
        events.push_back(
            {{"pass", e.pass}, {"device", e.device}, {"id", e.id}, {"action", e.action}, {"value", e.value}});
    j["events"] = events;
    j["residual"] = residual_json(report.residual);
    j["message"] = report.message;
    return j;
}

double angle_deg(Complex v) { return normalize_zero(rad_to_deg(std::arg(v))); }

}  // namespace

std::string write_solution(const Network& network, const StateVector& state, const SolveReport& report,
                           SolutionFormat format) {
    if (!state.matches(network)) throw std::invalid_argument("state dimension does not match the network");
    const int phases = network.phases();

    if (format == SolutionFormat::Csv) {
        std::string out = "bus,phase,vmag_pu,vang_deg,vr_pu,vi_pu\n";
        for (int p = 0; p < phases; ++p)
            for (int b = 0; b < network.bus_count(); ++b) {
                const Complex v = state.v(b, p);
                out += std::to_string(network.buses[b].id) + ',' + phase_name(network.domain, p) + ',' +
                       format_double(std::abs(v)) + ',' + format_double(angle_deg(v)) + ',' +
                       format_double(normalize_zero(v.real())) + ',' + format_double(normalize_zero(v.imag())) + '\n';
            }
        return out;
    }

    json doc;
    doc["case"] = network.name;
    json buses = json::array();
    for (int p = 0; p < phases; ++p)
        for (int b = 0; b < network.bus_count(); ++b) {
            const Complex v = state.v(b, p);
            buses.push_back({{"bus", network.buses[b].id},
                             {"phase", phase_name(network.domain, p)},
                             {"vmag_pu", std::abs(v)},
                             {"vang_deg", angle_deg(v)},
                             {"vr_pu", normalize_zero(v.real())},
                             {"vi_pu", normalize_zero(v.imag())}});
        }
    doc["buses"] = buses;
    const Eigen::MatrixXcd dispatch = generator_dispatch(network, state);
    json gens = json::array();
    for (int g = 0; g < static_cast<int>(network.generators.size()); ++g)
        for (int p = 0; p < phases; ++p)
            gens.push_back({{"id", network.generators[g].id},
                            {"bus", network.generators[g].bus},
                            {"phase", phase_name(network.domain, p)},
                            {"p_pu", normalize_zero(dispatch(g, p).real())},
                            {"q_pu", normalize_zero(dispatch(g, p).imag())}});
    doc["generators"] = gens;
    doc["report"] = report_body(report);
    return doc.dump(2) + "\n";
}

std::vector<SolutionRow> read_solution_csv(std::string_view text) {
    std::vector<SolutionRow> rows;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != "bus,phase,vmag_pu,vang_deg,vr_pu,vi_pu") throw CaseSyntaxError(1, "unexpected solution header");
            continue;
        }
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (cells.size() != 6) throw CaseSyntaxError(line_no, "solution row needs 6 cells");
        rows.push_back({to_integer(cells[0], line_no), std::string(cells[1]), to_number(cells[2], line_no),
                        to_number(cells[3], line_no), to_number(cells[4], line_no), to_number(cells[5], line_no)});
    }
    return rows;
}

std::vector<SolutionRow> read_solution_json(std::string_view text) {
    std::vector<SolutionRow> rows;
    try {
        const json doc = json::parse(text.begin(), text.end());
        for (const auto& b : doc.at("buses"))
            rows.push_back({b.at("bus").get<int>(), b.at("phase").get<std::string>(), b.at("vmag_pu").get<double>(),
                            b.at("vang_deg").get<double>(), b.at("vr_pu").get<double>(), b.at("vi_pu").get<double>()});
    } catch (const json::parse_error& e) {
        throw CaseSyntaxError(line_of_offset(text, e.byte), e.what());
    } catch (const json::exception& e) {
        throw CaseSyntaxError(0, e.what());
    }
    return rows;
}

StateVector state_from_solution(const Network& network, const std::vector<SolutionRow>& rows) {
    StateVector state(network.bus_count(), network.phases(), static_cast<int>(network.generators.size()));
    std::vector<bool> seen(network.bus_count() * network.phases(), false);
    for (const auto& row : rows) {
        if (!network.has_bus(row.bus)) throw std::invalid_argument("solution row for unknown bus " + std::to_string(row.bus));
        int phase = -1;
        for (int p = 0; p < network.phases(); ++p)
            if (row.phase == phase_name(network.domain, p)) phase = p;
        if (phase < 0) throw std::invalid_argument("solution row with unknown phase '" + row.phase + "'");
        const int b = network.bus_index(row.bus);
        state.v(b, phase) = {row.vr_pu, row.vi_pu};
        seen[state.slot(b, phase)] = true;
    }
    for (bool s : seen)
        if (!s) throw std::invalid_argument("solution does not cover every bus and phase");
    for (int g = 0; g < static_cast<int>(network.generators.size()); ++g)
        state.generator_q.row(g) = network.generators[g].q.transpose();
    return state;
}

std::string write_report_json(const SolveReport& report, const std::string& case_name, const std::string& timestamp) {
    json doc;
    doc["case"] = case_name;
    const json body = report_body(report);
    for (const auto& [key, value] : body.items()) doc[key] = value;
    doc["metadata"] = {{"timestamp", timestamp}, {"wall_seconds", report.wall_seconds}};
    return doc.dump(2) + "\n";
}

std::string write_trace_csv(const std::vector<NrTraceRow>& trace) {
    std::string out = "iteration,residual,max_dv,zeta\n";
    for (const auto& r : trace)
        out += std::to_string(r.iteration) + ',' + format_double(r.residual) + ',' + format_double(r.max_dv) + ',' +
               format_double(r.zeta) + '\n';
    return out;
}

std::string write_lambda_trace_csv(const std::vector<LambdaTraceRow>& trace) {
    std::string out = "lambda,nr_iterations,residual,accepted\n";
    for (const auto& r : trace)
        out += format_double(r.lambda) + ',' + std::to_string(r.nr_iterations) + ',' + format_double(r.residual) + ',' +
               (r.accepted ? "1" : "0") + '\n';
    return out;
}

}  // namespace circuitflow
