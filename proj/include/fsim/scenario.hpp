#pragma once

// Scenario files: a line-oriented sectioned text format with expression
// payloads. Sections declare the system dimension, switching surfaces,
// region pieces, the Lyapunov candidate and comparison functions, the
// verification domain, and integrator settings. Loading validates
// everything: expressions parse, every sign pattern has a piece, the
// candidate is continuous across its surfaces, and the field passes
// validation on the domain.

#include "fsim/certify.hpp"
#include "fsim/field.hpp"
#include "fsim/lyapunov.hpp"
#include "fsim/simulate.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fsim {

class ScenarioError : public std::runtime_error {
public:
    ScenarioError(const std::string& path, int line, const std::string& message)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + message) {}
    ScenarioError(const std::string& path, const std::string& message)
        : std::runtime_error(path + ": " + message) {}
};

enum RunMode : unsigned {
    kModeCheck1 = 1u,
    kModeCheck2 = 2u,
    kModeSimulate = 4u,
    kModeAll = kModeCheck1 | kModeCheck2 | kModeSimulate,
};

struct SimulateSection {
    Vec x0;
    double t0 = 0.0;
    double tf = 10.0;
    IntegratorConfig integrator;
    double tail_fraction = 0.25;
    double conv_tol = 1e-4;
    double inclusion_tol = 1e-3;
};

struct Scenario {
    std::string name;
    int dimension = 0;
    ParamMap params;
    PiecewiseField field;
    PiecewiseScalar lyapunov;
    ComparisonTriple triple;
    DomainSpec domain;
    std::vector<double> t_grid;
    double safety = 0.9;
    SimulateSection sim;
    unsigned mode = kModeAll;
    FieldValidationReport field_validation;
};

namespace detail {

struct ScenarioEntry {
    std::string key;
    std::string value;
    int line = 0;
};

struct ScenarioSection {
    std::string kind;  // "system", "surface", "region", ...
    std::string arg;   // surface name or region pattern
    int line = 0;
    std::vector<ScenarioEntry> entries;

    const ScenarioEntry* find(std::string_view key) const {
        for (const auto& e : entries)
            if (e.key == key) return &e;
        return nullptr;
    }
};

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(std::exchange(cur, {}));
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

class ScenarioParser {
public:
    ScenarioParser(std::string path) : path_(std::move(path)) {}

    Scenario load() {
        read_sections();
        const ScenarioSection& system = require_section("system");
        dimension_ = parse_int(system, "dimension");
        if (dimension_ < 1) fail(system.line, "dimension must be positive");
        read_params();
        read_mode(system);

        auto field = build_field();
        auto [lyapunov, triple] = build_lyapunov();
        auto [domain, t_grid, safety] = build_domain();
        auto sim = build_simulate();

        // Candidate continuity across its own surfaces, sampled on the box.
        const ContinuityReport cont = lyapunov.validate_continuity(domain.box, t_grid);
        if (!cont.pass) {
            std::ostringstream os;
            os << "Lyapunov candidate is discontinuous across a surface (gap " << cont.worst_gap
               << " at x = (";
            for (std::size_t i = 0; i < cont.witness_x.size(); ++i)
                os << (i ? ", " : "") << cont.witness_x[i];
            os << "))";
            fail(0, os.str());
        }

        FieldValidationReport validation = field.validate(domain.box, t_grid);

        std::string name = std::filesystem::path(path_).stem().string();
        return Scenario{std::move(name), dimension_,  params_, std::move(field),
                        std::move(lyapunov), std::move(triple), std::move(domain),
                        std::move(t_grid), safety, std::move(sim), mode_, std::move(validation)};
    }

private:
    [[noreturn]] void fail(int line, const std::string& message) const {
        if (line > 0) throw ScenarioError(path_, line, message);
        throw ScenarioError(path_, message);
    }

    void read_sections() {
        std::ifstream in(path_);
        if (!in) throw ScenarioError(path_, "cannot open scenario file");
        std::string raw;
        int lineno = 0;
        while (std::getline(in, raw)) {
            ++lineno;
            std::string line = trim(raw);
            if (line.empty() || line[0] == '#' || line[0] == ';') continue;
            if (line.front() == '[') {
                if (line.back() != ']') fail(lineno, "unterminated section header");
                const auto tokens = split_ws(line.substr(1, line.size() - 2));
                if (tokens.empty()) fail(lineno, "empty section header");
                ScenarioSection sec;
                sec.kind = tokens[0];
                if (tokens.size() > 2) fail(lineno, "too many tokens in section header");
                if (tokens.size() == 2) sec.arg = tokens[1];
                sec.line = lineno;
                sections_.push_back(std::move(sec));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(lineno, "expected 'key = value'");
            if (sections_.empty()) fail(lineno, "entry outside of any section");
            ScenarioEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
            if (e.key.empty()) fail(lineno, "empty key");
            sections_.back().entries.push_back(std::move(e));
        }
    }

    const ScenarioSection& require_section(std::string_view kind) const {
        for (const auto& s : sections_)
            if (s.kind == kind) return s;
        throw ScenarioError(path_, "missing [" + std::string(kind) + "] section");
    }

    const ScenarioSection* find_section(std::string_view kind) const {
        for (const auto& s : sections_)
            if (s.kind == kind) return &s;
        return nullptr;
    }

    const ScenarioEntry& require_entry(const ScenarioSection& sec, std::string_view key) const {
        const ScenarioEntry* e = sec.find(key);
        if (!e) fail(sec.line, "missing '" + std::string(key) + "' in [" + sec.kind + "]");
        return *e;
    }

    double parse_double_value(const ScenarioEntry& e) const {
        double v = 0.0;
        const char* b = e.value.data();
        const char* end = b + e.value.size();
        auto res = std::from_chars(b, end, v);
        if (res.ec != std::errc{} || res.ptr != end)
            fail(e.line, "invalid number '" + e.value + "'");
        return v;
    }

    int parse_int(const ScenarioSection& sec, std::string_view key) const {
        const ScenarioEntry& e = require_entry(sec, key);
        int v = 0;
        auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
        if (res.ec != std::errc{} || res.ptr != e.value.data() + e.value.size())
            fail(e.line, "invalid integer '" + e.value + "'");
        return v;
    }

    std::vector<double> parse_numbers(const ScenarioEntry& e) const {
        std::vector<double> out;
        for (const std::string& tok : split_ws(e.value)) {
            double v = 0.0;
            auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
                fail(e.line, "invalid number '" + tok + "'");
            out.push_back(v);
        }
        return out;
    }

    Expression parse_expr(const ScenarioEntry& e) const {
        try {
            return parse_expression(e.value, dimension_, param_names_);
        } catch (const ParseError& err) {
            fail(e.line, std::string("in expression '") + e.value + "': " + err.what());
        }
    }

    void read_params() {
        if (const ScenarioSection* sec = find_section("params")) {
            for (const auto& e : sec->entries) {
                params_[e.key] = parse_double_value(e);
                param_names_.push_back(e.key);
            }
        }
    }

    void read_mode(const ScenarioSection& system) {
        if (const ScenarioEntry* e = system.find("mode")) {
            unsigned mode = 0;
            for (const std::string& tok : split_ws(e->value)) {
                if (tok == "check1") mode |= kModeCheck1;
                else if (tok == "check2") mode |= kModeCheck2;
                else if (tok == "simulate") mode |= kModeSimulate;
                else if (tok == "all") mode |= kModeAll;
                else fail(e->line, "unknown mode '" + tok + "'");
            }
            if (mode == 0) fail(e->line, "mode is empty");
            mode_ = mode;
        }
    }

    std::vector<SwitchingSurface> build_surfaces(std::string_view kind) {
        std::vector<SwitchingSurface> surfaces;
        for (const auto& sec : sections_) {
            if (sec.kind != kind) continue;
            if (sec.arg.empty()) fail(sec.line, "surface section needs a name");
            for (const auto& s : surfaces)
                if (s.name == sec.arg) fail(sec.line, "duplicate surface '" + sec.arg + "'");
            const ScenarioEntry& g = require_entry(sec, "g");
            surfaces.emplace_back(sec.arg, parse_expr(g), dimension_);
        }
        return surfaces;
    }

    RegionKey parse_pattern(const ScenarioSection& sec, std::size_t arity) const {
        RegionKey key;
        try {
            key = RegionKey::from_string(sec.arg);
        } catch (const std::exception& e) {
            fail(sec.line, e.what());
        }
        if (key.size() != arity)
            fail(sec.line, "region pattern '" + sec.arg + "' has arity " +
                               std::to_string(key.size()) + ", expected " + std::to_string(arity));
        if (!key.is_open()) fail(sec.line, "region pattern must not contain '0'");
        return key;
    }

    PiecewiseField build_field() {
        std::vector<SwitchingSurface> surfaces = build_surfaces("surface");
        if (surfaces.size() > 12) fail(0, "too many switching surfaces");
        std::map<RegionKey, std::vector<Expression>> pieces;
        for (const auto& sec : sections_) {
            if (sec.kind != "region") continue;
            RegionKey key = parse_pattern(sec, surfaces.size());
            if (pieces.count(key)) fail(sec.line, "duplicate region '" + sec.arg + "'");
            std::vector<Expression> f;
            for (int i = 1; i <= dimension_; ++i) {
                const ScenarioEntry& e = require_entry(sec, "f" + std::to_string(i));
                f.push_back(parse_expr(e));
            }
            pieces.emplace(std::move(key), std::move(f));
        }
        // Every sign pattern needs a declared piece; silent defaults would
        // hide modeling errors.
        const std::size_t expect = std::size_t{1} << surfaces.size();
        if (pieces.size() != expect) {
            RegionKey probe(std::vector<int8_t>(surfaces.size(), -1));
            for (std::size_t mask = 0; mask < expect; ++mask) {
                std::vector<int8_t> signs(surfaces.size());
                for (std::size_t b = 0; b < surfaces.size(); ++b)
                    signs[b] = (mask >> b) & 1 ? int8_t{1} : int8_t{-1};
                RegionKey key{std::move(signs)};
                if (!pieces.count(key))
                    fail(0, "missing [region " + key.to_string() + "] for declared surfaces");
            }
        }
        try {
            return PiecewiseField(dimension_, std::move(surfaces), std::move(pieces), params_);
        } catch (const ModelError& e) {
            fail(0, e.what());
        }
    }

    std::pair<PiecewiseScalar, ComparisonTriple> build_lyapunov() {
        const ScenarioSection& main = require_section("lyapunov");
        ComparisonTriple triple{parse_expr(require_entry(main, "W1")),
                                parse_expr(require_entry(main, "W2")),
                                parse_expr(require_entry(main, "W"))};
        for (const auto* e : {main.find("W1"), main.find("W2"), main.find("W")}) {
            if (e && parse_expr(*e).references_time())
                fail(e->line, "comparison functions must depend on x only");
        }

        std::vector<SwitchingSurface> surfaces = build_surfaces("lyapunov.surface");
        std::map<RegionKey, Expression> pieces;
        for (const auto& sec : sections_) {
            if (sec.kind != "lyapunov.piece") continue;
            RegionKey key = parse_pattern(sec, surfaces.size());
            if (pieces.count(key)) fail(sec.line, "duplicate lyapunov piece '" + sec.arg + "'");
            pieces.emplace(std::move(key), parse_expr(require_entry(sec, "V")));
        }

        if (surfaces.empty() && pieces.empty()) {
            const ScenarioEntry& v = require_entry(main, "V");
            return {PiecewiseScalar::smooth(parse_expr(v), dimension_, params_), std::move(triple)};
        }
        if (main.find("V"))
            fail(main.line, "give either a single V or lyapunov.piece sections, not both");
        const std::size_t expect = std::size_t{1} << surfaces.size();
        if (pieces.size() != expect) fail(main.line, "a lyapunov.piece is missing for some sign pattern");
        try {
            return {PiecewiseScalar(dimension_, std::move(surfaces), std::move(pieces), params_),
                    std::move(triple)};
        } catch (const ModelError& e) {
            fail(main.line, e.what());
        }
    }

    std::tuple<DomainSpec, std::vector<double>, double> build_domain() {
        const ScenarioSection& sec = require_section("domain");
        DomainSpec spec;
        const ScenarioEntry& box = require_entry(sec, "box");
        const std::vector<double> b = parse_numbers(box);
        if (b.size() != static_cast<std::size_t>(2 * dimension_))
            fail(box.line, "box needs " + std::to_string(2 * dimension_) + " numbers (lo hi per axis)");
        for (int i = 0; i < dimension_; ++i) {
            const double lo = b[static_cast<std::size_t>(2 * i)];
            const double hi = b[static_cast<std::size_t>(2 * i + 1)];
            if (!(lo < hi)) fail(box.line, "box bounds must satisfy lo < hi");
            spec.box.bounds.emplace_back(lo, hi);
        }
        spec.radius = parse_double_value(require_entry(sec, "r"));
        if (const ScenarioEntry* e = sec.find("grid")) spec.samples_per_axis = static_cast<int>(parse_double_value(*e));
        if (const ScenarioEntry* e = sec.find("sphere_samples")) spec.sphere_samples = static_cast<int>(parse_double_value(*e));

        double safety = 0.9;
        if (const ScenarioEntry* e = sec.find("safety")) safety = parse_double_value(*e);
        if (safety <= 0.0 || safety >= 1.0) fail(sec.line, "safety must lie in (0,1)");

        std::vector<double> t_grid;
        if (const ScenarioEntry* e = sec.find("t_grid")) {
            const auto colon = e->value.find(':');
            if (colon != std::string::npos) {
                // start:stop:step
                std::vector<double> parts;
                std::string tmp = e->value;
                for (auto& c : tmp)
                    if (c == ':') c = ' ';
                ScenarioEntry fake{e->key, tmp, e->line};
                parts = parse_numbers(fake);
                if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0])
                    fail(e->line, "t_grid range must be start:stop:step with positive step");
                for (double t = parts[0]; t <= parts[1] + 1e-12 * std::max(1.0, std::fabs(parts[1])); t += parts[2])
                    t_grid.push_back(t);
            } else {
                t_grid = parse_numbers(*e);
            }
            if (t_grid.empty()) fail(e->line, "t_grid is empty");
        } else {
            for (int i = 0; i <= 10; ++i) t_grid.push_back(i);
        }

        try {
            spec.validate();
        } catch (const std::exception& e) {
            fail(sec.line, e.what());
        }
        return {std::move(spec), std::move(t_grid), safety};
    }

    SimulateSection build_simulate() {
        const ScenarioSection& sec = require_section("simulate");
        SimulateSection sim;
        const ScenarioEntry& x0 = require_entry(sec, "x0");
        sim.x0 = parse_numbers(x0);
        if (sim.x0.size() != static_cast<std::size_t>(dimension_))
            fail(x0.line, "x0 needs " + std::to_string(dimension_) + " numbers");
        if (const ScenarioEntry* e = sec.find("t0")) sim.t0 = parse_double_value(*e);
        if (const ScenarioEntry* e = sec.find("tf")) sim.tf = parse_double_value(*e);
        if (!(sim.tf > sim.t0)) fail(sec.line, "tf must exceed t0");
        if (const ScenarioEntry* e = sec.find("step")) sim.integrator.step = parse_double_value(*e);
        if (const ScenarioEntry* e = sec.find("event_tol")) sim.integrator.event_tol = parse_double_value(*e);
        if (const ScenarioEntry* e = sec.find("surface_tol")) sim.integrator.surface_tol = parse_double_value(*e);
        if (const ScenarioEntry* e = sec.find("max_steps")) sim.integrator.max_steps = static_cast<long>(parse_double_value(*e));
        if (const ScenarioEntry* e = sec.find("tail_fraction")) sim.tail_fraction = parse_double_value(*e);
        if (const ScenarioEntry* e = sec.find("conv_tol")) sim.conv_tol = parse_double_value(*e);
        if (const ScenarioEntry* e = sec.find("inclusion_tol")) sim.inclusion_tol = parse_double_value(*e);
        try {
            sim.integrator.validate();
        } catch (const std::exception& e) {
            fail(sec.line, e.what());
        }
        return sim;
    }

    std::string path_;
    std::vector<ScenarioSection> sections_;
    int dimension_ = 0;
    ParamMap params_;
    std::vector<std::string> param_names_;
    unsigned mode_ = kModeAll;
};

} // namespace detail

/// Load and fully validate a scenario file.
inline Scenario load_scenario(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw ScenarioError(path, "no such file");
    return detail::ScenarioParser(path).load();
}

} // namespace fsim
