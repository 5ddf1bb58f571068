#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "immersoflow/analysis.hpp"
#include "immersoflow/solver.hpp"

namespace immersoflow {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json geometry_defaults(const std::string& type)
{
    if (type == "quarterAnnulus") {
        return {{"type", type}, {"innerRadius", 1.0}, {"outerRadius", 4.0}, {"offset", 0.03}, {"ambientSize", 4.5}};
    }
    if (type == "sliver") {
        return {{"type", type}, {"innerRadius", 1.0}, {"outerRadius", 4.0}, {"ambientSize", 5.0}};
    }
    if (type == "squareCylinder") {
        return {{"type", type}, {"center", {0.5, 0.5}}, {"radius", 0.125}};
    }
    if (type == "turek") {
        return {{"type", type}, {"length", 2.2}, {"height", 0.41}, {"center", {0.2, 0.2}}, {"radius", 0.05},
            {"peakVelocity", 0.3}, {"coreLower", 0.1}, {"coreUpper", 0.3}, {"coreCells", 14}, {"upstreamCells", 4},
            {"belowCells", 4}, {"aboveCells", 4}, {"downstreamCells", 18},
            {"probes", {{0.15, 0.2}, {0.25, 0.2}}}};
    }
    throw InvalidInput("unknown geometry type '" + type + "'");
}

inline Json base_defaults()
{
    return {
        {"name", "case"},
        {"geometry", {{"type", "quarterAnnulus"}}},
        {"mesh", {{"cells", 11}, {"refinements", 0}}},
        {"degree", 2},
        {"immersion", {{"rhoMax", 6}, {"gaussOrder", 0}}},
        {"stabilization", {{"beta", nullptr}, {"gamma", nullptr}, {"gammaTilde", nullptr}}},
        {"physics", {{"equations", "navierStokes"}, {"convectiveForcing", true}, {"viscosity", nullptr}}},
        {"solver", {{"picardTolerance", 1e-10}, {"maxIterations", 50}, {"relaxation", 1.0}}},
        {"study",
            {{"levels", 4}, {"meshes", Json::array()}, {"sweepParameter", "gamma"}, {"sweepValues", Json::array()},
                {"sweepInfsup", false}, {"spectrumSize", 10}, {"rhoMaxValues", {1, 2, 3, 4, 5, 6}}}},
        {"output", {{"directory", ""}, {"exportFields", false}, {"samplesPerCell", 4}, {"writeMatrices", false}}},
    };
}

/// Copies `src` into `dst`; every key of `src` must already exist in `dst`.
inline void merge_known(Json& dst, const Json& src, const std::string& path)
{
    if (!src.is_object()) {
        throw InvalidInput("config section '" + path + "' must be an object");
    }
    for (auto it = src.begin(); it != src.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!dst.contains(it.key())) {
            throw InvalidInput("unknown config key '" + key + "'");
        }
        Json& target = dst[it.key()];
        if (target.is_object() && it.value().is_object()) {
            merge_known(target, it.value(), key);
        } else {
            target = it.value();
        }
    }
}

} // namespace detail

/// Case description: geometry, mesh, degree, quadrature, stabilization,
/// physics, solver, study and output settings (see cases/README.md).
class CaseConfig {
public:
    CaseConfig()
        : CaseConfig(Json::object())
    {}

    explicit CaseConfig(const Json& user)
    {
        data_ = detail::base_defaults();
        std::string type = "quarterAnnulus";
        if (user.contains("geometry") && user["geometry"].contains("type")) {
            type = user["geometry"]["type"].get<std::string>();
        }
        data_["geometry"] = detail::geometry_defaults(type);
        detail::merge_known(data_, user, "");
        validate();
    }

    static CaseConfig load(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw InvalidInput("cannot open config file " + path.string());
        }
        Json j;
        try {
            j = Json::parse(in, nullptr, true, true);
        } catch (const nlohmann::json::parse_error& e) {
            throw InvalidInput("config parse error in " + path.string() + ": " + e.what());
        }
        return CaseConfig(j);
    }

    /// Applies "dotted.key=value"; value is parsed as JSON, else taken as a string.
    void set(const std::string& assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw InvalidInput("override '" + assignment + "' is not of the form key=value");
        }
        const std::string key = assignment.substr(0, eq);
        const std::string text = assignment.substr(eq + 1);
        Json value;
        try {
            value = Json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            value = text;
        }
        Json* node = &data_;
        std::stringstream ss(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) {
            parts.push_back(part);
        }
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (!node->is_object() || !node->contains(parts[i])) {
                throw InvalidInput("override references unknown key '" + key + "'");
            }
            node = &(*node)[parts[i]];
        }
        if (key == "geometry.type") {
            Json geometry = detail::geometry_defaults(value.get<std::string>());
            data_["geometry"] = geometry;
        } else {
            *node = value;
        }
        validate();
    }

    const Json& json() const { return data_; }
    Json& json() { return data_; }

    std::string name() const { return data_["name"].get<std::string>(); }
    std::string geometry_type() const { return geometry()["type"].get<std::string>(); }
    const Json& geometry() const { return data_["geometry"]; }
    int degree() const { return data_["degree"].get<int>(); }
    bool navier_stokes() const { return data_["physics"]["equations"].get<std::string>() == "navierStokes"; }
    bool convective_forcing() const { return data_["physics"]["convectiveForcing"].get<bool>(); }
    bool is_turek() const { return geometry_type() == "turek"; }

    double viscosity() const
    {
        const Json& v = data_["physics"]["viscosity"];
        if (!v.is_null()) {
            return v.get<double>();
        }
        return is_turek() ? 1e-3 : 1.0;
    }

    ImmersionParams immersion() const
    {
        ImmersionParams p;
        p.rhoMax = data_["immersion"]["rhoMax"].get<int>();
        const int g = data_["immersion"]["gaussOrder"].get<int>();
        p.gaussOrder = g > 0 ? g : degree() + 1;
        return p;
    }

    StabilizationParams stabilization() const
    {
        StabilizationParams s = recommended_stabilization(degree());
        const Json& j = data_["stabilization"];
        if (!j["beta"].is_null()) {
            s.beta = j["beta"].get<double>();
        }
        if (!j["gamma"].is_null()) {
            s.gamma = j["gamma"].get<double>();
        }
        if (!j["gammaTilde"].is_null()) {
            s.gammaTilde = j["gammaTilde"].get<double>();
        }
        return s;
    }

    PicardConfig picard() const
    {
        PicardConfig p;
        p.tolerance = data_["solver"]["picardTolerance"].get<double>();
        p.maxIterations = data_["solver"]["maxIterations"].get<int>();
        p.relaxation = data_["solver"]["relaxation"].get<double>();
        return p;
    }

    /// Mesh parameter of a single run: cells per side, or refinement count for the channel.
    int default_mesh() const
    {
        return is_turek() ? data_["mesh"]["refinements"].get<int>() : data_["mesh"]["cells"].get<int>();
    }

    /// Mesh parameters of a study: the explicit list, else `levels` splitting refinements.
    std::vector<int> study_meshes(std::optional<int> levels = std::nullopt) const
    {
        std::vector<int> out;
        const Json& list = data_["study"]["meshes"];
        if (!list.empty() && !levels) {
            for (const auto& m : list) {
                out.push_back(m.get<int>());
            }
            return out;
        }
        const int count = levels.value_or(data_["study"]["levels"].get<int>());
        detail::require(count >= 1, "study needs at least one level");
        for (int l = 0; l < count; ++l) {
            out.push_back(is_turek() ? default_mesh() + l : default_mesh() << l);
        }
        return out;
    }

    std::string output_directory() const { return data_["output"]["directory"].get<std::string>(); }

    void validate() const
    {
        const int k = degree();
        detail::require(k >= 1 && k <= kMaxDegree, "degree must be in [1, 5]");
        detail::require(viscosity() > 0.0, "viscosity must be positive");
        const std::string eq = data_["physics"]["equations"].get<std::string>();
        detail::require(eq == "navierStokes" || eq == "stokes", "physics.equations must be navierStokes or stokes");
        immersion().validate();
        stabilization().validate();
        picard().validate();
        detail::require(data_["output"]["samplesPerCell"].get<int>() >= 1, "output.samplesPerCell must be >= 1");
        const Json& g = geometry();
        const std::string type = geometry_type();
        if (type == "quarterAnnulus" || type == "sliver") {
            const double r1 = g["innerRadius"].get<double>();
            const double r2 = g["outerRadius"].get<double>();
            const double size = g["ambientSize"].get<double>();
            detail::require(0.0 < r1 && r1 < r2, "quarter annulus needs 0 < innerRadius < outerRadius");
            if (type == "quarterAnnulus") {
                const double off = g["offset"].get<double>();
                detail::require(off > 0.0, "quarter annulus offset must be positive (no conforming sides)");
                detail::require(r2 < size - off, "outer radius must lie inside the ambient box");
            } else {
                detail::require(r2 < size, "sliver: outer radius must lie inside the ambient box");
            }
        } else if (type == "squareCylinder") {
            const double r = g["radius"].get<double>();
            const double cx = g["center"][0].get<double>();
            const double cy = g["center"][1].get<double>();
            detail::require(r > 0.0 && cx - r > 0.0 && cx + r < 1.0 && cy - r > 0.0 && cy + r < 1.0,
                "cylinder must lie strictly inside the unit square");
        } else if (type == "turek") {
            const double r = g["radius"].get<double>();
            const double lo = g["coreLower"].get<double>();
            const double hi = g["coreUpper"].get<double>();
            const double cx = g["center"][0].get<double>();
            const double cy = g["center"][1].get<double>();
            detail::require(lo < cx - r && cx + r < hi && lo < cy - r && cy + r < hi,
                "cylinder must lie inside the uniform core box");
            detail::require(hi < g["height"].get<double>() && hi < g["length"].get<double>(),
                "core box must lie inside the channel");
        }
    }

private:
    Json data_;
};

/// Geometric grading: `count` spans h0 r, h0 r^2, ... covering `length`.
inline std::vector<double> graded_spans(double h0, double length, int count)
{
    detail::require(count >= 1 && h0 > 0.0, "grading needs positive spans");
    detail::require(length > count * h0, "graded interval too short for growing spans");
    auto total = [&](double r) {
        double s = 0, p = 1;
        for (int i = 1; i <= count; ++i) {
            p *= r;
            s += h0 * p;
        }
        return s;
    };
    double lo = 1.0, hi = 2.0;
    while (total(hi) < length) {
        hi *= 2.0;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) < length ? lo : hi) = mid;
    }
    std::vector<double> spans;
    double p = 1;
    for (int i = 1; i <= count; ++i) {
        p *= lo;
        spans.push_back(h0 * p);
    }
    spans.back() += length - total(lo);
    return spans;
}

/// Channel breakpoints: uniform core around the cylinder, uniform margins
/// below/above/upstream, geometric grading downstream; each span split into
/// 2^refinements pieces.
inline std::array<std::vector<double>, 2> turek_breakpoints(const Json& g, int refinements)
{
    const double lo = g["coreLower"].get<double>();
    const double hi = g["coreUpper"].get<double>();
    const int core = g["coreCells"].get<int>();
    const double h0 = (hi - lo) / core;
    auto uniform = [](std::vector<double>& out, double a, double b, int cells) {
        for (int i = 1; i <= cells; ++i) {
            out.push_back(a + (b - a) * i / cells);
        }
    };
    std::array<std::vector<double>, 2> coarse;
    coarse[0] = {0.0};
    uniform(coarse[0], 0.0, lo, g["upstreamCells"].get<int>());
    uniform(coarse[0], lo, hi, core);
    const double length = g["length"].get<double>();
    double x = hi;
    const auto spans = graded_spans(h0, length - hi, g["downstreamCells"].get<int>());
    for (std::size_t i = 0; i < spans.size(); ++i) {
        x = (i + 1 == spans.size()) ? length : x + spans[i];
        coarse[0].push_back(x);
    }
    coarse[1] = {0.0};
    uniform(coarse[1], 0.0, lo, g["belowCells"].get<int>());
    uniform(coarse[1], lo, hi, core);
    uniform(coarse[1], hi, g["height"].get<double>(), g["aboveCells"].get<int>());

    std::array<std::vector<double>, 2> fine;
    const int split = 1 << refinements;
    for (int dir = 0; dir < 2; ++dir) {
        fine[dir] = {coarse[dir].front()};
        for (std::size_t i = 1; i < coarse[dir].size(); ++i) {
            for (int s = 1; s <= split; ++s) {
                fine[dir].push_back(s == split ? coarse[dir][i]
                                               : coarse[dir][i - 1] + (coarse[dir][i] - coarse[dir][i - 1]) * s / split);
            }
        }
    }
    return fine;
}

/// Geometry, basis, boundary data and reference quantities of one mesh of a case.
struct Problem {
    TensorBSplineBasis basis;
    LevelSetPtr levelSet;
    PhysicalSetup setup;
    std::optional<ManufacturedSolution> exact;
    std::optional<QoIConfig> qoi;
    std::optional<Vec2> exactForce;
    double h = 0;
    double exactArea = 0;
    double exactBoundaryLength = 0;
};

inline Problem build_problem(const CaseConfig& cfg, int mesh)
{
    const Json& g = cfg.geometry();
    const std::string type = cfg.geometry_type();
    const int k = cfg.degree();
    const double mu = cfg.viscosity();
    Problem pr;
    pr.setup.viscosity = mu;
    pr.setup.includeConvection = cfg.navier_stokes();
    auto useExact = [&](ManufacturedSolution ex) {
        pr.exact = ex;
        const auto e = std::make_shared<ManufacturedSolution>(std::move(ex));
        pr.setup.bodyForce = [e](const Point& x) { return e->body_force(x); };
        pr.setup.dirichlet = [e](const Point& x, BoundaryTag) { return e->velocity(x); };
        pr.setup.pressureMeanZero = true;
    };

    if (type == "quarterAnnulus" || type == "sliver") {
        detail::require(mesh >= 1, "cells per side must be positive");
        const double r1 = g["innerRadius"].get<double>();
        const double r2 = g["outerRadius"].get<double>();
        const double size = g["ambientSize"].get<double>();
        pr.h = size / mesh;
        // sliver: first grid line 1/n^2 inside the straight edges x = 0, y = 0
        const double off = type == "sliver" ? pr.h - 1.0 / (double(mesh) * mesh) : g["offset"].get<double>();
        detail::require(off > 0.0 && r2 < size - off, "ambient box must contain the annulus");
        pr.basis = TensorBSplineBasis(open_knot_vector(-off, size - off, mesh, k), open_knot_vector(-off, size - off, mesh, k));
        pr.levelSet = std::make_shared<QuarterAnnulus>(r1, r2);
        detail::require(r1 == 1.0 && r2 == 4.0, "the manufactured annulus solution needs radii 1 and 4");
        useExact(quarter_annulus_solution(mu, cfg.navier_stokes() && cfg.convective_forcing()));
        pr.exactArea = std::numbers::pi * (r2 * r2 - r1 * r1) / 4.0;
        pr.exactBoundaryLength = std::numbers::pi * (r1 + r2) / 2.0 + 2.0 * (r2 - r1);
    } else if (type == "squareCylinder") {
        detail::require(mesh >= 1, "cells per side must be positive");
        const Point c{g["center"][0].get<double>(), g["center"][1].get<double>()};
        const double r = g["radius"].get<double>();
        pr.h = 1.0 / mesh;
        pr.basis = TensorBSplineBasis(open_knot_vector(0.0, 1.0, mesh, k), open_knot_vector(0.0, 1.0, mesh, k));
        pr.levelSet = std::make_shared<DiskComplement>(c, r);
        useExact(square_cylinder_solution(mu, cfg.navier_stokes() && cfg.convective_forcing()));
        pr.setup.kind = [](BoundaryTag) { return BoundaryKind::Dirichlet; };
        pr.qoi = QoIConfig{0, 1.0, std::nullopt};
        pr.exactForce = exact_obstacle_force(*pr.exact, c, r);
        pr.exactArea = 1.0 - std::numbers::pi * r * r;
        pr.exactBoundaryLength = 2.0 * std::numbers::pi * r;
    } else if (type == "turek") {
        detail::require(mesh >= 0 && mesh <= 6, "channel refinement count must be in [0, 6]");
        const auto breaks = turek_breakpoints(g, mesh);
        pr.basis = TensorBSplineBasis(KnotVector(breaks[0], k), KnotVector(breaks[1], k));
        const Point c{g["center"][0].get<double>(), g["center"][1].get<double>()};
        const double r = g["radius"].get<double>();
        const double height = g["height"].get<double>();
        const double um = g["peakVelocity"].get<double>();
        pr.h = (g["coreUpper"].get<double>() - g["coreLower"].get<double>()) / g["coreCells"].get<int>() / (1 << mesh);
        pr.levelSet = channel_with_cylinder(c, r);
        pr.setup.kind = [](BoundaryTag t) { return t == kAmbientRight ? BoundaryKind::Neumann : BoundaryKind::Dirichlet; };
        pr.setup.dirichlet = [um, height](const Point& x, BoundaryTag t) {
            return t == kAmbientLeft ? Vec2{4.0 * um * x[1] * (height - x[1]) / (height * height), 0.0} : Vec2{0.0, 0.0};
        };
        const double ubar = 2.0 * um / 3.0;
        pr.qoi = QoIConfig{0, ubar * ubar * r,
            std::array<Point, 2>{Point{g["probes"][0][0].get<double>(), g["probes"][0][1].get<double>()},
                Point{g["probes"][1][0].get<double>(), g["probes"][1][1].get<double>()}}};
        pr.exactArea = g["length"].get<double>() * height - std::numbers::pi * r * r;
        pr.exactBoundaryLength = 2.0 * std::numbers::pi * r;
    } else {
        throw InvalidInput("unknown geometry type '" + type + "'");
    }
    return pr;
}

/// Outcome of one solve on one mesh.
struct RunRecord {
    int mesh = 0;
    double h = 0;
    long nDof = 0;
    int functions = 0;
    int activeCells = 0;
    int cutCells = 0;
    double measure = 0;
    std::optional<ErrorNorms> errors;
    std::optional<DragLift> qoi;
    std::optional<double> pressureDrop;
    std::optional<Vec2> exactForce;
    PressureExtrema pressure;
    std::vector<double> picardIncrements;
    bool solved = false;
    bool converged = true;
    int iterations = 0;
    std::optional<InfSupResult> infsup;
    std::map<std::string, double> timings;

    Json to_json() const
    {
        Json j;
        j["mesh"] = mesh;
        j["h"] = h;
        j["nDof"] = nDof;
        j["functions"] = functions;
        j["activeCells"] = activeCells;
        j["cutCells"] = cutCells;
        j["measure"] = measure;
        if (errors) {
            j["errors"] = {{"velocityL2", errors->velocityL2}, {"velocityH1", errors->velocityH1},
                {"pressureL2", errors->pressureL2}};
        }
        if (qoi) {
            j["qoi"] = {{"drag", qoi->drag}, {"lift", qoi->lift}};
            if (exactForce) {
                j["qoi"]["exactDrag"] = (*exactForce)[0];
                j["qoi"]["exactLift"] = (*exactForce)[1];
            }
        }
        if (pressureDrop) {
            j["pressureDrop"] = *pressureDrop;
        }
        if (solved) {
            j["pressureMax"] = {{"cutCells", pressure.cut}, {"interiorCells", pressure.interior}};
            j["picard"] = {{"converged", converged}, {"iterations", iterations}, {"increments", picardIncrements}};
        }
        if (infsup) {
            j["infsup"] = {{"lambdaH", infsup->lambdaH}, {"kernelModes", infsup->kernelModes},
                {"spectrum", infsup->spectrum}};
        }
        return j;
    }
};

struct RunOptions {
    bool solve = true;
    bool infsup = false;
    std::filesystem::path outputDirectory; ///< empty: no per-run files
    std::string prefix;                    ///< file name prefix inside outputDirectory
};

namespace detail {

class Stopwatch {
public:
    double lap()
    {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream os(path);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    return os;
}

} // namespace detail

/// geometry -> mesh -> quadrature -> assembly -> solve -> analysis on one mesh.
inline RunRecord run_single(const CaseConfig& cfg, int mesh, const RunOptions& opt = {})
{
    detail::Stopwatch clock;
    RunRecord rec;
    rec.mesh = mesh;
    Problem pr = build_problem(cfg, mesh);
    Discretization d = make_discretization(pr.basis, pr.levelSet, cfg.immersion());
    rec.timings["discretize"] = clock.lap();
    rec.h = pr.h;
    rec.functions = d.n();
    rec.nDof = 3L * d.n();
    rec.activeCells = static_cast<int>(d.mesh.activeCells.size());
    rec.cutCells = d.mesh.num_cut();
    const SystemBlocks blocks = assemble_system(d, pr.setup, cfg.stabilization());
    rec.measure = blocks.measure;
    rec.timings["assemble"] = clock.lap();

    const bool files = !opt.outputDirectory.empty();
    auto path = [&](const std::string& name) { return opt.outputDirectory / (opt.prefix + name); };
    if (files && cfg.json()["output"]["writeMatrices"].get<bool>()) {
        auto a = detail::open_output(path("A.mtx"));
        write_matrix_market(blocks.A, a);
        auto b = detail::open_output(path("B.mtx"));
        write_matrix_market(blocks.B, b);
    }

    if (opt.infsup) {
        rec.infsup = infsup_constant(blocks, cfg.json()["study"]["spectrumSize"].get<int>());
        rec.timings["infsup"] = clock.lap();
        if (files) {
            auto os = detail::open_output(path("spectrum.csv"));
            write_spectrum_csv(*rec.infsup, os);
        }
    }
    if (!opt.solve) {
        return rec;
    }

    FlowSolution sol;
    std::optional<SparseMatrix> convection;
    if (pr.setup.includeConvection) {
        const PicardResult r = solve_navier_stokes(
            blocks, pr.setup, [&](const Eigen::VectorXd& u) { return assemble_convection(d, u); }, cfg.picard());
        rec.picardIncrements = r.increments;
        rec.iterations = r.iterations;
        rec.converged = r.converged;
        if (files) {
            auto os = detail::open_output(path("history.csv"));
            write_history_csv(r, os);
        }
        if (!r.converged) {
            std::ostringstream msg;
            msg << "Picard iteration did not converge on mesh " << mesh << " after " << r.iterations
                << " iterations (last increment " << r.increments.back() << ")";
            throw NumericalFailure(msg.str());
        }
        sol = r.solution;
        convection = assemble_convection(d, sol.uhat);
    } else {
        sol = solve_stokes(blocks, pr.setup);
    }
    rec.solved = true;
    rec.timings["solve"] = clock.lap();

    if (pr.exact) {
        rec.errors = error_norms(d, sol, *pr.exact, requadrature(d, d.degree() + 2), pr.setup.pressureMeanZero);
    }
    rec.pressure = pressure_extrema(d, sol);
    if (pr.qoi) {
        rec.qoi = qoi_drag_lift(d, blocks, pr.setup, *pr.qoi, sol, convection ? &*convection : nullptr);
        rec.exactForce = pr.exactForce;
        if (pr.qoi->probes) {
            rec.pressureDrop = pressure_drop(d, sol, (*pr.qoi->probes)[0], (*pr.qoi->probes)[1]);
        }
    }
    if (files && cfg.json()["output"]["exportFields"].get<bool>()) {
        auto vtk = detail::open_output(path("fields.vtk"));
        auto csv = detail::open_output(path("fields.csv"));
        export_fields(d, sol, cfg.json()["output"]["samplesPerCell"].get<int>(), vtk, csv);
    }
    rec.timings["analysis"] = clock.lap();
    return rec;
}

/// Summary of a study: machine-readable record plus the main CSV table.
struct StudyResult {
    Json summary;
    std::string table;
    std::vector<RunRecord> runs;
};

namespace detail {

inline Json rates_json(const ConvergenceTable& t)
{
    Json j = Json::object();
    if (t.rows() < 2) {
        return j;
    }
    for (const auto& c : t.error_columns()) {
        const auto col = t.column(c);
        if (std::all_of(col.begin(), col.end(), [](double e) { return e > 0.0; })) {
            const auto r = t.rates(c);
            j[c] = {{"pairwise", r.pairwise}, {"leastSquares", r.leastSquares}};
        }
    }
    return j;
}

inline Json timings_json(const std::vector<RunRecord>& runs)
{
    Json j = Json::array();
    for (const auto& r : runs) {
        Json t = Json::object();
        for (const auto& [k, v] : r.timings) {
            t[k] = v;
        }
        j.push_back({{"mesh", r.mesh}, {"seconds", t}});
    }
    return j;
}

inline std::map<std::string, double> record_values(const RunRecord& r)
{
    std::map<std::string, double> v;
    if (r.errors) {
        v["velocityL2"] = r.errors->velocityL2;
        v["velocityH1"] = r.errors->velocityH1;
        v["pressureL2"] = r.errors->pressureL2;
    }
    if (r.qoi) {
        v["drag"] = r.qoi->drag;
        v["lift"] = r.qoi->lift;
        if (r.exactForce) {
            v["dragError"] = std::abs(r.qoi->drag - (*r.exactForce)[0]);
            v["liftError"] = std::abs(r.qoi->lift - (*r.exactForce)[1]);
        }
    }
    if (r.pressureDrop) {
        v["pressureDrop"] = *r.pressureDrop;
    }
    if (r.infsup) {
        v["lambdaH"] = r.infsup->lambdaH;
    }
    return v;
}

inline Json study_header(const CaseConfig& cfg, const std::string& command)
{
    return {{"case", cfg.name()}, {"command", command}, {"config", cfg.json()}};
}

} // namespace detail

/// Single run on the configured mesh.
inline StudyResult run_case(const CaseConfig& cfg, const std::filesystem::path& out = {})
{
    StudyResult res;
    RunOptions opt;
    opt.outputDirectory = out;
    res.runs.push_back(run_single(cfg, cfg.default_mesh(), opt));
    res.summary = detail::study_header(cfg, "run");
    res.summary["runs"] = Json::array({res.runs.back().to_json()});
    return res;
}

/// Runs every study mesh and tabulates errors/QoI with observed rates.
inline StudyResult run_convergence(const CaseConfig& cfg, const std::filesystem::path& out = {},
    std::optional<int> levels = std::nullopt)
{
    StudyResult res;
    const auto meshes = cfg.study_meshes(levels);
    for (int m : meshes) {
        RunOptions opt;
        opt.outputDirectory = out;
        opt.prefix = "mesh" + std::to_string(m) + "_";
        res.runs.push_back(run_single(cfg, m, opt));
    }
    const auto& first = res.runs.front();
    std::vector<std::string> errors;
    std::vector<std::string> extras;
    if (first.errors) {
        errors = {"velocityL2", "velocityH1", "pressureL2"};
    }
    if (first.qoi) {
        if (first.exactForce) {
            errors.insert(errors.end(), {"dragError", "liftError"});
        }
        extras = {"drag", "lift"};
    }
    if (first.pressureDrop) {
        extras.push_back("pressureDrop");
    }
    ConvergenceTable table(errors, extras);
    for (const auto& r : res.runs) {
        table.add_row(r.h, r.nDof, detail::record_values(r));
    }
    std::ostringstream csv;
    table.write_csv(csv);
    res.table = csv.str();
    res.summary = detail::study_header(cfg, "converge");
    res.summary["runs"] = Json::array();
    for (const auto& r : res.runs) {
        res.summary["runs"].push_back(r.to_json());
    }
    res.summary["rates"] = detail::rates_json(table);
    return res;
}

/// Repeats the study meshes for every value of study.sweepParameter
/// (gamma, gammaTilde, rhoMax or k).
inline StudyResult run_sweep(const CaseConfig& cfg, const std::filesystem::path& out = {})
{
    const std::string param = cfg.json()["study"]["sweepParameter"].get<std::string>();
    const Json& values = cfg.json()["study"]["sweepValues"];
    detail::require(param == "gamma" || param == "gammaTilde" || param == "rhoMax" || param == "k",
        "sweep parameter must be gamma, gammaTilde, rhoMax or k");
    detail::require(!values.empty(), "sweep needs a non-empty study.sweepValues list");
    const bool infsup = cfg.json()["study"]["sweepInfsup"].get<bool>();
    StudyResult res;
    res.summary = detail::study_header(cfg, "sweep");
    res.summary["parameter"] = param;
    res.summary["runs"] = Json::array();
    std::ostringstream csv;
    csv << std::setprecision(12);
    csv << "value,mesh,h,nDof,velocityL2,velocityH1,pressureL2,lambdaH,kernelModes\n";
    for (const auto& v : values) {
        Json j = cfg.json();
        if (param == "gamma" || param == "gammaTilde") {
            j["stabilization"][param] = v;
        } else if (param == "rhoMax") {
            j["immersion"]["rhoMax"] = v;
        } else {
            j["degree"] = v;
        }
        const CaseConfig variant(j);
        for (int m : variant.study_meshes()) {
            RunOptions opt;
            opt.infsup = infsup;
            opt.outputDirectory = out;
            std::ostringstream prefix;
            prefix << param << '_' << v.dump() << "_mesh" << m << '_';
            opt.prefix = prefix.str();
            RunRecord r = run_single(variant, m, opt);
            csv << v.dump() << ',' << m << ',' << r.h << ',' << r.nDof << ',';
            if (r.errors) {
                csv << r.errors->velocityL2 << ',' << r.errors->velocityH1 << ',' << r.errors->pressureL2;
            } else {
                csv << ",,";
            }
            csv << ',';
            if (r.infsup) {
                csv << r.infsup->lambdaH << ',' << r.infsup->kernelModes;
            } else {
                csv << ',';
            }
            csv << '\n';
            Json rj = r.to_json();
            rj["value"] = v;
            res.summary["runs"].push_back(rj);
            res.runs.push_back(std::move(r));
        }
    }
    res.table = csv.str();
    return res;
}

/// Inf-sup constant lambda_h on every study mesh (no flow solve).
inline StudyResult run_infsup(const CaseConfig& cfg, const std::filesystem::path& out = {})
{
    StudyResult res;
    res.summary = detail::study_header(cfg, "infsup");
    res.summary["runs"] = Json::array();
    std::ostringstream csv;
    csv << std::setprecision(12) << "mesh,h,nDof,lambdaH,kernelModes\n";
    for (int m : cfg.study_meshes()) {
        RunOptions opt;
        opt.solve = false;
        opt.infsup = true;
        opt.outputDirectory = out;
        opt.prefix = "mesh" + std::to_string(m) + "_";
        RunRecord r = run_single(cfg, m, opt);
        csv << m << ',' << r.h << ',' << r.nDof << ',' << r.infsup->lambdaH << ',' << r.infsup->kernelModes << '\n';
        res.summary["runs"].push_back(r.to_json());
        res.runs.push_back(std::move(r));
    }
    res.table = csv.str();
    return res;
}

/// Tessellated area and boundary length against the exact values for each
/// bisection depth in study.rhoMaxValues, on the configured mesh.
inline StudyResult run_quadcheck(const CaseConfig& cfg, const std::filesystem::path& out = {})
{
    StudyResult res;
    const Problem pr = build_problem(cfg, cfg.default_mesh());
    const AmbientGrid grid = AmbientGrid::from_basis(pr.basis);
    std::vector<double> sub, areaErr, lengthErr;
    std::ostringstream csv;
    csv << std::setprecision(15) << "rhoMax,area,areaError,length,lengthError\n";
    Json rows = Json::array();
    for (const auto& v : cfg.json()["study"]["rhoMaxValues"]) {
        ImmersionParams p = cfg.immersion();
        p.rhoMax = v.get<int>();
        const BackgroundMesh mesh = build_background(grid, *pr.levelSet, p);
        const MeshQuadrature q = build_quadrature(mesh, *pr.levelSet, p);
        // ambient sides that conform contribute to the exact length but carry no facets
        const double area = q.volume();
        const double length = q.boundary_length();
        const double ea = std::abs(area - pr.exactArea);
        const double el = std::abs(length - pr.exactBoundaryLength);
        csv << p.rhoMax << ',' << area << ',' << ea << ',' << length << ',' << el << '\n';
        rows.push_back({{"rhoMax", p.rhoMax}, {"area", area}, {"areaError", ea}, {"length", length},
            {"lengthError", el}});
        sub.push_back(pr.h / std::pow(2.0, p.rhoMax));
        areaErr.push_back(ea);
        lengthErr.push_back(el);
    }
    res.table = csv.str();
    res.summary = detail::study_header(cfg, "quadcheck");
    res.summary["exactArea"] = pr.exactArea;
    res.summary["exactLength"] = pr.exactBoundaryLength;
    res.summary["rows"] = rows;
    auto fit = [&](const std::vector<double>& e) -> Json {
        if (e.size() < 2 || !std::all_of(e.begin(), e.end(), [](double x) { return x > 0.0; })) {
            return nullptr;
        }
        const auto r = convergence_rates(sub, e);
        return {{"pairwise", r.pairwise}, {"leastSquares", r.leastSquares}};
    };
    res.summary["rates"] = {{"area", fit(areaErr)}, {"length", fit(lengthErr)}};
    if (!out.empty()) {
        const ImmersionParams p = [&] {
            ImmersionParams q = cfg.immersion();
            q.keepTessellation = true;
            return q;
        }();
        const BackgroundMesh mesh = build_background(grid, *pr.levelSet, p);
        auto os = detail::open_output(out / "tessellation.vtk");
        write_tessellation_vtk(build_quadrature(mesh, *pr.levelSet, p), os);
    }
    return res;
}

/// Writes summary.json and the study table into `out`, and timings.json
/// separately so the former stay identical across thread counts.
inline void write_study(const StudyResult& res, const std::filesystem::path& out, const std::string& tableName)
{
    std::filesystem::create_directories(out);
    {
        auto os = detail::open_output(out / "summary.json");
        os << res.summary.dump(2) << '\n';
    }
    if (!res.table.empty()) {
        auto os = detail::open_output(out / tableName);
        os << res.table;
    }
    auto os = detail::open_output(out / "timings.json");
    os << detail::timings_json(res.runs).dump(2) << '\n';
}

} // namespace immersoflow
