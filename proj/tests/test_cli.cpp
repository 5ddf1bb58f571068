#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "immersoflow/cases.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("immersoflow_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string("\"") + IMMERSOFLOW_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path small_config(const fs::path& dir)
{
    const fs::path p = dir / "small.json";
    std::ofstream os(p);
    os << R"({"name": "small", "mesh": {"cells": 7}, "immersion": {"rhoMax": 3},
        "physics": {"equations": "stokes"}, "study": {"levels": 2}})";
    return p;
}

} // namespace

TEST(Cli, HelpAndUsageErrors)
{
    const fs::path dir = scratch("usage");
    EXPECT_EQ(run("--help", dir / "log"), 0);
    EXPECT_NE(slurp(dir / "log").find("converge"), std::string::npos);
    EXPECT_EQ(run("", dir / "log"), 1);
    EXPECT_EQ(run("run", dir / "log"), 1);
    EXPECT_EQ(run("frobnicate --config x.json", dir / "log"), 1);
    EXPECT_EQ(run("run --config " + (dir / "absent.json").string(), dir / "log"), 1);
}

TEST(Cli, InvalidInputExitsWithOne)
{
    const fs::path dir = scratch("invalid");
    const fs::path cfg = small_config(dir);
    EXPECT_EQ(run("run --config " + cfg.string() + " --set stabilization.gama=1 --out " + (dir / "o").string(),
                  dir / "log"),
        1);
    EXPECT_NE(slurp(dir / "log").find("unknown key"), std::string::npos);
    EXPECT_EQ(run("run --config " + cfg.string() + " --set degree=9 --out " + (dir / "o").string(), dir / "log"), 1);
}

TEST(Cli, NumericalFailureExitsWithTwo)
{
    const fs::path dir = scratch("numerical");
    const fs::path cfg = small_config(dir);
    const std::string args = "run --config " + cfg.string()
        + " --set physics.equations=navierStokes --set physics.viscosity=0.05 --set solver.maxIterations=1"
          " --set solver.picardTolerance=1e-14 --out "
        + (dir / "o").string();
    EXPECT_EQ(run(args, dir / "log"), 2);
    EXPECT_NE(slurp(dir / "log").find("numerical failure"), std::string::npos);
}

TEST(Cli, SubcommandsWriteOutputs)
{
    const fs::path dir = scratch("outputs");
    const fs::path cfg = small_config(dir);
    const std::string base = "--config " + cfg.string() + " --out ";
    ASSERT_EQ(run("run " + base + (dir / "run").string() + " --seed 42", dir / "log"), 0);
    const auto summary = immersoflow::Json::parse(slurp(dir / "run" / "summary.json"));
    EXPECT_EQ(summary["seed"], 42);
    EXPECT_EQ(summary["case"], "small");

    ASSERT_EQ(run("converge --levels 2 " + base + (dir / "conv").string(), dir / "log"), 0);
    EXPECT_EQ(slurp(dir / "conv" / "convergence.csv").rfind("h,nDof,velocityL2,rate_velocityL2", 0), 0u);
    EXPECT_EQ(slurp(dir / "log").rfind("h,nDof", 0), 0u);

    ASSERT_EQ(run("infsup " + base + (dir / "inf").string(), dir / "log"), 0);
    EXPECT_TRUE(fs::exists(dir / "inf" / "infsup.csv"));
    EXPECT_TRUE(fs::exists(dir / "inf" / "mesh7_spectrum.csv"));

    ASSERT_EQ(run("quadcheck " + base + (dir / "quad").string() + " --set study.rhoMaxValues=[1,2,3]", dir / "log"), 0);
    EXPECT_TRUE(fs::exists(dir / "quad" / "quadrature.csv"));
    EXPECT_TRUE(fs::exists(dir / "quad" / "tessellation.vtk"));

    ASSERT_EQ(run("sweep " + base + (dir / "sweep").string()
                      + " --set study.meshes=[7] --set study.sweepParameter=rhoMax --set study.sweepValues=[2,3]",
                  dir / "log"),
        0);
    EXPECT_TRUE(fs::exists(dir / "sweep" / "sweep.csv"));

    ASSERT_EQ(run("export " + base + (dir / "export").string(), dir / "log"), 0);
    EXPECT_TRUE(fs::exists(dir / "export" / "fields.vtk"));
    EXPECT_TRUE(fs::exists(dir / "export" / "fields.csv"));
}

TEST(Cli, ResultsDoNotDependOnThreadCount)
{
    const fs::path dir = scratch("threads");
    const fs::path cfg = small_config(dir);
    const std::string base = "converge --levels 2 --set physics.equations=navierStokes --config " + cfg.string();
    ASSERT_EQ(run(base + " --threads 1 --out " + (dir / "t1").string(), dir / "log1"), 0);
    ASSERT_EQ(run(base + " --threads 4 --out " + (dir / "t4").string(), dir / "log4"), 0);
    for (const char* f : {"summary.json", "convergence.csv", "mesh7_history.csv", "mesh14_history.csv"}) {
        EXPECT_EQ(slurp(dir / "t1" / f), slurp(dir / "t4" / f)) << f;
    }
}
