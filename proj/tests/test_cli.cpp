#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "pltf/coo.hpp"

namespace fs = std::filesystem;

namespace {

const std::string cli = PLTF_CLI_PATH;

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() /
              ("pltf_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Sandbox() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const {
        return (dir / name).string();
    }
};

int run(const std::string& args, const std::string& stdout_file = "") {
    std::string cmd = cli + " " + args;
    if (!stdout_file.empty()) cmd += " > " + stdout_file;
    cmd += " 2> /dev/null";
    int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("cli: generate writes data, truth, and manifest") {
    Sandbox sb;
    REQUIRE(run("generate --dims 4 4 3 --rank 2 --seed 1 --poisson --out " +
                sb.path("g1")) == 0);
    auto coo = pltf::read_coo_file(sb.path("g1/X.coo"));
    CHECK(coo.indices.size() == 3);
    CHECK(coo.indices[0].cardinality == 4);
    CHECK(coo.indices[2].cardinality == 3);
    CHECK(fs::exists(sb.path("g1/Z1_true.coo")));
    CHECK(fs::exists(sb.path("g1/Z3_true.coo")));
    auto manifest = slurp(sb.path("g1/manifest.json"));
    CHECK(manifest.find("\"command\": \"generate\"") != std::string::npos);
    CHECK(manifest.find("phases_seconds") != std::string::npos);

    // same seed, byte-identical data
    REQUIRE(run("generate --dims 4 4 3 --rank 2 --seed 1 --poisson --out " +
                sb.path("g2")) == 0);
    CHECK(slurp(sb.path("g1/X.coo")) == slurp(sb.path("g2/X.coo")));

    // single-cell model emits a one-entry file
    REQUIRE(run("generate --dims 1 1 1 --rank 1 --seed 2 --out " +
                sb.path("g3")) == 0);
    auto tiny = pltf::read_coo_file(sb.path("g3/X.coo"));
    CHECK(tiny.entries.size() <= 1);
}

TEST_CASE("cli: fit in both methods, reproducibly") {
    Sandbox sb;
    REQUIRE(run("generate --dims 5 4 3 --rank 2 --seed 3 --poisson --out " +
                sb.path("gen")) == 0);
    const std::string data = sb.path("gen/X.coo");

    REQUIRE(run("fit --data " + data +
                " --rank 2 --iters 20 --seed 7 --write-l --out " +
                sb.path("vb1"), sb.path("vb1.log")) == 0);
    CHECK(slurp(sb.path("vb1.log")).find("bound=") != std::string::npos);
    auto trace = slurp(sb.path("vb1/trace.csv"));
    CHECK(trace.rfind("iter,bound", 0) == 0);
    CHECK(fs::exists(sb.path("vb1/Z1_E.coo")));
    CHECK(fs::exists(sb.path("vb1/Z1_L.coo")));

    REQUIRE(run("fit --data " + data +
                " --rank 2 --iters 20 --seed 7 --out " + sb.path("vb2")) == 0);
    CHECK(slurp(sb.path("vb1/trace.csv")) == slurp(sb.path("vb2/trace.csv")));
    CHECK(slurp(sb.path("vb1/Z2_E.coo")) == slurp(sb.path("vb2/Z2_E.coo")));

    REQUIRE(run("fit --data " + data + " --method em --rank 2 --iters 20 "
                "--seed 7 --out " + sb.path("em1"), sb.path("em1.log")) == 0);
    CHECK(slurp(sb.path("em1.log")).find("divergence=") != std::string::npos);
    CHECK(slurp(sb.path("em1/trace.csv")).rfind("iter,divergence", 0) == 0);
}

TEST_CASE("cli: fit accepts a mask and a tucker config file") {
    Sandbox sb;
    REQUIRE(run("generate --dims 4 4 4 --rank 2 --seed 5 --poisson --out " +
                sb.path("gen")) == 0);

    // mask off one cell
    {
        std::ofstream m(sb.path("mask.coo"));
        m << "dims 4 4 4\n";
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k)
                    if (!(i == 0 && j == 0 && k == 0))
                        m << i << ' ' << j << ' ' << k << " 1\n";
    }
    REQUIRE(run("fit --data " + sb.path("gen/X.coo") + " --mask " +
                sb.path("mask.coo") + " --rank 2 --iters 10 --out " +
                sb.path("masked")) == 0);

    {
        std::ofstream cfg(sb.path("tucker.cfg"));
        cfg << "model = tucker\ncore_dims = 2 2 2\nprior_a = 0.5\n"
            << "prior_b = 10\n";
    }
    REQUIRE(run("fit --data " + sb.path("gen/X.coo") + " --config " +
                sb.path("tucker.cfg") + " --iters 10 --out " +
                sb.path("tucker"), sb.path("tucker.log")) == 0);
    CHECK(fs::exists(sb.path("tucker/Z4_E.coo")));
}

TEST_CASE("cli: flags override config file values") {
    Sandbox sb;
    REQUIRE(run("generate --dims 5 4 3 --rank 1 --seed 8 --out " +
                sb.path("gen")) == 0);
    {
        std::ofstream cfg(sb.path("model.cfg"));
        cfg << "model = cp\nrank = 1\nprior_b = 2\n";
    }
    REQUIRE(run("fit --data " + sb.path("gen/X.coo") + " --config " +
                sb.path("model.cfg") + " --rank 2 --iters 5 --out " +
                sb.path("fit")) == 0);
    // the factor carries the flag's rank, not the file's
    auto z1 = pltf::read_coo_file(sb.path("fit/Z1_E.coo"));
    REQUIRE(z1.indices.size() == 2);
    CHECK(z1.indices[0].cardinality == 5);
    CHECK(z1.indices[1].cardinality == 2);
    // the file's prior_b survives where no flag was given
    auto manifest = slurp(sb.path("fit/manifest.json"));
    CHECK(manifest.find("\"prior_b\": \"2\"") != std::string::npos);
}

TEST_CASE("cli: exit codes") {
    Sandbox sb;
    REQUIRE(run("generate --dims 3 3 3 --rank 1 --seed 1 --out " +
                sb.path("gen")) == 0);
    // usage errors
    CHECK(run("fit") == 1);
    CHECK(run("no-such-command") == 1);
    CHECK(run("fit --data x.coo --no-such-flag") == 1);
    // missing data file / bad model are input errors
    CHECK(run("fit --data " + sb.path("nope.coo") + " --rank 2 --out " +
              sb.path("o1")) == 2);
    CHECK(run("fit --data " + sb.path("gen/X.coo") +
              " --dims 5 5 5 --rank 2 --out " + sb.path("o2")) == 2);
    CHECK(run("select --data " + sb.path("gen/X.coo") +
              " --rmin 3 --rmax 2 --out " + sb.path("o3")) == 2);
}

TEST_CASE("cli: select sweeps and reports an order") {
    Sandbox sb;
    REQUIRE(run("generate --dims 5 5 5 --rank 2 --b 4 --seed 11 --poisson "
                "--out " + sb.path("gen")) == 0);
    REQUIRE(run("select --data " + sb.path("gen/X.coo") +
                " --rmin 1 --rmax 3 --restarts 2 --iters 25 --seed 4 --out " +
                sb.path("sel"), sb.path("sel.log")) == 0);
    auto log = slurp(sb.path("sel.log"));
    CHECK(log.find("selected_order=") != std::string::npos);
    auto csv = slurp(sb.path("sel/sweep.csv"));
    CHECK(csv.rfind("order,restart,bound", 0) == 0);
    CHECK(csv.find("# selected_order=") != std::string::npos);
    // 3 orders x 2 restarts, header, summary
    std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
    CHECK(lines == 8);
}

TEST_CASE("cli: eval-links grid, including the empty one") {
    Sandbox sb;
    REQUIRE(run("generate --dims 6 6 3 --rank 2 --b 1 --seed 9 --poisson "
                "--out " + sb.path("gen")) == 0);
    REQUIRE(run("eval-links --data " + sb.path("gen/X.coo") +
                " --missing 40 80 --methods vb --ranks 2 --seeds 2 "
                "--iters 15 --out " + sb.path("ev")) == 0);
    auto csv = slurp(sb.path("ev/auc.csv"));
    CHECK(csv.rfind("run,seed,missing_fraction,method,rank,auc", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5); // header + 4 rows

    REQUIRE(run("eval-links --data " + sb.path("gen/X.coo") +
                " --missing 40 --seeds 0 --out " + sb.path("empty")) == 0);
    auto empty_csv = slurp(sb.path("empty/auc.csv"));
    CHECK(empty_csv == "run,seed,missing_fraction,method,rank,auc\n");
}

TEST_CASE("cli: select reruns are byte-identical") {
    Sandbox sb;
    REQUIRE(run("generate --dims 4 4 4 --rank 2 --b 4 --seed 2 --poisson "
                "--out " + sb.path("gen")) == 0);
    for (const char* d : {"s1", "s2"})
        REQUIRE(run("select --data " + sb.path("gen/X.coo") +
                    " --rmin 1 --rmax 2 --restarts 2 --iters 15 --seed 6 "
                    "--out " + sb.path(d)) == 0);
    CHECK(slurp(sb.path("s1/sweep.csv")) == slurp(sb.path("s2/sweep.csv")));
}

TEST_CASE("cli: single-class holdouts report nan rows, not failures") {
    Sandbox sb;
    {
        std::ofstream d(sb.path("ones.coo"));
        d << "dims 4 4 2\n";
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 2; ++k) d << i << ' ' << j << ' ' << k
                                              << " 1\n";
    }
    REQUIRE(run("eval-links --data " + sb.path("ones.coo") +
                " --missing 50 --methods vb --ranks 1 --seeds 2 --iters 5 "
                "--out " + sb.path("ev")) == 0);
    auto csv = slurp(sb.path("ev/auc.csv"));
    CHECK(csv.find(",nan") != std::string::npos);
}
