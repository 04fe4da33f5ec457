#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <fmt/format.h>
#include "json.hpp"

#include "kbr/cli.hpp"
#include "kbr/errors.hpp"
#include "kbr/experiments.hpp"
#include "kbr/io.hpp"

namespace fs = std::filesystem;
using namespace kbr;
using kbr::cli::parse_config;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / fmt::format("kbr_cli_{:x}", (std::uint64_t{rd()} << 32) | rd());
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const TempDir& dir, const std::string& args, const std::string& env = "") {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const auto cmd = fmt::format("{} '{}' {} > '{}' 2> '{}'", env, KBR_CLI_PATH, args, out.string(), err.string());
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), read_file(out), read_file(err)};
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("exit codes") {
  TempDir dir;
  auto r = invoke(dir, "");
  CHECK(r.code == 2);
  CHECK(r.err.find("usage: kbr") != std::string::npos);
  r = invoke(dir, "fit --scenario fig1a --lambda 0");
  CHECK(r.code == 2);
  CHECK(r.err.find("lambda: lambda must be > 0") != std::string::npos);
  r = invoke(dir, "fit --scenario fig1a --loss eps:-1");
  CHECK(r.code == 2);
  CHECK(r.err.find("loss:") != std::string::npos);
  r = invoke(dir, "explode --scenario fig1a");
  CHECK(r.code == 2);
  r = invoke(dir, "fit --scenario fig1a --data x.csv");
  CHECK(r.code == 2);
  r = invoke(dir, "fit --scenario fig9");
  CHECK(r.code == 2);
  r = invoke(dir, "fit --data '" + (dir / "missing.csv").string() + "'");
  CHECK(r.code == 1);
  CHECK(r.err.find("error [IoError]") != std::string::npos);
  r = invoke(dir, "bounds --scenario fig1a --kernel linear --z x=-2,y=100 --eps 0.01");
  CHECK(r.code == 1);
  CHECK(r.err.find("error [UnboundedKernel]") != std::string::npos);
  r = invoke(dir, "influence --scenario fig1a --z x=-2,y=100");
  CHECK(r.code == 1);
  CHECK(r.err.find("error [NotTwiceDifferentiable]") != std::string::npos);
  r = invoke(dir, "fit --scenario fig1a");
  CHECK(r.code == 0);
  CHECK(count_lines(r.out) == 1);
  CHECK(r.out.rfind("fit: ", 0) == 0);
  CHECK(invoke(dir, "--help").code == 0);
}

TEST_CASE("fit output round-trips exactly") {
  TempDir dir;
  const auto path = dir / "fit.json";
  const auto r = invoke(dir, fmt::format("fit --scenario fig1b --seed 3 --loss logistic --out '{}'", path.string()));
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(read_file(path));
  CHECK(doc.at("coefficients").size() == 101);
  CHECK(doc.at("centers").size() == 101);
  CHECK(doc.at("loss") == "logistic");
  CHECK(doc.at("kernel").at("gamma") == 0.1);
  CHECK(doc.at("lambda") == 0.05);
  const auto stored = load_fit(path);
  const auto data = generate({"fig1b", 3, {}}).data;
  const auto direct = fit(LossModel::logistic(), KernelModel::rbf(0.1), data, 0.05);
  CHECK(stored.fit.coefficients() == direct.coefficients());
  CHECK(stored.fit.f_hat.centers() == data.xs);
  CHECK(stored.fit.objective == direct.objective);
  CHECK(stored.loss.spec() == "logistic");
  CHECK(fit_json(stored.loss, stored.fit) == read_file(path));
  CHECK_FALSE(fs::exists(dir / "fit.json.tmp"));
}

TEST_CASE("data files and the scenario command agree") {
  TempDir dir;
  const auto csv = dir / "d.csv";
  REQUIRE(invoke(dir, fmt::format("scenario --name fig1c --copies 2 --seed 8 --out '{}'", csv.string())).code == 0);
  const auto data = read_dataset_csv(csv);
  const auto gen = generate({"fig1c", 8, {{"copies", 2}}}).data;
  CHECK(data.xs == gen.xs);
  CHECK(data.ys == gen.ys);
  const auto a = dir / "a.json";
  const auto b = dir / "b.json";
  REQUIRE(invoke(dir, fmt::format("fit --data '{}' --out '{}'", csv.string(), a.string())).code == 0);
  REQUIRE(invoke(dir, fmt::format("fit --scenario fig1c --copies 2 --seed 8 --out '{}'", b.string())).code == 0);
  CHECK(read_file(a) == read_file(b));
  std::ofstream(dir / "bad.csv") << "x1,y\n1,2\n3\n";
  const auto r = invoke(dir, fmt::format("fit --data '{}'", (dir / "bad.csv").string()));
  CHECK(r.code == 1);
  CHECK(r.err.find("row 2") != std::string::npos);
}

TEST_CASE("sensitivity grid") {
  TempDir dir;
  const auto path = dir / "sc.csv";
  const auto r = invoke(dir, fmt::format("sensitivity --scenario fig1a --grid-x -10:10:5 --grid-y -50:50:3 --out '{}'",
                                         path.string()));
  REQUIRE(r.code == 0);
  const auto text = read_file(path);
  CHECK(text.rfind("z_x,z_y,sc_norm,bound,violated\n", 0) == 0);
  CHECK(count_lines(text) == 1 + 15);
  CHECK(text.find(",1\n") == std::string::npos);
  CHECK(invoke(dir, "sensitivity --scenario fig1a --grid-x -10:10:0 --grid-y 0:1:2").code == 2);
  CHECK(invoke(dir, "sensitivity --scenario fig1a --grid-y 0:1:2").code == 2);
}

TEST_CASE("bounds document") {
  TempDir dir;
  const auto path = dir / "b.json";
  const auto r = invoke(dir, fmt::format("bounds --scenario fig1a --z x=-2,y=100 --eps 0,0.01,0.1 --out '{}'",
                                         path.string()));
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(read_file(path));
  REQUIRE(doc.at("reports").size() == 3);
  CHECK(doc["reports"][0]["observed_shift"] == 0.0);
  for (const auto& rep : doc["reports"]) {
    CHECK(rep["violations"]["delta_shift"] == false);
    CHECK(rep["violations"]["lipschitz_shift"] == false);
    CHECK(rep["observed_shift"].get<double>() <= rep["lipschitz_shift_bound"].get<double>());
  }
  CHECK(invoke(dir, "bounds --scenario fig1a --z x=-2,y=100 --eps 1.5").code == 2);
  CHECK(invoke(dir, "bounds --scenario fig1a --z q=1 --eps 0.1").code == 2);
}

TEST_CASE("config files") {
  TempDir dir;
  const auto cfg = dir / "run.toml";
  std::ofstream(cfg) << "command = \"fit\"\nscenario = \"fig1a\"\nlambda = 0.2\nloss = \"huber:1.345\"\n";
  auto c = parse_config({"kbr", "--config", cfg.string()});
  CHECK(c.subcommand == "fit");
  CHECK(c.lambda == 0.2);
  CHECK(c.loss.spec() == "huber:1.345");
  c = parse_config({"kbr", "--config", cfg.string(), "--lambda", "0.3"});
  CHECK(c.lambda == 0.3);
  std::ofstream(dir / "bad.toml") << "command = \"fit\"\nscenario = \"fig1a\"\nlamda = 0.2\n";
  CHECK_THROWS_AS(parse_config({"kbr", "--config", (dir / "bad.toml").string()}), UsageError);
  std::ofstream(dir / "neg.toml") << "command = \"fit\"\nscenario = \"fig1a\"\nlambda = -1\n";
  try {
    parse_config({"kbr", "--config", (dir / "neg.toml").string()});
    FAIL("negative lambda accepted");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).rfind("lambda:", 0) == 0);
  }
  const auto r = invoke(dir, fmt::format("--config '{}'", cfg.string()));
  CHECK(r.code == 0);
  CHECK(r.out.find("lambda=0.2") != std::string::npos);
}

TEST_CASE("parse_config fields") {
  const auto c = parse_config({"kbr", "consistency", "--loss", "eps:0.1", "--kernel", "rbf:0.1", "--schedule",
                               "lambda=n^-0.25", "--ns", "25,50,100", "--seeds", "4", "--test-size", "1000"});
  CHECK(c.ns == std::vector<int>{25, 50, 100});
  CHECK(c.seeds == 4);
  CHECK(c.test_size == 1000);
  CHECK_THROWS_AS(parse_config({"kbr", "consistency", "--loss", "ls", "--schedule", "lambda=n^-1", "--ns", "10,20"}),
                  UsageError);
  CHECK_THROWS_AS(parse_config({"kbr", "consistency", "--schedule", "lambda=n^-0.25", "--ns", "20,10"}), UsageError);
  const auto f = parse_config({"kbr", "fit", "--scenario", "fig1d", "--caption-points", "--kernel", "poly:1,2",
                               "--domain-box", "-100,100", "--solver", "subgradient", "--tol", "1e-6"});
  CHECK(f.scenario_overrides.at("caption_points") == 1.0);
  CHECK(f.kernel.kind() == KernelKind::polynomial);
  REQUIRE(f.kernel.domain_box());
  CHECK(f.fit.solver == SolverKind::subgradient);
  CHECK(f.fit.tol == 1e-6);
  const auto i = parse_config({"kbr", "influence", "--scenario", "fig1a", "--z", "x=-2,y=100"});
  CHECK(i.z_x.size() == 1);
  CHECK(i.z_x[0] == -2.0);
  CHECK(i.z_y == 100.0);
  const auto g = cli::GridSpec::parse("-1:1:5", "grid-x");
  CHECK(g.values() == std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0});
  CHECK_THROWS_AS(cli::GridSpec::parse("1:2", "grid-x"), UsageError);
}

TEST_CASE("seeds and idempotence") {
  TempDir dir;
  const auto a = dir / "a.csv";
  const auto b = dir / "b.csv";
  const auto c = dir / "c.csv";
  REQUIRE(invoke(dir, fmt::format("scenario --name fig1a --out '{}'", a.string()), "KBR_SEED=17").code == 0);
  REQUIRE(invoke(dir, fmt::format("scenario --name fig1a --seed 17 --out '{}'", b.string())).code == 0);
  REQUIRE(invoke(dir, fmt::format("scenario --name fig1a --seed 18 --out '{}'", c.string()), "KBR_SEED=17").code == 0);
  CHECK(read_file(a) == read_file(b));
  CHECK(read_file(a) != read_file(c));
  CHECK(invoke(dir, "scenario --name fig1a", "KBR_SEED=abc").code == 2);

  const auto args = [&](const fs::path& p, int threads) {
    return fmt::format("consistency --schedule lambda=n^-0.25 --ns 10,20 --seeds 2 --test-size 500 --threads {} "
                       "--out '{}'",
                       threads, p.string());
  };
  REQUIRE(invoke(dir, args(dir / "c1.csv", 1)).code == 0);
  REQUIRE(invoke(dir, args(dir / "c2.csv", 4)).code == 0);
  const auto text = read_file(dir / "c1.csv");
  CHECK(text == read_file(dir / "c2.csv"));
  CHECK(text.rfind("n,seed,lambda,risk,bayes_risk,gap\n", 0) == 0);
  CHECK(count_lines(text) == 5);
  CHECK(fs::exists(dir / "c1.csv.timing.csv"));

  const auto s1 = dir / "s1.csv";
  const auto s2 = dir / "s2.csv";
  const auto sens = "sensitivity --scenario fig1b --loss huber:1.345 --grid-x -5:5:4 --grid-y -100:100:3 --out ";
  REQUIRE(invoke(dir, sens + ("'" + s1.string() + "' --threads 1")).code == 0);
  REQUIRE(invoke(dir, sens + ("'" + s2.string() + "' --threads 3")).code == 0);
  CHECK(read_file(s1) == read_file(s2));
}
