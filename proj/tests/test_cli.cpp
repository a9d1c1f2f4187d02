#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "dualfilter/baselines.hpp"
#include "dualfilter/config.hpp"
#include "dualfilter/experiment.hpp"

using namespace dualfilter;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualfilter_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

struct Shell {
  int code;
  std::string out;
};

Shell cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + DUALFILTER_CLI + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

Json predict_doc() {
  return Json::parse(R"({"schema": 1, "mode": "predict", "preset": "oscillating",
                         "horizons": [0, 3, 8], "trajectories": 5, "seed": 7})");
}

}  // namespace

TEST_CASE("model documents round trip") {
  for (Preset p : {Preset::tracking, Preset::oscillating, Preset::fractional}) {
    const Model m = build_preset(p, 5);
    const Json doc = model_to_json(m);
    const Model back = model_from_json(doc);
    CHECK(model_to_json(back) == doc);
    CHECK(back.order() == m.order());
    for (int t = 1; t <= 5; ++t)
      for (int s = 1; s <= m.memory(t); ++s) CHECK(back.A(t, s)(0, 0) == m.A(t, s)(0, 0));
  }
}

TEST_CASE("model documents: errors and matrix forms") {
  Json doc = model_to_json(build_preset(Preset::oscillating, 3));
  SUBCASE("bare numbers and nested rows parse alike") {
    doc["init_cov"] = Json::array({Json::array({0.005})});
    CHECK(model_from_json(doc).init_cov()(0, 0) == 0.005);
  }
  SUBCASE("unknown key") {
    doc["bogus"] = 1;
    CHECK_THROWS_AS(model_from_json(doc), ConfigError);
  }
  SUBCASE("schema version") {
    doc["schema"] = 2;
    CHECK_THROWS_AS(model_from_json(doc), ConfigError);
  }
  SUBCASE("wrong transition count") {
    doc["transitions"].erase(doc["transitions"].size() - 1);
    CHECK_THROWS(model_from_json(doc));
  }
  SUBCASE("ragged row") {
    doc["init_cov"] = Json::array({Json::array({1.0, 2.0}), Json::array({1.0})});
    CHECK_THROWS(model_from_json(doc));
  }
}

TEST_CASE("presets") {
  const double c = std::cos(3.14159265358979323846 / 18.0);
  const Model osc = build_preset(Preset::oscillating, 3);
  CHECK(osc.order() == 2);
  CHECK(osc.A(1, 1)(0, 0) == doctest::Approx(-c).epsilon(1e-15));
  for (int t : {2, 3}) {
    CHECK(osc.A(t, 1)(0, 0) == doctest::Approx(-2 * c).epsilon(1e-15));
    CHECK(osc.A(t, 2)(0, 0) == -1.0);
  }
  const Model tr = build_preset(Preset::tracking, 2);
  CHECK(tr.order() == 2);
  CHECK(tr.A(1, 1)(0, 0) == doctest::Approx(0.1));
  CHECK(tr.A(2, 1)(0, 0) == doctest::Approx(0.9));
  CHECK(tr.A(2, 2)(0, 0) == doctest::Approx(0.1));
  const Model fr = build_preset(Preset::fractional, 2);
  CHECK(fr.order() == 2);
  // Coefficient of X_{t-s} is (t - s + 1)^{-q}.
  CHECK(fr.A(2, 1)(0, 0) == 0.25);
  CHECK(fr.A(2, 2)(0, 0) == 1.0);
  CHECK(fr.C(0)(0, 0) == 0.5);
  for (Preset p : {Preset::tracking, Preset::oscillating, Preset::fractional}) {
    const Model m = build_preset(p, 4);
    CHECK(m.init_mean()[0] == 1.0);
    CHECK(m.init_cov()(0, 0) == 5e-3);
    CHECK(m.Q(3)(0, 0) == 5e-3);
    CHECK(m.R(4)(0, 0) == 1e-1);
    CHECK(validate_model(m).empty());
  }
  CHECK_FALSE(parse_preset("lorenz").has_value());
}

TEST_CASE("experiment documents") {
  SUBCASE("defaults and ranges") {
    Json doc = predict_doc();
    doc["horizons"] = Json::parse(R"({"from": 2, "to": 16, "doubling": true})");
    const ExperimentConfig c = experiment_from_json(doc);
    CHECK(c.horizons == std::vector<int>{2, 4, 8, 16});
    CHECK(c.methods.size() == 4);
    CHECK(c.solver.max_iters == 500);
    doc["horizons"] = Json::parse(R"({"from": 1, "to": 5})");
    CHECK(experiment_from_json(doc).horizons == std::vector<int>{1, 2, 3, 4, 5});
  }
  SUBCASE("invalid values") {
    for (const char* patch : {R"({"trajectories": 0})", R"({"horizons": []})", R"({"methods": ["lstm"]})",
                              R"({"mode": "train"})", R"({"preset": "lorenz"})", R"({"extra": true})",
                              R"({"horizons": [-1]})", R"({"solver": {"memory": 0}})"}) {
      Json doc = predict_doc();
      doc.merge_patch(Json::parse(patch));
      CHECK_THROWS_AS_MESSAGE(experiment_from_json(doc), ConfigError, patch);
    }
  }
  SUBCASE("preset parameter overrides") {
    Json doc = predict_doc();
    doc["params"] = Json::parse(R"({"dtheta": 0.5})");
    const ExperimentConfig c = experiment_from_json(doc);
    CHECK(experiment_model(c, 3).A(2, 1)(0, 0) == doctest::Approx(-2 * std::cos(0.5)));
  }
  SUBCASE("inline model") {
    Json doc = predict_doc();
    doc.erase("preset");
    doc["model"] = model_to_json(build_preset(Preset::tracking, 8));
    const ExperimentConfig c = experiment_from_json(doc);
    CHECK(experiment_model(c, 3).horizon() == 3);
    doc["horizons"] = {9};
    CHECK_THROWS_AS(experiment_from_json(doc), ConfigError);
  }
  SUBCASE("method lists") {
    CHECK(parse_method_list("dual,kalman,dual") == std::vector<Method>{Method::kalman, Method::dual});
    CHECK_THROWS_AS(parse_method_list("dual,lstm"), ConfigError);
  }
}

TEST_CASE("config hash") {
  const ExperimentConfig a = experiment_from_json(predict_doc());
  CHECK(config_hash(a).size() == 16);
  ExperimentConfig b = a;
  b.output_dir = "/elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 8;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.solver.grad_tol = 1e-9;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("format_double keeps 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(M_PI)) == M_PI);
}

TEST_CASE("predict mode artifacts") {
  const fs::path dir = scratch("predict");
  const ExperimentConfig c = experiment_from_json(predict_doc());
  RunOptions o;
  o.out_dir = dir.string();
  o.header_timestamp = false;
  const RunResult r = run_experiment(c, o);
  REQUIRE(r.exit_code == kExitOk);
  const auto pred = lines(slurp(dir / "predictions.csv"));
  REQUIRE(!pred.empty());
  CHECK(pred[0].rfind("trajectory,T,method,Z_true,Z_hat", 0) == 0);
  // T = 0 has one prior row per trajectory, T = 3 and 8 have four methods each.
  CHECK(pred.size() == 1 + 5 * (1 + 4 + 4));
  const std::string hash = config_hash(c);
  for (std::size_t i = 1; i < pred.size(); ++i) CHECK(split(pred[i]).back() == hash);

  const auto mse = lines(slurp(dir / "mse.csv"));
  CHECK(mse[0].rfind("T,method,N,mse", 0) == 0);
  for (std::size_t i = 1; i < mse.size(); ++i) {
    const auto cells = split(mse[i]);
    CHECK(std::stod(cells[3]) >= 0.0);
    CHECK(cells[2] == "5");
  }

  // Byte-identical rerun, and the timestamp line is the only difference.
  const fs::path again = scratch("predict_again");
  o.out_dir = again.string();
  REQUIRE(run_experiment(c, o).exit_code == kExitOk);
  CHECK(slurp(dir / "predictions.csv") == slurp(again / "predictions.csv"));
  CHECK(slurp(dir / "mse.csv") == slurp(again / "mse.csv"));
  o.header_timestamp = true;
  REQUIRE(run_experiment(c, o).exit_code == kExitOk);
  const std::string stamped = slurp(again / "mse.csv");
  CHECK(stamped.rfind("# generated ", 0) == 0);
  CHECK(stamped.substr(stamped.find('\n') + 1) == slurp(dir / "mse.csv"));
}

TEST_CASE("equivalence and controls modes") {
  const fs::path dir = scratch("equivalence");
  Json doc = Json::parse(R"({"schema": 1, "mode": "equivalence", "preset": "fractional",
                             "horizons": {"from": 1, "to": 12}, "trajectories": 10})");
  RunOptions o;
  o.out_dir = dir.string();
  o.header_timestamp = false;
  REQUIRE(run_experiment(experiment_from_json(doc), o).exit_code == kExitOk);
  const auto eq = lines(slurp(dir / "equivalence.csv"));
  CHECK(eq.size() == 13);
  for (std::size_t i = 1; i < eq.size(); ++i) {
    const auto cells = split(eq[i]);
    CHECK(std::stod(cells[2]) <= 1e-8);
    CHECK(cells[3] == "1");
  }

  doc = Json::parse(R"({"schema": 1, "mode": "controls", "preset": "oscillating",
                        "horizons": [16], "methods": ["dual", "smoothing", "wiener-hopf"]})");
  REQUIRE(run_experiment(experiment_from_json(doc), o).exit_code == kExitOk);
  const auto rows = lines(slurp(dir / "controls.csv"));
  CHECK(rows[0].rfind("T,method,t,u_component_index,value", 0) == 0);
  CHECK(rows.size() == 1 + 3 * 16);
  std::map<std::string, std::vector<double>> by_method;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split(rows[i]);
    by_method[cells[1]].push_back(std::stod(cells[4]));
  }
  for (int t = 0; t < 16; ++t) {
    CHECK(std::abs(by_method["dual"][t] - by_method["smoothing"][t]) < 1e-6);
    CHECK(std::abs(by_method["dual"][t] - by_method["wiener-hopf"][t]) < 1e-6);
  }
}

TEST_CASE("control shapes") {
  // Oscillating: signs alternate over the last steps and mostly elsewhere.
  const Model osc = build_preset(Preset::oscillating, 40);
  const ControlSequence uo = solve_dual_control(osc, osc.C(40).transpose()).control;
  for (int t = 40 - 4; t < 39; ++t) CHECK(uo.at(t)[0] * uo.at(t + 1)[0] < 0.0);
  int flips = 0;
  for (int t = 0; t < 39; ++t) flips += uo.at(t)[0] * uo.at(t + 1)[0] < 0.0;
  CHECK(flips >= 30);
  // Tracking: a spike at the initial step.
  const Model tr = build_preset(Preset::tracking, 40);
  const ControlSequence ut = solve_dual_control(tr, tr.C(40).transpose()).control;
  std::vector<double> middle;
  for (int t = 40 / 3; t < 2 * 40 / 3; ++t) middle.push_back(std::abs(ut.at(t)[0]));
  std::nth_element(middle.begin(), middle.begin() + middle.size() / 2, middle.end());
  CHECK(std::abs(ut.at(0)[0]) > middle[middle.size() / 2]);
}

TEST_CASE("duality and scaling modes") {
  const fs::path dir = scratch("duality");
  RunOptions o;
  o.out_dir = dir.string();
  o.header_timestamp = false;
  Json doc = Json::parse(R"({"schema": 1, "mode": "duality", "preset": "tracking",
                             "horizons": [8], "trajectories": 2000, "control_scales": [1, 2]})");
  REQUIRE(run_experiment(experiment_from_json(doc), o).exit_code == kExitOk);
  const auto d = lines(slurp(dir / "duality.csv"));
  CHECK(d[0].rfind("T,J,mse_mc,stderr,pairing_max,pass", 0) == 0);
  CHECK(d.size() == 3);
  for (std::size_t i = 1; i < d.size(); ++i) CHECK(split(d[i])[5] == "1");

  doc = Json::parse(R"({"schema": 1, "mode": "scaling", "preset": "tracking",
                        "horizons": [16, 32], "scaling": {"modes": ["fixed"]}})");
  REQUIRE(run_experiment(experiment_from_json(doc), o).exit_code == kExitOk);
  const auto s = lines(slurp(dir / "scaling.csv"));
  CHECK(s[0].rfind("method,T,mode,ops,memory_slots,iterations", 0) == 0);
  CHECK(s.size() == 1 + 4 * 2);
  CHECK(split(s[1])[0] == "kalman");
  CHECK(split(s.back())[0] == "dual");
}

TEST_CASE("failures map to exit codes and remove artifacts") {
  const fs::path dir = scratch("failures");
  RunOptions o;
  o.out_dir = dir.string();
  SUBCASE("non-convergent dual solve") {
    Json doc = predict_doc();
    doc["horizons"] = {30};
    doc["solver"] = Json::parse(R"({"max_iters": 1})");
    const RunResult r = run_experiment(experiment_from_json(doc), o);
    CHECK(r.exit_code == kExitNumerical);
    CHECK(fs::is_empty(dir));
  }
  SUBCASE("invalid model") {
    Json doc = predict_doc();
    doc.erase("preset");
    Json m = model_to_json(build_preset(Preset::tracking, 8));
    m["obs_noise"][2] = 0.0;
    doc["model"] = m;
    doc["horizons"] = {4};
    CHECK(run_experiment(experiment_from_json(doc), o).exit_code == kExitConfig);
    CHECK(fs::is_empty(dir));
  }
  SUBCASE("unwritable output") {
    write(dir / "file", "x");
    o.out_dir = (dir / "file" / "sub").string();
    CHECK(run_experiment(experiment_from_json(predict_doc()), o).exit_code == kExitIo);
  }
}

TEST_CASE("command line") {
  const fs::path dir = scratch("cli");
  write(dir / "predict.json", predict_doc().dump());

  SUBCASE("preset verbs") {
    const Shell list = cli("preset list");
    CHECK(list.code == 0);
    CHECK(list.out == "tracking\noscillating\nfractional\n");
    const Shell show = cli("preset show fractional --horizon 2");
    CHECK(show.code == 0);
    const Model m = model_from_json(Json::parse(show.out));
    CHECK(m.A(2, 1)(0, 0) == 0.25);
    CHECK(cli("preset show lorenz --horizon 2").code == 2);
    CHECK(cli("preset show tracking").code == 2);
  }
  SUBCASE("validate") {
    const Shell ok = cli("validate " + (dir / "predict.json").string());
    CHECK(ok.code == 0);
    CHECK(ok.out.find("ok") != std::string::npos);
    Json bad = model_to_json(build_preset(Preset::tracking, 3));
    bad["process_noise"][0] = -1.0;
    write(dir / "bad.json", bad.dump());
    const Shell v = cli("validate " + (dir / "bad.json").string());
    CHECK(v.code == 2);
    CHECK(v.out.find("violation: Q_1 not positive semidefinite") != std::string::npos);
    write(dir / "junk.json", "{not json");
    CHECK(cli("validate " + (dir / "junk.json").string()).code == 2);
    CHECK(cli("validate " + (dir / "missing.json").string()).code == 4);
  }
  SUBCASE("run: flags, environment and determinism") {
    const std::string cfg = (dir / "predict.json").string();
    const Shell a = cli("run " + cfg + " --out-dir " + (dir / "a").string() + " --no-header-timestamp --jobs 1");
    REQUIRE(a.code == 0);
    CHECK(a.out.find("predictions.csv") != std::string::npos);
    const Shell b = cli("run " + cfg + " --no-header-timestamp", "DUALFILTER_OUT_DIR=" + (dir / "b").string());
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a" / "predictions.csv") == slurp(dir / "b" / "predictions.csv"));

    REQUIRE(cli("run " + cfg + " --seed 8 --methods dual,kalman --no-header-timestamp --out-dir " +
                (dir / "c").string()).code == 0);
    const auto rows = lines(slurp(dir / "c" / "predictions.csv"));
    CHECK(rows.size() == 1 + 5 * (1 + 2 + 2));
    CHECK(slurp(dir / "c" / "predictions.csv") != slurp(dir / "a" / "predictions.csv"));
    CHECK(cli("run " + cfg + " --methods lstm").code == 2);
    CHECK(cli("run " + cfg + " --bogus").code == 2);
  }
}
