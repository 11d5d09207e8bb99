#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("calibr8_cli_" + std::to_string(::getpid()));
  Scratch() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

const fs::path& scratch() {
  static const Scratch s;
  return s.dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

struct Outcome {
  int code;
  std::string err;
};

Outcome calibr8(const std::string& args) {
  fs::path err = scratch() / "stderr.txt";
  std::string cmd = std::string("\"") + CALIBR8_EXE + "\" " + args + " 2> \"" + err.string() + "\" > /dev/null";
  int st = std::system(cmd.c_str());
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(err)};
}

Json base_config(const std::string& builtin, Json method, long budget) {
  return {{"simulator", {{"builtin", builtin}}}, {"method", std::move(method)}, {"budget", budget}, {"seed", 7}};
}

fs::path write_config(const std::string& name, const Json& j) {
  fs::path p = scratch() / (name + ".json");
  write(p, j.dump(2));
  return p;
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

std::size_t count_columns(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

}  // namespace

TEST_CASE("run writes particles, diagnostics and manifest for every method") {
  const Json methods = {
      {"mh", {{"n_iter", 2000}}},
      {"abc", {{"n_sims", 2000}}},
      {"smc", {{"n_particles", 200}}},
      {"hm", {{"candidates", 100}}},
      {"eki", {{"n_ensemble", 50}, {"n_iterations", 3}}},
      {"vi", {{"steps", 200}, {"mc_samples", 8}, {"draws", 300}}},
      {"surrogate_mh", {{"n_iter", 1500}}},
      {"mle", {{"restarts", 2}}},
  };
  const long budget = 100000;
  for (auto& [name, frag] : methods.items()) {
    CAPTURE(name);
    fs::path out = scratch() / ("out_" + name);
    fs::path cfg = write_config("cfg_" + name, base_config("linear_gaussian", {{name, frag}}, budget));
    Outcome r = calibr8("run \"" + cfg.string() + "\" --threads 2 --output \"" + out.string() + "\"");
    CHECK(r.code == 0);
    CHECK(r.err.empty());
    std::ifstream csv(out / "particles.csv");
    std::string header, row;
    std::getline(csv, header);
    CHECK(header == "x_x,weight,log_post");
    REQUIRE(std::getline(csv, row));
    CHECK(count_columns(row) == 3);
    Json diag = read_json(out / "diagnostics.json");
    CHECK(diag["method"] == name);
    CHECK(diag["n_sim_evals"].get<long>() <= budget);
    CHECK(diag["n_sim_evals"].get<long>() > 0);
    CHECK(diag["partial"] == false);
    Json man = read_json(out / "manifest.json");
    CHECK(man["resolved"]["method"].contains(name));
    CHECK(man["seed"] == 7);
  }
}

TEST_CASE("outputs are byte-identical across thread counts") {
  for (const char* name : {"smc", "abc", "eki"}) {
    CAPTURE(name);
    Json frag = std::string(name) == "smc" ? Json{{"n_particles", 300}} : Json::object();
    fs::path cfg = write_config(std::string("det_") + name, base_config("bimodal", {{name, frag}}, 1000000));
    fs::path a = scratch() / (std::string("det1_") + name), b = scratch() / (std::string("det4_") + name);
    REQUIRE(calibr8("run \"" + cfg.string() + "\" --threads 1 --output \"" + a.string() + "\"").code == 0);
    REQUIRE(calibr8("run \"" + cfg.string() + "\" --threads 4 --output \"" + b.string() + "\"").code == 0);
    CHECK(slurp(a / "particles.csv") == slurp(b / "particles.csv"));
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  }
}

TEST_CASE("budget exhaustion gives exit 3 with partial results") {
  fs::path cfg = write_config("budget", base_config("linear_gaussian", {{"mh", {{"n_iter", 1000}}}}, 10));
  fs::path out = scratch() / "out_budget";
  Outcome r = calibr8("run \"" + cfg.string() + "\" --output \"" + out.string() + "\"");
  CHECK(r.code == 3);
  CHECK(r.err.find("budget") != std::string::npos);
  Json diag = read_json(out / "diagnostics.json");
  CHECK(diag["partial"] == true);
  CHECK(diag["n_sim_evals"].get<long>() <= 10);
  CHECK(fs::exists(out / "particles.csv"));
}

TEST_CASE("schema errors give exit 2 and name the field") {
  Json j = base_config("linear_gaussian", {{"mh", {{"n_iter", 100}, {"bogus", 1}}}}, 100);
  Outcome r = calibr8("run \"" + write_config("bad1", j).string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.err.find("method.mh") != std::string::npos);

  j = base_config("linear_gaussian", {{"mh", Json::object()}}, 100);
  j.erase("budget");
  r = calibr8("run \"" + write_config("bad2", j).string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.err.find("budget") != std::string::npos);

  j = base_config("no_such_model", {{"mh", Json::object()}}, 100);
  r = calibr8("run \"" + write_config("bad3", j).string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.err.find("simulator.builtin") != std::string::npos);

  j = base_config("linear_gaussian", {{"mh", Json::object()}}, 100);
  j["observations"] = {{"y", {1.0}}, {"model", {{"kind", "gaussian-iid"}}}};
  r = calibr8("run \"" + write_config("bad4", j).string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.err.find("observations.model.sigma") != std::string::npos);

  write(scratch() / "bad5.json", "{ not json");
  CHECK(calibr8("run \"" + (scratch() / "bad5.json").string() + "\"").code == 2);
  CHECK(calibr8("frobnicate").code == 2);
}

TEST_CASE("predict and validate") {
  fs::path cfg = write_config("pv", base_config("linear_gaussian", {{"mh", {{"n_iter", 3000}}}}, 100000));
  fs::path out = scratch() / "out_pv";
  REQUIRE(calibr8("run \"" + cfg.string() + "\" --output \"" + out.string() + "\"").code == 0);

  fs::path pred = scratch() / "pred";
  Outcome r = calibr8("predict \"" + cfg.string() + "\" \"" + (out / "particles.csv").string() + "\" --draws 400 --output \"" +
                      pred.string() + "\"");
  REQUIRE(r.code == 0);
  std::ifstream pcsv(pred / "predictive.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(pcsv, line);
  CHECK(line == "y_0");
  while (std::getline(pcsv, line)) rows += !line.empty();
  CHECK(rows == 400);
  Json summary = read_json(pred / "predictive_summary.json");
  CHECK(summary["quantiles"]["q05"][0].get<double>() < summary["quantiles"]["q95"][0].get<double>());

  write(scratch() / "y1.csv", "0.4\n");
  r = calibr8("validate \"" + (pred / "predictive.csv").string() + "\" \"" + (scratch() / "y1.csv").string() +
              "\" --levels 0.5,0.9");
  CHECK(r.code == 0);
  Json v = read_json(pred / "validation.json");
  CHECK(v["levels"].size() == 2);
  CHECK(v["reliable"] == true);

  write(scratch() / "y2.csv", "0.4,0.5\n");
  r = calibr8("validate \"" + (pred / "predictive.csv").string() + "\" \"" + (scratch() / "y2.csv").string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.err.find("y_test") != std::string::npos);

  write(scratch() / "noweight.csv", "x_x,log_post\n0.1,0\n0.2,0\n");
  r = calibr8("predict \"" + cfg.string() + "\" \"" + (scratch() / "noweight.csv").string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.err.find("weight") != std::string::npos);

  write(scratch() / "wrongname.csv", "x_z,weight\n0.1,1\n");
  r = calibr8("predict \"" + cfg.string() + "\" \"" + (scratch() / "wrongname.csv").string() + "\"");
  CHECK(r.code == 2);
}

TEST_CASE("config-relative observation files and output_dir") {
  Json obs = {{"y", {0.8}}, {"model", {{"kind", "gaussian-iid"}, {"sigma", {1.0}}}}};
  write(scratch() / "obs.json", obs.dump());
  Json j = base_config("linear_gaussian", {{"mle", Json::object()}}, 200);
  j["observations"] = "obs.json";
  j["output_dir"] = (scratch() / "out_rel").string();
  Outcome r = calibr8("run \"" + write_config("rel", j).string() + "\"");
  REQUIRE(r.code == 0);
  Json diag = read_json(scratch() / "out_rel" / "diagnostics.json");
  CHECK(std::abs(diag["mle"]["x"][0].get<double>() - 0.8) < 1e-3);
}
