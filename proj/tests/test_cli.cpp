#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "cssl_cli_test";
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string command = std::string(CSSL_CLI_PATH) + " " + args +
                              " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

fs::path write_config(const std::string& name, const std::string& content) {
  const fs::path path = work_dir() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

const char* kTinyConfig = R"({
  "battery": "custom",
  "seed": 7,
  "workers": 1,
  "warmup": {"learning_rate": 0.1, "epochs": 8, "batch_size": 32},
  "self_train": {"threshold": 0.4, "learning_rate": 0.05, "batch_size": 32},
  "warmup_mode": "union",
  "sequences": [
    {
      "id": "tiny",
      "kind": "classification",
      "folds": [120, 120, 120],
      "subfold_size": 60,
      "source": {"generate": {"length": 360, "d": 4, "classes": 3}}
    }
  ]
})";

}  // namespace

TEST_CASE("validate returns 0 for a good config and 2 for a bad one") {
  const fs::path good = write_config("good.json", kTinyConfig);
  CHECK(run_cli("validate --config " + good.string()) == 0);

  const fs::path bad = write_config("bad.json",
                                    R"({"battery": "car-like", "seed": 1,
                                        "self_train": {"thresold": 0.5}})");
  CHECK(run_cli("validate --config " + bad.string()) == 2);

  CHECK(run_cli("validate --config /nonexistent/config.json") == 2);
}

TEST_CASE("run executes a tiny battery and plots from its reports") {
  const fs::path good = write_config("good.json", kTinyConfig);
  const fs::path out = work_dir() / "out";
  fs::remove_all(out);
  CHECK(run_cli("run --config " + good.string() + " --out " + out.string() +
                " --seed 11 --workers 1") == 0);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "reports.json"));
  CHECK(fs::exists(out / "tiny" / "sup-ft" / "predictions.csv"));

  CHECK(run_cli("plot --in " + out.string()) == 0);
  CHECK(fs::exists(out / "plots" / "summary.svg"));

  // Mode subsets are accepted; bad mode names are config errors.
  CHECK(run_cli("run --config " + good.string() + " --out " + out.string() +
                " --modes sup-ft,upd-V") == 0);
  CHECK(run_cli("run --config " + good.string() + " --out " + out.string() +
                " --modes warp-drive") == 2);
}

TEST_CASE("plot on a missing directory is a runtime error") {
  CHECK(run_cli("plot --in /nonexistent/battery") == 3);
}
