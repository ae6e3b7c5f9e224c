#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <algorithm>

#include "geoagent/raster_io.hpp"
#include "helpers.hpp"

namespace {

struct Outcome {
  int status = 0;
  std::string err;
};

Outcome run_cli(const std::string& args, const std::filesystem::path& dir) {
  const auto err_path = dir / "stderr.txt";
  const std::string cmd = std::string(SCALE_AGENT_EXE) + " " + args + " >/dev/null 2>" + err_path.string();
  const int raw = std::system(cmd.c_str());
  Outcome o;
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(err_path);
  std::getline(in, o.err, '\0');
  return o;
}

}  // namespace

TEST_CASE("every subcommand rejects a malformed config with one line") {
  const auto dir = testutil::scratch_dir("cli");
  const auto cfg = dir / "bad.cfg";
  std::ofstream(cfg) << "seed = 1\nthis line has no separator\n";
  const auto unknown = dir / "unknown.cfg";
  std::ofstream(unknown) << "seed = 1\nagent.gamam = 0.5\n";
  for (const std::string sub : {"generate-data", "pretrain", "train-agent", "train-joint", "map --raster x.gatn",
                                "eval", "ablate", "export-action-map --scene s", "grad-check"}) {
    for (const auto& c : {cfg, unknown}) {
      INFO(sub << " " << c.filename().string());
      const Outcome o = run_cli(sub + " --config " + c.string(), dir);
      CHECK(o.status != 0);
      CHECK(o.err.rfind("scale-agent: ", 0) == 0);
      CHECK(std::count(o.err.begin(), o.err.end(), '\n') == 1);
    }
  }
  const Outcome missing = run_cli("pretrain --config " + (dir / "none.cfg").string(), dir);
  CHECK(missing.status != 0);
}

TEST_CASE("eval scores two label maps") {
  const auto dir = testutil::scratch_dir("cli_eval");
  geoagent::LabelMask a(1, 4, 2), b(1, 4, 2);
  a.data = {0, 0, 1, 1};
  b.data = {0, 1, 1, 1};
  geoagent::write_label_map(dir / "truth.pgm", a);
  geoagent::write_label_map(dir / "pred.pgm", b);
  const std::string cmd = std::string(SCALE_AGENT_EXE) + " eval --pred " + (dir / "pred.pgm").string() + " --truth " +
                          (dir / "truth.pgm").string() + " > " + (dir / "out.txt").string();
  REQUIRE(std::system(cmd.c_str()) == 0);
  std::ifstream in(dir / "out.txt");
  std::string text;
  std::getline(in, text, '\0');
  CHECK(text == "mIoU 0.5833\nmF1 0.7333\nscore 1.3167\n");
}
