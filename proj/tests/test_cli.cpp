#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icepll/data.hpp"
#include "icepll/metrics.hpp"

using namespace icepll;
namespace fs = std::filesystem;

namespace {

const char* kCli = ICEPLL_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "icepll_cli_smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli pipeline: encode, gen-data, train, evaluate, sweep, loss-eval") {
  const fs::path dir = work_dir();

  SUBCASE("encode") {
    const fs::path polys = dir / "polygons.json";
    {
      std::ofstream out(polys);
      out << R"([{"polygon_id": 1, "SA": 86, "CA": 79, "SB": 83, "CB": 24},
                 {"polygon_id": 2, "ice_free": true}])";
    }
    const fs::path csv = dir / "labels.csv";
    REQUIRE(run("encode --in " + polys.string() + " --csv " + csv.string()) == 0);
    const std::string text = slurp(csv);
    CHECK(text.find("polygon_id,y_o_NI,y_o_N,y_o_YI,y_o_FYI,y_o_OI,y_o_W") == 0);
    CHECK(text.find("1,0,0,0,1,0,0,0,0,1,1,0,0,0,0,0.25,0.75,0,0") != std::string::npos);

    // Unknown stage codes surface as a nonzero exit.
    {
      std::ofstream out(polys);
      out << R"([{"polygon_id": 3, "SA": 84, "CA": 79}])";
    }
    CHECK(run("encode --in " + polys.string()) != 0);
  }

  SUBCASE("dataset, training, evaluation, sweep") {
    const fs::path data_dir = dir / "data";
    const fs::path spec = dir / "spec.json";
    {
      SyntheticSpec small = SyntheticSpec::defaults();
      small.count = 240;
      small.patch = 8;
      std::ofstream out(spec);
      out << synthetic_spec_to_json(small);
    }
    REQUIRE(run("--seed 3 --out " + data_dir.string() + " gen-data --spec " + spec.string()) == 0);
    CHECK(fs::exists(data_dir / "manifest.json"));
    CHECK(fs::exists(data_dir / "samples.bin"));
    const Dataset ds = load_dataset(data_dir.string());
    CHECK(ds.samples.size() == 240);

    const fs::path train_cfg = dir / "train.json";
    {
      std::ofstream out(train_cfg);
      out << R"({"dataset": ")" << data_dir.string() << R"(",
                 "encoding": "partial",
                 "loss": {"kind": "focal", "alpha": 0.25, "gamma": 1},
                 "epochs": 3, "batch_size": 32, "seed": 1})";
    }
    const fs::path run_dir = dir / "run";
    REQUIRE(run("--out " + run_dir.string() + " train --config " + train_cfg.string()) == 0);
    CHECK(fs::exists(run_dir / "checkpoint.tnet"));
    CHECK(fs::exists(run_dir / "history.json"));
    CHECK(slurp(run_dir / "train_config.json").find("resolved_seed") != std::string::npos);

    const fs::path eval_dir = dir / "eval";
    REQUIRE(run("--out " + eval_dir.string() + " evaluate --checkpoint " +
                (run_dir / "checkpoint.tnet").string() + " --dataset " + data_dir.string() +
                " --subset test") == 0);
    const std::string metrics = slurp(eval_dir / "metrics_test.json");
    CHECK(metrics.find("weighted_f1") != std::string::npos);
    CHECK(slurp(eval_dir / "confusion_test.csv").find("true\\pred,new_ice") == 0);

    const fs::path grid = dir / "grid.json";
    {
      std::ofstream out(grid);
      out << R"([{"encoding": "onehot", "loss": {"kind": "cce"}, "epochs": 2, "batch_size": 32},
                 {"encoding": "partial", "loss": {"kind": "focal", "alpha": 0.25, "gamma": 1},
                  "epochs": 2, "batch_size": 32}])";
    }
    const fs::path sweep_dir = dir / "sweep";
    REQUIRE(run("--seed 5 --parallelism 2 --out " + sweep_dir.string() + " sweep --dataset " +
                data_dir.string() + " --grid " + grid.string() + " --reps 1") == 0);
    CHECK(fs::exists(sweep_dir / "summary.csv"));
    CHECK(fs::exists(sweep_dir / "best.json"));
    CHECK(fs::exists(sweep_dir / "reports" / "cce_onehot.json"));
    CHECK(fs::exists(sweep_dir / "sensitivity" / "matrix.csv"));
    const std::string summary = slurp(sweep_dir / "summary.csv");
    CHECK(summary.find("name,encoding,loss") == 0);
    // header + one row per config
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
  }

  SUBCASE("ingest") {
    SceneRaster raster;
    raster.width = 100;
    raster.height = 100;
    raster.channels = 3;
    raster.pixel_spacing_m = 40.0;
    raster.pixels.assign(3 * 100 * 100, 0.5f);
    write_raster((dir / "scene.bin").string(), raster);

    SceneAnnotation ann;
    ann.width = 100;
    ann.height = 100;
    ann.polygon_ids.assign(100 * 100, 1);
    ann.border_m.assign(100 * 100, 4000.0f);
    PolygonRecord rec;
    rec.polygon_id = 1;
    rec.egg.sa = 86;
    rec.egg.ca = 79;
    ann.polygons = {rec};
    write_annotation((dir / "scene.ann").string(), ann);

    const fs::path out = dir / "ingested";
    REQUIRE(run("--out " + out.string() + " ingest --raster " + (dir / "scene.bin").string() +
                " --annotation " + (dir / "scene.ann").string() + " --patch 50") == 0);
    const Dataset ds = load_dataset(out.string());
    CHECK(ds.samples.size() == 4);
    CHECK(ds.samples[0].true_class() == 3);
  }

  SUBCASE("loss-eval") {
    const fs::path rows = dir / "rows.csv";
    {
      std::ofstream out(rows);
      out << "0,0,0,0,0,0,1,0,0,0,0,0\n";
      out << "1,2,-1,0,0.5,0,0,0,0.25,0.75,0,0\n";
    }
    REQUIRE(run("loss-eval --in " + rows.string() + " --loss focal --alpha 0.25 --gamma 1") == 0);
    REQUIRE(run("loss-eval --in " + rows.string() + " --loss cce --class-weights 1,2,1,1,1,1") ==
            0);
    CHECK(run("loss-eval --in " + (dir / "missing.csv").string()) != 0);
  }

  SUBCASE("bad arguments fail cleanly") {
    CHECK(run("") != 0);
    CHECK(run("--profile bogus gen-data") != 0);
    CHECK(run("train --config " + (dir / "nope.json").string()) != 0);
  }
}
