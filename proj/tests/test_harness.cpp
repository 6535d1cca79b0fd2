#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "pf/csv.hpp"
#include "pf/errors.hpp"
#include "pf/harness.hpp"

using namespace pf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pf_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("exact sums do not depend on order or grouping") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> xs;
    for (int i = 0; i < 5000; ++i) xs.push_back(d(rng) * std::pow(10.0, (i % 13) - 6));
    xs.push_back(1e16);
    xs.push_back(-1e16);
    ExactSum forward, backward, a, b;
    for (double x : xs) forward.add(x);
    for (auto it = xs.rbegin(); it != xs.rend(); ++it) backward.add(*it);
    for (std::size_t i = 0; i < xs.size(); ++i) (i % 3 == 0 ? a : b).add(xs[i]);
    a.merge(b);
    CHECK(forward.value() == backward.value());
    CHECK(forward.value() == a.value());
    ExactSum tiny;
    tiny.add(1.0);
    tiny.add(1e-100);
    tiny.add(-1.0);
    CHECK(tiny.value() == 1e-100);
  }

  TEST_CASE("accumulator: merged halves equal the whole, SE is non-negative") {
    const std::vector<double> times = {0.0, 1.0};
    EnsembleAccumulator whole({"x"}, times), h1({"x"}, times), h2({"x"}, times);
    for (int i = 0; i < 10; ++i) {
      const std::vector<std::vector<double>> rows = {{0.1 * i}, {1.0 / (i + 1)}};
      whole.add(rows);
      (i < 5 ? h1 : h2).add(rows);
    }
    h2.merge(h1);
    const SeriesStats a = whole.stats(), b = h2.stats();
    CHECK(a.mean == b.mean);
    CHECK(a.se == b.se);
    CHECK(a.count == std::vector<std::int64_t>{10, 10});
    CHECK(a.mean[0][0] == doctest::Approx(0.45));
    CHECK(a.se[0][0] == doctest::Approx(std::sqrt(0.0916666666 / 10.0)).epsilon(1e-6));
    CHECK(a.se[1][0] >= 0.0);
  }

  TEST_CASE("config: defaults follow kappa_a") {
    RunConfig c;
    c.kappa_a = 2.0;
    CHECK(c.resolved_gamma() == 2.0);
    CHECK(c.resolved_dt() == 5e-4);
    CHECK(c.resolved_T() == 6.0);
    CHECK(c.dim_a == 3);
  }

  TEST_CASE("config: minimal Kerr file fills beta") {
    const auto path = write_file(scratch_dir("cfg1") / "kerr.cfg",
                                 "# Kerr example\nexperiment = kerr\nkappa_b = 4\nchi = 0.1\n");
    const RunConfig c = parse_config(path);
    CHECK(c.is_kerr());
    CHECK(c.resolved_beta() == 4.0);
    CHECK(c.kerr().delta_beta() == doctest::Approx(0.1));
  }

  TEST_CASE("config: flags override the file") {
    const auto path = write_file(scratch_dir("cfg2") / "run.cfg", "seed = 3\nn_traj = 10\n");
    const RunConfig c = parse_config(path, {{"seed", "7"}});
    CHECK(c.master_seed == 7);
    CHECK(c.n_traj == 10);
  }

  TEST_CASE("config: errors name the key or field") {
    try {
      parse_config(std::nullopt, {{"colour", "blue"}});
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("colour") != std::string::npos);
      CHECK(msg.find("kappa_b") != std::string::npos);
      CHECK(msg.find("stop_after_detection") != std::string::npos);
    }
    try {
      parse_config(std::nullopt, {{"dt", "0"}});
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("dt") == 0);
    }
    CHECK_THROWS_AS(parse_config(std::nullopt, {{"dt", "-1e-3"}}), ValidationError);
    CHECK_THROWS_AS(parse_config(std::nullopt, {{"kappa", "abc"}}), ValidationError);
    CHECK_THROWS_AS(parse_config(std::nullopt, {{"n_traj", "0"}}), ValidationError);
    CHECK_THROWS_AS(parse_config(std::nullopt, {{"experiment", "kerr"}, {"representation", "sse"}}),
                    UnsupportedConfigError);
    CHECK_THROWS_AS(parse_config(std::string("/nonexistent/pf.cfg")), IoError);
  }

  TEST_CASE("config hash is the git blob hash of the canonical text") {
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    RunConfig a, b;
    b.gamma = 1.0;  // same value as the default
    CHECK(canonical_config(a) == canonical_config(b));
  }

  TEST_CASE("exit codes") {
    CHECK(exit_code_for(ValidationError("x")) == 2);
    CHECK(exit_code_for(UnsupportedConfigError("x")) == 2);
    CHECK(exit_code_for(CorruptedStateError("x")) == 3);
    CHECK(exit_code_for(IoError("x")) == 4);
    CHECK(exit_code_for(std::runtime_error("x")) == 1);
  }

  TEST_CASE("ensembles are identical for any worker count") {
    RunConfig c;
    c.scheme = SchemeChoice::Homodyne;
    c.T = 2.0;
    c.n_traj = 12;
    c.master_seed = 5;
    c.workers = 1;
    const EnsembleResult one = run_ensemble(c);
    c.workers = 3;
    const EnsembleResult three = run_ensemble(c);
    CHECK(one.stats.mean == three.stats.mean);
    CHECK(one.stats.se == three.stats.se);
    CHECK(one.n_success + static_cast<std::int64_t>(one.failures.size()) == 12);
    for (const auto& row : one.stats.se) {
      for (double se : row) CHECK(se >= 0.0);
    }
  }

  TEST_CASE("counting ensemble: conservation and count statistics") {
    RunConfig c;
    c.n_traj = 40;
    c.master_seed = 2;
    c.workers = 2;
    const EnsembleResult r = run_ensemble(c);
    CHECK(r.n_success == 40);
    REQUIRE(r.jump_histogram.size() == 2);
    CHECK(r.jump_histogram[0] + r.jump_histogram[1] == 40);
    for (double t : r.first_jump_time) CHECK((std::isnan(t) || (t > 0.0 && t <= 12.0)));
  }

  TEST_CASE("me_only run writes n11.csv with the closed-form peak") {
    RunConfig c;
    c.experiment = Experiment::MeOnly;
    c.sample_stride = 10;
    c.output_dir = scratch_dir("me").string();
    const EnsembleResult r = run_ensemble(c);
    write_outputs(r, c);
    const CsvTable t = read_numeric_csv((fs::path(c.output_dir) / "n11.csv").string());
    CHECK(t.header == std::vector<std::string>{"t", "n11"});
    const auto peak = std::max_element(t.rows.begin(), t.rows.end(),
                                       [](const auto& a, const auto& b) { return a[1] < b[1]; });
    CHECK((*peak)[1] == doctest::Approx(0.54134).epsilon(2e-4));
    CHECK((*peak)[0] == doctest::Approx(2.0).epsilon(0.01));
    std::ifstream in(fs::path(c.output_dir) / "summary.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["peak_n11"]["value"].get<double>() == doctest::Approx(0.54134).epsilon(2e-4));
  }

  TEST_CASE("json and csv outputs carry the same numbers") {
    RunConfig c;
    c.n_traj = 5;
    c.T = 3.0;
    c.save_trajectories = 2;
    c.output_dir = scratch_dir("csv").string();
    const EnsembleResult r = run_ensemble(c);
    write_outputs(r, c);
    RunConfig cj = c;
    cj.format = OutputFormat::Json;
    cj.output_dir = scratch_dir("json").string();
    write_outputs(r, cj);
    const CsvTable t = read_numeric_csv((fs::path(c.output_dir) / "series.csv").string());
    std::ifstream in(fs::path(cj.output_dir) / "results.json");
    const auto j = nlohmann::json::parse(in);
    const auto means = j["series"]["n11_mean"].get<std::vector<double>>();
    REQUIRE(means.size() == t.rows.size());
    for (std::size_t k = 0; k < means.size(); ++k) {
      CHECK(t.rows[k][2] == doctest::Approx(means[k]).epsilon(1e-8));
    }
    CHECK(j["trajectories"].size() == 2);
    CHECK(fs::exists(fs::path(c.output_dir) / "trajectory_1.csv"));
    CHECK(fs::exists(fs::path(c.output_dir) / "record_0.csv"));
    CHECK(fs::exists(fs::path(c.output_dir) / "failures.csv"));
    std::ifstream meta(fs::path(c.output_dir) / "metadata.json");
    const auto m = nlohmann::json::parse(meta);
    CHECK(m["config_hash"].get<std::string>() == git_blob_hash(canonical_config(c)));
  }

  TEST_CASE("Kerr ensemble reports shifts and a histogram") {
    RunConfig c;
    c.experiment = Experiment::Kerr;
    c.n_traj = 120;
    c.save_trajectories = 0;
    c.output_dir = scratch_dir("kerr").string();
    const EnsembleResult r = run_ensemble(c);
    CHECK(r.frame == "displaced");
    CHECK(r.dim_b == 7);
    REQUIRE(r.histogram);
    CHECK(r.max_shift.size() == 120);
    write_outputs(r, c);
    const CsvTable h = read_numeric_csv((fs::path(c.output_dir) / "histogram.csv").string());
    CHECK(h.header == std::vector<std::string>{"bin_left", "bin_right", "count"});
    CHECK(h.rows.size() == 60);
    std::ifstream in(fs::path(c.output_dir) / "summary.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j.contains("gap"));
    CHECK(j["delta_beta"].get<double>() == doctest::Approx(0.1));
    CHECK(j.contains("exceed_delta_beta_fraction"));
  }

  TEST_CASE("unwritable output directory is an IO error") {
    RunConfig c;
    c.experiment = Experiment::MeOnly;
    c.T = 0.1;
    const auto blocker = write_file(scratch_dir("io") / "file", "x");
    c.output_dir = blocker + "/sub";
    const EnsembleResult r = run_ensemble(c);
    CHECK_THROWS_AS(write_outputs(r, c), IoError);
  }
}
