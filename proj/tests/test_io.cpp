#include "qntk/io.hpp"

#include "qntk/report_json.hpp"

#include <catch2/catch.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace qntk;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_CASE("QNTK kernel container") {
  SECTION("round trip") {
    Matrix e(3, 3);
    e << 2.0, 0.3, 0.1, 0.3, 2.0, 0.2, 0.1, 0.2, 2.0;
    const KernelMatrix k = make_kernel_matrix(e, KernelSource::computed);
    const auto path = temp_path("qntk_roundtrip.qntk");
    write_kernel_qntk(path.string(), k);

    IngestReport report;
    const KernelMatrix r = read_kernel_qntk(path.string(), &report);
    CHECK(r.entries == k.entries);
    CHECK(r.source == KernelSource::ingested);
    CHECK(report.n == 3);
    CHECK(report.max_asymmetry == 0.0);
    CHECK(report.min_eigenvalue > 0.0);
    CHECK(report.diag_min == 2.0);
    CHECK(report.diag_max == 2.0);
    CHECK(report.shared_diagonal);
  }
  SECTION("two by two identity file") {
    const KernelMatrix eye = make_kernel_matrix(Matrix::Identity(2, 2), KernelSource::computed);
    const auto path = temp_path("qntk_eye.qntk");
    write_kernel_qntk(path.string(), eye);
    CHECK(std::filesystem::file_size(path) == 4u + 4u + 8u + 4u * 8u);
    CHECK_NOTHROW(read_kernel_qntk(path.string()));
  }
  SECTION("asymmetric payloads are rejected with the offending pair") {
    const auto path = temp_path("qntk_asym.qntk");
    {
      std::ofstream out(path, std::ios::binary);
      out.write("QNTK", 4);
      const std::uint32_t version = 1;
      out.write(reinterpret_cast<const char*>(&version), 4);
      const std::uint64_t n = 2;
      out.write(reinterpret_cast<const char*>(&n), 8);
      const double vals[4] = {1.0, 0.5, 0.25, 1.0};
      out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    CHECK_THROWS_WITH(read_kernel_qntk(path.string()),
                      Catch::Contains("asymmetric") && Catch::Contains("(0, 1)"));
  }
  SECTION("non-positive-semidefinite payloads are rejected") {
    const auto path = temp_path("qntk_npsd.qntk");
    Matrix e(2, 2);
    e << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
    write_kernel_qntk(path.string(), make_kernel_matrix(e, KernelSource::ingested));
    CHECK_THROWS_WITH(read_kernel_qntk(path.string()), Catch::Contains("semidefinite"));
  }
  SECTION("bad magic / version / truncation") {
    const auto path = temp_path("qntk_bad.qntk");
    {
      std::ofstream out(path, std::ios::binary);
      out.write("NOPE", 4);
    }
    CHECK_THROWS_WITH(read_kernel_qntk(path.string()), Catch::Contains("magic"));
    {
      std::ofstream out(path, std::ios::binary);
      out.write("QNTK", 4);
      const std::uint32_t version = 9;
      out.write(reinterpret_cast<const char*>(&version), 4);
      const std::uint64_t n = 1;
      out.write(reinterpret_cast<const char*>(&n), 8);
      const double v = 1.0;
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
    CHECK_THROWS_WITH(read_kernel_qntk(path.string()), Catch::Contains("version"));
    {
      std::ofstream out(path, std::ios::binary);
      out.write("QNTK", 4);
      const std::uint32_t version = 1;
      out.write(reinterpret_cast<const char*>(&version), 4);
      const std::uint64_t n = 4;
      out.write(reinterpret_cast<const char*>(&n), 8);
      const double v = 1.0;
      out.write(reinterpret_cast<const char*>(&v), 8);  // far too short
    }
    CHECK_THROWS_WITH(read_kernel_qntk(path.string()), Catch::Contains("truncated"));
  }
}

TEST_CASE("fmt_double") {
  CHECK(fmt_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(fmt_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(fmt_double(0.5) == "0.5");
  CHECK(fmt_double(1e-9) == "1e-09");
}

TEST_CASE("pipeline report row") {
  PipelineCostReport r;
  r.n = 64;
  r.mode = PipelineMode::sparsified;
  r.depth = 12;
  r.p_norm = 2.5;
  r.postselect_shots = 3;
  r.kappa = 1.25;
  r.sparsity = 9;
  r.cg_iterations = 4;
  r.hhl_queries = 100.0;
  r.overlap = -0.5;
  r.readout_shots_needed = 4.0;
  r.predicted_sign = -1;
  const std::string row = pipeline_report_csv_row(r);
  CHECK(row == "64,sparsified,12,2.5,3,1.25,9,4,100,-0.5,4,-1");
  const std::string header = pipeline_report_csv_header();
  CHECK(std::count(header.begin(), header.end(), ',') ==
        std::count(row.begin(), row.end(), ','));

  r.readout_shots_needed = std::numeric_limits<double>::infinity();
  CHECK(pipeline_report_csv_row(r).find(",inf,") != std::string::npos);
}

TEST_CASE("pipeline report json") {
  PipelineCostReport r;
  r.n = 8;
  r.mode = PipelineMode::diagonal;
  r.p_norm = 1.5;
  r.readout_shots_needed = std::numeric_limits<double>::infinity();
  const nlohmann::json j = pipeline_report_json(r);
  CHECK(j.at("n") == 8);
  CHECK(j.at("mode") == "diagonal");
  CHECK(j.at("P") == 1.5);
  CHECK(j.at("readout_shots") == "inf");
  for (const char* key : {"depth", "postselect_shots", "kappa", "s", "cg_iters",
                          "hhl_queries", "overlap", "sign"})
    CHECK(j.contains(key));
}

TEST_CASE("prediction batch csv") {
  Vector scores(2);
  scores << 1.5, -0.25;
  Eigen::VectorXi labels(2);
  labels << 1, 1;
  const auto batch = make_prediction_batch(scores, PredictionMode::diagonal);
  const std::string csv = prediction_batch_csv(batch, labels);
  CHECK(csv ==
        "test_index,score,sign,label,mode\n"
        "0,1.5,1,1,diagonal\n"
        "1,-0.25,-1,1,diagonal\n");
  Eigen::VectorXi wrong(3);
  CHECK_THROWS_AS(prediction_batch_csv(batch, wrong), std::invalid_argument);
}
