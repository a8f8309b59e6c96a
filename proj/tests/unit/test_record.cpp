#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "actreg/record.hpp"
#include "actreg/rng.hpp"

using namespace actreg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("actreg_record_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentRecord sample_record() {
  ExperimentRecord r;
  r.architecture = "bimodal";
  r.dataset = "synth";
  r.seed = 42;
  r.glia_ratio = 1.0;
  r.hidden_dim = 64;
  r.input_dim = 32;
  r.output_dim = 4;
  r.activations = {"relu", "tanh"};
  r.param_count = 9000;
  r.lr = 1e-3;
  r.batch_size = 32;
  r.epochs_run = 7;
  r.max_epochs = 50;
  r.patience = 10;
  r.lambda = 1e-4;
  r.weight_decay = 1e-5;
  r.test_accuracy = 0.9375;
  r.test_loss = 0.21;
  r.n_correct = 375;
  r.n_test = 400;
  r.activation_energy = 12.5;
  r.energy_mj = 1234.5;
  r.energy_mj_per_correct = 1234.5 / 375;
  r.energy_status = "measured";
  r.training_duration_seconds = 3.25;
  r.hardware = {{"cpu", "test"}, {"cores", 1}, {"gpu", nullptr}};
  return r;
}

}  // namespace

TEST(RecordFilename, Pattern) {
  EXPECT_EQ(record_filename(sample_record()), "bimodal_synth_h64_g1.0_seed42.json");
  auto r = sample_record();
  r.architecture = "mlp";
  r.glia_ratio.reset();
  r.hidden_dim = 1024;
  r.seed = 2021;
  EXPECT_EQ(record_filename(r), "mlp_synth_h1024_seed2021.json");
  r.glia_ratio = 0.25;
  EXPECT_EQ(record_filename(r), "mlp_synth_h1024_g0.25_seed2021.json");
}

TEST(Record, PersistAndLoadRoundTrip) {
  const auto dir = fresh_dir("roundtrip");
  const auto r = sample_record();
  const auto path = persist_record(dir, r);
  EXPECT_EQ(path.filename(), "bimodal_synth_h64_g1.0_seed42.json");
  const auto loaded = load_records(dir);
  ASSERT_EQ(loaded.records.size(), 1u);
  EXPECT_TRUE(loaded.warnings.empty());
  EXPECT_EQ(loaded.records[0], r);
  EXPECT_EQ(loaded.records[0].test_accuracy, r.test_accuracy);
  EXPECT_EQ(*loaded.records[0].energy_mj_per_correct, *r.energy_mj_per_correct);
}

TEST(Record, UnavailableEnergyRoundTrips) {
  auto r = sample_record();
  r.energy_mj.reset();
  r.energy_mj_per_correct.reset();
  r.energy_status = "unavailable";
  const auto back = from_json(to_json(r));
  EXPECT_FALSE(back.energy_mj.has_value());
  EXPECT_EQ(back.energy_status, "unavailable");
  EXPECT_EQ(to_json(r)["energy"]["total_mj"], nullptr);
}

TEST(Record, UnknownFieldsPreserved) {
  auto j = to_json(sample_record());
  j["notes"] = "extra";
  j["config"]["dropout"] = 0.1;
  const auto back = to_json(from_json(j));
  EXPECT_EQ(back["notes"], "extra");
  EXPECT_EQ(back["config"]["dropout"], 0.1);
  EXPECT_EQ(back, j);
}

TEST(Record, CorruptFileAmongFive) {
  const auto dir = fresh_dir("corrupt");
  for (std::uint64_t s : {1, 2, 3, 4}) {
    auto r = sample_record();
    r.seed = s;
    persist_record(dir, r);
  }
  std::ofstream(dir / "bimodal_synth_h64_g1.0_seed5.json") << "{\"architecture\": \"bimodal\", ";
  std::ofstream(dir / "README.txt") << "not a record";
  const auto loaded = load_records(dir);
  EXPECT_EQ(loaded.records.size(), 4u);
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find("seed5.json"), std::string::npos);
}

TEST(Record, NoTemporaryFilesLeftBehind) {
  const auto dir = fresh_dir("atomic");
  persist_record(dir, sample_record());
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++n;
    EXPECT_EQ(e.path().extension(), ".json");
  }
  EXPECT_EQ(n, 1u);
}

TEST(Record, UnwritableDirectory) {
  const auto blocker = fresh_dir("blocked") / "file";
  std::ofstream(blocker) << "x";
  EXPECT_THROW(persist_record(blocker / "sub", sample_record()), IoError);
  EXPECT_THROW(load_records("/nonexistent/records"), IoError);
}

TEST(RecordLoader, ArchivedLayoutVariants) {
  const auto r = from_json(nlohmann::json::parse(R"({
    "model": "BimodalTrue", "dataset_name": "fashion_mnist", "random_seed": 789,
    "architecture_config": {"glia_ratio": 1.0, "hidden_dim": 1024},
    "training": {"learning_rate": 0.001, "batch_size": 32, "epochs_trained": 12},
    "results": {"accuracy": 89.4, "training_time": 41.5},
    "energy": {"energy_mj": 52000.0, "energy_per_correct_mj": 5.8}
  })"));
  EXPECT_EQ(r.architecture, "bimodaltrue");
  EXPECT_EQ(r.dataset, "fashion_mnist");
  EXPECT_EQ(r.seed, 789u);
  EXPECT_EQ(r.hidden_dim, 1024u);
  EXPECT_EQ(r.epochs_run, 12u);
  EXPECT_DOUBLE_EQ(r.test_accuracy, 0.894);
  EXPECT_EQ(r.training_duration_seconds, 41.5);
  EXPECT_EQ(*r.energy_mj, 52000.0);
  EXPECT_EQ(r.energy_status, "measured");
}

TEST(RecordLoader, RequiredFields) {
  EXPECT_THROW(from_json(nlohmann::json::parse(R"({"dataset": "x", "test_accuracy": 0.5})")), ParseError);
  EXPECT_THROW(from_json(nlohmann::json::parse(R"({"architecture": "mlp", "test_accuracy": 0.5})")), ParseError);
  EXPECT_THROW(from_json(nlohmann::json::parse(R"({"architecture": "mlp", "dataset": "x"})")), ParseError);
  EXPECT_THROW(from_json(nlohmann::json::parse(R"({"architecture": "mlp", "dataset": "x", "test_accuracy": 250})")),
               ParseError);
  EXPECT_THROW(from_json(nlohmann::json::parse("[1, 2]")), ParseError);
}

TEST(RecordProperty, RandomRecordsRoundTrip) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    auto r = sample_record();
    r.seed = rng();
    r.test_accuracy = rng.uniform(0, 1);
    r.test_loss = rng.uniform(0, 5);
    r.activation_energy = rng.uniform(0, 1e6);
    r.lambda = rng.below(2) ? 0.0 : std::pow(10.0, -rng.uniform(1, 6));
    r.glia_ratio = rng.below(2) ? std::optional(rng.uniform(0.1, 3)) : std::nullopt;
    if (rng.below(2)) {
      r.energy_mj.reset();
      r.energy_mj_per_correct.reset();
      r.energy_status = "unavailable";
    }
    const auto text = to_json(r).dump();
    const auto back = from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back, r);
    EXPECT_EQ(back.test_accuracy, r.test_accuracy);
    EXPECT_EQ(back.seed, r.seed);
  }
}
