#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "affinity/harness.hpp"

using namespace affinity;
using namespace affinity::harness;

namespace {

const std::filesystem::path kSource = AFFINITY_SOURCE_DIR;

ErrorCode error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

ExperimentConfig small(const std::string& name, rcp::Strategy s = rcp::Strategy::Affinity) {
  ExperimentConfig c;
  c.name = name;
  c.layout = rcp::LayoutShape{1, 2, 2};
  c.strategy = s;
  c.repetitions = 1;
  c.workload.clients = {"little3", "gates3"};
  c.workload.frames = 40;
  c.workload.warmup_discard = 10;
  c.workload.actors.arrival_rate = 0.5;
  c.workload.actors.mean_lifetime_frames = 12;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("affinity_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, FullDocument) {
  auto c = parse_config_text(R"({
    "name": "aff-355",
    "layout": "3/5/5",
    "replication": {"mot": 1, "pred": 2, "cd": 1},
    "workers": 2,
    "strategy": "affinity",
    "cache_enabled": false,
    "cache_capacity_bytes": 1048576,
    "link": {"latency_us": 80, "bandwidth_bytes_per_us": 1000.5},
    "repetitions": 2,
    "rng_seed": 9,
    "output_dir": "results",
    "workload": {
      "clients": ["a1", "b2"], "fps": 5, "frames": 30, "warmup_discard": 5, "p": 4, "q": 6,
      "frame_bytes": 1000, "position_bytes": 10, "prediction_bytes": 20, "cd_bytes": 5,
      "collision_probability": 0.5,
      "state_bytes": {"base_bytes": 1, "per_actor_bytes": 2, "cap_bytes": 3},
      "actors": {"max_concurrent": 7, "arrival_rate": 0.1, "mean_lifetime_frames": 4},
      "service": {"mot_base_us": 10, "mot_per_actor_us": 1, "pred_us": 20, "cd_per_pair_us": 2},
      "frames_mode": "trigger"
    }
  })");
  EXPECT_EQ(c.name, "aff-355");
  EXPECT_EQ(c.layout, (rcp::LayoutShape{3, 5, 5}));
  EXPECT_EQ(c.replication, (rcp::PerStep{1, 2, 1}));
  EXPECT_EQ(c.workers, (rcp::PerStep{2, 2, 2}));
  EXPECT_EQ(c.strategy, rcp::Strategy::Affinity);
  EXPECT_FALSE(c.cache_enabled);
  EXPECT_EQ(c.cache_capacity_bytes, 1048576u);
  EXPECT_EQ(c.link.latency_us, 80);
  EXPECT_DOUBLE_EQ(c.link.bandwidth_bytes_per_us, 1000.5);
  EXPECT_EQ(c.repetitions, 2u);
  EXPECT_EQ(c.rng_seed, 9u);
  EXPECT_EQ(c.output_dir, "results");
  const auto& w = c.workload;
  EXPECT_EQ(w.clients, (std::vector<std::string>{"a1", "b2"}));
  EXPECT_EQ(w.period_us(), 200'000);
  EXPECT_EQ(w.p, 4u);
  EXPECT_EQ(w.prediction_size(), 20u);
  EXPECT_EQ(w.state.cap_bytes, 3u);
  EXPECT_EQ(w.actors.max_concurrent, 7u);
  EXPECT_EQ(w.service.cd_per_pair_us, 2);
  EXPECT_EQ(w.frames_mode, PutMode::Trigger);
  EXPECT_EQ(c.layout_label(), "3/5/5@r1,2,1");
}

TEST(Config, DefaultsFromEmptyObject) {
  auto c = parse_config_text("{}");
  EXPECT_EQ(c.layout, (rcp::LayoutShape{1, 1, 1}));
  EXPECT_EQ(c.repetitions, 3u);
  EXPECT_TRUE(c.cache_enabled);
  EXPECT_EQ(c.workload.frames, 700u);
  EXPECT_EQ(c.layout_label(), "1/1/1");
  c.replication = rcp::PerStep{3, 3, 3};
  EXPECT_EQ(c.layout_label(), "1/1/1@r3");
}

TEST(Config, Rejections) {
  for (const char* text : {
           R"({"nmae": "x"})",
           R"({"workload": {"frame": 10}})",
           R"({"link": {"latency": 1}})",
           R"({"strategy": "hash"})",
           R"({"layout": "3/5"})",
           R"({"repetitions": -1})",
           R"({"repetitions": 1.5})",
           R"({"name": "a b"})",
           R"({"workload": {"frames_mode": "durable"}})",
           R"({"workload": {"frames": 10, "warmup_discard": 10}})",
           R"({"cache_capacity_bytes": 0})",
           R"({"cache_enabled": 1})",
           R"({"replication": {"mot": 0}})",
           R"([1, 2])",
           R"({"name": )",
       }) {
    EXPECT_EQ(error_of([&] { parse_config_text(text); }), ErrorCode::BadConfig) << text;
  }
}

TEST(Config, TraceFileIsRelativeToConfig) {
  auto c = parse_config_text(R"({"trace_file": "t.csv"})", "/some/dir");
  EXPECT_EQ(c.trace_file, "/some/dir/t.csv");
}

TEST(Config, ShippedConfigsLoad) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(kSource / "configs")) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 7);
}

// numpy.percentile(..., method="linear") gives the same numbers.
TEST(Stats, Percentile) {
  std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(percentile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile(v, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(percentile(v, 0.99), 3.97);
  EXPECT_DOUBLE_EQ(percentile({7}, 0.99), 7.0);
  EXPECT_DOUBLE_EQ(percentile({}, 0.5), 0.0);
}

TEST(Stats, BoxWhiskers) {
  auto b = box_stats({1, 2, 3, 4, 100});
  EXPECT_EQ(b.n, 5u);
  EXPECT_DOUBLE_EQ(b.q1, 2);
  EXPECT_DOUBLE_EQ(b.median, 3);
  EXPECT_DOUBLE_EQ(b.q3, 4);
  EXPECT_DOUBLE_EQ(b.whisker_low, 1);
  EXPECT_DOUBLE_EQ(b.whisker_high, 4);
  EXPECT_DOUBLE_EQ(b.max, 100);
  EXPECT_DOUBLE_EQ(b.mean, 22);
}

TEST(Output, Headers) {
  EXPECT_EQ(kRecordsHeader,
            "run_id,strategy,layout,client,frame,e2e_us,mot_us,pred_us,cd_us,remote_bytes,cache_hits,cache_misses");
  EXPECT_EQ(kSummaryHeader,
            "run_id,strategy,layout,clients,median_us,p75_us,p99_us,mean_us,fps,total_remote_bytes,cache_hit_rate");
}

TEST(Output, RecordRowFormat) {
  auto c = small("fmt");
  LatencyRecord r{"fmt-s1", "little3", 12, 300, 100, 40, 20, 64, 2, 3};
  std::ostringstream os;
  write_records(os, c, {r});
  EXPECT_EQ(os.str(), std::string(kRecordsHeader) + "\nfmt-s1,AFFINITY,1/2/2,little3,12,300,100,40,20,64,2,3\n");
  Summary s;
  s.median_us = 1.25;
  s.fps = 4.5;
  s.cache_hit_rate = 0.5;
  std::ostringstream os2;
  write_summary_row(os2, c, s);
  EXPECT_EQ(os2.str(), "fmt,AFFINITY,1/2/2,2,1.2,0.0,0.0,0.0,4.5000,0,0.500000\n");
}

TEST(Run, RecordsCoverPostWarmupFrames) {
  auto c = small("cover");
  auto rep = run_repetition(c, 1);
  EXPECT_EQ(rep.run_id, "cover-s1");
  EXPECT_EQ(rep.records.size(), 2u * 30u);
  EXPECT_EQ(rep.failed_tasks, 0u);
  for (const auto& r : rep.records) {
    EXPECT_GE(r.frame, 10u);
    EXPECT_GT(r.e2e_us, 0);
    EXPECT_GE(r.e2e_us, r.mot_us);
  }
  EXPECT_GT(rep.fps, 0.0);
}

TEST(Run, DeterministicCsv) {
  auto c = small("det");
  c.repetitions = 2;
  auto a = run_experiment(c);
  auto b = run_experiment(c);
  std::ostringstream ra, rb;
  write_records(ra, c, a.records);
  write_records(rb, c, b.records);
  EXPECT_EQ(ra.str(), rb.str());
  ASSERT_EQ(a.repetitions.size(), 2u);
  EXPECT_EQ(a.repetitions[0].store_dump, b.repetitions[0].store_dump);
  EXPECT_EQ(a.repetitions[1].seed, 2u);
}

TEST(Run, WritesOutputFiles) {
  auto dir = temp_dir("outputs");
  auto c = small("files");
  write_outputs(run_experiment(c), dir);
  for (const char* f : {"records.csv", "summary.csv", "store_dump-files-s1.csv", "run_log-files-s1.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  auto summary = read_file(dir / "summary.csv");
  EXPECT_EQ(summary.substr(0, kSummaryHeader.size()), kSummaryHeader);
}

TEST(Run, ReplaysTraceFile) {
  auto dir = temp_dir("trace");
  auto c = small("replay");
  auto trace = rcp::generate_trace([&] {
    auto w = c.workload;
    w.rng_seed = 1;
    return w;
  }());
  std::ofstream(dir / "t.csv") << [&] {
    std::ostringstream os;
    rcp::write_trace(os, trace);
    return os.str();
  }();
  auto from_file = c;
  from_file.trace_file = (dir / "t.csv").string();
  std::ostringstream a, b;
  write_records(a, c, run_repetition(c, 1).records);
  write_records(b, c, run_repetition(from_file, 1).records);
  EXPECT_EQ(a.str(), b.str());
}

namespace {

std::vector<std::int64_t> latencies(const RepetitionResult& rep) {
  std::vector<std::int64_t> out;
  for (const auto& r : rep.records) out.push_back(r.e2e_us);
  return out;
}

}  // namespace

TEST(Run, SingleShardLayoutIgnoresStrategy) {
  auto a = small("one", rcp::Strategy::Random);
  auto b = small("one", rcp::Strategy::Affinity);
  a.layout = b.layout = rcp::LayoutShape{1, 1, 1};
  auto ra = run_repetition(a, 3);
  auto rb = run_repetition(b, 3);
  EXPECT_EQ(latencies(ra), latencies(rb));
}

TEST(Run, CacheIrrelevantUnderGrouping) {
  auto on = small("grp");
  on.layout = rcp::LayoutShape{3, 5, 5};
  auto off = on;
  off.cache_enabled = false;
  EXPECT_EQ(latencies(run_repetition(on, 1)), latencies(run_repetition(off, 1)));
}

TEST(Run, CacheOffSlowsBaseline) {
  auto on = small("rnd", rcp::Strategy::Random);
  on.layout = rcp::LayoutShape{3, 5, 5};
  auto off = on;
  off.cache_enabled = false;
  EXPECT_GT(run_experiment(off).summary.median_us, run_experiment(on).summary.median_us);
}

TEST(Compare, RejectsDifferentTraces) {
  auto a = small("a");
  auto b = small("b");
  b.workload.frames = 41;
  EXPECT_EQ(error_of([&] { compare({a, b}); }), ErrorCode::TraceMismatch);
  auto c = small("a");
  EXPECT_EQ(error_of([&] { compare({a, c}); }), ErrorCode::BadConfig);
}

TEST(Compare, SingleConfigIsItsOwnComparison) {
  auto dir = temp_dir("compare1");
  auto a = small("only");
  auto result = compare({a}, dir);
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(result.rows[0].box.median, result.rows[0].summary.median_us);
  auto csv = read_file(dir / "comparison.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "comparison.svg"));
  EXPECT_TRUE(std::filesystem::exists(dir / "only" / "records.csv"));
}

TEST(Compare, MatchesSeparateRuns) {
  auto a = small("ra", rcp::Strategy::Random);
  auto b = small("af", rcp::Strategy::Affinity);
  auto result = compare({a, b});
  ASSERT_EQ(result.reports.size(), 2u);
  EXPECT_DOUBLE_EQ(result.reports[0].summary.median_us, run_experiment(a).summary.median_us);
  EXPECT_DOUBLE_EQ(result.reports[1].summary.median_us, run_experiment(b).summary.median_us);
}

TEST(ValidateRegex, ShippedTable) {
  auto report = validate_regex_file(kSource / "data" / "pool_table.csv");
  EXPECT_EQ(report.checks.size(), 5u);
  EXPECT_EQ(report.count(RegexStatus::Match), 4u);
  EXPECT_EQ(report.count(RegexStatus::NotApplicable), 1u);
  EXPECT_EQ(report.count(RegexStatus::Mismatch), 0u);
  std::ostringstream os;
  write_regex_report(os, report);
  EXPECT_NE(os.str().find("4 match, 0 mismatch, 1 n/a"), std::string::npos);
}

TEST(ValidateRegex, MismatchAndQuoting) {
  std::istringstream in(
      "pool,example_key,step,regex,expected_affinity_key\n"
      "/frames,/frames/little3_42,MOT,/[0-9]+_,/little3_\n"
      "/g,/g/example_1,--,\"_[0-9]+\",_1\n"
      "\n"
      "/h,/h/x,--,--,/x\n");
  auto report = validate_regex(parse_pool_table(in));
  ASSERT_EQ(report.checks.size(), 3u);
  EXPECT_EQ(report.checks[0].status, RegexStatus::Mismatch);
  EXPECT_EQ(report.checks[0].actual, std::nullopt);
  EXPECT_EQ(report.checks[1].status, RegexStatus::Match);
  EXPECT_EQ(report.checks[2].status, RegexStatus::Mismatch);
}

TEST(ValidateRegex, EmptyAndMalformed) {
  std::istringstream empty("");
  EXPECT_TRUE(validate_regex(parse_pool_table(empty)).checks.empty());
  std::istringstream short_row("/a,/a/b,--\n");
  EXPECT_EQ(error_of([&] { parse_pool_table(short_row); }), ErrorCode::BadConfig);
  std::istringstream bad_regex("/a,/a/b,--,(x,--\n");
  auto rows = parse_pool_table(bad_regex);
  EXPECT_EQ(error_of([&] { validate_regex(rows); }), ErrorCode::BadRegex);
}
