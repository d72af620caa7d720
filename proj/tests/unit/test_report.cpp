#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "unlearn/io_util.hpp"
#include "unlearn/report.hpp"

using namespace unlearn;
using testing_support::scratch_dir;
using testing_support::small_world;

namespace {

std::vector<StepLog> sample_logs() {
    const auto& world = small_world();
    UnlearnConfig cfg;
    cfg.combiner = CombinerKind::SAGO;
    cfg.eta = 0.05;
    cfg.steps = 25;
    cfg.seed = 4;
    auto [model, logs] =
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg,
                    &world.data.forget_probes, &world.data.retain_probes);
    return logs;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("step log csv parses back to the same records") {
    const auto logs = sample_logs();
    const auto dir = scratch_dir("report_rt");
    write_step_log_csv(logs, dir / "run.csv");
    const auto parsed = read_step_log_csv(dir / "run.csv");
    REQUIRE(parsed.size() == logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) {
        CHECK(parsed[i].step == logs[i].step);
        CHECK(parsed[i].forget_loss == doctest::Approx(logs[i].forget_loss).epsilon(1e-8));
        CHECK(parsed[i].cos_cr == doctest::Approx(logs[i].cos_cr).epsilon(1e-8));
        CHECK(parsed[i].forget_acc.has_value() == logs[i].forget_acc.has_value());
    }
}

TEST_CASE("malformed step logs raise parse errors with file and line") {
    const auto dir = scratch_dir("report_bad");
    write_file_atomic(dir / "empty.csv", "");
    CHECK_THROWS_AS(read_step_log_csv(dir / "empty.csv"), ParseError);

    write_file_atomic(dir / "header.csv", "nope\n");
    try {
        read_step_log_csv(dir / "header.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 1);
    }

    write_file_atomic(dir / "fields.csv", step_log_csv_header() + "\n1,2,3\n");
    try {
        read_step_log_csv(dir / "fields.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 2);
        CHECK(std::string(e.what()).find("fields.csv:2") != std::string::npos);
    }

    write_file_atomic(dir / "number.csv",
                      step_log_csv_header() + "\n1,x,0,0,0,0,0,,\n");
    CHECK_THROWS_AS(read_step_log_csv(dir / "number.csv"), ParseError);
}

TEST_CASE("charts are valid standalone svg documents") {
    RunSeries run{"sago_run", sample_logs()};
    const std::string loss_svg = loss_chart_svg(run);
    const std::string cosine_svg = cosine_chart_svg(run);
    for (const std::string* svg : {&loss_svg, &cosine_svg}) {
        CHECK(svg->rfind("<svg xmlns=", 0) == 0);
        CHECK(svg->find("</svg>") != std::string::npos);
        CHECK(svg->find("<path d=\"M") != std::string::npos);
    }
    CHECK(loss_svg.find("retain loss") != std::string::npos);
    CHECK(loss_svg.find("forget loss") != std::string::npos);
    CHECK(cosine_svg.find("cos(final, retain)") != std::string::npos);
    // deterministic output
    CHECK(loss_chart_svg(run) == loss_svg);
}

TEST_CASE("final_point and pareto marking") {
    RunSeries run{"r", sample_logs()};
    const RunPoint point = final_point(run);
    CHECK(point.forget_acc == run.logs.back().forget_acc.value());
    CHECK(point.retain_acc == run.logs.back().retain_acc.value());

    RunSeries no_acc{"empty", {StepLog{}}};
    CHECK_THROWS_AS(final_point(no_acc), InputError);

    std::vector<RunPoint> points = {
        {"a", 0.1, 0.9, false},  // dominates b
        {"b", 0.3, 0.5, false},
        {"c", 0.05, 0.4, false},  // lower forget than a, lower retain: not dominated
    };
    mark_pareto_points(points);
    CHECK(points[0].pareto);
    CHECK_FALSE(points[1].pareto);
    CHECK(points[2].pareto);
}

TEST_CASE("scatter svg has one dot per run") {
    std::vector<RunPoint> points = {{"naive", 0.0, 0.5, false},
                                    {"pcgrad", 0.0, 0.85, false},
                                    {"sago", 0.0, 1.0, false}};
    mark_pareto_points(points);
    const std::string svg = tradeoff_scatter_svg(points);
    CHECK(count_occurrences(svg, "fill=\"#1f77b4\"") == 3);
    CHECK(svg.find("sago (pareto)") != std::string::npos);
    CHECK(svg.find("naive") != std::string::npos);
}

TEST_CASE("cosine summary matches an independent mean computation") {
    const auto dir = scratch_dir("summary");
    RunSeries run{"run_a", sample_logs()};
    write_step_log_csv(run.logs, dir / "run_a.csv");
    const std::string summary = cosine_summary_csv({run});

    // independent re-computation straight from the csv text
    const std::string content = read_file(dir / "run_a.csv");
    std::istringstream in(content);
    std::string line;
    std::getline(in, line);  // header
    double fr = 0, cf = 0, cr = 0;
    int n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string field;
        std::vector<std::string> cols;
        while (std::getline(fields, field, ',')) cols.push_back(field);
        fr += std::stod(cols[3]);
        cf += std::stod(cols[4]);
        cr += std::stod(cols[5]);
        ++n;
    }
    std::istringstream summary_in(summary);
    std::getline(summary_in, line);  // header
    std::getline(summary_in, line);
    std::istringstream row(line);
    std::vector<std::string> cols;
    std::string field;
    while (std::getline(row, field, ',')) cols.push_back(field);
    REQUIRE(cols.size() == 4);
    CHECK(cols[0] == "run_a");
    CHECK(std::stod(cols[1]) == doctest::Approx(fr / n).epsilon(1e-9));
    CHECK(std::stod(cols[2]) == doctest::Approx(cf / n).epsilon(1e-9));
    CHECK(std::stod(cols[3]) == doctest::Approx(cr / n).epsilon(1e-9));
}
