#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "unlearn/io_util.hpp"

using namespace unlearn;
using testing_support::lookup_model;
using testing_support::scratch_dir;
using testing_support::small_world;

namespace {

UnlearnConfig base_config() {
    UnlearnConfig cfg;
    cfg.forget_objective = ForgetObjective::GA;
    cfg.combiner = CombinerKind::SAGO;
    cfg.eta = 0.05;
    cfg.steps = 30;
    cfg.forget_batch = 8;
    cfg.retain_batch = 8;
    cfg.seed = 2;
    return cfg;
}

}  // namespace

TEST_CASE("evaluate on a random model stays near chance") {
    ModelDims dims;
    const TinyLM model = TinyLM::init(99, dims);
    std::mt19937_64 rng(15);
    ProbeSet probes;
    for (int i = 0; i < 100; ++i) {
        Probe p;
        p.prefix = {static_cast<Token>(rng() % 32), static_cast<Token>(rng() % 32)};
        p.answer = static_cast<Token>(rng() % 32);
        probes.probes.push_back(p);
    }
    const EvalResult result = evaluate(model, probes);
    CHECK(result.accuracy >= 0.0);
    CHECK(result.accuracy <= 0.15);
    CHECK(result.mean_log_likelihood < 0.0);
}

TEST_CASE("evaluate on a lookup-table model is perfect") {
    const TinyLM model = lookup_model(8);
    ProbeSet probes;
    for (int i = 0; i < 8; ++i) probes.probes.push_back(Probe{{i}, (i + 1) % 8});
    CHECK(evaluate(model, probes).accuracy == 1.0);
}

TEST_CASE("evaluate input validation") {
    const TinyLM model = lookup_model(4);
    CHECK_THROWS_AS(evaluate(model, ProbeSet{}), InputError);
    ProbeSet wrong;
    wrong.probes.push_back(Probe{{1, 2}, 3});  // model context is 1
    CHECK_THROWS_AS(evaluate(model, wrong), InputError);
}

TEST_CASE("gradient_geometry examples") {
    ModuleGradients g_f, g_r, g_final;
    g_f.add("m", {0, 2});
    g_r.add("m", {3, 0});
    g_final.add("m", {3, 0});
    const auto ortho = gradient_geometry(g_f, g_r, g_final);
    CHECK(ortho.cos_fr == 0.0);
    CHECK(ortho.cos_cf == 0.0);
    CHECK(ortho.cos_cr == doctest::Approx(1.0).epsilon(1e-12));

    ModuleGradients f2, r2, c2;
    f2.add("m", {2, -3});
    r2.add("m", {1, 1});
    c2.add("m", {2, 1});
    const auto sago = gradient_geometry(f2, r2, c2);
    CHECK(sago.cos_fr == doctest::Approx(-1.0 / std::sqrt(26.0)).epsilon(1e-12));
    CHECK(sago.cos_cf == doctest::Approx(1.0 / std::sqrt(65.0)).epsilon(1e-12));
    CHECK(sago.cos_cr == doctest::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-12));

    const auto same = gradient_geometry(f2, f2, f2);
    CHECK(same.cos_fr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.cos_cf == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.cos_cr == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("batch cycler covers the corpus once per epoch") {
    Corpus corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back({i, i + 1});
    BatchCycler cycler(corpus, 6, 42);
    const Batch epoch = cycler.next();
    REQUIRE(epoch.size() == 6);
    // a permutation: every sequence appears exactly once
    for (const auto& seq : corpus) {
        CHECK(std::count(epoch.begin(), epoch.end(), seq) == 1);
    }
    CHECK_THROWS_AS(BatchCycler(Corpus{}, 2, 1), InputError);
}

TEST_CASE("unlearn validates inputs") {
    const auto& world = small_world();
    UnlearnConfig cfg = base_config();
    cfg.steps = 0;
    CHECK_THROWS_AS(
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg),
        InputError);
    cfg = base_config();
    cfg.eta = 0.0;
    CHECK_THROWS_AS(
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg),
        InputError);
    cfg = base_config();
    CHECK_THROWS_AS(run_unlearn(world.pretrained, Corpus{}, world.data.retain_corpus, cfg),
                    InputError);
}

TEST_CASE("unlearn logs are complete and deterministic") {
    const auto& world = small_world();
    const UnlearnConfig cfg = base_config();
    auto [model_a, logs_a] =
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg,
                    &world.data.forget_probes, &world.data.retain_probes);
    auto [model_b, logs_b] =
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg,
                    &world.data.forget_probes, &world.data.retain_probes);

    REQUIRE(logs_a.size() == 30);
    for (std::size_t i = 0; i < logs_a.size(); ++i) {
        CHECK(logs_a[i].step == static_cast<int>(i) + 1);
    }
    CHECK(model_a.params().flattened() == model_b.params().flattened());
    for (std::size_t i = 0; i < logs_a.size(); ++i) {
        CHECK(logs_a[i].forget_loss == logs_b[i].forget_loss);
        CHECK(logs_a[i].cos_cr == logs_b[i].cos_cr);
        CHECK(logs_a[i].forget_acc.has_value() == ((logs_a[i].step % 10 == 0) ||
                                                   logs_a[i].step == 30));
        CHECK(logs_a[i].forget_acc == logs_b[i].forget_acc);
    }
}

TEST_CASE("gamma zero reduces to pure retain descent") {
    const auto& world = small_world();
    UnlearnConfig cfg = base_config();
    cfg.combiner = CombinerKind::Naive;
    cfg.gamma = 0.0;
    cfg.alpha = 1.0;
    cfg.steps = 40;
    auto [model, logs] =
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg);

    // oracle: plain GD over the same retain batch stream
    TinyLM oracle = world.pretrained.snapshot();
    BatchCycler cycler(world.data.retain_corpus, cfg.retain_batch,
                       derive_seed(cfg.seed, "retain"));
    for (int t = 1; t <= cfg.steps; ++t) {
        oracle.apply_update(loss_gd(cycler.next(), oracle).grads, cfg.eta);
    }
    CHECK(model.params().flattened() == oracle.params().flattened());
}

TEST_CASE("sago under total conflict is a pure retain step") {
    // forget corpus == retain corpus with a single sequence makes the GA and
    // GD gradients exact negations on every step
    const auto& world = small_world();
    Corpus one = {world.data.retain_corpus[0]};
    UnlearnConfig cfg = base_config();
    cfg.combiner = CombinerKind::SAGO;
    cfg.forget_batch = 1;
    cfg.retain_batch = 1;
    cfg.steps = 25;
    auto [model, logs] = run_unlearn(world.pretrained, one, one, cfg);

    TinyLM oracle = world.pretrained.snapshot();
    for (int t = 1; t <= cfg.steps; ++t) {
        oracle.apply_update(loss_gd(one, oracle).grads, cfg.eta);
    }
    CHECK(model.params().flattened() == oracle.params().flattened());
    for (const auto& log : logs) {
        CHECK(log.conflict_fraction > 0.75);  // every touched coordinate conflicts
    }

    // with alpha < 1 the trajectory is retain descent scaled by alpha
    cfg.alpha = 0.5;
    auto [scaled_model, scaled_logs] = run_unlearn(world.pretrained, one, one, cfg);
    TinyLM scaled_oracle = world.pretrained.snapshot();
    for (int t = 1; t <= cfg.steps; ++t) {
        const ModuleGradients g = loss_gd(one, scaled_oracle).grads;
        scaled_oracle.apply_update(weighted_sum(cfg.alpha, g, 0.0, g.zeros_like()), cfg.eta);
    }
    CHECK(scaled_model.params().flattened() == scaled_oracle.params().flattened());
}

TEST_CASE("pcgrad and sago keep the combined gradient aligned with retain") {
    const auto& world = small_world();
    for (CombinerKind kind :
         {CombinerKind::PCGradGlobal, CombinerKind::PCGradModuleWise, CombinerKind::SAGO}) {
        UnlearnConfig cfg = base_config();
        cfg.combiner = kind;
        cfg.steps = 30;
        auto [model, logs] =
            run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg);
        for (const auto& log : logs) {
            CHECK(log.cos_cr >= -1e-12);
        }
    }
}

TEST_CASE("npo reference snapshot is taken before the first step") {
    const auto& world = small_world();
    UnlearnConfig cfg = base_config();
    cfg.forget_objective = ForgetObjective::NPO;
    cfg.steps = 10;
    auto [model, logs] =
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg);
    REQUIRE(logs.size() == 10);
    // at step 1 the model equals the reference, so the NPO loss is 2 ln 2
    CHECK(logs[0].forget_loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("step log csv round trip") {
    const auto& world = small_world();
    UnlearnConfig cfg = base_config();
    cfg.steps = 12;
    auto [model, logs] =
        run_unlearn(world.pretrained, world.data.forget_corpus, world.data.retain_corpus, cfg,
                    &world.data.forget_probes, &world.data.retain_probes);
    const auto dir = scratch_dir("steplog");
    write_step_log_csv(logs, dir / "log.csv");
    const std::string content = read_file(dir / "log.csv");
    CHECK(content.rfind("step,forget_loss,retain_loss,cos_fr,cos_cf,cos_cr,conflict_fraction,"
                        "forget_acc,retain_acc\n",
                        0) == 0);
    // 12 data rows, accs only on eval steps
    CHECK(std::count(content.begin(), content.end(), '\n') == 13);
}

TEST_CASE("batch cycler handles batches larger than the corpus") {
    Corpus corpus = {{1, 2}, {3, 4}};
    BatchCycler cycler(corpus, 5, 7);
    const Batch batch = cycler.next();
    REQUIRE(batch.size() == 5);
    for (const auto& seq : batch) {
        CHECK((seq == corpus[0] || seq == corpus[1]));
    }
    // two full epochs plus one are consumed; both sequences appear
    CHECK(std::count(batch.begin(), batch.end(), corpus[0]) >= 2);
    CHECK(std::count(batch.begin(), batch.end(), corpus[1]) >= 2);
}

TEST_CASE("pareto marking keeps exactly the non-dominated rows") {
    std::vector<SweepRow> rows(3);
    rows[0].forget_acc = 0.1;
    rows[0].retain_acc = 0.9;  // dominates rows[1]
    rows[1].forget_acc = 0.3;
    rows[1].retain_acc = 0.5;
    rows[2].forget_acc = 0.05;
    rows[2].retain_acc = 0.4;  // trades lower forget for lower retain
    mark_pareto(rows);
    CHECK(rows[0].pareto);
    CHECK_FALSE(rows[1].pareto);
    CHECK(rows[2].pareto);

    // two cells where A beats B on both axes: frontier is {A}
    std::vector<SweepRow> pair(2);
    pair[0].forget_acc = 0.2;
    pair[0].retain_acc = 0.8;
    pair[1].forget_acc = 0.4;
    pair[1].retain_acc = 0.6;
    mark_pareto(pair);
    CHECK(pair[0].pareto);
    CHECK_FALSE(pair[1].pareto);
}

TEST_CASE("run_sweep is sorted, flagged, and deterministic") {
    const auto& world = small_world();
    UnlearnConfig base = base_config();
    base.steps = 20;
    SweepGrid grid;
    grid.combiners = {CombinerKind::SAGO, CombinerKind::Naive, CombinerKind::PCGradModuleWise};
    grid.alphas = {1.0};
    grid.gammas = {0.4, 0.7, 1.0};
    grid.etas = {0.05};

    const auto rows_a = run_sweep(world.pretrained, world.data.forget_corpus,
                                  world.data.retain_corpus, world.data.forget_probes,
                                  world.data.retain_probes, base, grid);
    const auto rows_b = run_sweep(world.pretrained, world.data.forget_corpus,
                                  world.data.retain_corpus, world.data.forget_probes,
                                  world.data.retain_probes, base, grid);
    REQUIRE(rows_a.size() == 9);
    CHECK(sweep_to_csv(rows_a) == sweep_to_csv(rows_b));
    // sorted by combiner name, then weights
    CHECK(rows_a[0].combiner == CombinerKind::Naive);
    CHECK(rows_a[3].combiner == CombinerKind::PCGradModuleWise);
    CHECK(rows_a[6].combiner == CombinerKind::SAGO);
    CHECK(rows_a[0].gamma < rows_a[1].gamma);
    // at least one row is on the frontier
    CHECK(std::any_of(rows_a.begin(), rows_a.end(), [](const auto& r) { return r.pareto; }));

    SweepGrid empty = grid;
    empty.alphas = {};
    CHECK_THROWS_AS(run_sweep(world.pretrained, world.data.forget_corpus,
                              world.data.retain_corpus, world.data.forget_probes,
                              world.data.retain_probes, base, empty),
                    InputError);
    SweepGrid out_of_range = grid;
    out_of_range.gammas = {0.05};
    CHECK_THROWS_AS(run_sweep(world.pretrained, world.data.forget_corpus,
                              world.data.retain_corpus, world.data.forget_probes,
                              world.data.retain_probes, base, out_of_range),
                    InputError);
}

TEST_CASE("single-cell sweep yields one pareto row") {
    const auto& world = small_world();
    UnlearnConfig base = base_config();
    base.steps = 15;
    SweepGrid grid;
    grid.combiners = {CombinerKind::SAGO};
    grid.alphas = {1.0};
    grid.gammas = {1.0};
    grid.etas = {0.05};
    const auto rows = run_sweep(world.pretrained, world.data.forget_corpus,
                                world.data.retain_corpus, world.data.forget_probes,
                                world.data.retain_probes, base, grid);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].pareto);
}
