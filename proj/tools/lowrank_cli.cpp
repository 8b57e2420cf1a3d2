// lowrank: command-line front end for the rank-dynamics constructions,
// cascade evaluation, segment-tree queries and the strategy benchmark.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lowrank/lowrank.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lowrank;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kSearchFailure = 2, kOracleMismatch = 3 };

// Raised when a verification inside a subcommand fails.
class VerificationFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 1;
    std::optional<double> tol;
    int samples = 7;
    std::string csv;
    std::string json_out;
};

SampleSpec sample_spec(const Globals& g) {
    SampleSpec spec = SampleSpec::defaults(SampleSpec::kDefaultSeed, g.samples);
    spec.tolerance = g.tol;
    spec.validate();
    return spec;
}

void emit(const Globals& g, const json& report) {
    const std::string text = report.dump(2) + "\n";
    if (!g.json_out.empty()) write_text_file(g.json_out, text);
    std::cout << text;
}

json leibniz_json(const RankSequence& ranks) {
    const auto rep = check_leibniz_bounds(ranks);
    return {{"passed", rep.passed()}, {"first_failure", rep.first_failure()}, {"step_ok", rep.step_ok},
            {"linear_ok", rep.linear_ok}};
}

RankSequence read_q(const json& spec) {
    RankSequence q;
    if (spec.contains("q")) q.values = spec.at("q").get<std::vector<int>>();
    return q;
}

// ---------------------------------------------------------------------------
// construct

json construct(const json& spec, const Globals& g, const std::string& out_prefix) {
    const std::string kind = spec.at("kind").get<std::string>();
    const std::uint64_t seed = spec.value("seed", g.seed);
    const SampleSpec samples = sample_spec(g);
    json report{{"kind", kind}, {"seed", seed}};
    std::optional<ExpPolyMatrix> l1;
    std::optional<ExpPolyMatrix> w;
    RankSequence measured;
    std::optional<RankSequence> target;
    bool pass = true;

    auto profile = [&](const ExpPolyMatrix& f, int k) {
        return RankSequence{derivative_rank_profile(f, k, samples)};
    };

    if (kind == "vandermonde") {
        const int n = spec.at("n").get<int>(), k = spec.at("k").get<int>();
        l1 = construct_vandermonde_counterexample(n, k);
        measured = profile(*l1, k);
        RankSequence q;
        for (int i = 1; i <= k; ++i) q.values.push_back(i);
        target = q;
    } else if (kind == "decomposable") {
        DecomposableSpec ds;
        ds.n = spec.at("n").get<int>();
        ds.r1 = spec.at("r1").get<int>();
        ds.seed = seed;
        if (spec.contains("degrees")) {
            ds.func_degrees = spec.at("degrees").get<std::vector<int>>();
        } else {
            Rng rng(seed);
            const int max_degree = spec.value("max_degree", 5);
            for (int j = 0; j < ds.r1; ++j) ds.func_degrees.push_back(static_cast<int>(rng.integer(0, max_degree)));
        }
        const int k = spec.value("k", 6);
        l1 = construct_decomposable(ds);
        measured = profile(*l1, k);
        bool monotone = true;
        for (int i = 2; i <= k; ++i) monotone = monotone && measured(i) <= measured(i - 1);
        report["monotone"] = monotone;
        report["degrees"] = ds.func_degrees;
        pass = monotone;
    } else if (kind == "ode") {
        const int n = spec.at("n").get<int>();
        const std::string variant = spec.value("variant", "highorder");
        Rng rng(seed);
        const Matrix c = rng.integers(n, n, -3, 3).cast<double>();
        bool exact = false;
        if (variant == "highorder") {
            const int k = spec.at("k").get<int>();
            const Vector u = rng.integers(n, 1, -3, 3).col(0);
            const Vector v = rng.integers(n, 1, -3, 3).col(0);
            w = construct_highorder_ode(n, k, c, u, v);
            const auto ls = l_sequence(*w, k);
            l1 = ls.front();
            double worst = 0.0;
            for (double t : {0.3, 0.7, 1.1, 1.9, 2.6}) {
                for (int i = 1; i <= k; ++i) {
                    double coeff = 1.0;
                    for (int s = k - i + 2; s <= k; ++s) coeff *= s;
                    const Matrix closed = coeff * std::pow(t, k - i) * (t - k + i - 1) * (u * v.transpose());
                    worst = std::max(worst, max_relative_error(evaluate(ls[static_cast<std::size_t>(i - 1)], t), closed));
                }
            }
            report["closed_form_max_rel_err"] = worst;
            exact = (*w - differentiate(*w)) == *l1;
            pass = worst <= 1e-9;
            measured = profile(*l1, k);
        } else if (variant == "constant" || variant == "linear") {
            std::vector<Matrix> coeffs{rng.integers(n, n, -3, 3).cast<double>()};
            if (variant == "linear") coeffs.push_back(rng.integers(n, n, -3, 3).cast<double>());
            l1 = ExpPolyMatrix::polynomial(std::move(coeffs));
            w = solve_first_order_ode(*l1, c);
            exact = (*w - differentiate(*w)) == *l1;
            measured = profile(*l1, spec.value("k", 2));
        } else {
            throw std::invalid_argument("ode variant must be constant, linear or highorder");
        }
        report["variant"] = variant;
        report["exact"] = exact;
        pass = pass && exact;
    } else if (kind == "rank_at_zero") {
        const RankSequence q = read_q(spec);
        const int n = spec.at("n").get<int>();
        auto built = construct_rank_at_zero(n, q, seed);
        l1 = built.l1;
        const auto chain = derivative_chain(*l1, q.k());
        for (const auto& li : chain) measured.values.push_back(numeric_rank(evaluate(li, 0.0)));
        report["evaluated_at"] = 0.0;
        target = q;
    } else if (kind == "generic_match") {
        const RankSequence q = read_q(spec);
        auto built = construct_generic_rank_matching(q, {}, samples);
        l1 = built.l1;
        json blocks = json::array();
        for (const auto& b : built.blocks) blocks.push_back({{"m", b.m}, {"d", b.d}});
        report["blocks"] = blocks;
        measured = profile(*l1, q.k());
        target = q;
    } else if (kind == "ordering") {
        OrderingSpec os;
        os.k = spec.at("k").get<int>();
        os.permutation = spec.at("pi").get<std::vector<int>>();
        for (const auto& r : spec.at("relations")) os.relations.push_back(parse_relation(r.get<std::string>()));
        auto built = construct_rank_ordering(os, {}, samples);
        l1 = built.l1;
        measured = profile(*l1, os.k);
        report["ordering_satisfied"] = ordering_satisfied(os, measured);
        report["strict_bound"] = built.targets.satisfies_strict_leibniz();
        pass = ordering_satisfied(os, measured);
        target = built.targets;
    } else {
        throw std::invalid_argument("unknown construction kind '" + kind + "'");
    }

    if (target) {
        report["q"] = target->values;
        pass = pass && measured == *target;
    }
    report["ranks"] = measured.values;
    report["leibniz"] = leibniz_json(measured);
    pass = pass && check_leibniz_bounds(measured).passed();
    report["pass"] = pass;
    report["rows"] = l1->rows();

    if (!out_prefix.empty()) {
        write_text_file(out_prefix + ".json", to_json(*l1).dump() + "\n");
        if (w) write_text_file(out_prefix + ".W.json", to_json(*w).dump() + "\n");
        write_text_file(out_prefix + ".report.json", report.dump(2) + "\n");
    }
    return report;
}

// ---------------------------------------------------------------------------
// eval / segtree / tseg bundles

CascadeModel load_model(const fs::path& path) {
    const json m = read_json_file(path);
    const fs::path dir = path.parent_path();
    std::vector<Adapter> adapters;
    for (const auto& entry : m.value("adapters", json::array()))
        adapters.push_back({read_manifest_matrix(dir, entry, "A"), read_manifest_matrix(dir, entry, "B")});
    return CascadeModel(read_manifest_matrix(dir, m, "W"), std::move(adapters),
                        parse_activation(m.value("activation", "identity")));
}

std::vector<Adapter> load_adapters(const fs::path& path) {
    const json m = read_json_file(path);
    std::vector<Adapter> adapters;
    for (const auto& entry : m.at("adapters"))
        adapters.push_back({read_manifest_matrix(path.parent_path(), entry, "A"),
                            read_manifest_matrix(path.parent_path(), entry, "B")});
    return adapters;
}

std::vector<CpFactors> load_factors(const fs::path& path) {
    const json m = read_json_file(path);
    std::vector<CpFactors> factors;
    for (const auto& entry : m.at("factors"))
        factors.push_back({read_manifest_matrix(path.parent_path(), entry, "A"),
                           read_manifest_matrix(path.parent_path(), entry, "B"),
                           read_manifest_matrix(path.parent_path(), entry, "C")});
    return factors;
}

json eval_cmd(const std::string& model_path, const std::string& input, const std::string& prefix) {
    const CascadeModel model = load_model(model_path);
    const Matrix x = lrmx::read_file(input);
    const auto fast = eval_all_orders(model, x);
    const auto slow = eval_naive(model, x);
    const auto est = flop_estimate(model, x.cols());
    double err = 0.0;
    json outputs = json::array();
    for (std::size_t i = 0; i < fast.orders.size(); ++i) {
        err = std::max(err, max_relative_error(fast.orders[i], slow.orders[i]));
        const std::string file = prefix + "_" + std::to_string(i) + ".lrmx";
        lrmx::write_file(file, fast.orders[i]);
        outputs.push_back(file);
    }
    json report{{"n", model.n()},
                {"k", model.k()},
                {"b", x.cols()},
                {"activation", to_string(model.activation())},
                {"cascade_flops", fast.flops_used},
                {"naive_flops", slow.flops_used},
                {"estimate_cascade", est.cascade},
                {"estimate_naive", est.naive},
                {"max_rel_err_vs_naive", err},
                {"outputs", outputs}};
    if (!(err <= 1e-12)) throw VerificationFailed("cascade output disagrees with naive evaluation: " + std::to_string(err));
    return report;
}

json cost_json(const CostEstimate& c) {
    return {{"flops_tree", c.tree_flops}, {"flops_otf", c.onthefly_flops}, {"strategy_chosen", to_string(c.chosen)}};
}

json segtree_query(const std::string& bundle, int lo, int hi, const std::string& input, const std::string& strategy,
                   const std::string& out, bool emit_cost) {
    const auto tree = MatrixSegTree::init(load_adapters(bundle));
    const Matrix x = lrmx::read_file(input);
    const auto res = tree.query(lo, hi, x, parse_strategy(strategy));
    if (!out.empty()) lrmx::write_file(out, res.value);
    json report{{"lo", lo}, {"hi", hi}, {"k", tree.k()}, {"n", tree.n()}, {"b", x.cols()},
                {"strategy_run", to_string(res.executed)}, {"flops_measured", res.flops}};
    if (emit_cost) {
        report["cost"] = cost_json(tree.cost_model(lo, hi, x.cols()));
        report["cover"] = tree.layout().cover(lo, hi);
        report["max_rel_err"] = max_relative_error(res.value, brute_force_range_sum(tree.adapters(), {lo, hi}, x));
    }
    return report;
}

json tseg_query(const std::string& bundle, int lo, int hi, const std::string& input, const std::string& strategy,
                const std::string& out, bool emit_cost) {
    const auto tree = TensorSegTree::init(load_factors(bundle));
    const Matrix x = lrmx::read_file(input);
    const auto res = tree.query(lo, hi, x, parse_strategy(strategy));
    // The n x n x b result is written as its (n*n) x b unfolding.
    if (!out.empty())
        lrmx::write_file(out, Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                                  res.value.values().data(), tree.n() * tree.n(), x.cols()));
    json report{{"lo", lo}, {"hi", hi}, {"k", tree.k()}, {"n", tree.n()}, {"b", x.cols()},
                {"strategy_run", to_string(res.executed)}, {"flops_measured", res.flops}};
    if (emit_cost) {
        report["cost"] = cost_json(tree.cost_model(lo, hi, x.cols()));
        report["max_rel_err"] =
            max_relative_error(res.value, brute_force_tensor_range_sum(tree.factors(), {lo, hi}, x));
    }
    return report;
}

// gen: seeded random inputs in the manifest formats above.
json gen_cmd(const std::string& what, const fs::path& dir, int n, int k, std::vector<int> ranks, int b,
             const std::string& activation, std::uint64_t seed) {
    fs::create_directories(dir);
    Rng rng(seed);
    if (ranks.empty()) ranks = {2};
    auto rank = [&](int i) { return ranks[static_cast<std::size_t>(i) % ranks.size()]; };
    json manifest;
    std::string name;
    if (what == "model") {
        name = "model.json";
        lrmx::write_file(dir / "W.lrmx", rng.gaussian(n, n));
        manifest["W"] = "W.lrmx";
        manifest["activation"] = activation;
    }
    if (what == "model" || what == "adapters") {
        if (name.empty()) name = "adapters.json";
        manifest["adapters"] = json::array();
        for (int i = 0; i < k; ++i) {
            const std::string a = "A" + std::to_string(i + 1) + ".lrmx", bb = "B" + std::to_string(i + 1) + ".lrmx";
            lrmx::write_file(dir / a, rng.gaussian(n, rank(i)));
            lrmx::write_file(dir / bb, rng.gaussian(rank(i), n));
            manifest["adapters"].push_back({{"A", a}, {"B", bb}});
        }
    } else if (what == "factors") {
        name = "factors.json";
        manifest["factors"] = json::array();
        for (int i = 0; i < k; ++i) {
            json entry;
            for (const char* f : {"A", "B", "C"}) {
                const std::string file = std::string(f) + std::to_string(i + 1) + ".lrmx";
                lrmx::write_file(dir / file, rng.gaussian(n, rank(i)));
                entry[f] = file;
            }
            manifest["factors"].push_back(entry);
        }
    } else if (what != "model") {
        throw std::invalid_argument("gen: unknown target '" + what + "' (model, adapters, factors)");
    }
    write_text_file(dir / name, manifest.dump(2) + "\n");
    lrmx::write_file(dir / "X.lrmx", rng.gaussian(n, b));
    return {{"manifest", (dir / name).string()}, {"input", (dir / "X.lrmx").string()}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lowrank: derivative-rank constructions, cascade evaluation and low-rank segment trees"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::optional<double> tol;
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    app.add_option("--tol", tol, "relative singular-value tolerance for rank decisions");
    app.add_option("--samples", g.samples, "random sample points for generic rank")->capture_default_str();
    app.add_option("--csv", g.csv, "CSV output path (bench)");
    app.add_option("--json", g.json_out, "also write the JSON report to this path");

    auto* construct_cmd = app.add_subcommand("construct", "build a rank-dynamics instance from a JSON spec");
    std::string spec_path, out_prefix;
    construct_cmd->add_option("--spec", spec_path, "construction spec JSON")->required()->check(CLI::ExistingFile);
    construct_cmd->add_option("--out", out_prefix, "output prefix for <prefix>.json and <prefix>.report.json");

    auto* verify_cmd = app.add_subcommand("verify", "measure the derivative rank profile of an ExpPolyMatrix");
    std::string verify_input;
    int verify_k = 3, trials = 100;
    std::vector<int> verify_target;
    bool negative = false;
    verify_cmd->add_option("--input", verify_input, "ExpPolyMatrix JSON (L_1)")->check(CLI::ExistingFile);
    verify_cmd->add_option("--k", verify_k, "number of orders")->capture_default_str();
    verify_cmd->add_option("--target", verify_target, "expected ranks q(1..k)");
    verify_cmd->add_flag("--negative", negative, "check rank(L_3) <= 3 over random rank-one polynomials");
    verify_cmd->add_option("--trials", trials, "trials for --negative")->capture_default_str();

    auto* eval_cmd_app = app.add_subcommand("eval", "evaluate all cascade orders G_0..G_k");
    std::string model_path, eval_input, eval_prefix = "G";
    eval_cmd_app->add_option("--model", model_path, "model manifest JSON")->required()->check(CLI::ExistingFile);
    eval_cmd_app->add_option("--input", eval_input, "input LRMX (n x b)")->required()->check(CLI::ExistingFile);
    eval_cmd_app->add_option("--out-prefix", eval_prefix, "writes <prefix>_i.lrmx")->capture_default_str();

    struct QueryArgs {
        std::string bundle, input, strategy = "auto", out;
        int lo = 1, hi = 1;
        bool emit_cost = false;
    };
    QueryArgs mq, tq;
    auto add_query = [](CLI::App* parent, QueryArgs& q, const char* bundle_help) {
        auto* cmd = parent->add_subcommand("query", "range query over [lo, hi]");
        cmd->add_option("--bundle", q.bundle, bundle_help)->required()->check(CLI::ExistingFile);
        cmd->add_option("--lo", q.lo, "first index (1-based)")->required();
        cmd->add_option("--hi", q.hi, "last index (inclusive)")->required();
        cmd->add_option("--input", q.input, "input LRMX (n x b)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--strategy", q.strategy, "auto, tree or onthefly")->capture_default_str();
        cmd->add_option("--out", q.out, "result LRMX path");
        cmd->add_flag("--emit-cost", q.emit_cost, "report cost model, cover and oracle error");
        return cmd;
    };
    auto* seg_cmd = app.add_subcommand("segtree", "matrix segment tree over adapters");
    seg_cmd->require_subcommand(1);
    add_query(seg_cmd, mq, "adapter bundle JSON");
    auto* tseg_cmd = app.add_subcommand("tseg", "tensor segment tree over CP factors");
    tseg_cmd->require_subcommand(1);
    add_query(tseg_cmd, tq, "factor bundle JSON");

    auto* gen_cmd_app = app.add_subcommand("gen", "write seeded random bundles");
    std::string gen_what, gen_dir;
    int gen_n = 16, gen_k = 4, gen_b = 4;
    std::vector<int> gen_ranks{2};
    std::string gen_activation = "identity";
    gen_cmd_app->add_option("what", gen_what, "model, adapters or factors")->required();
    gen_cmd_app->add_option("--dir", gen_dir, "output directory")->required();
    gen_cmd_app->add_option("--n", gen_n)->capture_default_str();
    gen_cmd_app->add_option("--k", gen_k)->capture_default_str();
    gen_cmd_app->add_option("--b", gen_b, "columns of X.lrmx")->capture_default_str();
    gen_cmd_app->add_option("--ranks", gen_ranks, "adapter ranks, cycled")->capture_default_str();
    gen_cmd_app->add_option("--activation", gen_activation)->capture_default_str();

    auto* bench_cmd = app.add_subcommand("bench", "tree vs on-the-fly benchmark grid");
    BenchGrid grid;
    std::string interval_mode = "sweep", bench_kind = "matrix";
    bool no_timing = false;
    bench_cmd->add_option("--kind", bench_kind, "matrix or tensor")->capture_default_str();
    bench_cmd->add_option("--n", grid.n_values)->capture_default_str();
    bench_cmd->add_option("--k", grid.k_values)->capture_default_str();
    bench_cmd->add_option("--b", grid.b_values)->capture_default_str();
    bench_cmd->add_option("--ranks", grid.ranks, "adapter ranks, cycled")->capture_default_str();
    bench_cmd->add_option("--intervals", interval_mode, "full, random or sweep")->capture_default_str();
    bench_cmd->add_option("--random-intervals", grid.random_intervals)->capture_default_str();
    bench_cmd->add_option("--trials", grid.trials)->capture_default_str();
    bench_cmd->add_flag("--no-timing", no_timing, "write zero wall times (byte-stable output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    g.tol = tol;

    try {
        if (*construct_cmd) {
            const json report = construct(read_json_file(spec_path), g, out_prefix);
            emit(g, report);
            return report.at("pass").get<bool>() ? kOk : kOracleMismatch;
        }
        if (*verify_cmd) {
            const SampleSpec samples = sample_spec(g);
            if (negative) {
                const auto rep = verify_negative_example(trials, g.seed, samples);
                const int witness = generic_rank(differentiate(negative_example_witness(), 2), samples);
                const json report{{"trials", rep.trials}, {"max_rank", rep.max_rank}, {"violations", rep.violations},
                                  {"witness_rank", witness}, {"pass", rep.violations == 0 && witness == 3}};
                emit(g, report);
                return report["pass"].get<bool>() ? kOk : kOracleMismatch;
            }
            if (verify_input.empty()) throw CLI::RequiredError("--input");
            const auto l1 = exp_poly_from_json(read_json_file(verify_input));
            const RankSequence ranks{derivative_rank_profile(l1, verify_k, samples)};
            json report{{"ranks", ranks.values}, {"leibniz", leibniz_json(ranks)}};
            bool pass = check_leibniz_bounds(ranks).passed();
            if (!verify_target.empty()) {
                report["q"] = verify_target;
                pass = pass && ranks.values == verify_target;
            }
            report["pass"] = pass;
            emit(g, report);
            return pass ? kOk : kOracleMismatch;
        }
        if (*eval_cmd_app) {
            emit(g, eval_cmd(model_path, eval_input, eval_prefix));
            return kOk;
        }
        if (*seg_cmd) {
            emit(g, segtree_query(mq.bundle, mq.lo, mq.hi, mq.input, mq.strategy, mq.out, mq.emit_cost));
            return kOk;
        }
        if (*tseg_cmd) {
            emit(g, tseg_query(tq.bundle, tq.lo, tq.hi, tq.input, tq.strategy, tq.out, tq.emit_cost));
            return kOk;
        }
        if (*gen_cmd_app) {
            emit(g, gen_cmd(gen_what, gen_dir, gen_n, gen_k, gen_ranks, gen_b, gen_activation, g.seed));
            return kOk;
        }
        if (*bench_cmd) {
            grid.intervals = parse_interval_mode(interval_mode);
            if (bench_kind == "tensor") grid.kind = BenchKind::Tensor;
            else if (bench_kind != "matrix") throw std::invalid_argument("--kind must be matrix or tensor");
            grid.seed = g.seed;
            grid.timing = !no_timing;
            const auto rows = run_bench(grid);
            std::ostringstream csv;
            write_csv(csv, rows);
            if (g.csv.empty()) std::cout << csv.str();
            else write_text_file(g.csv, csv.str());
            int crossovers = 0, minimal = 0, autos = 0;
            for (const auto& r : rows) {
                if (r.strategy_run != QueryStrategy::Auto) continue;
                ++autos;
                crossovers += r.crossover;
                minimal += r.flops_measured == std::min(r.flops_tree, r.flops_otf);
            }
            const json summary{{"rows", rows.size()}, {"auto_rows", autos}, {"minimal_routing", minimal},
                               {"crossovers", crossovers}};
            if (!g.json_out.empty()) write_text_file(g.json_out, summary.dump(2) + "\n");
            if (!g.csv.empty()) std::cout << summary.dump(2) << "\n";
            return kOk;
        }
    } catch (const SearchExhausted& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << "q = " << to_string(e.sequence()) << "\n";
        return kSearchFailure;
    } catch (const OracleMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOracleMismatch;
    } catch (const VerificationFailed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOracleMismatch;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
