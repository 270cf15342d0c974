// Command-line front end: corpus generation, training, refinement,
// evaluation and the diagnostic tools. Every subcommand writes a JSON run
// summary next to its main output (<out>.summary.json).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "buildswitch/config.hpp"
#include "buildswitch/error.hpp"
#include "buildswitch/gradcheck.hpp"
#include "buildswitch/harness.hpp"
#include "buildswitch/io.hpp"
#include "buildswitch/pipeline.hpp"
#include "json.hpp"

using namespace bsw;
using json = nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
    c.out = default_out;
    cmd->add_option("--config", c.config, "run configuration (JSON); defaults are used when omitted");
    cmd->add_option("--seed", c.seed, "base seed")->capture_default_str();
    cmd->add_option("--out", c.out, "output path")->capture_default_str();
}

RunConfig load_config(const Common& c) { return c.config.empty() ? RunConfig{} : load_run_config(c.config); }

void write_summary(const Common& c, const std::string& command, const RunConfig& rc, const sim::Content& content,
                   json metrics) {
    json s;
    s["command"] = command;
    s["seed"] = c.seed;
    s["output"] = c.out;
    s["content_hash"] = sim::hash_hex(sim::content_hash(content));
    s["config"] = json::parse(run_config_to_json(rc));
    s["metrics"] = std::move(metrics);
    write_file(c.out + ".summary.json", s.dump(1) + "\n");
}

json loss_json(const pipe::LossReport& r) {
    return {{"q_loss", r.q_loss},         {"aux_loss", r.aux_loss},   {"total", r.total},
            {"q_error_rate", r.q_error_rate}, {"q_samples", r.q_samples}, {"aux_samples", r.aux_samples}};
}

json pool_json(const eval::PoolSummary& p) {
    return {{"aggregate", p.aggregate}, {"stddev", p.stddev}, {"games", p.games}, {"opponents", p.opponents}};
}

eval::LoadedCheckpoint load_model(const std::string& path, const RunConfig& rc, const sim::Content& content) {
    return eval::load_checkpoint(path, arch_config(rc, content), content);
}

int gen_corpus(const Common& c) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    const auto corpus = pipe::generate_corpus(rc.offpolicy, content, c.seed);
    pipe::save_corpus(corpus, content, c.out);
    std::size_t switches = 0, ticks = 0;
    int wins = 0;
    for (const auto& r : corpus) {
        switches += r.switches.size();
        ticks += r.observations.size();
        wins += r.win;
    }
    const double n = static_cast<double>(corpus.size());
    std::printf("wrote %zu games to %s (win rate %.3f, %.1f switches and %.0f ticks per game)\n", corpus.size(),
                c.out.c_str(), wins / n, switches / n, ticks / n);
    write_summary(c, "gen-corpus", rc, content,
                  {{"games", corpus.size()}, {"win_rate", wins / n}, {"switches", switches}, {"ticks", ticks}});
    return 0;
}

int train(const Common& c, const std::string& corpus_path) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    std::vector<pipe::GameRecord> corpus;
    std::uint64_t corpus_seed = c.seed;
    if (corpus_path.empty()) {
        corpus = pipe::generate_corpus(rc.offpolicy, content, c.seed);
    } else {
        corpus = pipe::load_corpus(corpus_path, content);
        corpus_seed = 0;  // provenance lives with the corpus file
    }
    const auto arch = arch_config(rc, content);
    json history = json::array();
    const auto res = pipe::train_offpolicy(corpus, rc.offpolicy, rc.featurizer, content, net::init_model(arch, c.seed),
                                           c.seed, [&](const pipe::MetricPoint& m) {
                                               std::fprintf(stderr,
                                                            "update %5d  epoch %.2f  train q %.4f err %.3f aux %.5f  "
                                                            "val q %.4f err %.3f aux %.5f\n",
                                                            m.update, m.epoch, m.train.q_loss, m.train.q_error_rate,
                                                            m.train.aux_loss, m.validation.q_loss,
                                                            m.validation.q_error_rate, m.validation.aux_loss);
                                               history.push_back({{"update", m.update},
                                                                  {"epoch", m.epoch},
                                                                  {"train", loss_json(m.train)},
                                                                  {"validation", loss_json(m.validation)}});
                                           });
    eval::save_checkpoint(res.params, eval::make_manifest(res.params, rc.featurizer, content, {corpus_seed, c.seed}),
                          c.out);
    std::printf("wrote %s after %d updates\n", c.out.c_str(), res.updates);
    write_summary(c, "train", rc, content, {{"updates", res.updates}, {"games", corpus.size()}, {"history", history}});
    return 0;
}

int refine(const Common& c, const std::string& checkpoint) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    auto loaded = load_model(checkpoint, rc, content);
    const auto res = pipe::refine_onpolicy(std::move(loaded.params), content, rc.refine, onpolicy_setup(rc),
                                           loss_config(rc), c.seed, rc.offpolicy.train_on_opening);
    auto lineage = loaded.manifest.seed_lineage;
    lineage.push_back(c.seed);
    eval::save_checkpoint(res.params, eval::make_manifest(res.params, rc.featurizer, content, lineage), c.out);
    json history = json::array();
    for (const auto& r : res.history) history.push_back(loss_json(r));
    std::printf("wrote %s after %zu updates\n", c.out.c_str(), res.history.size());
    write_summary(c, "refine", rc, content, {{"checkpoint", checkpoint}, {"history", history}});
    return 0;
}

void print_report(const eval::WinRateReport& r) {
    for (const auto& o : r.per_opponent)
        std::printf("  %-20s %s %.3f (%d games)\n", o.name.c_str(), o.held_out ? "held-out" : "training", o.rate,
                    o.games);
    std::printf("%s: training pool %.3f (sd %.3f), held-out %.3f\n", r.policy.c_str(), r.training.aggregate,
                r.training.stddev, r.held_out.aggregate);
}

int evaluate(const Common& c, const std::string& checkpoint) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    const auto loaded = load_model(checkpoint, rc, content);
    const auto report = eval::evaluate(loaded.params, rc.eval, content, onpolicy_setup(rc), c.seed);
    write_file(c.out, eval::report_to_json(report));
    print_report(report);
    write_summary(c, "eval", rc, content,
                  {{"checkpoint", checkpoint},
                   {"training_pool", pool_json(report.training)},
                   {"held_out", pool_json(report.held_out)}});
    return 0;
}

int control(const Common& c) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    const auto report = eval::control_run(rc.eval, content, c.seed);
    write_file(c.out, eval::report_to_json(report));
    print_report(report);
    write_summary(c, "control", rc, content,
                  {{"training_pool", pool_json(report.training)}, {"held_out", pool_json(report.held_out)}});
    return 0;
}

int trace(const Common& c, const std::string& checkpoint, int opponent, int map, int bo) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    expect(opponent >= 0 && opponent < static_cast<int>(content.opponents.size()), "trace: unknown opponent");
    expect(map >= 0 && map < static_cast<int>(content.maps.size()), "trace: unknown map");
    const auto& opp = content.opponents[static_cast<std::size_t>(opponent)];
    if (bo < 0) bo = content.build_orders_for(content.agent_faction, opp.faction).front();
    const auto loaded = load_model(checkpoint, rc, content);
    const auto meta = eval::eval_meta(content, opponent, map, bo, c.seed);
    const auto rows = eval::emit_trace(loaded.params, content, onpolicy_setup(rc), meta, c.out);
    std::vector<double> pred, truth;
    for (const auto& r : rows) {
        pred.push_back(r.predicted);
        truth.push_back(r.truth);
    }
    const double corr = eval::pearson(pred, truth);
    std::printf("wrote %zu rows to %s; pearson(predicted, truth) = %.3f\n", rows.size(), c.out.c_str(), corr);
    write_summary(c, "trace", rc, content,
                  {{"checkpoint", checkpoint},
                   {"opponent", opp.name},
                   {"map", content.maps[static_cast<std::size_t>(map)].name},
                   {"ticks", rows.size()},
                   {"pearson", corr}});
    return 0;
}

int tournament(const Common& c, int faction, int games) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    expect(faction >= 0 && faction < static_cast<int>(content.factions.size()), "tournament: unknown faction");
    std::vector<int> bos;
    for (const auto& b : content.build_orders)
        if (b.faction == faction && content.specialized(b.id, faction)) bos.push_back(b.id);
    const auto t = eval::tournament(content, bos, games, c.seed, rc.eval.workers);
    write_file(c.out, eval::tournament_to_json(t, content));
    for (const auto& p : t.pairings)
        std::printf("  %-18s vs %-18s %.3f\n", content.build_orders[static_cast<std::size_t>(p.a)].name.c_str(),
                    content.build_orders[static_cast<std::size_t>(p.b)].name.c_str(), p.rate());
    json cycle = nullptr;
    if (const auto cyc = eval::strongest_cycle(t)) {
        std::printf("strongest cycle: %s > %s > %s > %s (weakest edge %.3f)\n",
                    content.build_orders[static_cast<std::size_t>(cyc->build_orders[0])].name.c_str(),
                    content.build_orders[static_cast<std::size_t>(cyc->build_orders[1])].name.c_str(),
                    content.build_orders[static_cast<std::size_t>(cyc->build_orders[2])].name.c_str(),
                    content.build_orders[static_cast<std::size_t>(cyc->build_orders[0])].name.c_str(), cyc->weakest);
        cycle = cyc->weakest;
    } else {
        std::printf("results are transitive\n");
    }
    write_summary(c, "tournament", rc, content, {{"games_per_pairing", games}, {"weakest_cycle_edge", cycle}});
    return 0;
}

int gradcheck(const Common& c, int trials) {
    const RunConfig rc = load_config(c);
    const auto content = content_for(rc);
    const auto results = ad::run_gradcheck_suite(trials, c.seed);
    double worst = 0.0;
    bool finite = true;
    json per_op = json::array();
    for (const auto& r : results) {
        std::printf("  %-14s %3d trials %7zu coords  max rel error %.3e\n", r.op.c_str(), r.trials, r.coordinates,
                    r.max_rel_error);
        worst = std::max(worst, r.max_rel_error);
        finite = finite && r.all_finite;
        per_op.push_back({{"op", r.op}, {"trials", r.trials}, {"max_rel_error", r.max_rel_error}});
    }
    std::printf("max relative error %.3e%s\n", worst, finite ? "" : " (non-finite values seen)");
    write_file(c.out, json{{"max_rel_error", worst}, {"all_finite", finite}, {"ops", per_op}}.dump(1) + "\n");
    write_summary(c, "gradcheck", rc, content, {{"max_rel_error", worst}, {"all_finite", finite}});
    return finite && worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"buildswitch: learning when to switch build orders"};
    app.require_subcommand(1);

    Common common;
    std::string corpus_path, checkpoint;
    int opponent = 10, map = 0, bo = -1, faction = 0, games = 200, trials = 100;

    auto* gen = app.add_subcommand("gen-corpus", "play off-policy games with random switches");
    add_common(gen, common, "corpus.jsonl.gz");

    auto* tr = app.add_subcommand("train", "off-policy training from a corpus");
    add_common(tr, common, "model.ckpt");
    tr->add_option("--corpus", corpus_path, "corpus file; generated from --seed when omitted");

    auto* rf = app.add_subcommand("refine", "on-policy refinement of a checkpoint");
    add_common(rf, common, "refined.ckpt");
    rf->add_option("--checkpoint", checkpoint, "input checkpoint")->required();

    auto* ev = app.add_subcommand("eval", "greedy evaluation against the opponent pool");
    add_common(ev, common, "report.json");
    ev->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();

    auto* ct = app.add_subcommand("control", "evaluation protocol without switching");
    add_common(ct, common, "control.json");

    auto* tc = app.add_subcommand("trace", "per-tick prediction trace of one game");
    add_common(tc, common, "trace.csv");
    tc->add_option("--checkpoint", checkpoint, "checkpoint to trace")->required();
    tc->add_option("--opponent", opponent, "opponent id")->capture_default_str();
    tc->add_option("--map", map, "map id")->capture_default_str();
    tc->add_option("--bo", bo, "starting build order id (default: first valid)");

    auto* to = app.add_subcommand("tournament", "round-robin of one faction's build orders");
    add_common(to, common, "tournament.json");
    to->add_option("--faction", faction, "faction id")->capture_default_str();
    to->add_option("--games", games, "games per pairing")->capture_default_str();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every autograd op");
    add_common(gc, common, "gradcheck.json");
    gc->add_option("--trials", trials, "random trials per op")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return gen_corpus(common);
        if (tr->parsed()) return train(common, corpus_path);
        if (rf->parsed()) return refine(common, checkpoint);
        if (ev->parsed()) return evaluate(common, checkpoint);
        if (ct->parsed()) return control(common);
        if (tc->parsed()) return trace(common, checkpoint, opponent, map, bo);
        if (to->parsed()) return tournament(common, faction, games);
        if (gc->parsed()) return gradcheck(common, trials);
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
