#include "derauth/config.hpp"
#include "derauth/errors.hpp"
#include "derauth/experiment.hpp"
#include "derauth/harness.hpp"

#include "CLI11.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

extern char** environ;

namespace {

using namespace derauth;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string log_path;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "experiment config file (INI)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "master seed");
}

AppConfig load(const Common& c) {
    AppConfig cfg = c.config_path.empty() ? AppConfig{} : load_config(c.config_path);
    if (c.seed) {
        cfg.set_seed(*c.seed);
    }
    if (!c.log_path.empty()) {
        cfg.event_log = c.log_path;
    }
    return cfg;
}

void emit_log(const AppConfig& cfg, const EventLog& log) {
    if (cfg.event_log.empty() || cfg.event_log == "-") {
        log.write_jsonl(std::cout);
        return;
    }
    std::ofstream out(cfg.event_log);
    if (!out) {
        throw std::runtime_error("cannot open '" + cfg.event_log + "' for writing");
    }
    log.write_jsonl(out);
}

void summarize(const char* label, const ScenarioResult& r) {
    std::cerr << label << ": rounds=" << r.rounds.size() << " accept=" << r.accepts << " reject=" << r.rejects
              << " abort=" << r.aborts << " timeout=" << r.timeouts << " enrollments=" << r.enrollments
              << " lockstep_violations=" << r.lockstep_violations << " master=" << to_string(r.master_state)
              << " outstation=" << to_string(r.outstation_state) << '\n';
}

int run_process(const std::vector<std::string>& args) {
    std::vector<char*> argv;
    for (const auto& a : args) {
        argv.push_back(const_cast<char*>(a.c_str()));
    }
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawnp(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) {
        return -1;
    }
    int status = 0;
    if (waitpid(pid, &status, 0) < 0) {
        return -1;
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int attack_eval(const Common& common, const std::string& dataset, const std::string& report) {
    const char* env = std::getenv("DERAUTH_PYTHON");
    const std::string python = env != nullptr ? env : "python3";
    const int found = run_process({python, "-c",
                                   "import importlib.util, sys; "
                                   "sys.exit(0 if importlib.util.find_spec('modeling_attack') else 3)"});
    if (found != 0) {
        std::cerr << "attack-eval: the modeling_attack Python package is not installed for '" << python
                  << "'.\nExport a dataset with `derauth export-dataset` and install the modeling-attack "
                     "component to evaluate it.\n";
        return 2;
    }
    std::vector<std::string> args{python, "-m", "modeling_attack", "--dataset", dataset, "--report", report};
    if (common.seed) {
        args.push_back("--seed");
        args.push_back(std::to_string(*common.seed));
    }
    if (!common.config_path.empty()) {
        args.push_back("--config");
        args.push_back(common.config_path);
    }
    return run_process(args);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Battery-entropy challenge-reply authentication: simulator, endpoints and harness"};
    app.require_subcommand(1);

    Common enroll_opts;
    auto* enroll_cmd = app.add_subcommand("enroll", "enroll master and outstation and print the event log");
    add_common(enroll_cmd, enroll_opts);
    enroll_cmd->add_option("--log", enroll_opts.log_path, "JSON-lines event log path ('-' for stdout)");

    Common auth_opts;
    std::optional<int> rounds;
    auto* auth_cmd = app.add_subcommand("authenticate", "run authentication rounds through the adversary hop");
    add_common(auth_cmd, auth_opts);
    auth_cmd->add_option("--rounds", rounds, "number of rounds (overrides protocol.rounds)");
    auth_cmd->add_option("--log", auth_opts.log_path, "JSON-lines event log path ('-' for stdout)");

    Common sweep_opts;
    std::string sweep_out;
    auto* sweep_cmd = app.add_subcommand("sweep", "reliability versus update interval and tolerance");
    add_common(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--out", sweep_out, "CSV output path (default stdout)");

    Common export_opts;
    std::optional<long> count;
    std::string export_out;
    auto* export_cmd = app.add_subcommand("export-dataset", "write challenge,reply CSV lines");
    add_common(export_cmd, export_opts);
    export_cmd->add_option("--count", count, "number of CRSeqs (overrides export.count)");
    export_cmd->add_option("--out", export_out, "output path (overrides export.path)");

    Common attack_opts;
    std::string attack_dataset = "crseq.csv";
    std::string attack_report = "attack_report.csv";
    auto* attack_cmd = app.add_subcommand("attack-eval", "run the modeling-attack evaluator on a dataset");
    add_common(attack_cmd, attack_opts);
    attack_cmd->add_option("--dataset", attack_dataset, "CRSeq CSV produced by export-dataset");
    attack_cmd->add_option("--report", attack_report, "report CSV path");

    Common demo_opts;
    auto* demo_cmd = app.add_subcommand("demo", "honest and adversarial sessions side by side");
    add_common(demo_cmd, demo_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*enroll_cmd) {
            auto cfg = load(enroll_opts);
            cfg.scenario.rounds = 0;
            const auto r = run_session(cfg.scenario);
            emit_log(cfg, r.log);
            summarize("enroll", r);
            return r.enrollments == 1 && r.tables_equal ? 0 : 1;
        }
        if (*auth_cmd) {
            auto cfg = load(auth_opts);
            if (rounds) {
                cfg.scenario.rounds = *rounds;
            }
            const auto r = run_session(cfg.scenario);
            emit_log(cfg, r.log);
            summarize("authenticate", r);
            return r.lockstep_violations == 0 ? 0 : 1;
        }
        if (*sweep_cmd) {
            const auto cfg = load(sweep_opts);
            const auto points = run_reliability_sweep(cfg.sweep);
            if (sweep_out.empty()) {
                write_sweep_csv(std::cout, points);
            } else {
                std::ofstream out(sweep_out);
                if (!out) {
                    throw std::runtime_error("cannot open '" + sweep_out + "' for writing");
                }
                write_sweep_csv(out, points);
            }
            return 0;
        }
        if (*export_cmd) {
            const auto cfg = load(export_opts);
            const long n = count.value_or(cfg.dataset.count);
            const auto path = export_out.empty() ? cfg.dataset.path : export_out;
            const auto s = export_crseq_dataset(path, n, cfg.scenario);
            std::cerr << "export-dataset: " << s.lines << " CRSeqs to " << path << " from " << s.rounds
                      << " challenges; duplicate challenges " << s.duplicate_challenges << ", duplicate pairs "
                      << s.duplicate_pairs << '\n';
            return 0;
        }
        if (*attack_cmd) {
            return attack_eval(attack_opts, attack_dataset, attack_report);
        }
        if (*demo_cmd) {
            const auto base = load(demo_opts);
            struct Case {
                const char* name;
                AdversaryMode mode;
            };
            const Case cases[] = {{"passive", AdversaryMode::Passive}, {"replay", AdversaryMode::Replay},
                                  {"tamper", AdversaryMode::Tamper},   {"block", AdversaryMode::Block},
                                  {"rollback", AdversaryMode::Rollback}, {"inject", AdversaryMode::Inject}};
            std::cout << "scenario,rounds,accept,reject,abort,timeout,enrollments,lockstep_violations\n";
            for (const auto& c : cases) {
                auto sc = base.scenario;
                sc.adversary = base.scenario.adversary;
                sc.adversary.mode = c.mode;
                sc.adversary.start_round = c.mode == AdversaryMode::Rollback ? 4 : 2;
                if (c.mode == AdversaryMode::Replay) {
                    sc.adversary.period = 2;
                }
                if (c.mode == AdversaryMode::Block || c.mode == AdversaryMode::Inject) {
                    sc.adversary.budget = 1;
                }
                const auto r = run_session(sc);
                std::cout << c.name << ',' << r.rounds.size() << ',' << r.accepts << ',' << r.rejects << ','
                          << r.aborts << ',' << r.timeouts << ',' << r.enrollments << ',' << r.lockstep_violations
                          << '\n';
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
