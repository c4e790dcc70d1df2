// expogame: command-line front end.

#include <expogame/cli/commands.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace cli = expogame::cli;
using expogame::Index;

namespace {

std::string default_out(const std::string& cmd) { return "expogame-out/" + cmd; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exposure games: training, equilibrium search, audits and scenario checks"};
  app.set_version_flag("--version", std::string(cli::version()));
  app.require_subcommand(1);
  app.footer("Worker threads: EXPOGAME_WORKERS (default: hardware threads).");

  std::string out;

  cli::SynthOptions synth;
  auto* s_synth = app.add_subcommand("synth", "Write a seeded synthetic ratings CSV");
  s_synth->add_option("--users", synth.users, "Number of users")->capture_default_str();
  s_synth->add_option("--items", synth.items, "Number of items")->capture_default_str();
  s_synth->add_option("--d", synth.d, "Latent dimension")->capture_default_str();
  s_synth->add_option("--density", synth.density, "Fraction of observed pairs")->capture_default_str();
  s_synth->add_option("--noise", synth.noise, "Rating noise std")->capture_default_str();
  s_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s_synth->add_flag("--rank1", synth.rank1, "Dense exact rank-1 ratings without groups");
  s_synth->add_option("--out", out, "Output directory");

  cli::TrainOptions train;
  std::string ratings;
  auto* s_train = app.add_subcommand("train", "Fit PMF or NMF embeddings from a ratings CSV");
  s_train->add_option("--ratings", ratings, "user_id,item_id,rating[,user_group][,item_group] CSV")
      ->required();
  s_train->add_option("--variant", train.variant, "pmf or nmf")->capture_default_str();
  s_train->add_option("--d", train.d, "Embedding dimension")->capture_default_str();
  s_train->add_option("--reg", train.reg, "L2 regularization")->capture_default_str();
  s_train->add_option("--lr", train.lr, "SGD learning rate (pmf)")->capture_default_str();
  s_train->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  s_train->add_option("--seed", train.seed, "First recommender seed")->capture_default_str();
  s_train->add_option("--seeds", train.seeds, "Number of recommender seeds")->capture_default_str();
  s_train->add_flag("--biases", train.biases, "PMF with user/item biases");
  s_train->add_option("--holdout", train.holdout, "Held-out fraction for RMSE")->capture_default_str();
  s_train->add_option("--out", out, "Output directory");

  cli::SolveOptions solve;
  std::string s_embeddings;
  std::string s_users;
  std::string s_scenario;
  auto* s_solve = app.add_subcommand("solve", "Search for equilibria over a seed and parameter grid");
  s_solve->add_option("--embeddings", s_embeddings, "train output directory");
  s_solve->add_option("--users", s_users, "Consumer embedding CSV");
  s_solve->add_option("--scenario", s_scenario, "Built-in scenario or scenario file");
  s_solve->add_option("--n", solve.n, "Producer counts")->delimiter(',');
  s_solve->add_option("--tau", solve.tau, "Temperatures")->delimiter(',');
  s_solve->add_option("--step", solve.step, "Step sizes")->delimiter(',');
  s_solve->add_option("--runs", solve.runs, "Optimizer seeds per cell")->capture_default_str();
  s_solve->add_option("--seeds", solve.seeds, "Recommender seeds to use")->capture_default_str();
  s_solve->add_option("--max-iters", solve.max_iters, "Iteration cap")->capture_default_str();
  s_solve->add_flag("--scale-step", solve.scale_step, "Multiply the step size by tau");
  s_solve->add_flag("--confirmed-only", solve.confirmed_only,
                    "Write records only for confirmed equilibria");
  s_solve->add_flag("--standard-grid", solve.standard_grid,
                    "Default grid n={10,100}, tau={0.01,0.1,1}, step={0.01,0.1}");
  s_solve->add_option("--out", out, "Output directory");

  cli::AuditOptions audit;
  std::string a_records;
  std::string a_embeddings;
  auto* s_audit = app.add_subcommand("audit", "Audit metrics over solve records");
  s_audit->add_option("--records", a_records, "solve output directory")->required();
  s_audit->add_option("--embeddings", a_embeddings, "train output directory");
  s_audit->add_option("--metric", audit.metrics, "clusters, gender-gap, best-rated, creator-bias")
      ->delimiter(',');
  s_audit->add_option("--group-a", audit.group_a, "User group counted positive")->capture_default_str();
  s_audit->add_option("--group-b", audit.group_b, "User group counted negative")->capture_default_str();
  s_audit->add_option("--creator-m", audit.creator_m, "Creator group M")->capture_default_str();
  s_audit->add_option("--creator-f", audit.creator_f, "Creator group F")->capture_default_str();
  s_audit->add_option("--k", audit.k, "Neighborhood sizes")->delimiter(',');
  s_audit->add_option("--out", out, "Output directory");

  cli::ScenarioOptions scen;
  double sc_tau = 0.0;
  Index sc_sweep = 0;
  auto* s_scen = app.add_subcommand("scenario", "Run the checks of a scenario");
  s_scen->add_option("scenario", scen.scenario, "Built-in name or scenario file")->required();
  auto* o_tau = s_scen->add_option("--tau", sc_tau, "Temperature override");
  s_scen->add_option("--taus", scen.taus, "Temperatures for the eps-pne table")->delimiter(',');
  auto* o_sweep = s_scen->add_option("--hardmax-sweep", sc_sweep, "Angular sweep resolution");
  s_scen->add_option("--out", out, "Output directory");

  cli::HardmaxOptions hard;
  std::string h_scenario;
  std::string h_users;
  Index h_d = 0;
  auto* s_hard = app.add_subcommand("hardmax", "Mixed equilibrium of the hardmax game");
  s_hard->add_option("--method", hard.method, "lp or hitting-set")->capture_default_str();
  s_hard->add_option("--scenario", h_scenario, "Built-in scenario or file (default triangle)");
  s_hard->add_option("--users", h_users, "Consumer embedding CSV");
  s_hard->add_option("--k", hard.k, "Grid resolution per coordinate")->capture_default_str();
  auto* o_d = s_hard->add_option("--d", h_d, "Expected dimension");
  s_hard->add_option("--max-support", hard.max_support, "Hitting-set support bound")
      ->capture_default_str();
  s_hard->add_option("--verify-resolution", hard.verify_resolution, "Verification grid resolution")
      ->capture_default_str();
  s_hard->add_option("--out", out, "Output directory");

  std::string manifest;
  bool verify = false;
  auto* s_replay = app.add_subcommand("replay", "Rerun a manifest");
  s_replay->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
  s_replay->add_flag("--verify", verify, "Compare outputs byte for byte with the original run");
  s_replay->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s_replay) return cli::replay(manifest, out, verify, &std::cout);
    for (auto* sub : app.get_subcommands()) {
      const std::string name = sub->get_name();
      if (out.empty()) out = default_out(name);
      cli::json cfg;
      if (name == "synth") {
        cfg = synth.to_json();
      } else if (name == "train") {
        train.ratings = ratings;
        cfg = train.to_json();
      } else if (name == "solve") {
        if (!s_embeddings.empty()) solve.embeddings = s_embeddings;
        if (!s_users.empty()) solve.users = s_users;
        if (!s_scenario.empty()) solve.scenario = s_scenario;
        cfg = solve.to_json();
      } else if (name == "audit") {
        audit.records = a_records;
        if (!a_embeddings.empty()) audit.embeddings = a_embeddings;
        cfg = audit.to_json();
      } else if (name == "scenario") {
        if (*o_tau) scen.tau = sc_tau;
        if (*o_sweep) scen.hardmax_sweep = sc_sweep;
        cfg = scen.to_json();
      } else if (name == "hardmax") {
        if (!h_scenario.empty()) hard.scenario = h_scenario;
        if (!h_users.empty()) hard.users = h_users;
        if (*o_d) hard.d = h_d;
        cfg = hard.to_json();
      }
      return cli::execute(name, cfg, out, &std::cout);
    }
  } catch (const cli::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
