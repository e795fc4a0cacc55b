#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgbs/curriculum.hpp"
#include "mgbs/decoder.hpp"
#include "mgbs/oracle.hpp"
#include "mgbs/scorer.hpp"
#include "mgbs/session.hpp"
#include "mgbs/simulation.hpp"

namespace {

using nlohmann::json;

// --scorer accepts inline JSON or a path to a JSON file.
json load_json_arg(const std::string& arg) {
  if (!arg.empty() && arg.front() == '{') return json::parse(arg);
  std::ifstream in(arg);
  if (!in) throw std::runtime_error("cannot open: " + arg);
  return json::parse(in);
}

struct BeamFlags {
  int beam_size = 10;
  int max_len = 20;
  double alpha = 1.0;
  double t0 = 10.0;
  double a = 1.0;
  std::string score_mode = "raw";

  void attach(CLI::App* cmd) {
    cmd->add_option("--beam-size,-k", beam_size, "beam size");
    cmd->add_option("--max-len", max_len, "maximum generated tokens per turn");
    cmd->add_option("--alpha", alpha, "length penalty exponent");
    cmd->add_option("--t0", t0, "initial constraint threshold");
    cmd->add_option("--a", a, "threshold growth scalar");
    cmd->add_option("--score-mode", score_mode, "raw | length_normalized");
  }

  mgbs::BeamConfig to_config() const {
    mgbs::BeamConfig cfg;
    cfg.beam_size = beam_size;
    cfg.max_len = max_len;
    cfg.length_penalty = alpha;
    cfg.t0 = t0;
    cfg.a = a;
    cfg.score_mode = mgbs::score_mode_from_string(score_mode);
    cfg.validate();
    return cfg;
  }
};

mgbs::SideSet parse_sides(const std::vector<std::string>& sides) {
  if (sides.empty()) return {};
  mgbs::SideSet set{false, false};
  for (const auto& s : sides) {
    auto side = mgbs::side_from_string(s);
    if (side == mgbs::Side::kSystem) set.system = true;
    else set.user = true;
  }
  return set;
}

json turn_result_to_json(const mgbs::TurnResult& result, const mgbs::Vocabulary& vocab) {
  json j{{"text", vocab.detokenize(result.utterance)},
         {"tokens", result.utterance},
         {"chosen_bank", mgbs::to_string(result.chosen_bank)},
         {"threshold", result.threshold_used}};
  j["satisfied_group"] = result.satisfied_group ? json(*result.satisfied_group) : json(nullptr);
  j["best_satisfied_score"] =
      result.best_satisfied_score ? json(*result.best_satisfied_score) : json(nullptr);
  j["best_unsatisfied_score"] =
      result.best_unsatisfied_score ? json(*result.best_unsatisfied_score) : json(nullptr);
  return j;
}

int cmd_decode(const std::string& scorer_arg, const std::string& curriculum_path,
               const BeamFlags& beam, const std::vector<std::string>& history_texts, int turn,
               bool as_json) {
  auto scorer = mgbs::make_scorer(load_json_arg(scorer_arg));
  mgbs::Curriculum curriculum;
  if (!curriculum_path.empty())
    curriculum = mgbs::parse_curriculum_file(curriculum_path, scorer->vocab(),
                                             mgbs::OovPolicy::kReject)
                     .curriculum;

  std::vector<mgbs::TokenId> history;
  for (const auto& text : history_texts) {
    auto ids = scorer->vocab().tokenize(text);
    history.insert(history.end(), ids.begin(), ids.end());
    history.push_back(scorer->vocab().eos_id());
  }

  auto result = mgbs::decode_turn(history, curriculum.groups, *scorer, beam.to_config(), turn);
  if (as_json)
    std::cout << turn_result_to_json(result, scorer->vocab()).dump(2) << "\n";
  else
    std::cout << scorer->vocab().detokenize(result.utterance) << "\n";
  return 0;
}

int cmd_chat(const std::string& scorer_arg, const std::string& curriculum_path,
             const BeamFlags& beam, const std::vector<std::string>& sides,
             bool show_constraints) {
  auto scorer = mgbs::make_scorer(load_json_arg(scorer_arg));
  mgbs::Curriculum curriculum;
  if (!curriculum_path.empty())
    curriculum = mgbs::parse_curriculum_file(curriculum_path, scorer->vocab(),
                                             mgbs::OovPolicy::kReject)
                     .curriculum;
  const auto cfg = beam.to_config();
  const auto side_set = parse_sides(sides);

  auto fresh_session = [&]() {
    return std::make_unique<mgbs::Session>(curriculum, scorer, cfg, side_set,
                                           mgbs::OovPolicy::kSkip, "chat");
  };
  auto session = fresh_session();

  auto bot_turn = [&]() {
    auto [turn, result] = session->system_turn();
    std::cout << "BOT: " << turn.text << "\n";
    if (show_constraints) {
      std::cout << "  [remaining:";
      for (const auto& name : session->remaining_group_names()) std::cout << ' ' << name;
      std::cout << " | threshold " << result.threshold_used << "]\n";
    }
  };

  bot_turn();
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line == "/quit") break;
    if (line == "/reset") {
      session = fresh_session();
      std::cout << "(session reset)\n";
      bot_turn();
      continue;
    }
    session->user_turn(line);
    bot_turn();
  }
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& csv_path, const std::string& json_path) {
  auto config = mgbs::SimulationConfig::from_file(config_path);
  auto result = mgbs::run_simulation(config);
  if (!out_path.empty()) mgbs::write_transcripts(out_path, result.transcripts);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot open: " + csv_path);
    out << result.report.to_csv();
  }
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot open: " + json_path);
    out << result.report.to_json().dump(2) << "\n";
  }
  std::cout << result.report.to_csv();
  if (result.report.errors > 0)
    std::cerr << result.report.errors << " session(s) failed\n";
  return 0;
}

int cmd_metrics(const std::vector<std::string>& transcript_paths,
                const std::string& curriculum_path, const std::string& csv_path,
                const std::string& json_path) {
  std::vector<mgbs::SessionTranscript> transcripts;
  for (const auto& path : transcript_paths) {
    auto batch = mgbs::read_transcripts(path);
    transcripts.insert(transcripts.end(), batch.begin(), batch.end());
  }

  std::vector<mgbs::SurfaceGroup> groups;
  if (!curriculum_path.empty()) {
    std::ifstream in(curriculum_path);
    if (!in) throw std::runtime_error("cannot open: " + curriculum_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    groups = mgbs::parse_curriculum_surfaces(buf.str());
  } else {
    if (transcripts.empty() || !transcripts.front().config.contains("curriculum"))
      throw std::runtime_error(
          "metrics: no --curriculum given and transcripts embed no curriculum");
    groups = mgbs::parse_curriculum_surfaces(transcripts.front().config["curriculum"].dump());
  }

  auto report = mgbs::compute_usage(transcripts, groups);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot open: " + csv_path);
    out << report.to_csv();
  }
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot open: " + json_path);
    out << report.to_json().dump(2) << "\n";
  }
  std::cout << report.to_csv();
  return 0;
}

int cmd_oracle_check(int cases, int words, int max_len, int beam_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    auto scorer = mgbs::random_table_scorer(rng, words, 6, 3);
    auto curriculum = mgbs::random_curriculum(rng, scorer.vocab());
    for (auto mode : {mgbs::ScoreMode::kRaw, mgbs::ScoreMode::kLengthNormalized}) {
      mgbs::BeamConfig cfg;
      cfg.beam_size = beam_size;
      cfg.max_len = max_len;
      cfg.score_mode = mode;
      auto oracle = mgbs::exhaustive_decode(scorer, max_len, curriculum.groups, cfg);
      auto found = mgbs::search_turn({}, scorer, curriculum.groups, cfg);

      auto generated = [&](const mgbs::Hypothesis& h) {
        return std::vector<mgbs::TokenId>(h.tokens.begin() + 1, h.tokens.end());
      };
      bool ok = true;
      const mgbs::Hypothesis* best = nullptr;
      if (found.best_unsatisfied) best = &*found.best_unsatisfied;
      if (found.best_satisfied &&
          (!best || mgbs::finished_order(*found.best_satisfied, *best, cfg)))
        best = &*found.best_satisfied;
      ok = ok && best && generated(*best) == oracle.best_overall.tokens;
      if (oracle.best_satisfying)
        ok = ok && found.best_satisfied &&
             generated(*found.best_satisfied) == oracle.best_satisfying->tokens;
      else
        ok = ok && !found.best_satisfied;

      if (!ok) {
        ++failures;
        std::cout << "case " << c << " (" << mgbs::to_string(mode) << "): MISMATCH\n";
      }
    }
  }
  std::cout << (cases * 2 - failures) << "/" << (cases * 2) << " decoder-vs-oracle checks passed\n";
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-turn grid beam search dialog engine"};
  app.require_subcommand(1);

  std::string scorer_arg;
  std::string curriculum_path;
  BeamFlags beam;
  std::vector<std::string> history_texts;
  int turn = 0;
  bool as_json = false;
  std::vector<std::string> sides;
  bool show_constraints = false;

  auto* decode = app.add_subcommand("decode", "decode one system turn");
  decode->add_option("--scorer", scorer_arg, "scorer JSON (inline or file)")->required();
  decode->add_option("--curriculum", curriculum_path, "curriculum file");
  decode->add_option("--history", history_texts, "prior turns, oldest first");
  decode->add_option("--turn", turn, "0-based system turn index");
  decode->add_flag("--json", as_json, "print the full turn result as JSON");
  beam.attach(decode);

  auto* chat = app.add_subcommand("chat", "interactive REPL session");
  chat->add_option("--scorer", scorer_arg, "scorer JSON (inline or file)")->required();
  chat->add_option("--curriculum", curriculum_path, "curriculum file");
  chat->add_option("--sides", sides, "sides whose mentions satisfy groups (system/user)");
  chat->add_flag("--show-constraints", show_constraints, "print remaining groups per turn");
  beam.attach(chat);

  std::string config_path, out_path, csv_path, json_path;
  auto* simulate = app.add_subcommand("simulate", "config-driven batch of sessions");
  simulate->add_option("--config", config_path, "simulation config JSON")->required();
  simulate->add_option("--out", out_path, "transcript JSONL output");
  simulate->add_option("--report-csv", csv_path, "usage report CSV output");
  simulate->add_option("--report-json", json_path, "usage report JSON output");

  std::vector<std::string> transcript_paths;
  auto* metrics = app.add_subcommand("metrics", "usage report from transcripts");
  metrics->add_option("--transcripts", transcript_paths, "transcript JSONL file(s)")->required();
  metrics->add_option("--curriculum", curriculum_path, "curriculum file (default: embedded)");
  metrics->add_option("--report-csv", csv_path, "usage report CSV output");
  metrics->add_option("--report-json", json_path, "usage report JSON output");

  int cases = 50, words = 2, oracle_max_len = 5, oracle_beam = 256;
  std::uint64_t seed = 20240901;
  auto* oracle = app.add_subcommand("oracle-check", "decoder-vs-oracle sweep");
  oracle->add_option("--cases", cases, "number of random cases");
  oracle->add_option("--words", words, "non-special vocabulary words");
  oracle->add_option("--max-len", oracle_max_len, "maximum generated length");
  oracle->add_option("--beam", oracle_beam, "decoder beam size");
  oracle->add_option("--seed", seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (decode->parsed())
      return cmd_decode(scorer_arg, curriculum_path, beam, history_texts, turn, as_json);
    if (chat->parsed())
      return cmd_chat(scorer_arg, curriculum_path, beam, sides, show_constraints);
    if (simulate->parsed()) return cmd_simulate(config_path, out_path, csv_path, json_path);
    if (metrics->parsed())
      return cmd_metrics(transcript_paths, curriculum_path, csv_path, json_path);
    if (oracle->parsed())
      return cmd_oracle_check(cases, words, oracle_max_len, oracle_beam, seed);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
