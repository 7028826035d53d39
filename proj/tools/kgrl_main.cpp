// kgrl: knowledge-graph representation learning runs, end to end.
//
// Subcommands: synth, split, train-align, train-predict, eval, gradcheck.
// Every command takes one --seed that pins all randomness, and every command
// that writes outputs echoes its fully resolved configuration next to them.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include "kgrl/checkpoint.hpp"
#include "kgrl/eval.hpp"
#include "kgrl/graph.hpp"
#include "kgrl/synth.hpp"
#include "kgrl/train.hpp"

namespace fs = std::filesystem;
using namespace kgrl;

namespace {

struct CommonArgs {
  std::uint64_t seed = 0;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
  cmd->set_config("--config", "", "optional config file (key = value, # comments)");
  cmd->allow_config_extras(CLI::config_extras_mode::error);
  cmd->add_option("--seed", args.seed, "root seed for all randomness")->capture_default_str();
  auto* out = cmd->add_option("--out", args.out_dir, "output directory");
  if (out_required) out->required();
}

void write_resolved_config(CLI::App* cmd, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "config_resolved.txt");
  out << cmd->config_to_str(true, false);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

KnowledgeGraph load_graph(const std::string& triples, const std::string& entities,
                          const std::string& relations) {
  std::vector<std::string> ev, rv;
  if (!entities.empty()) ev = load_name_list(entities);
  if (!relations.empty()) rv = load_name_list(relations);
  return load_triples(triples, entities.empty() ? nullptr : &ev, relations.empty() ? nullptr : &rv);
}

std::vector<std::pair<std::string, std::string>> load_raw_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected entity1<TAB>entity2");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  CommonArgs common;
  int entities = 200;
  int relations = 10;
  double avg_degree = 4.0;
  double skew = 0.0;
  double edge_dropout = 0.1;
  double train_ratio = 0.3;
};

int run_synth(CLI::App* cmd, const SynthArgs& a) {
  KnowledgeGraph base = generate_synthetic_kg(a.entities, a.relations, a.avg_degree, a.common.seed, a.skew);
  KnowledgeGraph side1 = drop_edges(base, a.edge_dropout, fanout_seed(a.common.seed, "side1"));
  auto [side2, pairs] = make_aligned_copy(base, fanout_seed(a.common.seed, "side2"), a.edge_dropout);

  std::vector<std::pair<int, int>> all = pairs.test;
  std::shuffle(all.begin(), all.end(), std::mt19937_64(fanout_seed(a.common.seed, "pairsplit")));
  const auto n_train = static_cast<size_t>(std::llround(a.train_ratio * static_cast<double>(all.size())));
  AlignmentPairs split;
  split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, all.size())));
  split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, all.size())), all.end());

  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  save_triples(base, (dir / "triples.tsv").string());
  save_triples(side1, (dir / "kg1_triples.tsv").string());
  save_triples(side2, (dir / "kg2_triples.tsv").string());
  save_name_list(side1.entity_names, (dir / "kg1_entities.txt").string());
  save_name_list(side2.entity_names, (dir / "kg2_entities.txt").string());
  save_pair_file(split.train, side1, side2, (dir / "pairs_train.tsv").string());
  save_pair_file(split.test, side1, side2, (dir / "pairs_test.tsv").string());
  write_resolved_config(cmd, a.common.out_dir);
  std::cout << "synth: " << base.num_entities() << " entities, " << base.triples.size()
            << " base triples, sides " << side1.triples.size() << "/" << side2.triples.size()
            << ", pairs " << split.train.size() << " train / " << split.test.size() << " test\n";
  return 0;
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

struct SplitArgs {
  CommonArgs common;
  std::string triples;
  std::string pairs;
  int side = 1;
  double fraction = 0.2;
};

int run_split(CLI::App* cmd, const SplitArgs& a) {
  KnowledgeGraph g = load_triples(a.triples);

  std::vector<int> test_entities;
  if (!a.pairs.empty()) {
    for (const auto& [l, r] : load_raw_pairs(a.pairs)) {
      const std::string& name = a.side == 1 ? l : r;
      auto it = g.entity_ids.find(name);
      if (it == g.entity_ids.end()) throw ParseError("pair entity not in graph: " + name);
      test_entities.push_back(it->second);
    }
  } else {
    test_entities.resize(static_cast<size_t>(g.num_entities()));
    std::iota(test_entities.begin(), test_entities.end(), 0);
  }

  OpenSplit split = split_open_world(g, test_entities, a.fraction, a.common.seed);

  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  KnowledgeGraph train = g, test = g;
  train.triples = split.train_triples;
  test.triples = split.test_triples;
  save_triples(train, (dir / "train_triples.tsv").string());
  save_triples(test, (dir / "test_triples.tsv").string());
  save_name_list(g.entity_names, (dir / "all_entities.txt").string());
  save_name_list(g.relation_names, (dir / "all_relations.txt").string());
  {
    std::vector<std::string> names;
    for (int e : split.known_entities) names.push_back(g.entity_names[static_cast<size_t>(e)]);
    save_name_list(names, (dir / "known_entities.txt").string());
    names.clear();
    for (int e : split.open_entities) names.push_back(g.entity_names[static_cast<size_t>(e)]);
    save_name_list(names, (dir / "open_entities.txt").string());
  }

  auto count_stats = [](const std::vector<Triple>& triples) {
    std::set<int> ents, rels;
    for (const Triple& t : triples) {
      ents.insert(t.s);
      ents.insert(t.o);
      rels.insert(t.r);
    }
    return std::pair{ents.size(), rels.size()};
  };
  auto [e_tr, r_tr] = count_stats(split.train_triples);
  auto [e_te, r_te] = count_stats(split.test_triples);
  auto stats = open_out(dir / "stats.csv");
  stats << "stat,value\n";
  stats << "entities," << g.num_entities() << '\n';
  stats << "relations," << g.num_relations() << '\n';
  stats << "triples," << g.triples.size() << '\n';
  stats << "test_entities," << test_entities.size() << '\n';
  stats << "open_entities," << split.open_entities.size() << '\n';
  stats << "known_entities," << split.known_entities.size() << '\n';
  stats << "train_triples," << split.train_triples.size() << '\n';
  stats << "train_entities," << e_tr << '\n';
  stats << "train_relations," << r_tr << '\n';
  stats << "test_triples," << split.test_triples.size() << '\n';
  stats << "test_triple_entities," << e_te << '\n';
  stats << "test_triple_relations," << r_te << '\n';
  stats << "moved_fraction,"
        << static_cast<double>(split.test_triples.size()) / static_cast<double>(g.triples.size()) << '\n';
  write_resolved_config(cmd, a.common.out_dir);
  std::cout << "split: " << split.open_entities.size() << " open entities, moved "
            << split.test_triples.size() << "/" << g.triples.size() << " triples\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-align
// ---------------------------------------------------------------------------

struct TrainAlignArgs {
  CommonArgs common;
  std::string kg1, kg2, pairs_train, pairs_test;
  std::string kg1_entities, kg2_entities;
  std::string mode = "dan";
  std::string distill = "auto";
  AlignConfig cfg;
  bool no_inverse = false;
};

std::map<std::string, std::string> align_meta(const TrainAlignArgs& a, const AlignmentTrainResult& res) {
  return {{"task", "alignment"},
          {"mode", a.mode},
          {"distill", a.distill},
          {"layers", std::to_string(a.cfg.layers)},
          {"dim", std::to_string(a.cfg.dim)},
          {"entities", std::to_string(res.merged.num_entities())},
          {"relations", std::to_string(res.merged.num_relations())},
          {"side1_entities", std::to_string(res.side1_entities)},
          {"inverse_edges", a.no_inverse ? "0" : "1"}};
}

int run_train_align(CLI::App* cmd, TrainAlignArgs& a) {
  a.cfg.mode = encoder_mode_from(a.mode);
  a.cfg.distill = distill_kind_from(a.distill);
  a.cfg.inverse_edges = !a.no_inverse;
  a.cfg.seed = a.common.seed;

  KnowledgeGraph g1 = load_graph(a.kg1, a.kg1_entities, "");
  KnowledgeGraph g2 = load_graph(a.kg2, a.kg2_entities, "");
  AlignmentPairs pairs;
  pairs.train = load_pair_file(a.pairs_train, g1, g2);
  if (!a.pairs_test.empty()) pairs.test = load_pair_file(a.pairs_test, g1, g2);
  pairs.check_one_to_one();

  AlignmentTrainResult res = train_alignment(g1, g2, pairs, a.cfg);

  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  ParamSet params = res.encoder.collect();
  for (auto& p : res.density.collect()) params.push_back(p);
  save_checkpoint((dir / "checkpoint.bin").string(), params, align_meta(a, res));
  auto hist = open_out(dir / "history.csv");
  write_history_csv(hist, res.history);
  write_resolved_config(cmd, a.common.out_dir);

  if (!res.test_pairs.empty()) {
    LayerOutputs outs = encoder_forward_eval(res.encoder, res.index, a.cfg.mode);
    Tensor g = final_output(outs, TaskKind::kAlignment);
    RankingReport rep = rank_alignment(g, g, res.test_pairs);
    print_report(std::cout, rep, "test");
  }
  std::cout << "train-align: " << res.history.size() << " epochs logged\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-predict
// ---------------------------------------------------------------------------

struct TrainPredictArgs {
  CommonArgs common;
  std::string triples, entities, relations;
  std::string mode = "dan";
  std::string distill = "auto";
  std::string decoder = "transe";
  PredictConfig cfg;
  bool no_inverse = false;
};

int run_train_predict(CLI::App* cmd, TrainPredictArgs& a) {
  a.cfg.mode = encoder_mode_from(a.mode);
  a.cfg.distill = distill_kind_from(a.distill);
  a.cfg.decoder = decoder_kind_from(a.decoder);
  a.cfg.inverse_edges = !a.no_inverse;
  a.cfg.seed = a.common.seed;

  KnowledgeGraph g = load_graph(a.triples, a.entities, a.relations);
  PredictionTrainResult res = train_prediction(g, a.cfg);

  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  ParamSet params = res.encoder.collect();
  for (auto& p : res.density.collect()) params.push_back(p);
  params.push_back(res.decoder_relations);
  save_checkpoint((dir / "checkpoint.bin").string(), params,
                  {{"task", "prediction"},
                   {"mode", a.mode},
                   {"distill", a.distill},
                   {"decoder", a.decoder},
                   {"layers", std::to_string(a.cfg.layers)},
                   {"dim", std::to_string(a.cfg.dim)},
                   {"entities", std::to_string(g.num_entities())},
                   {"relations", std::to_string(g.num_relations())},
                   {"inverse_edges", a.no_inverse ? "0" : "1"}});
  auto hist = open_out(dir / "history.csv");
  write_history_csv(hist, res.history);
  write_resolved_config(cmd, a.common.out_dir);
  std::cout << "train-predict: " << res.history.size() << " epochs logged\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  CommonArgs common;
  std::string checkpoint;
  std::string kg1, kg2, pairs_test;
  std::string kg1_entities, kg2_entities;
  std::string kg1_extra, kg2_extra;  // held-out triples for --open
  std::string triples, test_triples, entities, relations;
  bool per_layer = false;
  bool open = false;
  bool raw_ranks = false;
};

int run_eval_alignment(CLI::App* cmd, const EvalArgs& a, const Checkpoint& ck) {
  const int layers = ck.meta_int("layers");
  const int dim = ck.meta_int("dim");
  const EncoderMode mode = encoder_mode_from(ck.meta_str("mode"));
  const bool inverse = ck.meta_int("inverse_edges") != 0;
  EncoderParams enc = EncoderParams::from_param_set(ck.params, dim, layers);

  KnowledgeGraph g1 = load_graph(a.kg1, a.kg1_entities, "");
  KnowledgeGraph g2 = load_graph(a.kg2, a.kg2_entities, "");
  if (a.open) {
    if (!a.kg1_extra.empty())
      for (const Triple& t : load_triples(a.kg1_extra, &g1.entity_names, &g1.relation_names).triples)
        g1.triples.push_back(t);
    if (!a.kg2_extra.empty())
      for (const Triple& t : load_triples(a.kg2_extra, &g2.entity_names, &g2.relation_names).triples)
        g2.triples.push_back(t);
  }

  KnowledgeGraph merged = merge_graphs(g1, g2);
  if (merged.num_entities() != ck.meta_int("entities"))
    throw ParamError("checkpoint entity count does not match the given graphs");
  NeighborIndex idx = build_neighbor_index(merged, index_mode_for(mode), inverse);

  std::vector<std::pair<int, int>> test;
  for (auto [i, j] : load_pair_file(a.pairs_test, g1, g2)) test.emplace_back(i, j + g1.num_entities());

  LayerOutputs outs = encoder_forward_eval(enc, idx, mode);
  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);

  if (a.per_layer) {
    auto reports = per_layer_eval(outs, test);
    auto csv = open_out(dir / "report_per_layer.csv");
    for (const auto& [tag, rep] : reports) {
      write_report_csv(csv, rep, tag);
      print_report(std::cout, rep, tag);
    }
  } else {
    Tensor g = final_output(outs, TaskKind::kAlignment);
    RankingReport rep = rank_alignment(g, g, test);
    auto csv = open_out(dir / "report.csv");
    write_report_csv(csv, rep);
    print_report(std::cout, rep, "alignment");
  }

  // Full per-entity outputs for downstream row-level comparison.
  auto rows = open_out(dir / "outputs.csv");
  Tensor g = final_output(outs, TaskKind::kAlignment);
  for (std::int64_t i = 0; i < g.rows(); ++i) {
    rows << merged.entity_names[static_cast<size_t>(i)];
    for (std::int64_t j = 0; j < g.cols(); ++j) rows << ',' << g.at(i, j);
    rows << '\n';
  }
  write_resolved_config(cmd, a.common.out_dir);
  return 0;
}

int run_eval_prediction(CLI::App* cmd, const EvalArgs& a, const Checkpoint& ck) {
  const int layers = ck.meta_int("layers");
  const int dim = ck.meta_int("dim");
  const EncoderMode mode = encoder_mode_from(ck.meta_str("mode"));
  const bool inverse = ck.meta_int("inverse_edges") != 0;
  EncoderParams enc = EncoderParams::from_param_set(ck.params, dim, layers);
  const NamedParam& dec_rel = ck.require("decoder.R");
  const DecoderKind decoder = decoder_kind_from(ck.meta_str("decoder"));

  KnowledgeGraph g = load_graph(a.triples, a.entities, a.relations);
  KnowledgeGraph test_g = load_triples(a.test_triples, &g.entity_names, &g.relation_names);
  if (g.num_entities() != ck.meta_int("entities"))
    throw ParamError("checkpoint entity count does not match the given graph");

  KnowledgeGraph index_graph = g;
  if (a.open)
    for (const Triple& t : test_g.triples) index_graph.triples.push_back(t);
  NeighborIndex idx = build_neighbor_index(index_graph, index_mode_for(mode), inverse);

  LayerOutputs outs = encoder_forward_eval(enc, idx, mode);
  Tensor g_out = final_output(outs, TaskKind::kPrediction);

  std::vector<Triple> known = g.triples;
  known.insert(known.end(), test_g.triples.begin(), test_g.triples.end());
  RankingReport rep = rank_prediction(g_out, decoder, dec_rel, test_g.triples, g.num_relations(),
                                      !a.raw_ranks, known);
  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  auto csv = open_out(dir / "report.csv");
  write_report_csv(csv, rep);
  print_report(std::cout, rep, a.raw_ranks ? "prediction(raw)" : "prediction(filtered)");
  write_resolved_config(cmd, a.common.out_dir);
  return 0;
}

int run_eval(CLI::App* cmd, const EvalArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const std::string task = ck.meta_str("task");
  if (task == "alignment") return run_eval_alignment(cmd, a, ck);
  if (task == "prediction") return run_eval_prediction(cmd, a, ck);
  throw ParamError("unknown task in checkpoint: " + task);
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int run_gradcheck(std::uint64_t seed) {
  bool all_pass = true;
  std::cout << std::left << std::setw(28) << "op" << std::setw(14) << "max_rel_err" << "result\n";
  auto line = [&](const GradCheckReport& rep) {
    std::cout << std::left << std::setw(28) << rep.name << std::setw(14) << std::setprecision(3)
              << std::scientific << rep.max_rel_err << (rep.pass ? "ok" : "FAIL") << "\n"
              << std::defaultfloat;
    all_pass = all_pass && rep.pass;
  };
  for (const auto& rep : run_op_gradchecks(seed)) line(rep);
  line(full_model_gradcheck(seed));
  std::cout << (all_pass ? "gradcheck: all ok\n" : "gradcheck: FAILURES\n");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-graph representation learning toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic alignment dataset");
  add_common(synth_cmd, synth.common);
  synth_cmd->add_option("--entities", synth.entities)->capture_default_str();
  synth_cmd->add_option("--relations", synth.relations)->capture_default_str();
  synth_cmd->add_option("--avg-degree", synth.avg_degree)->capture_default_str();
  synth_cmd->add_option("--skew", synth.skew, "power-law degree skew exponent")->capture_default_str();
  synth_cmd->add_option("--edge-dropout", synth.edge_dropout)->capture_default_str();
  synth_cmd->add_option("--train-ratio", synth.train_ratio)->capture_default_str();

  SplitArgs split;
  CLI::App* split_cmd = app.add_subcommand("split", "open-world split of a triple file");
  add_common(split_cmd, split.common);
  split_cmd->add_option("--triples", split.triples)->required();
  split_cmd->add_option("--pairs", split.pairs, "alignment pairs naming the test entities");
  split_cmd->add_option("--side", split.side)->check(CLI::IsMember({1, 2}))->capture_default_str();
  split_cmd->add_option("--fraction", split.fraction)->capture_default_str();

  TrainAlignArgs ta;
  CLI::App* ta_cmd = app.add_subcommand("train-align", "train entity alignment");
  add_common(ta_cmd, ta.common);
  ta_cmd->add_option("--kg1", ta.kg1)->required();
  ta_cmd->add_option("--kg2", ta.kg2)->required();
  ta_cmd->add_option("--kg1-entities", ta.kg1_entities, "pins kg1 entity vocabulary");
  ta_cmd->add_option("--kg2-entities", ta.kg2_entities, "pins kg2 entity vocabulary");
  ta_cmd->add_option("--pairs-train", ta.pairs_train)->required();
  ta_cmd->add_option("--pairs-test", ta.pairs_test);
  ta_cmd->add_option("--mode", ta.mode)->check(CLI::IsMember({"dan", "gat", "centrl"}))->capture_default_str();
  ta_cmd->add_option("--distill", ta.distill)
      ->check(CLI::IsMember({"auto", "infonce", "l2", "none"}))
      ->capture_default_str();
  ta_cmd->add_option("--layers", ta.cfg.layers)->capture_default_str();
  ta_cmd->add_option("--dim", ta.cfg.dim)->capture_default_str();
  ta_cmd->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
  ta_cmd->add_option("--lr", ta.cfg.learning_rate)->capture_default_str();
  ta_cmd->add_option("--margin", ta.cfg.margin)->capture_default_str();
  ta_cmd->add_option("--alpha", ta.cfg.neg_weight)->capture_default_str();
  ta_cmd->add_option("--negatives", ta.cfg.negatives_per_pos)->capture_default_str();
  ta_cmd->add_option("--batch-size", ta.cfg.batch_size, "0 = full batch")->capture_default_str();
  ta_cmd->add_option("--distill-weight", ta.cfg.distill_weight)->capture_default_str();
  ta_cmd->add_option("--distill-sample", ta.cfg.distill_sample)->capture_default_str();
  ta_cmd->add_option("--dropout", ta.cfg.dropout)->capture_default_str();
  ta_cmd->add_option("--val-fraction", ta.cfg.val_fraction)->capture_default_str();
  ta_cmd->add_option("--patience", ta.cfg.patience, "0 disables early stopping")->capture_default_str();
  ta_cmd->add_flag("--no-inverse", ta.no_inverse, "disable inverse edges");

  TrainPredictArgs tp;
  CLI::App* tp_cmd = app.add_subcommand("train-predict", "train entity prediction");
  add_common(tp_cmd, tp.common);
  tp_cmd->add_option("--triples", tp.triples)->required();
  tp_cmd->add_option("--entities", tp.entities, "pins entity vocabulary");
  tp_cmd->add_option("--relations", tp.relations, "pins relation vocabulary");
  tp_cmd->add_option("--mode", tp.mode)->check(CLI::IsMember({"dan", "gat", "centrl"}))->capture_default_str();
  tp_cmd->add_option("--distill", tp.distill)
      ->check(CLI::IsMember({"auto", "infonce", "l2", "none"}))
      ->capture_default_str();
  tp_cmd->add_option("--decoder", tp.decoder)
      ->check(CLI::IsMember({"transe", "distmult", "complex"}))
      ->capture_default_str();
  tp_cmd->add_option("--layers", tp.cfg.layers)->capture_default_str();
  tp_cmd->add_option("--dim", tp.cfg.dim)->capture_default_str();
  tp_cmd->add_option("--epochs", tp.cfg.epochs)->capture_default_str();
  tp_cmd->add_option("--lr", tp.cfg.learning_rate)->capture_default_str();
  tp_cmd->add_option("--negatives", tp.cfg.negatives)->capture_default_str();
  tp_cmd->add_option("--batch-size", tp.cfg.batch_size)->capture_default_str();
  tp_cmd->add_option("--distill-weight", tp.cfg.distill_weight)->capture_default_str();
  tp_cmd->add_option("--distill-sample", tp.cfg.distill_sample)->capture_default_str();
  tp_cmd->add_option("--dropout", tp.cfg.dropout)->capture_default_str();
  tp_cmd->add_option("--val-fraction", tp.cfg.val_fraction)->capture_default_str();
  tp_cmd->add_option("--patience", tp.cfg.patience)->capture_default_str();
  tp_cmd->add_flag("--no-inverse", tp.no_inverse);

  EvalArgs ev;
  CLI::App* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev_cmd, ev.common);
  ev_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  ev_cmd->add_option("--kg1", ev.kg1);
  ev_cmd->add_option("--kg2", ev.kg2);
  ev_cmd->add_option("--kg1-entities", ev.kg1_entities);
  ev_cmd->add_option("--kg2-entities", ev.kg2_entities);
  ev_cmd->add_option("--kg1-extra", ev.kg1_extra, "held-out kg1 triples joined under --open");
  ev_cmd->add_option("--kg2-extra", ev.kg2_extra, "held-out kg2 triples joined under --open");
  ev_cmd->add_option("--pairs-test", ev.pairs_test);
  ev_cmd->add_option("--triples", ev.triples);
  ev_cmd->add_option("--test-triples", ev.test_triples);
  ev_cmd->add_option("--entities", ev.entities);
  ev_cmd->add_option("--relations", ev.relations);
  ev_cmd->add_flag("--per-layer", ev.per_layer, "one report per layer output");
  ev_cmd->add_flag("--open", ev.open, "rebuild the graph with held-out triples");
  ev_cmd->add_flag("--raw", ev.raw_ranks, "disable the filtered protocol");

  CommonArgs gc;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference checks of all gradients");
  add_common(gc_cmd, gc, /*out_required=*/false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return run_synth(synth_cmd, synth);
    if (split_cmd->parsed()) return run_split(split_cmd, split);
    if (ta_cmd->parsed()) return run_train_align(ta_cmd, ta);
    if (tp_cmd->parsed()) return run_train_predict(tp_cmd, tp);
    if (ev_cmd->parsed()) return run_eval(ev_cmd, ev);
    if (gc_cmd->parsed()) return run_gradcheck(gc.seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
