#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hiergen/checkpoint.hpp"
#include "hiergen/config.hpp"
#include "hiergen/data.hpp"
#include "hiergen/decoding.hpp"
#include "hiergen/metrics.hpp"
#include "hiergen/model.hpp"
#include "hiergen/threads.hpp"
#include "hiergen/toy.hpp"
#include "hiergen/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string arch;
  std::string data;
  std::string out;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
  cmd->add_option("--arch", args.arch, "architecture name");
  cmd->add_option("--data", args.data, "input data path");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--seed", args.seed, "random seed");
}

hiergen::Config resolve_config(const CommonArgs& args) {
  hiergen::Config config;
  if (!args.config_path.empty()) config = hiergen::parse_config_file(args.config_path);
  for (const std::string& o : args.overrides) hiergen::apply_override(config, o);
  if (!args.arch.empty()) hiergen::apply_override(config, "arch=" + args.arch);
  if (args.seed >= 0) {
    hiergen::apply_override(config, "seed=" + std::to_string(args.seed));
  }
  hiergen::validate(config);
  return config;
}

void emit_resolved_config(const hiergen::Config& config, const std::string& out_dir) {
  const std::string echo = hiergen::config_to_string(config);
  std::cout << "resolved config (hash " << hiergen::config_hash(config) << "):\n" << echo;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir + "/resolved_config.txt");
    f << echo;
  }
}

std::vector<hiergen::QGInstance> encode_all(const std::vector<hiergen::TokenizedInstance>& toks,
                                            const hiergen::Vocab& vocab) {
  std::vector<hiergen::QGInstance> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(hiergen::encode_instance(t, vocab));
  return out;
}

// ---- preprocess ------------------------------------------------------------

int run_preprocess(const CommonArgs& args) {
  using namespace hiergen;
  if (args.data.empty() || args.out.empty()) {
    std::cerr << "preprocess: --data and --out are required\n";
    return 1;
  }
  Config config = resolve_config(args);
  emit_resolved_config(config, args.out);

  std::vector<RawRecord> records = config.format == "squad" ? load_squad(args.data)
                                                            : load_marco(args.data);
  auto [train_records, dev_records] = split_train_dev(records, config.split_ratio, config.seed);

  Limits limits;
  limits.max_sentences = config.max_sentences;
  limits.max_sentence_tokens = config.max_sentence_tokens;
  limits.max_question_tokens = config.max_question_tokens;

  std::map<std::string, std::string> paragraph_ids;
  auto preprocess_all = [&](const std::vector<RawRecord>& recs, const std::string& prefix) {
    std::vector<TokenizedInstance> out;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      TokenizedInstance inst = preprocess_record(recs[i], prefix + std::to_string(i), limits);
      auto [it, inserted] = paragraph_ids.try_emplace(
          recs[i].paragraph, "p" + std::to_string(paragraph_ids.size()));
      inst.paragraph_id = it->second;
      out.push_back(std::move(inst));
    }
    return out;
  };
  std::vector<TokenizedInstance> train_insts = preprocess_all(train_records, "train-");
  std::vector<TokenizedInstance> dev_insts = preprocess_all(dev_records, "dev-");

  Vocab vocab = build_vocab(count_tokens(train_insts), config.vocab_size, config.min_freq);

  write_instances_jsonl(args.out + "/train.jsonl", train_insts);
  write_instances_jsonl(args.out + "/dev.jsonl", dev_insts);
  vocab.save(args.out + "/vocab.txt");

  // invariants hold for everything we wrote
  for (const auto& inst : train_insts) encode_instance(inst, vocab).check_invariants();
  for (const auto& inst : dev_insts) encode_instance(inst, vocab).check_invariants();

  ordered_json report;
  report["records"] = records.size();
  report["train_instances"] = train_insts.size();
  report["dev_instances"] = dev_insts.size();
  report["vocab_size"] = vocab.size();
  report["config_hash"] = config_hash(config);
  report["seed"] = config.seed;
  std::ofstream(args.out + "/preprocess_report.json") << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
  return 0;
}

// ---- train -------------------------------------------------------------------

int run_train(const CommonArgs& args) {
  using namespace hiergen;
  if (args.data.empty() || args.out.empty()) {
    std::cerr << "train: --data (preprocessed dir) and --out are required\n";
    return 1;
  }
  Config config = resolve_config(args);
  Vocab vocab = Vocab::load(args.data + "/vocab.txt");
  apply_override(config, "vocab_size=" + std::to_string(vocab.size()));
  emit_resolved_config(config, args.out);

  std::vector<QGInstance> train_set =
      encode_all(read_instances_jsonl(args.data + "/train.jsonl"), vocab);
  std::vector<QGInstance> dev_set =
      encode_all(read_instances_jsonl(args.data + "/dev.jsonl"), vocab);

  std::unique_ptr<Model> model;
  if (!config.embeddings_path.empty()) {
    EmbeddingTable table =
        load_embeddings(config.embeddings_path, vocab, config.embed_dim, config.seed);
    std::cout << "pretrained embeddings: " << table.hits << " hits, " << table.misses
              << " misses\n";
    model = build_model(config, &table);
  } else {
    model = build_model(config);
  }
  std::cout << "architecture " << config.arch << ", " << model->params().total_parameters()
            << " parameters\n";

  std::ofstream log(args.out + "/train_log.jsonl");
  TrainRunRecord record = train(*model, train_set, dev_set, vocab, config, args.out, &log);

  ordered_json j;
  j["epochs_run"] = record.epochs_run;
  j["epoch_losses"] = record.epoch_losses;
  j["dev_bleu4"] = record.dev_metric_history;
  j["best_checkpoint"] = record.best_checkpoint_path;
  j["early_stopped"] = record.early_stopped;
  j["seed"] = record.seed;
  j["config_hash"] = config_hash(config);
  j["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  std::ofstream(args.out + "/train_record.json") << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- generate ------------------------------------------------------------------

int run_generate(const CommonArgs& args, const std::string& checkpoint,
                 const std::string& split) {
  using namespace hiergen;
  if (args.data.empty() || args.out.empty()) {
    std::cerr << "generate: --data (preprocessed dir) and --out are required\n";
    return 1;
  }
  Config config = resolve_config(args);
  Vocab vocab = Vocab::load(args.data + "/vocab.txt");
  apply_override(config, "vocab_size=" + std::to_string(vocab.size()));
  emit_resolved_config(config, args.out);

  const std::string ckpt = checkpoint.empty() ? args.out + "/best.ckpt" : checkpoint;
  std::vector<QGInstance> instances =
      encode_all(read_instances_jsonl(args.data + "/" + split + ".jsonl"), vocab);
  if (instances.empty()) {
    std::cerr << "generate: no instances in split " << split << "\n";
    return 1;
  }

  auto model = build_model(config);
  load_checkpoint(model->params(), ckpt);

  std::vector<std::string> lines(instances.size());
  std::atomic<long> unk_emitted{0};
  parallel_for(static_cast<int>(instances.size()), [&](int i) {
    const QGInstance& inst = instances[static_cast<std::size_t>(i)];
    std::vector<int> ids =
        config.beam > 1
            ? beam_decode(*model, inst, config.beam, config.max_decode_len, config.length_norm)
            : greedy_decode(*model, inst, config.max_decode_len);
    for (int id : ids) {
      if (id == Vocab::kUnk) {
        ++unk_emitted;
        break;
      }
    }
    ordered_json j;
    j["id"] = inst.id;
    j["paragraph_id"] = inst.paragraph_id;
    j["generated"] = vocab.decode(ids);
    j["reference"] = vocab.decode(inst.question);
    lines[static_cast<std::size_t>(i)] = j.dump();
  });
  std::ofstream out(args.out + "/generations.jsonl");
  for (const auto& line : lines) out << line << "\n";
  std::cout << "wrote " << lines.size() << " generations to " << args.out
            << "/generations.jsonl (" << unk_emitted.load() << " contain <unk>)\n";
  return 0;
}

// ---- evaluate -------------------------------------------------------------------

std::vector<hiergen::TokenSeq> read_token_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<hiergen::TokenSeq> out;
  std::string line;
  while (std::getline(f, line)) {
    out.push_back(hiergen::tokenize(line));
  }
  return out;
}

int run_evaluate(const CommonArgs& args, const std::string& hyp_path,
                 const std::string& ref_path) {
  using namespace hiergen;
  Config config = resolve_config(args);

  std::vector<TokenSeq> hyps, refs;
  if (!hyp_path.empty() || !ref_path.empty()) {
    if (hyp_path.empty() || ref_path.empty()) {
      std::cerr << "evaluate: --hyp and --ref must be given together\n";
      return 1;
    }
    hyps = read_token_lines(hyp_path);
    refs = read_token_lines(ref_path);
  } else {
    if (args.data.empty()) {
      std::cerr << "evaluate: need --data generations.jsonl (or --hyp/--ref)\n";
      return 1;
    }
    std::ifstream f(args.data);
    if (!f) {
      std::cerr << "evaluate: cannot open " << args.data << "\n";
      return 1;
    }
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      hyps.push_back(j.at("generated").get<TokenSeq>());
      refs.push_back(j.at("reference").get<TokenSeq>());
    }
  }
  if (hyps.size() != refs.size()) {
    std::cerr << "evaluate: corpus size mismatch, " << hyps.size() << " hypotheses vs "
              << refs.size() << " references\n";
    return 1;
  }
  if (hyps.empty()) {
    std::cerr << "evaluate: empty corpus\n";
    return 1;
  }

  EvalReport report = evaluate_corpus(hyps, refs);
  const std::string out_json = eval_report_json(report, config_hash(config), config.seed);
  std::cout << out_json << "\n";
  if (!args.out.empty()) {
    fs::create_directories(args.out);
    std::ofstream(args.out + "/eval_report.json") << out_json << "\n";
  }
  return 0;
}

// ---- gradcheck ---------------------------------------------------------------------

int run_gradcheck(const CommonArgs& args) {
  using namespace hiergen;
  // the built-in toy drives the check; --arch/--set may reshape it
  ToySetup toy = make_toy_setup("HierSeq2SeqAE");
  Config config = toy.config;
  if (!args.config_path.empty()) config = parse_config_file(args.config_path);
  for (const std::string& o : args.overrides) apply_override(config, o);
  if (!args.arch.empty()) apply_override(config, "arch=" + args.arch);
  if (args.seed >= 0) apply_override(config, "seed=" + std::to_string(args.seed));
  apply_override(config, "vocab_size=" + std::to_string(toy.vocab.size()));
  validate(config);
  emit_resolved_config(config, args.out);

  auto model = build_model(config);
  GradCheckReport report = gradcheck(*model, toy.instance, 1e-5, 1e-3, 200);
  std::cout << report.to_json() << "\n";
  if (!args.out.empty()) {
    std::ofstream(args.out + "/gradcheck_report.json") << report.to_json() << "\n";
  }
  if (!report.passed) {
    std::cerr << "gradcheck FAILED: group " << report.worst_group << " rel err "
              << report.max_rel_err << "\n";
    return 2;
  }
  return 0;
}

// ---- inspect-attention ----------------------------------------------------------------

int run_inspect(const CommonArgs& args, const std::string& checkpoint, int instance_index,
                const std::string& split) {
  using namespace hiergen;
  if (args.data.empty()) {
    std::cerr << "inspect-attention: --data (preprocessed dir) is required\n";
    return 1;
  }
  Config config = resolve_config(args);
  Vocab vocab = Vocab::load(args.data + "/vocab.txt");
  apply_override(config, "vocab_size=" + std::to_string(vocab.size()));

  auto model = build_model(config);
  if (!model->has_hierarchical_attention()) {
    std::cerr << "inspect-attention: architecture " << config.arch
              << " has no hierarchical attention (only HierSeq2SeqAE and HierTransSeq2SeqAE "
                 "expose sentence/word weights)\n";
    return 1;
  }
  if (!checkpoint.empty()) load_checkpoint(model->params(), checkpoint);

  std::vector<QGInstance> instances =
      encode_all(read_instances_jsonl(args.data + "/" + split + ".jsonl"), vocab);
  if (instance_index < 0 || instance_index >= static_cast<int>(instances.size())) {
    std::cerr << "inspect-attention: instance index " << instance_index << " out of range\n";
    return 1;
  }
  const QGInstance& inst = instances[static_cast<std::size_t>(instance_index)];

  auto session = model->begin_decode(inst);
  std::vector<int> prefix{Vocab::kBos};
  ordered_json steps = ordered_json::array();
  for (int step = 0; step < config.max_decode_len; ++step) {
    std::vector<double> lp = session->next_logprobs(prefix);
    int best = -1;
    for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
      if (tok == Vocab::kPad || tok == Vocab::kBos) continue;
      if (best < 0 || lp[static_cast<std::size_t>(tok)] > lp[static_cast<std::size_t>(best)]) {
        best = tok;
      }
    }
    auto snapshot = session->last_attention();
    ordered_json record;
    record["step"] = step;
    record["token"] = vocab.token(best);
    if (snapshot) {
      record["sentence_weights"] = snapshot->sentence_weights;  // zeros stay visible
      ordered_json tops = ordered_json::array();
      for (std::size_t s = 0; s < snapshot->word_weights.size(); ++s) {
        const auto& weights = snapshot->word_weights[s];
        std::vector<std::size_t> order(weights.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
        ordered_json sentence_tops = ordered_json::array();
        for (std::size_t r = 0; r < std::min<std::size_t>(5, order.size()); ++r) {
          const std::size_t pos = order[r];
          sentence_tops.push_back({{"position", pos},
                                   {"token", vocab.token(inst.paragraph[s][pos])},
                                   {"weight", weights[pos]}});
        }
        tops.push_back(sentence_tops);
      }
      record["top_words"] = tops;
    }
    steps.push_back(record);
    if (best == Vocab::kEos) break;
    prefix.push_back(best);
  }

  ordered_json out;
  out["id"] = inst.id;
  out["paragraph_id"] = inst.paragraph_id;
  out["reference"] = vocab.decode(inst.question);
  out["steps"] = steps;
  std::cout << out.dump(2) << "\n";
  if (!args.out.empty()) {
    fs::create_directories(args.out);
    std::ofstream(args.out + "/attention.json") << out.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical paragraph encoders for question generation"};
  app.require_subcommand(1);

  CommonArgs pre_args, train_args, gen_args, eval_args, grad_args, inspect_args;
  std::string gen_checkpoint, inspect_checkpoint;
  std::string gen_split = "dev", inspect_split = "dev";
  std::string eval_hyp, eval_ref;
  int inspect_index = 0;

  add_common(app.add_subcommand("preprocess", "ingest a raw dataset into instances + vocab"),
             pre_args);
  add_common(app.add_subcommand("train", "train a model on preprocessed data"), train_args);

  CLI::App* gen = app.add_subcommand("generate", "decode questions with a trained checkpoint");
  add_common(gen, gen_args);
  gen->add_option("--checkpoint", gen_checkpoint, "checkpoint path (default OUT/best.ckpt)");
  gen->add_option("--split", gen_split, "train or dev");

  CLI::App* ev = app.add_subcommand("evaluate", "score generations with BLEU and ROUGE-L");
  add_common(ev, eval_args);
  ev->add_option("--hyp", eval_hyp, "hypothesis text file, one per line");
  ev->add_option("--ref", eval_ref, "reference text file, one per line");

  add_common(app.add_subcommand("gradcheck", "finite-difference check on the built-in toy"),
             grad_args);

  CLI::App* ins = app.add_subcommand("inspect-attention",
                                     "dump per-step sentence/word attention of a checkpoint");
  add_common(ins, inspect_args);
  ins->add_option("--checkpoint", inspect_checkpoint, "checkpoint path");
  ins->add_option("--instance", inspect_index, "instance index within the split");
  ins->add_option("--split", inspect_split, "train or dev");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (app.got_subcommand("preprocess")) return run_preprocess(pre_args);
    if (app.got_subcommand("train")) return run_train(train_args);
    if (app.got_subcommand("generate")) return run_generate(gen_args, gen_checkpoint, gen_split);
    if (app.got_subcommand("evaluate")) return run_evaluate(eval_args, eval_hyp, eval_ref);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(grad_args);
    if (app.got_subcommand("inspect-attention")) {
      return run_inspect(inspect_args, inspect_checkpoint, inspect_index, inspect_split);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
