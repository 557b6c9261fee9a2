// vampire: CPU-first semi-supervised text classification.
//
// Subcommands: preprocess, pretrain, search, topics, train, selftrain,
// evaluate, experiment. Logs go to stderr; machine-readable results go to
// stdout or --out. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vampire/classifier.hpp"
#include "vampire/coherence.hpp"
#include "vampire/corpus.hpp"
#include "vampire/model.hpp"
#include "vampire/pipeline.hpp"
#include "vampire/semisup.hpp"
#include "vampire/serialize.hpp"

namespace {

using json = nlohmann::json;
using namespace vampire;

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json config;
  in >> config;
  return config;
}

std::unordered_set<std::string> stopwords_from(const json& corpus_section) {
  if (corpus_section.contains("stopwords")) {
    return corpus::load_stopwords(corpus_section.at("stopwords").get<std::string>());
  }
  return corpus::snowball_stopwords();
}

void emit(const std::string& out_path, const std::string& payload) {
  if (out_path.empty()) {
    std::cout << payload << std::endl;
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open output file " + out_path);
    out << payload << '\n';
  }
}

struct LoadedCorpus {
  std::vector<corpus::RawRecord> records;
  std::vector<corpus::Document> docs;
  corpus::PreprocessStats stats;
};

LoadedCorpus load_documents(const std::string& path, const corpus::LabelMap* labels) {
  LoadedCorpus lc;
  lc.records = corpus::read_jsonl(path);
  lc.docs = corpus::make_documents(lc.records, labels, &lc.stats);
  return lc;
}

PretrainData prepare_pretrain_data(const std::vector<corpus::Document>& train_docs,
                                   const std::vector<corpus::Document>& val_docs,
                                   const corpus::Vocabulary& vocab,
                                   corpus::PreprocessStats* stats) {
  PretrainData data;
  for (const auto& doc : train_docs) data.train.push_back(corpus::to_counts(doc, vocab, stats));
  for (const auto& doc : val_docs) data.validation.push_back(corpus::to_counts(doc, vocab, stats));
  data.val_stats = coherence::build_stats(val_docs, vocab);
  data.background_log_freq = background_log_frequency(data.train, vocab.size());
  data.vocab_hash = vocab.hash();
  return data;
}

void check_vocab_hash(const VampireModel& model, const corpus::Vocabulary& vocab) {
  if (!model.vocab_hash.empty() && model.vocab_hash != vocab.hash()) {
    throw std::runtime_error("vocabulary hash mismatch: the model was pretrained with a "
                             "different vocabulary file");
  }
}

// Effective settings echoed before execution.
void echo_config(const std::string& name, const json& config) {
  std::cerr << "[" << name << "] effective config: " << config.dump() << std::endl;
}

int run(int argc, char** argv) {
  CLI::App app{"vampire: lightweight variational pretraining for text classification"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (sections: corpus, vampire, "
                                          "classifier, search, protocol)")
      ->configurable(false);

  // ---- preprocess ----
  auto* cmd_pre = app.add_subcommand("preprocess", "JSONL -> vocabulary + count cache");
  std::string pre_input, pre_vocab, pre_counts, pre_stopwords;
  int pre_vocab_size = 30000;
  cmd_pre->add_option("--input", pre_input, "input JSONL")->required();
  cmd_pre->add_option("--vocab-out", pre_vocab, "vocabulary output path")->required();
  cmd_pre->add_option("--counts-out", pre_counts, "binary count-cache output path");
  cmd_pre->add_option("--vocab-size", pre_vocab_size, "vocabulary size limit");
  cmd_pre->add_option("--stopwords", pre_stopwords, "stopword file (default: built-in Snowball)");

  // ---- pretrain ----
  auto* cmd_fit = app.add_subcommand("pretrain", "pretrain the document model -> .vam");
  std::string fit_train, fit_val, fit_out, fit_vocab, fit_log, fit_criterion;
  std::uint64_t fit_seed = 0;
  cmd_fit->add_option("--train", fit_train, "unlabeled training JSONL")->required();
  cmd_fit->add_option("--val", fit_val, "validation JSONL (coherence reference)")->required();
  cmd_fit->add_option("--out", fit_out, "checkpoint output (.vam)")->required();
  cmd_fit->add_option("--vocab", fit_vocab, "vocabulary file (built from --train when absent)");
  cmd_fit->add_option("--log", fit_log, "training log output (JSON lines)");
  cmd_fit->add_option("--seed", fit_seed, "random seed");
  cmd_fit->add_option("--criterion", fit_criterion, "stopping criterion: npmi or nll");

  // ---- search ----
  auto* cmd_search = app.add_subcommand("search", "random hyperparameter search -> best .vam");
  std::string se_train, se_val, se_out, se_vocab, se_table, se_criterion;
  std::uint64_t se_seed = 0;
  int se_trials = 10;
  int se_par = 0;
  cmd_search->add_option("--train", se_train, "unlabeled training JSONL")->required();
  cmd_search->add_option("--val", se_val, "validation JSONL")->required();
  cmd_search->add_option("--out", se_out, "best checkpoint output (.vam)")->required();
  cmd_search->add_option("--vocab", se_vocab, "vocabulary file (built from --train when absent)");
  cmd_search->add_option("--trials", se_trials, "number of trials");
  cmd_search->add_option("--parallelism", se_par, "concurrent trials (default VAMPIRE_THREADS)");
  cmd_search->add_option("--table", se_table, "per-trial results output (JSON lines)");
  cmd_search->add_option("--seed", se_seed, "master seed");
  cmd_search->add_option("--criterion", se_criterion, "selection criterion: npmi or nll");

  // ---- topics ----
  auto* cmd_topics = app.add_subcommand("topics", "inspect topics of a checkpoint");
  std::string tp_model, tp_vocab, tp_ref, tp_out;
  int tp_top = 10;
  cmd_topics->add_option("--model", tp_model, "checkpoint (.vam)")->required();
  cmd_topics->add_option("--vocab", tp_vocab, "vocabulary file")->required();
  cmd_topics->add_option("--top", tp_top, "words per topic");
  cmd_topics->add_option("--ref", tp_ref, "reference JSONL for NPMI (omit for words only)");
  cmd_topics->add_option("--out", tp_out, "output path (default stdout)");

  // ---- train ----
  auto* cmd_train = app.add_subcommand("train", "train the downstream classifier -> .dan");
  std::string tr_train, tr_val, tr_out, tr_vampire, tr_vocab;
  std::uint64_t tr_seed = 0;
  cmd_train->add_option("--train", tr_train, "labeled training JSONL")->required();
  cmd_train->add_option("--val", tr_val, "labeled validation JSONL")->required();
  cmd_train->add_option("--out", tr_out, "classifier output (.dan)")->required();
  cmd_train->add_option("--vampire", tr_vampire, "frozen pretrained checkpoint (.vam)");
  cmd_train->add_option("--vocab", tr_vocab, "pretraining vocabulary (required with --vampire)");
  cmd_train->add_option("--seed", tr_seed, "random seed");

  // ---- selftrain ----
  auto* cmd_st = app.add_subcommand("selftrain", "self-training baseline -> .dan");
  std::string st_train, st_unlabeled, st_val, st_out, st_log;
  std::uint64_t st_seed = 0;
  cmd_st->add_option("--train", st_train, "labeled training JSONL")->required();
  cmd_st->add_option("--unlabeled", st_unlabeled, "unlabeled pool JSONL")->required();
  cmd_st->add_option("--val", st_val, "labeled validation JSONL")->required();
  cmd_st->add_option("--out", st_out, "classifier output (.dan)")->required();
  cmd_st->add_option("--log", st_log, "iteration log output (JSON lines)");
  cmd_st->add_option("--seed", st_seed, "random seed");

  // ---- evaluate ----
  auto* cmd_eval = app.add_subcommand("evaluate", "evaluate a classifier on labeled JSONL");
  std::string ev_model, ev_test, ev_vampire, ev_vocab, ev_out;
  cmd_eval->add_option("--model", ev_model, "classifier checkpoint (.dan)")->required();
  cmd_eval->add_option("--test", ev_test, "labeled test JSONL")->required();
  cmd_eval->add_option("--vampire", ev_vampire, "pretrained checkpoint (.vam), if the model uses one");
  cmd_eval->add_option("--vocab", ev_vocab, "pretraining vocabulary (required with --vampire)");
  cmd_eval->add_option("--out", ev_out, "report output path (default stdout)");

  // ---- experiment ----
  auto* cmd_exp = app.add_subcommand("experiment", "label-budget x seed results grid");
  std::string ex_train, ex_unlabeled, ex_val, ex_test, ex_vampire, ex_vocab, ex_out, ex_runs;
  int ex_par = 0;
  cmd_exp->add_option("--train", ex_train, "labeled training-pool JSONL")->required();
  cmd_exp->add_option("--unlabeled", ex_unlabeled, "unlabeled pool JSONL (selftrain method)");
  cmd_exp->add_option("--val", ex_val, "labeled validation JSONL")->required();
  cmd_exp->add_option("--test", ex_test, "labeled test JSONL")->required();
  cmd_exp->add_option("--vampire", ex_vampire, "pretrained checkpoint (vampire method)");
  cmd_exp->add_option("--vocab", ex_vocab, "pretraining vocabulary (vampire method)");
  cmd_exp->add_option("--out", ex_out, "CSV grid output path")->required();
  cmd_exp->add_option("--runs", ex_runs, "per-run records output (JSON lines)");
  cmd_exp->add_option("--parallelism", ex_par, "concurrent runs (default VAMPIRE_THREADS)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // message on stderr
    return 1;
  }
  const json file_config = load_config_file(config_path);
  const json corpus_section = file_config.value("corpus", json::object());

  // ------------------------------------------------------------------ preprocess
  if (cmd_pre->parsed()) {
    int vocab_size = corpus_section.value("vocab_size", 30000);
    if (cmd_pre->count("--vocab-size") > 0) vocab_size = pre_vocab_size;
    auto stopwords = pre_stopwords.empty() ? stopwords_from(corpus_section)
                                           : corpus::load_stopwords(pre_stopwords);
    echo_config("preprocess", json{{"input", pre_input},
                                   {"vocab_size", vocab_size},
                                   {"stopwords", pre_stopwords.empty() ? "builtin" : pre_stopwords}});
    LoadedCorpus lc = load_documents(pre_input, nullptr);
    corpus::Vocabulary vocab = corpus::build_vocabulary(lc.docs, vocab_size, stopwords);
    vocab.save(pre_vocab);
    std::cerr << "[preprocess] " << lc.docs.size() << " documents, vocabulary " << vocab.size()
              << " (" << lc.stats.degenerate_documents << " degenerate)" << std::endl;
    if (!pre_counts.empty()) {
      std::vector<std::pair<std::string, corpus::CountVector>> cache;
      for (const auto& doc : lc.docs) {
        cache.emplace_back(doc.id, corpus::to_counts(doc, vocab, &lc.stats));
      }
      corpus::write_count_cache(pre_counts, cache);
      std::cerr << "[preprocess] count cache: " << cache.size() << " documents, "
                << lc.stats.oov_tokens << " OOV tokens, " << lc.stats.all_oov_documents
                << " empty count vectors" << std::endl;
    }
    return 0;
  }

  // ------------------------------------------------------------------- pretrain
  if (cmd_fit->parsed()) {
    VampireConfig config = VampireConfig::from_json(file_config.value("vampire", json::object()));
    if (cmd_fit->count("--seed") > 0) config.seed = fit_seed;
    if (!fit_criterion.empty()) {
      config.stopping_criterion =
          fit_criterion == "nll" ? StoppingCriterion::nll : StoppingCriterion::npmi;
    }
    corpus::PreprocessStats stats;
    LoadedCorpus train_lc = load_documents(fit_train, nullptr);
    LoadedCorpus val_lc = load_documents(fit_val, nullptr);
    corpus::Vocabulary vocab;
    if (!fit_vocab.empty()) {
      vocab = corpus::Vocabulary::load(fit_vocab);
    } else {
      vocab = corpus::build_vocabulary(train_lc.docs, corpus_section.value("vocab_size", 30000),
                                       stopwords_from(corpus_section));
      vocab.save(fit_out + ".vocab");
      std::cerr << "[pretrain] vocabulary written to " << fit_out << ".vocab" << std::endl;
    }
    config.vocab_size = vocab.size();
    echo_config("pretrain", config.to_json());
    PretrainData data = prepare_pretrain_data(train_lc.docs, val_lc.docs, vocab, &stats);
    PretrainResult result = pretrain(data, config);
    save_model(result.model, fit_out, result.best_criterion, result.best_epoch);
    if (!fit_log.empty()) result.log.write_jsonl(fit_log);
    std::cerr << "[pretrain] best epoch " << result.best_epoch << ", criterion "
              << result.best_criterion << ", checkpoint " << fit_out << std::endl;
    std::cout << json{{"checkpoint", fit_out},
                      {"best_epoch", result.best_epoch},
                      {"criterion", result.best_criterion},
                      {"epochs_run", result.log.epochs.size()}}
                     .dump()
              << std::endl;
    return 0;
  }

  // --------------------------------------------------------------------- search
  if (cmd_search->parsed()) {
    pipeline::SearchSpace space =
        pipeline::SearchSpace::from_json(file_config.value("search", json::object()));
    const StoppingCriterion criterion =
        se_criterion == "nll" ? StoppingCriterion::nll : StoppingCriterion::npmi;
    const int parallelism = se_par > 0 ? se_par : pipeline::thread_cap();
    corpus::PreprocessStats stats;
    LoadedCorpus train_lc = load_documents(se_train, nullptr);
    LoadedCorpus val_lc = load_documents(se_val, nullptr);
    corpus::Vocabulary vocab;
    if (!se_vocab.empty()) {
      vocab = corpus::Vocabulary::load(se_vocab);
    } else {
      vocab = corpus::build_vocabulary(train_lc.docs, corpus_section.value("vocab_size", 30000),
                                       stopwords_from(corpus_section));
      vocab.save(se_out + ".vocab");
    }
    echo_config("search", json{{"space", space.to_json()},
                               {"trials", se_trials},
                               {"parallelism", parallelism},
                               {"seed", se_seed}});
    PretrainData data = prepare_pretrain_data(train_lc.docs, val_lc.docs, vocab, &stats);
    pipeline::SearchOutcome outcome =
        pipeline::run_search(space, data, criterion, se_trials, parallelism, se_seed);
    const pipeline::TrialResult& best = outcome.trials[outcome.best_index];
    save_model(outcome.best_model, se_out, best.criterion, 0);
    if (!se_table.empty()) {
      std::ofstream table(se_table, std::ios::trunc);
      if (!table) throw std::runtime_error("cannot open " + se_table);
      for (const auto& trial : outcome.trials) table << trial.to_json().dump() << '\n';
    }
    std::cout << json{{"best_trial", best.trial_id},
                      {"criterion", best.criterion},
                      {"checkpoint", se_out},
                      {"trials", outcome.trials.size()}}
                     .dump()
              << std::endl;
    return 0;
  }

  // --------------------------------------------------------------------- topics
  if (cmd_topics->parsed()) {
    VampireModel model = load_model(tp_model);
    corpus::Vocabulary vocab = corpus::Vocabulary::load(tp_vocab);
    check_vocab_hash(model, vocab);
    echo_config("topics", json{{"model", tp_model}, {"top", tp_top}});
    std::optional<coherence::CooccurrenceStats> stats;
    if (!tp_ref.empty()) {
      LoadedCorpus ref = load_documents(tp_ref, nullptr);
      stats = coherence::build_stats(ref.docs, vocab);
    }
    const auto ids = topics(model, tp_top);
    json out = json::array();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      json words = json::array();
      for (auto id : ids[k]) words.push_back(vocab.tokens[static_cast<std::size_t>(id)]);
      json entry = {{"topic_id", k}, {"words", words}};
      if (stats) {
        auto value = coherence::npmi_topic(ids[k], *stats);
        entry["npmi"] = value ? json(*value) : json(nullptr);
      } else {
        entry["npmi"] = nullptr;
      }
      out.push_back(std::move(entry));
    }
    emit(tp_out, out.dump(2));
    return 0;
  }

  // ---------------------------------------------------------------------- train
  if (cmd_train->parsed()) {
    dan::DanConfig config =
        dan::DanConfig::from_json(file_config.value("classifier", json::object()));
    if (cmd_train->count("--seed") > 0) config.seed = tr_seed;
    LoadedCorpus train_lc = load_documents(tr_train, nullptr);
    corpus::LabelMap labels = corpus::build_label_map(train_lc.records);
    if (labels.size() < 2) throw std::runtime_error("training data covers fewer than 2 classes");
    std::vector<corpus::Document> train_docs =
        corpus::make_documents(train_lc.records, &labels, nullptr);
    LoadedCorpus val_raw = load_documents(tr_val, nullptr);
    std::vector<corpus::Document> val_docs = corpus::make_documents(val_raw.records, &labels, nullptr);

    std::optional<VampireModel> vampire_model;
    std::optional<corpus::Vocabulary> vae_vocab;
    if (!tr_vampire.empty()) {
      if (tr_vocab.empty()) throw std::runtime_error("--vampire requires --vocab");
      vampire_model = load_model(tr_vampire);
      vae_vocab = corpus::Vocabulary::load(tr_vocab);
      check_vocab_hash(*vampire_model, *vae_vocab);
    }
    echo_config("train", config.to_json());
    auto [model, report] = dan::train_classifier(
        train_docs, val_docs, config, labels, vampire_model ? &*vampire_model : nullptr,
        vae_vocab ? &*vae_vocab : nullptr);
    dan::save_dan(model, tr_out);
    std::cout << json{{"checkpoint", tr_out},
                      {"val_accuracy", report.best_val_accuracy},
                      {"best_epoch", report.best_epoch},
                      {"seed", config.seed}}
                     .dump()
              << std::endl;
    return 0;
  }

  // ------------------------------------------------------------------ selftrain
  if (cmd_st->parsed()) {
    dan::DanConfig config =
        dan::DanConfig::from_json(file_config.value("classifier", json::object()));
    if (cmd_st->count("--seed") > 0) config.seed = st_seed;
    LoadedCorpus train_lc = load_documents(st_train, nullptr);
    corpus::LabelMap labels = corpus::build_label_map(train_lc.records);
    if (labels.size() < 2) throw std::runtime_error("training data covers fewer than 2 classes");
    std::vector<corpus::Document> train_docs =
        corpus::make_documents(train_lc.records, &labels, nullptr);
    LoadedCorpus val_raw = load_documents(st_val, nullptr);
    std::vector<corpus::Document> val_docs = corpus::make_documents(val_raw.records, &labels, nullptr);
    LoadedCorpus pool_lc = load_documents(st_unlabeled, nullptr);
    echo_config("selftrain", config.to_json());
    semisup::SelfTrainResult result =
        semisup::self_train(train_docs, pool_lc.docs, val_docs, config, labels);
    dan::save_dan(result.model, st_out);
    if (!st_log.empty()) {
      std::ofstream log(st_log, std::ios::trunc);
      if (!log) throw std::runtime_error("cannot open " + st_log);
      for (const auto& rec : result.log) log << rec.to_json().dump() << '\n';
    }
    std::cout << json{{"checkpoint", st_out},
                      {"best_iteration", result.best_iteration},
                      {"val_accuracy", result.best_val_accuracy},
                      {"iterations", result.log.size()}}
                     .dump()
              << std::endl;
    return 0;
  }

  // ------------------------------------------------------------------- evaluate
  if (cmd_eval->parsed()) {
    dan::DanModel model = dan::load_dan(ev_model);
    LoadedCorpus test_raw = load_documents(ev_test, nullptr);
    std::vector<corpus::Document> test_docs =
        corpus::make_documents(test_raw.records, &model.labels, nullptr);
    std::optional<VampireModel> vampire_model;
    std::optional<corpus::Vocabulary> vae_vocab;
    if (model.mix) {
      if (ev_vampire.empty() || ev_vocab.empty()) {
        throw std::runtime_error("this classifier uses vampire features; pass --vampire and --vocab");
      }
      vampire_model = load_model(ev_vampire);
      vae_vocab = corpus::Vocabulary::load(ev_vocab);
      check_vocab_hash(*vampire_model, *vae_vocab);
    }
    echo_config("evaluate", json{{"model", ev_model}, {"test", ev_test}});
    dan::EvalReport report = dan::evaluate(model, test_docs,
                                           vampire_model ? &*vampire_model : nullptr,
                                           vae_vocab ? &*vae_vocab : nullptr);
    json out = report.to_json();
    out["seed"] = model.config.seed;
    emit(ev_out, out.dump());
    return 0;
  }

  // ----------------------------------------------------------------- experiment
  if (cmd_exp->parsed()) {
    if (!file_config.contains("protocol")) {
      throw std::runtime_error("experiment requires a config file with a \"protocol\" section");
    }
    pipeline::ExperimentProtocol protocol =
        pipeline::ExperimentProtocol::from_json(file_config.at("protocol"));
    dan::DanConfig dan_config =
        dan::DanConfig::from_json(file_config.value("classifier", json::object()));
    const int parallelism = ex_par > 0 ? ex_par : pipeline::thread_cap();

    LoadedCorpus train_lc = load_documents(ex_train, nullptr);
    corpus::LabelMap labels = corpus::build_label_map(train_lc.records);
    pipeline::ExperimentData data;
    data.train_pool = corpus::make_documents(train_lc.records, &labels, nullptr);
    LoadedCorpus val_raw = load_documents(ex_val, nullptr);
    data.validation = corpus::make_documents(val_raw.records, &labels, nullptr);
    LoadedCorpus test_raw = load_documents(ex_test, nullptr);
    data.test = corpus::make_documents(test_raw.records, &labels, nullptr);
    if (!ex_unlabeled.empty()) {
      LoadedCorpus pool_lc = load_documents(ex_unlabeled, nullptr);
      data.unlabeled = std::move(pool_lc.docs);
    }
    data.labels = labels;
    data.dan_config = dan_config;

    std::optional<VampireModel> vampire_model;
    std::optional<corpus::Vocabulary> vae_vocab;
    if (!ex_vampire.empty()) {
      if (ex_vocab.empty()) throw std::runtime_error("--vampire requires --vocab");
      vampire_model = load_model(ex_vampire);
      vae_vocab = corpus::Vocabulary::load(ex_vocab);
      check_vocab_hash(*vampire_model, *vae_vocab);
      data.vampire = &*vampire_model;
      data.vae_vocab = &*vae_vocab;
    }
    echo_config("experiment", json{{"protocol", protocol.to_json()},
                                   {"classifier", dan_config.to_json()},
                                   {"parallelism", parallelism}});
    pipeline::ExperimentResults results = pipeline::run_experiment(protocol, data, parallelism);
    {
      std::ofstream out(ex_out, std::ios::trunc);
      if (!out) throw std::runtime_error("cannot open " + ex_out);
      out << results.to_csv();
    }
    if (!ex_runs.empty()) {
      std::ofstream runs(ex_runs, std::ios::trunc);
      if (!runs) throw std::runtime_error("cannot open " + ex_runs);
      for (const auto& rec : results.runs) runs << rec.dump() << '\n';
    }
    std::cout << results.summary().dump() << std::endl;
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
