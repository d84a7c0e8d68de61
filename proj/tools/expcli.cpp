// SPDX-License-Identifier: Apache-2.0
//
// Experiment CLI: dataset generation, training, evaluation, filler probes,
// sweeps and report rendering. Exit codes: 0 ok, 2 config, 3 data,
// 4 numeric.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fillerlab/trainer.hpp"

using namespace fillerlab;
using nlohmann::json;

namespace {

std::map<Regime, double> parse_mixture(const std::string& text) {
  std::map<Regime, double> mix;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos)
      throw ConfigError("mixture entry needs name=weight: " + part);
    mix[regime_from_name(part.substr(0, eq))] =
        std::stod(part.substr(eq + 1));
  }
  return mix;
}

ModelConfig model_preset(const std::string& name) {
  ModelConfig cfg;
  if (name == "paper") {
    cfg.layers = 4;
    cfg.hidden = 384;
    cfg.heads = 6;
    cfg.ffn_hidden = 1024;
  } else if (name == "desk") {
    cfg.layers = 2;
    cfg.hidden = 128;
    cfg.heads = 4;
    cfg.ffn_hidden = 344;
  } else if (name == "smoke") {
    cfg.layers = 2;
    cfg.hidden = 32;
    cfg.heads = 2;
    cfg.ffn_hidden = 96;
  } else {
    throw ConfigError("unknown model preset: " + name);
  }
  return cfg;
}

TrainConfig train_preset(const std::string& name) {
  if (name == "filler-cot") return preset_filler_cot();
  if (name == "immediate") return preset_immediate();
  throw ConfigError("unknown train preset: " + name);
}

ModelConfig model_config_for(const DatasetManifest& m,
                             const std::string& preset) {
  ModelConfig cfg = model_preset(preset);
  cfg.vocab_size = static_cast<int>(m.vocab_tokens.size());
  cfg.input_width = m.input_width;
  cfg.output_width = m.target_width;
  cfg.max_seq_len = m.max_len;
  cfg.validate();
  return cfg;
}

Vocabulary manifest_vocabulary(const DatasetManifest& m) {
  Vocabulary vocab = dataset_vocabulary(m.spec);
  if (vocab.tokens != m.vocab_tokens)
    throw DataError("manifest vocabulary does not match generator");
  return vocab;
}

std::vector<SequenceRecord> load_test_split(const RecordStream& stream,
                                            long count) {
  std::vector<SequenceRecord> out;
  out.reserve(count);
  for (long i = 0; i < count; ++i) out.push_back(stream.at(Split::Test, i));
  return out;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json eval_to_json(const EvalResult& r) {
  json regimes = json::object();
  for (const auto& [regime, e] : r.by_regime)
    regimes[regime_name(regime)] = {{"count", e.count},
                                    {"correct", e.correct},
                                    {"accuracy", e.accuracy()},
                                    {"loss", e.loss},
                                    {"answer_loss", e.answer_loss}};
  return json{{"overall",
               {{"count", r.overall.count},
                {"correct", r.overall.correct},
                {"accuracy", r.overall.accuracy()},
                {"loss", r.overall.loss},
                {"answer_loss", r.overall.answer_loss}}},
              {"by_regime", regimes}};
}

void print_eval(const EvalResult& r) {
  std::cout << "overall accuracy " << r.overall.accuracy() << " ("
            << r.overall.correct << "/" << r.overall.count << "), loss "
            << r.overall.loss << "\n";
  for (const auto& [regime, e] : r.by_regime)
    std::cout << "  " << regime_name(regime) << ": accuracy " << e.accuracy()
              << " (" << e.correct << "/" << e.count << "), loss " << e.loss
              << ", answer_loss " << e.answer_loss << "\n";
}

// Minimal static SVG line plot. Each series is drawn as a polyline; the
// source numbers are embedded as a comment so plots stay auditable.
struct Series {
  std::string label;
  std::vector<double> x, y;
};

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<Series>& series) {
  const int W = 640, H = 420, L = 60, B = 50, T = 30, R = 20;
  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto px = [&](double x) {
    return L + (x - xmin) / (xmax - xmin) * (W - L - R);
  };
  auto py = [&](double y) {
    return H - B - (y - ymin) / (ymax - ymin) * (H - B - T);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\">\n<!-- data:\n";
  for (const auto& s : series) {
    out << s.label << ":";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << " (" << s.x[i] << "," << s.y[i] << ")";
    out << "\n";
  }
  out << "-->\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double yv = ymin + (ymax - ymin) * tick / 4.0;
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"10\">" << yv << "</text>\n";
    const double xv = xmin + (xmax - xmin) * tick / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"10\">" << xv << "</text>\n";
  }
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    out << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << W - R - 8 << "\" y=\"" << T + 16 + 14 * si
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\" fill=\"" << color << "\">" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

struct GenFlags {
  std::string task = "3sum";
  int n = 4, d = 2;
  std::string mix = "filler=0.5,cot=0.5";
  long train_count = 100000, test_count = 2000;
  std::uint64_t seed = 0, bank_seed = 0;
  double adaptive_percentile = 95.0;
  long calibration = 100000;
  bool no_drop = false, subscript_drop = false;
  int echo_count = -1;
  std::string out;
};

DatasetSpec spec_from_flags(const GenFlags& f) {
  DatasetSpec spec;
  spec.task = task_from_name(f.task);
  spec.n = f.n;
  spec.d = f.d;
  spec.mixture = parse_mixture(f.mix);
  spec.train_count = f.train_count;
  spec.test_count = f.test_count;
  spec.seed = f.seed;
  spec.bank_seed = f.bank_seed;
  spec.adaptive_truncation_percentile = f.adaptive_percentile;
  spec.adaptive_calibration_samples = f.calibration;
  spec.render.drop = !f.no_drop;
  spec.render.adaptive.subscript_drop = f.subscript_drop;
  spec.render.echo_count = f.echo_count;
  validate_spec(spec);
  return spec;
}

int cmd_gen(const GenFlags& f) {
  const DatasetManifest m = write_dataset(spec_from_flags(f), f.out);
  std::cout << "wrote " << f.out << ": " << m.train_stats.total << " train / "
            << m.test_stats.total << " test records\n"
            << "majority baseline (train) " << m.train_stats.majority_baseline
            << ", max length " << m.max_len << "\n";
  return 0;
}

struct TrainFlags {
  std::string data, out;
  std::string preset = "filler-cot";
  std::string model = "desk";
  int epochs = -1, batch = -1, eval_batch = 64;
  double lr = -1.0, weight_decay = -1.0, clip = -1.0;
  std::uint64_t seed = 0, model_seed = 1;
  long max_steps = -1;
  int resume_epoch = 0;
};

int cmd_train(const TrainFlags& f) {
  const DatasetManifest m = read_manifest(f.data);
  const Vocabulary vocab = manifest_vocabulary(m);
  const RecordStream stream(m.spec);
  StreamSource train_src(&stream, Split::Train, m.spec.train_count);
  VectorSource test_src(load_test_split(stream, m.spec.test_count));

  TrainConfig cfg = train_preset(f.preset);
  if (f.epochs > 0) cfg.epochs = f.epochs;
  if (f.batch > 0) cfg.batch_size = f.batch;
  if (f.lr >= 0.0) cfg.adam.lr = f.lr;
  if (f.weight_decay >= 0.0) cfg.adam.weight_decay = f.weight_decay;
  if (f.clip > 0.0) cfg.clip_norm = f.clip;
  cfg.eval_batch_size = f.eval_batch;
  cfg.seed = f.seed;
  cfg.max_steps = f.max_steps;
  cfg.out_dir = f.out;
  cfg.start_epoch = f.resume_epoch;

  Model<float> model;
  Adam<float> opt(cfg.adam);
  if (f.resume_epoch > 0) {
    const std::string tag = std::to_string(f.resume_epoch - 1);
    model = load_checkpoint(f.out + "/model_epoch" + tag + ".ckpt");
    load_optimizer(opt, f.out + "/optim_epoch" + tag + ".bin");
  } else {
    model = init_model<float>(model_config_for(m, f.model), f.model_seed);
  }

  std::filesystem::create_directories(f.out);
  write_json(f.out + "/config.json",
             json{{"data", f.data},
                  {"preset", f.preset},
                  {"model", f.model},
                  {"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size},
                  {"lr", cfg.adam.lr},
                  {"weight_decay", cfg.adam.weight_decay},
                  {"clip_norm", cfg.clip_norm},
                  {"seed", cfg.seed},
                  {"model_seed", f.model_seed},
                  {"max_steps", cfg.max_steps},
                  {"params", model.params.param_count()}});

  const RunMetrics run = train(model, opt, cfg, train_src, test_src, vocab);

  json best = json::object();
  for (const auto& [regime, acc] : run.best_accuracy)
    best[regime_name(regime)] = acc;
  write_json(f.out + "/summary.json",
             json{{"total_steps", run.total_steps},
                  {"best_overall_accuracy", run.best_overall_accuracy},
                  {"best_accuracy", best}});
  std::cout << "run complete: " << run.total_steps << " steps, best accuracy "
            << run.best_overall_accuracy << "\n";
  for (const auto& [regime, acc] : run.best_accuracy)
    std::cout << "  " << regime_name(regime) << ": " << acc << "\n";
  return 0;
}

struct EvalFlags {
  std::string ckpt, data, regime, out;
  double fraction = 1.0;
  int batch = 64;
};

int cmd_eval(const EvalFlags& f) {
  Model<float> model = load_checkpoint(f.ckpt);
  const DatasetManifest m = read_manifest(f.data);
  const Vocabulary vocab = manifest_vocabulary(m);
  const RecordStream stream(m.spec);
  std::vector<SequenceRecord> records =
      load_test_split(stream, m.spec.test_count);
  if (!f.regime.empty()) {
    const Regime keep = regime_from_name(f.regime);
    std::erase_if(records, [&](const SequenceRecord& r) {
      return r.regime != keep;
    });
    if (records.empty())
      throw DataError("no test records in regime " + f.regime);
  }
  if (f.fraction != 1.0)
    for (auto& r : records) r = with_filler_fraction(r, f.fraction);
  VectorSource src(std::move(records));
  const EvalResult result = evaluate(model, src, vocab, f.batch);
  print_eval(result);
  if (!f.out.empty()) write_json(f.out, eval_to_json(result));
  return 0;
}

struct ProbeFlags {
  std::string ckpt, data, out;
  std::string fractions = "0.2,0.4,0.6,0.8,1.0";
  long train_count = 10000;
  int epochs = 3, batch = 64;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

int cmd_probe(const ProbeFlags& f) {
  Model<float> model = load_checkpoint(f.ckpt);
  const DatasetManifest m = read_manifest(f.data);
  const Vocabulary vocab = manifest_vocabulary(m);
  const RecordStream stream(m.spec);
  const long train_count = std::min(f.train_count, m.spec.train_count);
  StreamSource train_src(&stream, Split::Train, train_count);
  VectorSource test_src(load_test_split(stream, m.spec.test_count));

  std::vector<double> fractions;
  std::stringstream ss(f.fractions);
  std::string part;
  while (std::getline(ss, part, ',')) fractions.push_back(std::stod(part));
  if (fractions.empty()) throw ConfigError("no probe fractions given");

  std::filesystem::create_directories(f.out);
  std::ofstream csv(f.out + "/probe.csv");
  if (!csv) throw DataError("cannot write probe.csv in " + f.out);
  csv << "fraction,accuracy,correct,count\n";
  Series curve;
  curve.label = "probe accuracy";
  for (double fraction : fractions) {
    ProbeConfig pcfg;
    pcfg.fraction = fraction;
    pcfg.epochs = f.epochs;
    pcfg.batch_size = f.batch;
    pcfg.lr = f.lr;
    pcfg.seed = f.seed;
    const EvalResult r =
        probe_finetune(model, pcfg, train_src, test_src, vocab);
    csv << fraction << ',' << r.overall.accuracy() << ',' << r.overall.correct
        << ',' << r.overall.count << "\n";
    csv.flush();
    curve.x.push_back(fraction);
    curve.y.push_back(r.overall.accuracy());
    std::cout << "fraction " << fraction << ": accuracy "
              << r.overall.accuracy() << "\n";
  }
  write_svg_plot(f.out + "/probe.svg", "accuracy vs filler fraction",
                 {curve});
  return 0;
}

struct SweepFlags {
  std::string axis = "length";
  std::string values = "6,8,10,12,14";
  int n = 8, d = 3;
  long train_count = 100000, test_count = 1000;
  std::string model = "desk";
  std::uint64_t seed = 0;
  std::string out;
  bool baseline_immediate_only = false;
  int epochs_filler = -1, epochs_baseline = -1;
  int batch = -1;
};

int cmd_sweep(const SweepFlags& f) {
  if (f.axis != "length" && f.axis != "dimension")
    throw ConfigError("sweep axis must be length or dimension");
  std::vector<int> values;
  std::stringstream ss(f.values);
  std::string part;
  while (std::getline(ss, part, ',')) values.push_back(std::stoi(part));
  if (values.empty()) throw ConfigError("empty sweep value list");

  std::filesystem::create_directories(f.out);
  std::ofstream csv(f.out + "/sweep.csv");
  if (!csv) throw DataError("cannot write sweep.csv in " + f.out);
  csv << "axis,value,condition,best_accuracy,steps\n";
  Series filler_series{"filler", {}, {}}, base_series{"no-filler", {}, {}};

  for (int value : values) {
    const int n = f.axis == "length" ? value : f.n;
    const int d = f.axis == "length" ? f.d : value;
    const std::string point_dir =
        f.out + "/point_" + std::to_string(value);

    auto run_condition = [&](const std::string& name,
                             const std::map<Regime, double>& mixture,
                             TrainConfig cfg, Regime eval_regime) {
      DatasetSpec spec;
      spec.task = Task::ThreeSum;
      spec.n = n;
      spec.d = d;
      spec.train_count = f.train_count;
      spec.test_count = f.test_count;
      spec.seed = f.seed;  // matched instances across conditions
      spec.mixture = mixture;
      validate_spec(spec);
      const std::string dir = point_dir + "/" + name;
      const DatasetManifest m = write_dataset(spec, dir + "/data");
      const Vocabulary vocab = manifest_vocabulary(m);
      const RecordStream stream(m.spec);
      StreamSource train_src(&stream, Split::Train, spec.train_count);
      VectorSource test_src(load_test_split(stream, spec.test_count));
      cfg.out_dir = dir;
      cfg.seed = f.seed;
      if (f.batch > 0) cfg.batch_size = f.batch;
      Model<float> model =
          init_model<float>(model_config_for(m, f.model), f.seed + 1);
      Adam<float> opt(cfg.adam);
      const RunMetrics run =
          train(model, opt, cfg, train_src, test_src, vocab);
      double best = 0.0;
      if (run.best_accuracy.count(eval_regime))
        best = run.best_accuracy.at(eval_regime);
      csv << f.axis << ',' << value << ',' << name << ',' << best << ','
          << run.total_steps << "\n";
      csv.flush();
      return best;
    };

    TrainConfig filler_cfg = preset_filler_cot();
    if (f.epochs_filler > 0) filler_cfg.epochs = f.epochs_filler;
    const double filler_acc = run_condition(
        "filler",
        {{Regime::Filler, 0.5}, {Regime::ParallelCot, 0.5}}, filler_cfg,
        Regime::Filler);

    TrainConfig base_cfg = preset_immediate();
    if (f.epochs_baseline > 0) base_cfg.epochs = f.epochs_baseline;
    std::map<Regime, double> base_mix;
    if (f.axis == "dimension" && !f.baseline_immediate_only && d >= 2)
      base_mix = {{Regime::AdaptiveCot, 0.5}, {Regime::Immediate, 0.5}};
    else
      base_mix = {{Regime::Immediate, 1.0}};
    const double base_acc = run_condition("baseline", base_mix, base_cfg,
                                          Regime::Immediate);

    filler_series.x.push_back(value);
    filler_series.y.push_back(filler_acc);
    base_series.x.push_back(value);
    base_series.y.push_back(base_acc);
    std::cout << f.axis << " " << value << ": filler " << filler_acc
              << " vs baseline " << base_acc << "\n";
  }
  write_svg_plot(f.out + "/sweep.svg", "accuracy vs " + f.axis,
                 {filler_series, base_series});
  return 0;
}

struct ReportFlags {
  std::string runs;
  std::string out;
};

int cmd_report(const ReportFlags& f) {
  std::vector<std::string> dirs;
  std::stringstream ss(f.runs);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) dirs.push_back(part);
  }
  if (dirs.empty()) {
    std::cerr << "no runs\n";
    return 2;
  }
  std::filesystem::create_directories(f.out);
  std::ofstream csv(f.out + "/report.csv");
  if (!csv) throw DataError("cannot write report.csv in " + f.out);
  csv << "run,epoch,split,regime,count,loss,answer_loss,accuracy\n";
  std::vector<Series> loss_curves;
  for (const auto& dir : dirs) {
    std::ifstream metrics(dir + "/metrics.csv");
    if (!metrics) throw DataError("no metrics.csv in " + dir);
    Series losses;
    losses.label = std::filesystem::path(dir).filename().string();
    std::string line;
    std::getline(metrics, line);  // header
    while (std::getline(metrics, line)) {
      if (line.empty()) continue;
      csv << losses.label << ',' << line << "\n";
      std::stringstream row(line);
      std::vector<std::string> cols;
      std::string col;
      while (std::getline(row, col, ',')) cols.push_back(col);
      if (cols.size() >= 7 && cols[1] == "test" && cols[2] == "all") {
        losses.x.push_back(std::stod(cols[0]));
        losses.y.push_back(std::stod(cols[4]));
      }
    }
    loss_curves.push_back(std::move(losses));
  }
  write_svg_plot(f.out + "/loss_curves.svg", "test loss per epoch",
                 loss_curves);
  std::cout << "wrote " << f.out << "/report.csv and loss_curves.svg for "
            << dirs.size() << " runs\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"filler-token experiment runner"};
  app.require_subcommand(1);

  GenFlags gf;
  auto* gen = app.add_subcommand("gen", "generate a dataset");
  gen->add_option("--task", gf.task, "3sum or 2sum");
  gen->add_option("--n", gf.n, "inputs per instance");
  gen->add_option("--d", gf.d, "tuple dimension");
  gen->add_option("--mix", gf.mix, "regime mixture, e.g. filler=0.5,cot=0.5");
  gen->add_option("--train", gf.train_count, "training records");
  gen->add_option("--test", gf.test_count, "test records");
  gen->add_option("--seed", gf.seed, "dataset seed");
  gen->add_option("--bank-seed", gf.bank_seed, "2SUM permutation bank seed");
  gen->add_option("--adaptive-percentile", gf.adaptive_percentile,
                  "adaptive length cutoff percentile");
  gen->add_option("--calibration", gf.calibration,
                  "adaptive calibration sample count");
  gen->add_flag("--no-drop", gf.no_drop, "disable CoT symbol drop");
  gen->add_flag("--subscript-drop", gf.subscript_drop,
                "adaptive dimension-subscript drop");
  gen->add_option("--echo-count", gf.echo_count,
                  "2SUM inputs echoed back (-1 = all)");
  gen->add_option("--out", gf.out, "output directory")->required();

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--data", tf.data, "dataset directory")->required();
  tr->add_option("--out", tf.out, "run directory")->required();
  tr->add_option("--preset", tf.preset, "filler-cot or immediate");
  tr->add_option("--model", tf.model, "paper, desk or smoke");
  tr->add_option("--epochs", tf.epochs, "override epochs");
  tr->add_option("--batch", tf.batch, "override batch size");
  tr->add_option("--eval-batch", tf.eval_batch, "evaluation batch size");
  tr->add_option("--lr", tf.lr, "override learning rate");
  tr->add_option("--weight-decay", tf.weight_decay, "override weight decay");
  tr->add_option("--clip", tf.clip, "override gradient clip norm");
  tr->add_option("--seed", tf.seed, "shuffle seed");
  tr->add_option("--model-seed", tf.model_seed, "weight init seed");
  tr->add_option("--max-steps", tf.max_steps, "hard step cap");
  tr->add_option("--resume-epoch", tf.resume_epoch,
                 "resume from this epoch's predecessor checkpoint");

  EvalFlags ef;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", ef.ckpt, "model checkpoint")->required();
  ev->add_option("--data", ef.data, "dataset directory")->required();
  ev->add_option("--regime", ef.regime, "restrict to one regime");
  ev->add_option("--fraction", ef.fraction, "filler fraction to keep");
  ev->add_option("--batch", ef.batch, "batch size");
  ev->add_option("--out", ef.out, "write eval json here");

  ProbeFlags pf;
  auto* pr = app.add_subcommand("probe", "filler-ablation probe");
  pr->add_option("--ckpt", pf.ckpt, "source checkpoint")->required();
  pr->add_option("--data", pf.data, "dataset directory")->required();
  pr->add_option("--fractions", pf.fractions, "comma list of fractions");
  pr->add_option("--train-count", pf.train_count, "probe finetune records");
  pr->add_option("--epochs", pf.epochs, "probe epochs");
  pr->add_option("--batch", pf.batch, "probe batch size");
  pr->add_option("--lr", pf.lr, "probe learning rate");
  pr->add_option("--seed", pf.seed, "probe shuffle seed");
  pr->add_option("--out", pf.out, "output directory")->required();

  SweepFlags sf;
  auto* sw = app.add_subcommand("sweep", "paired filler/no-filler sweep");
  sw->add_option("--axis", sf.axis, "length or dimension");
  sw->add_option("--values", sf.values, "comma list of axis values");
  sw->add_option("--n", sf.n, "fixed n for dimension sweeps");
  sw->add_option("--d", sf.d, "fixed d for length sweeps");
  sw->add_option("--train", sf.train_count, "training records per condition");
  sw->add_option("--test", sf.test_count, "test records per condition");
  sw->add_option("--model", sf.model, "model preset");
  sw->add_option("--seed", sf.seed, "shared instance seed");
  sw->add_option("--batch", sf.batch, "override batch size");
  sw->add_option("--epochs-filler", sf.epochs_filler,
                 "override filler-condition epochs");
  sw->add_option("--epochs-baseline", sf.epochs_baseline,
                 "override baseline-condition epochs");
  sw->add_flag("--baseline-immediate-only", sf.baseline_immediate_only,
               "use pure immediate data for dimension-sweep baselines");
  sw->add_option("--out", sf.out, "output directory")->required();

  ReportFlags rf;
  auto* rp = app.add_subcommand("report", "tables and plots from run dirs");
  rp->add_option("--runs", rf.runs, "comma list of run directories")
      ->required();
  rp->add_option("--out", rf.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gf);
    if (tr->parsed()) return cmd_train(tf);
    if (ev->parsed()) return cmd_eval(ef);
    if (pr->parsed()) return cmd_probe(pf);
    if (sw->parsed()) return cmd_sweep(sf);
    if (rp->parsed()) return cmd_report(rf);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
