// Operator CLI: serve, offline inference, dataset tools, evaluation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"
#include "trapwatch/core/json.hpp"
#include "trapwatch/dataset/manifest.hpp"
#include "trapwatch/dataset/split.hpp"
#include "trapwatch/dataset/stats.hpp"
#include "trapwatch/dataset/voc.hpp"
#include "trapwatch/dataset/yolo.hpp"
#include "trapwatch/eval/average_precision.hpp"
#include "trapwatch/eval/confusion.hpp"
#include "trapwatch/eval/curves.hpp"
#include "trapwatch/eval/records.hpp"
#include "trapwatch/eval/report.hpp"
#include "trapwatch/gateway/detector.hpp"
#include "trapwatch/service/api.hpp"
#include "trapwatch/service/app.hpp"
#include "trapwatch/service/config.hpp"
#include "trapwatch/store/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trapwatch;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(Errc::io_error, fmt::format("cannot write {}", path.string()));
}

void report_error(int status, std::string_view code, std::string_view message) {
  service::ApiError e{status, std::string(code), std::string(message), random_id()};
  std::cerr << service::to_json(e).dump() << '\n';
}

std::vector<fs::path> files_with_extension(const fs::path& dir,
                                           std::initializer_list<std::string_view> exts) {
  if (!fs::is_directory(dir)) {
    throw Error(Errc::invalid_argument, fmt::format("{} is not a directory", dir.string()));
  }
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

const SpeciesCatalog& catalog_from(const std::string& path, std::optional<SpeciesCatalog>& storage) {
  if (path.empty()) return SpeciesCatalog::default_catalog();
  storage = SpeciesCatalog::load(path);
  return *storage;
}

int cmd_serve(const std::string& config_file) {
  service::ShutdownSignal signals;
  auto config = service::load_config(config_file.empty() ? std::nullopt
                                                         : std::optional<fs::path>(config_file));
  spdlog::set_level(spdlog::level::from_str(config.log_level));
  service::Application app(config);
  app.start();
  std::cout << fmt::format("ready api={} smtp={}", app.api_port(), app.smtp_port()) << std::endl;
  const int sig = signals.wait();
  spdlog::info("signal {}, shutting down", sig);
  app.stop();
  return 0;
}

struct InferOptions {
  std::string dir;
  std::string mock_table;
  std::string endpoint;
  std::string model_name = "trapwatch";
  double threshold = 0.387;
  bool nms = false;
  std::string catalog;
};

int cmd_infer(const InferOptions& o) {
  std::optional<SpeciesCatalog> own;
  const auto& catalog = catalog_from(o.catalog, own);
  std::shared_ptr<gateway::DetectorBackend> backend;
  if (!o.endpoint.empty()) {
    gateway::RemoteConfig rc;
    rc.endpoint = o.endpoint;
    rc.model_name = o.model_name;
    backend = std::make_shared<gateway::RemoteBackend>(rc);
  } else if (!o.mock_table.empty()) {
    backend = std::make_shared<gateway::MockBackend>(gateway::MockBackend::load(o.mock_table));
  } else {
    throw Error(Errc::config_error, "give --mock-table or --endpoint");
  }
  gateway::DetectorConfig dc;
  dc.model_name = o.model_name;
  dc.confidence_threshold = o.threshold;
  dc.nms = o.nms;
  gateway::validate(dc);
  gateway::Detector detector(backend, dc, catalog);

  int failures = 0;
  for (const auto& path : files_with_extension(o.dir, {".jpg", ".jpeg", ".png"})) {
    const auto bytes = read_file(path);
    json line{{"file", path.filename().string()}};
    try {
      auto image = gateway::decode_image(bytes);
      ImageAsset asset;
      asset.content_hash = sha256_hex(bytes);
      asset.asset_id = asset_id_for_hash(asset.content_hash);
      asset.width = image.width();
      asset.height = image.height();
      auto dets = detector.detect(asset, image);
      line["asset_id"] = asset.asset_id;
      line["width"] = asset.width;
      line["height"] = asset.height;
      json arr = json::array();
      for (const auto& d : dets) {
        json j = d;
        j["class_name"] = catalog.at(d.class_id).scientific_name;
        arr.push_back(std::move(j));
      }
      line["detections"] = std::move(arr);
    } catch (const Error& e) {
      ++failures;
      line["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    }
    std::cout << line.dump() << '\n';
  }
  return failures == 0 ? 0 : 3;
}

int cmd_dataset_convert(const std::string& voc_dir, const std::string& out_dir,
                        const std::string& catalog_path) {
  std::optional<SpeciesCatalog> own;
  const auto& catalog = catalog_from(catalog_path, own);
  std::size_t converted = 0, excluded = 0, failed = 0;
  for (const auto& path : files_with_extension(voc_dir, {".xml"})) {
    try {
      auto doc = dataset::load_voc(path);
      if (doc.excluded) {
        ++excluded;
        continue;
      }
      auto labels = dataset::voc_to_yolo(doc, catalog);
      write_file(fs::path(out_dir) / (labels.image_stem + ".txt"), labels.to_text());
      ++converted;
    } catch (const Error& e) {
      ++failed;
      std::cerr << fmt::format("skipped {}: {}: {}\n", path.filename().string(), to_string(e.code()),
                               e.what());
    }
  }
  std::cout << fmt::format("converted\t{}\nexcluded\t{}\nfailed\t{}\n", converted, excluded, failed);
  return 0;
}

std::vector<std::string> read_ids(const std::string& ids_file, const std::string& labels_dir) {
  std::vector<std::string> ids;
  if (!ids_file.empty()) {
    std::istringstream in(read_file(ids_file));
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) ids.push_back(line);
    }
  } else {
    for (const auto& p : files_with_extension(labels_dir, {".txt", ".xml"})) {
      ids.push_back(p.stem().string());
    }
  }
  return ids;
}

int cmd_dataset_split(const std::string& ids_file, const std::string& labels_dir,
                      const std::string& out_dir, std::uint64_t seed,
                      const dataset::SplitRatios& ratios) {
  if (ids_file.empty() == labels_dir.empty()) {
    throw Error(Errc::invalid_argument, "give exactly one of --ids or --labels");
  }
  auto split = dataset::split_dataset(read_ids(ids_file, labels_dir), ratios, seed);
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += s + "\n";
    return out;
  };
  if (!out_dir.empty()) {
    write_file(fs::path(out_dir) / "train.txt", join(split.train));
    write_file(fs::path(out_dir) / "val.txt", join(split.val));
    write_file(fs::path(out_dir) / "test.txt", join(split.test));
  }
  std::cout << fmt::format("seed\t{}\ntrain\t{}\nval\t{}\ntest\t{}\n", seed, split.train.size(),
                           split.val.size(), split.test.size());
  return 0;
}

int cmd_dataset_stats(const std::string& voc_dir, const std::string& catalog_path) {
  std::optional<SpeciesCatalog> own;
  const auto& catalog = catalog_from(catalog_path, own);
  std::vector<dataset::VocDocument> docs;
  for (const auto& path : files_with_extension(voc_dir, {".xml"})) {
    try {
      docs.push_back(dataset::load_voc(path));
    } catch (const Error& e) {
      std::cerr << fmt::format("skipped {}: {}: {}\n", path.filename().string(), to_string(e.code()),
                               e.what());
    }
  }
  std::cout << dataset::format_stats(dataset::compute_stats(docs, catalog), catalog);
  return 0;
}

int cmd_manifest_export(const std::vector<std::string>& sets, const std::string& out) {
  std::map<std::string, std::string> overrides;
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(Errc::invalid_override, fmt::format("expected key=value, got '{}'", s));
    }
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  auto text = dataset::export_training_manifest(overrides);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return 0;
}

struct EvalOptions {
  std::string preds;
  std::string truths;
  std::string mode = "detection";
  std::string reference;
  std::string policy = "skip-undefined";
  std::string catalog;
  std::string curves_dir;
  double iou = 0.5;
  bool as_json = false;
};

eval::ConfusionMatrix classification_matrix(const std::vector<eval::ScoredPrediction>& preds,
                                            const std::vector<eval::GroundTruth>& truths) {
  // One label per image: the highest-confidence prediction against the truth.
  std::map<std::string, const eval::ScoredPrediction*> top;
  for (const auto& p : preds) {
    auto& slot = top[p.image_id];
    if (slot == nullptr || p.confidence > slot->confidence) slot = &p;
  }
  std::map<std::string, int> truth_of;
  for (const auto& t : truths) {
    if (!truth_of.emplace(t.image_id, t.class_id).second) {
      throw Error(Errc::invalid_argument,
                  fmt::format("image {} has more than one truth in classification mode", t.image_id));
    }
  }
  std::vector<int> classes;
  for (const auto& p : preds) classes.push_back(p.class_id);
  for (const auto& t : truths) classes.push_back(t.class_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  eval::ConfusionMatrix cm(classes);
  for (const auto& [image, cls] : truth_of) {
    auto it = top.find(image);
    cm.add(cls, it == top.end() ? std::nullopt : std::optional<int>(it->second->class_id));
  }
  for (const auto& [image, p] : top) {
    if (!truth_of.count(image)) cm.add(std::nullopt, p->class_id);
  }
  return cm;
}

int cmd_eval(const EvalOptions& o) {
  std::optional<SpeciesCatalog> own;
  const auto& catalog = catalog_from(o.catalog, own);
  const auto preds = eval::load_predictions(o.preds);
  const auto truths = eval::load_truths(o.truths);
  if (preds.empty() && truths.empty()) throw Error(Errc::empty_input, "no records to evaluate");

  eval::ConfusionMatrix cm;
  if (o.mode == "detection") {
    cm = eval::confusion_from_detections(preds, truths, o.iou);
  } else if (o.mode == "classification") {
    cm = classification_matrix(preds, truths);
  } else {
    throw Error(Errc::invalid_argument, "--mode must be detection or classification");
  }
  const auto policy = o.policy == "undefined-as-zero" ? eval::AveragePolicy::undefined_as_zero
                                                      : eval::AveragePolicy::skip_undefined;
  if (o.policy != "undefined-as-zero" && o.policy != "skip-undefined") {
    throw Error(Errc::invalid_argument, "--policy must be skip-undefined or undefined-as-zero");
  }
  const auto report = eval::report_from_matrix(cm);
  const auto macro = eval::macro_average(report.per_class, policy);
  const auto map = eval::mean_average_precision(preds, truths, o.iou);

  std::vector<eval::ReferenceCheck> checks;
  if (!o.reference.empty()) {
    const auto reference = eval::parse_reference(read_file(o.reference));
    checks = eval::check_against_reference(report, macro, reference, catalog);
  }
  if (!o.curves_dir.empty()) {
    auto curves = eval::confidence_curves(preds, truths, o.iou);
    write_file(fs::path(o.curves_dir) / "precision.csv", eval::to_csv(curves.precision));
    write_file(fs::path(o.curves_dir) / "recall.csv", eval::to_csv(curves.recall));
    write_file(fs::path(o.curves_dir) / "f1.csv", eval::to_csv(curves.f1));
  }

  if (o.as_json) {
    json out = eval::metrics_json(report, catalog);
    out["confusion"] = eval::confusion_json(cm, catalog);
    out["macro"] = eval::macro_json(macro);
    out["map50"] = map.map ? json(*map.map) : json(nullptr);
    json refs = json::array();
    for (const auto& c : checks) {
      refs.push_back({{"label", c.published.label},
                      {"metric", c.published.metric},
                      {"published_hundredths", c.published.hundredths},
                      {"derived_hundredths", c.derived ? json(*c.derived) : json(nullptr)},
                      {"consistent", c.consistent}});
    }
    out["reference"] = std::move(refs);
    std::cout << out.dump(2) << '\n';
    return 0;
  }
  std::cout << eval::format_metrics_table(report, catalog) << '\n'
            << eval::format_confusion_table(cm, catalog) << '\n'
            << eval::format_macro(macro) << '\n';
  if (map.map) {
    std::cout << fmt::format("mAP@{:.2f}\t{:.4f}\n", o.iou, *map.map);
  } else {
    std::cout << fmt::format("mAP@{:.2f}\tUNDEFINED\n", o.iou);
  }
  if (!checks.empty()) std::cout << '\n' << eval::format_reference_checks(checks, policy);
  return 0;
}

int cmd_store(const std::string& action, const std::string& data_dir, const std::string& file) {
  auto store = store::EventStore::open(data_dir);
  if (action == "check") {
    auto problems = store->check_consistency();
    for (const auto& p : problems) std::cout << p << '\n';
    std::cout << fmt::format("assets\t{}\ndetections\t{}\nalerts\t{}\nproblems\t{}\n",
                             store->asset_count(), store->detection_count(), store->alert_count(),
                             problems.size());
    return problems.empty() ? 0 : 4;
  }
  if (action == "export") {
    if (file.empty()) {
      store->export_records(std::cout);
    } else {
      std::ofstream out(file);
      store->export_records(out);
      if (!out) throw Error(Errc::io_error, fmt::format("cannot write {}", file));
    }
    return 0;
  }
  std::ifstream in(file);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot read {}", file));
  std::cout << fmt::format("imported\t{}\n", store->import_records(in));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trapwatch: camera-trap ingest, detection, alerting and evaluation"};
  app.require_subcommand(1);
  spdlog::set_level(spdlog::level::warn);

  std::string config_file;
  auto* serve = app.add_subcommand("serve", "Run the SMTP listener and REST API");
  serve->add_option("-c,--config", config_file, "KEY=value file; the environment overrides it");

  InferOptions infer_opts;
  auto* infer = app.add_subcommand("infer", "Run the detector over a directory of images");
  infer->add_option("--dir", infer_opts.dir, "Image directory")->required();
  infer->add_option("--mock-table", infer_opts.mock_table, "Mock detector fixture table");
  infer->add_option("--endpoint", infer_opts.endpoint, "Inference server base URL");
  infer->add_option("--model", infer_opts.model_name, "Model name on the server");
  infer->add_option("--threshold", infer_opts.threshold, "Confidence threshold")
      ->check(CLI::Range(0.0, 1.0));
  infer->add_flag("--nms", infer_opts.nms, "Suppress overlapping detections");
  infer->add_option("--catalog", infer_opts.catalog, "Species catalog TSV");

  auto* ds = app.add_subcommand("dataset", "Annotation conversion, splitting and statistics");
  ds->require_subcommand(1);
  std::string voc_dir, out_dir, catalog_path;
  auto* convert = ds->add_subcommand("convert", "Pascal VOC XML to YOLO label files");
  convert->add_option("--voc", voc_dir, "Directory of VOC XML files")->required();
  convert->add_option("--out", out_dir, "Output directory")->required();
  convert->add_option("--catalog", catalog_path, "Species catalog TSV");

  std::string ids_file, labels_dir, split_out;
  std::uint64_t seed = 0;
  dataset::SplitRatios ratios;
  auto* split = ds->add_subcommand("split", "Deterministic train/val/test split");
  split->add_option("--ids", ids_file, "File with one id per line");
  split->add_option("--labels", labels_dir, "Directory whose file stems are the ids");
  split->add_option("--out", split_out, "Write train.txt, val.txt, test.txt here");
  split->add_option("--seed", seed, "Shuffle seed")->required();
  split->add_option("--train", ratios.train, "Train share");
  split->add_option("--val", ratios.val, "Validation share");
  split->add_option("--test", ratios.test, "Test share");

  auto* stats = ds->add_subcommand("stats", "Per-class counts and resolutions");
  stats->add_option("--voc", voc_dir, "Directory of VOC XML files")->required();
  stats->add_option("--catalog", catalog_path, "Species catalog TSV");

  EvalOptions eval_opts;
  auto* ev = app.add_subcommand("eval", "Score predictions against truths");
  ev->add_option("--preds", eval_opts.preds, "Prediction records")->required();
  ev->add_option("--truths", eval_opts.truths, "Ground-truth records")->required();
  ev->add_option("--mode", eval_opts.mode, "detection or classification");
  ev->add_option("--iou", eval_opts.iou, "Match threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--reference", eval_opts.reference, "Published figures to check");
  ev->add_option("--policy", eval_opts.policy, "skip-undefined or undefined-as-zero");
  ev->add_option("--catalog", eval_opts.catalog, "Species catalog TSV");
  ev->add_option("--curves", eval_opts.curves_dir, "Write confidence curves as CSV here");
  ev->add_flag("--json", eval_opts.as_json, "JSON instead of tables");

  auto* manifest = app.add_subcommand("manifest", "Training manifest");
  manifest->require_subcommand(1);
  std::vector<std::string> sets;
  std::string manifest_out;
  auto* mexport = manifest->add_subcommand("export", "Print the manifest with overrides");
  mexport->add_option("--set", sets, "key=value override (repeatable)");
  mexport->add_option("--out", manifest_out, "Output file");

  std::string store_dir = "data", store_file;
  auto* st = app.add_subcommand("store", "Backup and consistency checks");
  st->require_subcommand(1);
  auto* st_check = st->add_subcommand("check", "Integrity and blob checks");
  auto* st_export = st->add_subcommand("export", "Dump records as JSON lines");
  auto* st_import = st->add_subcommand("import", "Merge a dump");
  for (auto* sub : {st_check, st_export, st_import}) {
    sub->add_option("--data-dir", store_dir, "Store directory");
  }
  st_export->add_option("--out", store_file, "Output file (default stdout)");
  st_import->add_option("--in", store_file, "Dump to merge")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(config_file);
    if (*infer) return cmd_infer(infer_opts);
    if (*convert) return cmd_dataset_convert(voc_dir, out_dir, catalog_path);
    if (*split) return cmd_dataset_split(ids_file, labels_dir, split_out, seed, ratios);
    if (*stats) return cmd_dataset_stats(voc_dir, catalog_path);
    if (*ev) return cmd_eval(eval_opts);
    if (*mexport) return cmd_manifest_export(sets, manifest_out);
    if (*st_check) return cmd_store("check", store_dir, store_file);
    if (*st_export) return cmd_store("export", store_dir, store_file);
    if (*st_import) return cmd_store("import", store_dir, store_file);
  } catch (const Error& e) {
    report_error(service::http_status_for(e.code()), to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(500, "internal", e.what());
    return 1;
  }
  return 0;
}
