#include "rift/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "rift/error.hpp"
#include "rift/image_io.hpp"
#include "rift/losses.hpp"

namespace rift::cli {
namespace {

std::string env_data_root() {
  const char* v = std::getenv("RIFT_DATA_ROOT");
  return v ? std::string(v) : std::string();
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(item);
  }
  return out;
}

nlohmann::json dataset_names(const Checkpoint& ckpt) {
  return ckpt.manifest.value("dataset", nlohmann::json::object());
}

template <class T>
void override_if(const std::optional<T>& v, T& field) {
  if (v) field = *v;
}

}  // namespace

TrainConfig preset(const std::string& name) {
  if (name == "desk") return TrainConfig::desk();
  if (name == "paper") return TrainConfig::paper();
  throw ValidationError("unknown preset '" + name + "' (expected desk or paper)");
}

std::vector<int> parse_regions(const std::string& list, const std::vector<std::string>& names, int num_regions) {
  std::vector<int> out;
  if (list == "all") {
    for (int r = 0; r < num_regions; ++r) out.push_back(r);
    return out;
  }
  for (const std::string& item : split_commas(list)) {
    if (item.empty()) continue;
    int id = -1;
    const auto it = std::find(names.begin(), names.end(), item);
    if (it != names.end()) {
      id = static_cast<int>(it - names.begin());
    } else {
      std::size_t used = 0;
      try {
        id = std::stoi(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != item.size()) throw ValidationError("unknown region '" + item + "'");
    }
    if (id < 0 || id >= num_regions) {
      throw ValidationError("region " + item + " outside 0.." + std::to_string(num_regions - 1));
    }
    out.push_back(id);
  }
  if (out.empty()) throw ValidationError("region list is empty");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

nlohmann::json translate_files(const TranslateRequest& req) {
  const Checkpoint ckpt = load_checkpoint(req.checkpoint);
  const Generator g = generator_from_checkpoint(ckpt);
  const ArchConfig& arch = g.arch();
  RegionRemap remap = RegionRemap::identity(arch.num_regions);
  if (!req.dataset.empty()) {
    const DatasetManifest m = DatasetManifest::load(manifest_path_for(req.dataset));
    if (m.num_regions != arch.num_regions) throw ValidationError("dataset region count differs from the checkpoint");
    remap = m.label_remap;
  }
  const Tensor x = load_image_file(req.content);
  const Tensor s = load_image_file(req.style);
  const MaskBatch cm{load_mask_file(req.mask, remap)};
  const MaskBatch sm{load_mask_file(req.style_mask, remap)};
  for (const Tensor* t : {&x, &s}) {
    if (t->dim(2) != arch.image_size || t->dim(3) != arch.image_size) {
      throw ValidationError("images must be " + std::to_string(arch.image_size) + "x" +
                            std::to_string(arch.image_size) + " for this checkpoint");
    }
  }
  if (cm[0].height() != x.dim(2) || cm[0].width() != x.dim(3) || sm[0].height() != s.dim(2) ||
      sm[0].width() != s.dim(3)) {
    throw ValidationError("mask size does not match its image");
  }

  Tensor out;
  nlohmann::json regions_json = "all";
  {
    NoGradGuard no_grad;
    const Var xv = Var::constant(x), sv = Var::constant(s);
    const Var style_t = g.encode_style(sv, sm);
    Var style = style_t;
    if (req.regions) {
      if (req.regions->empty()) throw ValidationError("region list is empty");
      style = g.encode_style(xv, cm);
      for (int r : *req.regions) style = replace_style_rows(style, style_t, single_row_sets(std::vector<int>{r}, arch.num_regions));
      if (static_cast<int>(req.regions->size()) != arch.num_regions) regions_json = *req.regions;
    }
    out = g.decode(g.content_encode(xv), cm, style).value();
  }
  if (!all_finite(out)) throw NumericalError("translation produced non-finite pixels");

  const nlohmann::json resolved = {{"checkpoint", req.checkpoint.string()},
                                   {"checkpoint_hash", fnv1a_hex(ckpt.manifest.dump())},
                                   {"content", req.content.string()},
                                   {"mask", req.mask.string()},
                                   {"style", req.style.string()},
                                   {"style_mask", req.style_mask.string()},
                                   {"regions", regions_json},
                                   {"image_size", arch.image_size}};
  if (!req.out.parent_path().empty()) std::filesystem::create_directories(req.out.parent_path());
  write_png(req.out, tensor_to_image(out), {{"rift:config", resolved.dump()}});
  return resolved;
}

nlohmann::json evaluate_checkpoint(const Checkpoint& ckpt, const DatasetManifest& manifest, const EvalConfig& eval,
                                   const ClassifierTrainConfig& classifier_cfg) {
  manifest.validate();
  const Generator g = generator_from_checkpoint(ckpt);
  if (g.arch().num_regions != manifest.num_regions ||
      g.arch().num_domains != static_cast<int>(manifest.domains.size())) {
    throw ValidationError("checkpoint architecture does not match the dataset's regions or domains");
  }
  const std::vector<Sample> train = load_dataset(manifest, Split::kTrain);
  const std::vector<Sample> test = load_dataset(manifest, Split::kTest);

  DomainClassifier classifier(static_cast<int>(manifest.domains.size()), classifier_cfg.seed);
  classifier.train(train, classifier_cfg);
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (const Sample& s : test) {
    images.push_back(s.image);
    labels.push_back(s.domain);
  }
  const double real_accuracy = accuracy(classifier.predict(concat_batch(images)), labels);

  const GeneratorTranslator translator(g);
  EvalInputs in;
  in.translator = &translator;
  in.classifier = &classifier;
  in.test = &test;
  in.reference = &train;
  in.domains = manifest.domains;
  in.region_names = manifest.region_names;
  in.model_config = {{"checkpoint", ckpt.manifest}, {"classifier", classifier_cfg.to_json()}};
  nlohmann::json report = evaluate_model(in, eval).to_json(classifier, eval);
  report["classifier_real_accuracy"] = real_accuracy;
  report["classifier"] = classifier_cfg.to_json();
  return report;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region-wise face translation toolkit", "rift"};
  app.set_config("--config", "", "INI/TOML file with option values ([train], [evaluate] ... sections)");
  app.require_subcommand(1);

  // synth-data
  SyntheticSpec synth;
  std::string synth_out;
  auto* c_synth = app.add_subcommand("synth-data", "Write the procedural two-domain dataset");
  c_synth->add_option("--out", synth_out, "Output directory (default $RIFT_DATA_ROOT)");
  c_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  c_synth->add_option("--size", synth.image_size, "Image side in pixels")->capture_default_str();
  c_synth->add_option("--per-domain", synth.per_domain, "Images per domain")->capture_default_str();
  c_synth->add_option("--test-fraction", synth.test_fraction, "Held-out share per domain")->capture_default_str();

  // train
  std::string train_preset = "desk", train_dataset, train_out = "runs/train", train_resume;
  std::optional<std::uint64_t> t_seed;
  std::optional<long> t_iters, t_ckpt_every, t_log_every;
  std::optional<int> t_batch, t_size, t_k, t_base, t_style;
  std::optional<double> t_lr_g, t_lr_d, t_lr, t_lr_fm, t_lr_rm;
  auto* c_train = app.add_subcommand("train", "Train generator and discriminator");
  c_train->add_option("--preset", train_preset, "desk (4, 32x32, 2000 it) or paper (4, 128x128, 100000 it)")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  c_train->add_option("--dataset", train_dataset, "Dataset directory or manifest (default $RIFT_DATA_ROOT)");
  c_train->add_option("--out", train_out, "Run directory")->capture_default_str();
  c_train->add_option("--checkpoint", train_resume, "Resume from this training checkpoint");
  c_train->add_option("--seed", t_seed, "Training seed");
  c_train->add_option("--iterations", t_iters, "Total iterations");
  c_train->add_option("--batch-size", t_batch);
  c_train->add_option("--image-size", t_size);
  c_train->add_option("--lr-g", t_lr_g);
  c_train->add_option("--lr-d", t_lr_d);
  c_train->add_option("--lambda-r", t_lr, "Reconstruction weight");
  c_train->add_option("--lambda-fm", t_lr_fm, "Feature matching weight");
  c_train->add_option("--lambda-rm", t_lr_rm, "Region matching weight");
  c_train->add_option("--k-styles", t_k, "Style images in the feature matching target");
  c_train->add_option("--checkpoint-every", t_ckpt_every, "0 keeps only the final checkpoint");
  c_train->add_option("--log-every", t_log_every);
  c_train->add_option("--base-channels", t_base);
  c_train->add_option("--style-dim", t_style);

  // translate / translate-region
  TranslateRequest tr;
  std::string tr_dataset, tr_regions;
  auto add_translate_flags = [&](CLI::App* c) {
    c->add_option("--checkpoint", tr.checkpoint, "Trained checkpoint")->required();
    c->add_option("--content", tr.content, "Content image PNG")->required();
    c->add_option("--mask", tr.mask, "Content mask PNG")->required();
    c->add_option("--style", tr.style, "Style image PNG")->required();
    c->add_option("--style-mask", tr.style_mask, "Style mask PNG")->required();
    c->add_option("--out", tr.out, "Output PNG")->required();
    c->add_option("--dataset", tr_dataset, "Dataset whose label remap applies to the masks");
  };
  auto* c_translate = app.add_subcommand("translate", "Translate every region to the style image");
  add_translate_flags(c_translate);
  auto* c_region = app.add_subcommand("translate-region", "Translate only the listed regions");
  add_translate_flags(c_region);
  c_region->add_option("--regions", tr_regions, "Comma list of region ids or names, or 'all'")->required();

  // evaluate
  std::string ev_ckpt, ev_dataset, ev_out;
  EvalConfig ev;
  ClassifierTrainConfig clf;
  auto* c_eval = app.add_subcommand("evaluate", "Accuracy, FID, perceptual distance and leakage report");
  c_eval->add_option("--checkpoint", ev_ckpt, "Trained checkpoint")->required();
  c_eval->add_option("--dataset", ev_dataset, "Dataset directory or manifest (default $RIFT_DATA_ROOT)");
  c_eval->add_option("--out", ev_out, "Also write the report here");
  c_eval->add_option("--seed", ev.seed, "Style-reference sampling seed")->capture_default_str();
  c_eval->add_option("--num-style-refs", ev.num_style_refs)->capture_default_str();
  c_eval->add_option("--classifier-iterations", clf.iterations)->capture_default_str();
  c_eval->add_option("--classifier-seed", clf.seed)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? kExitOk : kExitValidation;
  }

  auto dataset_or_env = [](const std::string& v) {
    const std::string d = v.empty() ? env_data_root() : v;
    if (d.empty()) throw ValidationError("no dataset: pass --dataset or set RIFT_DATA_ROOT");
    return d;
  };

  try {
    if (*c_synth) {
      if (synth_out.empty()) synth_out = env_data_root();
      if (synth_out.empty()) throw ValidationError("no output directory: pass --out or set RIFT_DATA_ROOT");
      nlohmann::json resolved = synth.to_json();
      resolved["out"] = synth_out;
      err << "resolved config: " << resolved.dump() << "\nseed: " << synth.seed << '\n';
      generate_synthetic(synth, synth_out);
      out << (std::filesystem::path(synth_out) / kManifestFileName).string() << '\n';
    } else if (*c_train) {
      TrainConfig cfg = preset(train_preset);
      override_if(t_seed, cfg.seed);
      override_if(t_iters, cfg.max_iterations);
      override_if(t_batch, cfg.batch_size);
      override_if(t_size, cfg.image_size);
      override_if(t_lr_g, cfg.lr_g);
      override_if(t_lr_d, cfg.lr_d);
      override_if(t_lr, cfg.weights.lambda_r);
      override_if(t_lr_fm, cfg.weights.lambda_fm);
      override_if(t_lr_rm, cfg.weights.lambda_rm);
      override_if(t_k, cfg.k_styles);
      override_if(t_ckpt_every, cfg.checkpoint_every);
      override_if(t_log_every, cfg.log_every);
      override_if(t_base, cfg.base_channels);
      override_if(t_style, cfg.style_dim);
      cfg.dataset = dataset_or_env(train_dataset);
      cfg.validate();
      FitOptions opts;
      opts.out_dir = train_out;
      opts.progress = &err;
      if (!train_resume.empty()) opts.resume = load_checkpoint(train_resume);
      nlohmann::json resolved = cfg.to_json();
      resolved["out"] = train_out;
      resolved["preset"] = train_preset;
      if (!train_resume.empty()) resolved["resume"] = train_resume;
      err << "resolved config: " << resolved.dump() << "\nseed: " << cfg.seed << '\n';
      const DatasetManifest manifest = DatasetManifest::load(manifest_path_for(cfg.dataset));
      fit(cfg, manifest, opts);
      out << (std::filesystem::path(train_out) / "final.ckpt").string() << '\n';
    } else if (*c_translate || *c_region) {
      tr.dataset = tr_dataset;
      if (*c_region) {
        const Checkpoint ckpt = load_checkpoint(tr.checkpoint);
        const ArchConfig arch = arch_from_json(ckpt.manifest.at("arch"));
        std::vector<std::string> names = dataset_names(ckpt).value("region_names", std::vector<std::string>{});
        tr.regions = parse_regions(tr_regions, names, arch.num_regions);
      }
      nlohmann::json preview = {{"checkpoint", tr.checkpoint.string()}, {"content", tr.content.string()},
                                {"style", tr.style.string()}, {"out", tr.out.string()},
                                {"regions", tr.regions ? nlohmann::json(*tr.regions) : nlohmann::json("all")}};
      err << "resolved config: " << preview.dump() << "\nseed: none (deterministic)\n";
      translate_files(tr);
      out << tr.out.string() << '\n';
    } else if (*c_eval) {
      const std::string dataset = dataset_or_env(ev_dataset);
      nlohmann::json resolved = {{"checkpoint", ev_ckpt}, {"dataset", dataset}, {"eval", ev.to_json()},
                                 {"classifier", clf.to_json()}};
      err << "resolved config: " << resolved.dump() << "\nseed: " << ev.seed << '\n';
      const DatasetManifest manifest = DatasetManifest::load(manifest_path_for(dataset));
      const nlohmann::json report = evaluate_checkpoint(load_checkpoint(ev_ckpt), manifest, ev, clf);
      if (!ev_out.empty()) {
        std::ofstream f(ev_out);
        if (!f) throw ValidationError("cannot write " + ev_out);
        f << report.dump(2) << '\n';
      }
      out << report.dump(2) << '\n';
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace rift::cli
