#include <atomic>
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "marss2l/alert/http_api.hpp"
#include "marss2l/alert/pipeline.hpp"
#include "marss2l/alert/service.hpp"
#include "marss2l/marss2l.hpp"

using namespace marss2l;
namespace al = marss2l::alert;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string store = "store";
};

json load_config(const Globals& g) { return g.config.empty() ? json::object() : read_json_file(g.config); }

BenchmarkConfig benchmark_config(const Globals& g) {
  BenchmarkConfig c = benchmark_config_from_json(load_config(g));
  if (g.seed) c.fixture.seed = c.train.seed = *g.seed;
  return c;
}

al::PipelineConfig pipeline_config(const Globals& g) {
  json j = load_config(g);
  return al::pipeline_config_from_json(j.value("pipeline", json::object()));
}

std::vector<SiteRecord> load_sites(const std::string& path) { return registry_from_json(read_json_file(path)); }

void print_epoch(const EpochRecord& r) {
  std::printf("epoch %2d  loss %.4f  val AP %s  %.1fs\n", r.epoch, r.mean_loss, format_metric(r.validation_ap).c_str(),
              r.seconds);
  std::fflush(stdout);
}

void write_reports(const fs::path& dir, const BenchmarkResult& r, const BenchmarkConfig& cfg) {
  fs::create_directories(dir);
  const std::size_t k = cfg.train.component_pixels;
  auto model = model_scored(r.test, k, cfg.pixel_threshold);
  auto base = mbmp_scored(r.test, k, cfg.mbmp_threshold);
  std::vector<ModelMetricsRow> rows{r.model, r.mbmp};
  write_text_file(dir / "overall_metrics.csv", model_metrics_csv(rows));

  std::vector<std::size_t> ks{25, 50, 75, 100, 125, 150, 175};
  auto sweep = k_sweep(r.test, ks, cfg.alert_threshold);
  write_text_file(dir / "k_sweep.csv", k_sweep_csv(sweep));

  std::vector<double> thresholds{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98};
  write_text_file(dir / "threshold_fpr.csv", threshold_fpr_csv({{"MARS-S2L", threshold_sweep(model, thresholds)}}));

  std::vector<double> edges{0, 1, 2, 3, 4, 5, 6, 7};
  auto recall_model = recall_by_flux(model, edges, cfg.alert_threshold);
  auto recall_base = recall_by_flux(base, edges, 1.0 - cfg.mbmp_threshold);

  json j = {{"model", to_json(r.model)},
            {"mbmp", to_json(r.mbmp)},
            {"workload", to_json(r.workload)},
            {"k_sweep", json::array()},
            {"recall_by_flux", {{"model", json::array()}, {"mbmp", json::array()}}},
            {"training",
             {{"best_epoch", r.training.best_epoch},
              {"epochs", r.training.history.size()},
              {"simulated_examples", r.training.simulated_examples},
              {"skipped_examples", r.training.skipped_examples},
              {"alpha", r.training.detector.alpha}}},
            {"test_scenes", r.test_scenes},
            {"seconds", r.seconds}};
  for (const auto& row : sweep) j["k_sweep"].push_back(to_json(row));
  for (const auto& x : recall_model) j["recall_by_flux"]["model"].push_back(to_json(x));
  for (const auto& x : recall_base) j["recall_by_flux"]["mbmp"].push_back(to_json(x));
  write_json_file(dir / "metrics.json", j);

  write_text_file(dir / "workload.svg", workload_svg(r.workload));
  write_text_file(dir / "precision_recall.svg",
                  pr_curve_svg({{"MARS-S2L", precision_recall_curve(model)}, {"MBMP", precision_recall_curve(base)}}));
  write_text_file(dir / "recall_by_flux.svg", recall_by_flux_svg({{"MARS-S2L", recall_model}, {"MBMP", recall_base}}));
}

std::vector<ReleaseOutcome> release_report(const fs::path& dir, const PlumePhysics& physics, const Detector& d,
                                           std::uint64_t seed) {
  ReleaseConfig rc;
  rc.seed = seed;
  auto outcomes = evaluate_release(physics, d, controlled_release_scenario(physics, rc));
  json j = json::array();
  std::vector<PodSample> pod;
  for (const auto& o : outcomes) {
    j.push_back(to_json(o));
    if (o.true_flux_t_per_h > 0) pod.push_back({o.true_flux_t_per_h, o.detected});
  }
  write_json_file(dir / "controlled_release.json", j);
  try {
    PoDCurve c = fit_pod(pod);
    write_json_file(dir / "pod.json", to_json(c));
    write_text_file(dir / "pod.svg", pod_svg(c, 8.0));
  } catch (const FitError& e) {
    std::cerr << "PoD fit skipped: " << e.what() << "\n";
  }
  return outcomes;
}

std::atomic<al::ApiServer*> g_server{nullptr};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Methane plume detection on multispectral imagery"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for fixtures and training");
  app.add_option("--store", g.store, "Alert store directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate scene files into a scene directory, or generate a fixture");
  std::string generate, ingest_out = "fixture";
  std::vector<std::string> ingest_files;
  bool release = false;
  ingest->add_option("--generate", generate, "Fixture configuration JSON to generate from")->check(CLI::ExistingFile);
  ingest->add_flag("--release", release, "Generate the controlled-release scenario instead");
  ingest->add_option("--out,--into", ingest_out, "Output directory");
  ingest->add_option("files", ingest_files, "Band-stack scene files to ingest");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Inject a plume into a scene");
  std::string sim_scene, sim_label, sim_out, sim_label_out;
  double sim_flux = 0;
  std::vector<int> sim_source;
  simulate->add_option("--scene", sim_scene)->required()->check(CLI::ExistingFile);
  auto* lab = simulate->add_option("--label", sim_label, "Existing plume label to inject")->check(CLI::ExistingFile);
  simulate->add_option("--flux", sim_flux, "Generate a plume at this rate (t/h)")->excludes(lab);
  simulate->add_option("--source", sim_source, "Source pixel x y")->expected(2);
  simulate->add_option("--out", sim_out)->required();
  simulate->add_option("--label-out", sim_label_out);

  // train
  auto* trainc = app.add_subcommand("train", "Train the detector on the configured synthetic fixture");
  std::string model_out = "model.bin";
  trainc->add_option("--out", model_out);

  // predict
  auto* predictc = app.add_subcommand("predict", "Per-pixel plume probability for a scene");
  std::string model_path, pred_scene, pred_ref, pred_out;
  predictc->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  predictc->add_option("--scene", pred_scene)->required()->check(CLI::ExistingFile);
  predictc->add_option("--reference", pred_ref, "Earlier clear pass; single-pass retrieval when absent")
      ->check(CLI::ExistingFile);
  predictc->add_option("--out", pred_out)->required();

  // score
  auto* score = app.add_subcommand("score", "Scene score, mask and quantification for a probability map");
  std::string score_prob, score_scene, score_ref;
  std::size_t score_k = kDefaultComponentPixels;
  double score_pixel = 0.5;
  score->add_option("--prob", score_prob)->required()->check(CLI::ExistingFile);
  score->add_option("--scene", score_scene, "Scene, for cloud exclusion and quantification")->check(CLI::ExistingFile);
  score->add_option("--reference", score_ref)->check(CLI::ExistingFile);
  score->add_option("-k,--component-pixels", score_k);
  score->add_option("--pixel-threshold", score_pixel);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run the synthetic benchmark and write reports");
  std::string eval_out = "report";
  bool eval_release = false;
  evaluate->add_option("--out", eval_out);
  evaluate->add_option("--model-out", model_out, "Also save the trained model here");
  evaluate->add_flag("--release", eval_release, "Also score the controlled-release ladder and fit PoD");

  // run
  auto* run = app.add_subcommand("run", "Process new scenes into the alert store");
  std::string run_scenes, run_sites;
  run->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  run->add_option("--scenes", run_scenes)->required()->check(CLI::ExistingDirectory);
  run->add_option("--sites", run_sites)->required()->check(CLI::ExistingFile);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the alert HTTP API");
  std::string serve_sites, host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--sites", serve_sites)->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  // timeline
  auto* timeline = app.add_subcommand("timeline", "Detection and coverage series for a site");
  std::string tl_sites, tl_site;
  timeline->add_option("--sites", tl_sites)->required()->check(CLI::ExistingFile);
  timeline->add_option("--site", tl_site)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      if (!generate.empty() || release) {
        const auto physics = PlumePhysics::standard();
        json cfg = generate.empty() ? json::object() : read_json_file(generate);
        std::vector<SiteSeries> series;
        if (release) {
          ReleaseConfig rc;
          rc.seed = g.seed.value_or(cfg.value("seed", rc.seed));
          series = controlled_release_scenario(physics, rc);
        } else {
          FixtureConfig fc = fixture_config_from_json(cfg);
          if (g.seed) fc.seed = *g.seed;
          series = generate_fixture(physics, fc);
        }
        json manifest = write_fixture(series, ingest_out);
        std::printf("wrote %zu scenes to %s\n", manifest.size(), ingest_out.c_str());
        return 0;
      }
      if (ingest_files.empty()) throw ArgumentError("nothing to ingest");
      fs::create_directories(ingest_out);
      int failed = 0;
      for (const auto& f : ingest_files) {
        try {
          SceneImage s = load_scene(f);
          fs::path dest = fs::path(ingest_out) / (s.site_id + "_" + compact_time(s.acquisition_time) + ".ms2l");
          save_scene(s, dest);
          std::printf("ok     %s -> %s\n", f.c_str(), dest.string().c_str());
        } catch (const Error& e) {
          ++failed;
          std::printf("failed %s: %s\n", f.c_str(), e.what());
        }
      }
      return failed ? 1 : 0;
    }

    if (*simulate) {
      const auto physics = PlumePhysics::standard();
      SceneImage scene = load_scene(sim_scene);
      PlumeLabel label;
      if (!sim_label.empty()) {
        label = load_label(sim_label);
      } else {
        if (!(sim_flux > 0)) throw ArgumentError("give --label or a positive --flux");
        int sx = sim_source.empty() ? scene.width() / 2 : sim_source[0];
        int sy = sim_source.empty() ? scene.height() / 2 : sim_source[1];
        Rng rng(g.seed.value_or(1));
        label = generate_plume(sim_flux, scene.wind_u, scene.wind_v, sx, sy, scene.width(), scene.height(), rng);
      }
      save_scene(simulate_plume(physics, scene, label.delta_ch4), sim_out);
      if (!sim_label_out.empty()) save_label(label, sim_label_out);
      std::printf("injected %zu plume pixels into %s\n", label.pixel_count(), sim_out.c_str());
      return 0;
    }

    if (*trainc) {
      BenchmarkConfig cfg = benchmark_config(g);
      const auto physics = PlumePhysics::standard();
      auto fixture = generate_fixture(physics, cfg.fixture);
      SiteSplit split = split_sites(fixture, cfg.train_fraction, cfg.validation_fraction);
      TrainingSampler sampler(physics, split.train, build_plume_bank(split.train), cfg.sampler);
      auto validation = validation_set(split.validation);
      auto result = train(std::ref(sampler), validation, training_channel_stats(sampler), cfg.train, print_epoch);
      save_model(result.detector, model_out);
      std::printf("best epoch %d, saved %s\n", result.best_epoch, model_out.c_str());
      return 0;
    }

    if (*predictc) {
      Detector d = load_model(model_path);
      SceneImage scene = load_scene(pred_scene);
      std::optional<SceneImage> ref;
      if (!pred_ref.empty()) ref = load_scene(pred_ref);
      RetrievalProduct r = ref ? mbmp(scene, *ref) : mbsp(scene);
      ProbabilityMap p = predict(d, scene, ref ? *ref : scene, r);
      save_probability(p, pred_out);
      Mask excluded = cloud_binary(scene);
      std::printf("scene score %.4f (%s)\n", scene_score(p, kDefaultComponentPixels, &excluded), to_string(r.method));
      return 0;
    }

    if (*score) {
      ProbabilityMap p = load_probability(score_prob);
      std::optional<SceneImage> scene;
      if (!score_scene.empty()) scene = load_scene(score_scene);
      Mask excluded = scene ? cloud_binary(*scene) : Mask(p.values.width(), p.values.height(), 0);
      json out = {{"scene_score", scene_score(p.values, score_k, &excluded)}, {"component_pixels", score_k}};
      Mask m = component_mask(p.values, excluded, score_pixel, score_k);
      out["n_plume_pixels"] = count_set(m);
      if (scene && count_set(m) > 0) {
        const auto physics = PlumePhysics::standard();
        std::optional<SceneImage> ref;
        if (!score_ref.empty()) ref = load_scene(score_ref);
        RetrievalProduct r = ref ? mbmp(*scene, *ref) : mbsp(*scene);
        Plane delta = invert_to_concentration(r, physics.lut, physics.ctx, scene->geometry, scene->sensor);
        double q = ime(m, delta);
        out["ime_kg"] = q;
        out["flux_t_per_h"] = flux(q, m, scene->wind_speed());
        out["retrieval_method"] = to_string(r.method);
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*evaluate) {
      BenchmarkConfig cfg = benchmark_config(g);
      const auto physics = PlumePhysics::standard();
      BenchmarkResult r = run_benchmark(physics, cfg, print_epoch);
      write_reports(eval_out, r, cfg);
      if (evaluate->count("--model-out")) save_model(r.training.detector, model_out);
      std::printf("AP %s (MBMP %s), reduction at 80%% of plumes %s, %.0fs\n", format_metric(r.model.ap).c_str(),
                  format_metric(r.mbmp.ap).c_str(), format_metric(r.workload.reduction_factor(0.8), 2).c_str(),
                  r.seconds);
      if (eval_release) release_report(eval_out, physics, r.training.detector, cfg.fixture.seed);
      std::printf("reports in %s\n", eval_out.c_str());
      return 0;
    }

    if (*run) {
      const auto physics = PlumePhysics::standard();
      Detector d = load_model(model_path);
      al::AlertStore store(g.store);
      al::Pipeline pipeline(store, physics, d, load_sites(run_sites), pipeline_config(g));
      auto report = pipeline.run(run_scenes);
      for (const auto& line : report.log) std::printf("%s\n", line.c_str());
      std::printf("%zu scenes processed, %zu new detections, %zu already processed\n", report.observations.size(),
                  report.detections.size(), report.already_processed);
      return 0;
    }

    if (*serve) {
      al::AlertStore store(g.store);
      al::ApiServer server(store, al::SiteRegistry(load_sites(serve_sites)));
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (auto* s = g_server.load()) s->stop();
      });
      std::printf("listening on http://%s:%d\n", host.c_str(), port);
      std::fflush(stdout);
      return server.listen(host, port) ? 0 : 1;
    }

    if (*timeline) {
      al::AlertStore store(g.store);
      al::SiteRegistry registry(load_sites(tl_sites));
      std::cout << to_json(al::site_timeline(store, registry, tl_site)).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
