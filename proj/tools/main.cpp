#include <cstdio>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_support.hpp"
#include "scoreis/checkpoint.hpp"
#include "scoreis/datasets.hpp"
#include "scoreis/errors.hpp"
#include "scoreis/evaluation.hpp"
#include "scoreis/samplers.hpp"
#include "scoreis/weights.hpp"
#include "verify.hpp"

using nlohmann::json;
using namespace scoreis;
using namespace scoreis::cli;

namespace {

std::string weight_usage() {
  std::string forms;
  for (const auto& f : weight_spec_forms()) forms += (forms.empty() ? "" : ", ") + f;
  return forms;
}

WeightPtr weight_from_flag(const std::string& spec, double floor_m) {
  try {
    return parse_weight_spec(spec, 2, floor_m);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + "; valid weight specs: " + weight_usage());
  }
}

json report_header(const std::string& command, const CLI::App& sub) {
  return {{"format_version", kFormatVersion}, {"command", command}, {"config", resolved_config(sub)}};
}

void write_trajectory(const Trajectory& tr, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "t,x0,x1,mean0,mean1,grad_norm,corr_norm\n";
  char buf[512];
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", tr.t[k], tr.states(r, 0),
                  tr.states(r, 1), tr.tweedie_means(r, 0), tr.tweedie_means(r, 1), tr.grad_log_l_norm(r),
                  tr.correction_norm(r));
    out << buf;
  }
}

json mean_weight_json(const SampleBatch& batch, const WeightFunction& w) {
  const MeanEstimate m = mean_weight(batch, w);
  return {{"mean", m.mean}, {"std_error", m.std_error}};
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training reallocates megabyte-sized activations every step; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Importance sampling with score-based diffusion models"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string config_path;
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file mirroring the flags; flags given here win");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a 2-D toy dataset as CSV");
  std::string gen_dataset, gen_out;
  Eigen::Index gen_n = 100000;
  std::uint64_t gen_seed = 0;
  gen->add_option("--dataset", gen_dataset, "spiral | circles | pinwheel | 8gaussians")->required();
  gen->add_option("--n", gen_n, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--out", gen_out, "output CSV")->required();
  add_config(gen);

  // train
  auto* train = app.add_subcommand("train", "Train an epsilon-predicting MLP score model");
  std::string train_data, train_out, train_loss_log;
  TrainHyper hyper;
  int train_steps = 1000;
  double train_eps_d = kDefaultEpsD;
  train->add_option("--data", train_data, "training CSV")->required();
  train->add_option("--epochs", hyper.epochs)->check(CLI::PositiveNumber);
  train->add_option("--batch", hyper.batch)->check(CLI::PositiveNumber);
  train->add_option("--lr", hyper.lr)->check(CLI::PositiveNumber);
  train->add_option("--hidden", hyper.hidden)->check(CLI::PositiveNumber);
  train->add_option("--T", train_steps, "diffusion steps")->check(CLI::Range(2, 1000000));
  train->add_option("--eps-d", train_eps_d, "cosine schedule offset")->check(CLI::PositiveNumber);
  train->add_option("--seed", hyper.seed);
  train->add_option("--out", train_out, "checkpoint JSON")->required();
  train->add_option("--loss-log", train_loss_log, "per-epoch loss CSV (default <out>.loss.csv)");
  add_config(train);

  // sample
  auto* sample = app.add_subcommand("sample", "Backward diffusion, optionally importance-weighted");
  std::string sample_score, sample_weight, sample_variant = "ancestral", sample_out, trace_dir;
  SamplerConfig scfg;
  double sample_floor = kDefaultWeightFloor;
  int sample_steps = 1000;
  double sample_eps_d = kDefaultEpsD;
  sample->add_option("--score", sample_score, "checkpoint path or analytic:{8gaussians|circles|normal}")->required();
  sample->add_option("--weight", sample_weight, "weight spec; omit for base sampling");
  sample->add_option("--weight-floor", sample_floor, "floor m of floored weights")->check(CLI::PositiveNumber);
  sample->add_option("--epsilon", scfg.epsilon, "finite-difference probe step")->check(CLI::PositiveNumber);
  sample->add_option("--n", scfg.n_samples)->check(CLI::PositiveNumber);
  sample->add_option("--seed", scfg.seed);
  sample->add_option("--variant", sample_variant)->check(CLI::IsMember({"ancestral", "em"}));
  sample->add_option("--T", sample_steps, "steps for analytic scores")->check(CLI::Range(2, 1000000));
  sample->add_option("--eps-d", sample_eps_d, "schedule offset for analytic scores")->check(CLI::PositiveNumber);
  sample->add_option("--threads", scfg.threads, "0 = all cores; output does not depend on it");
  sample->add_option("--trace", scfg.trace_chains, "dump trajectories of the first K chains");
  sample->add_option("--trace-dir", trace_dir, "directory for trajectory CSVs");
  sample->add_option("--out", sample_out, "output CSV")->required();
  add_config(sample);

  // oracle-sample
  auto* oracle = app.add_subcommand("oracle-sample", "Exact acceptance-rejection samples from l p");
  std::string oracle_dataset, oracle_weight, oracle_out;
  double oracle_bound = 0.0, oracle_floor = kDefaultWeightFloor;
  Eigen::Index oracle_n = 100000;
  std::uint64_t oracle_seed = 0;
  oracle->add_option("--dataset", oracle_dataset)->required();
  oracle->add_option("--weight", oracle_weight)->required();
  oracle->add_option("--weight-floor", oracle_floor)->check(CLI::PositiveNumber);
  oracle->add_option("--bound", oracle_bound, "upper bound M on l over the data")->required();
  oracle->add_option("--n", oracle_n)->check(CLI::PositiveNumber);
  oracle->add_option("--seed", oracle_seed);
  oracle->add_option("--out", oracle_out)->required();
  add_config(oracle);

  // eval
  auto* eval = app.add_subcommand("eval", "Histogram JSD and mean weight between two sample files");
  std::string eval_a, eval_b, eval_weight, eval_floor, eval_ref, eval_out, eval_bounds = "-1.2,1.2";
  double eval_wfloor = kDefaultWeightFloor;
  int eval_bins = kDefaultBins;
  eval->add_option("--a", eval_a)->required();
  eval->add_option("--b", eval_b, "reference batch")->required();
  eval->add_option("--weight", eval_weight, "report mean weight under this spec");
  eval->add_option("--weight-floor", eval_wfloor)->check(CLI::PositiveNumber);
  eval->add_option("--floor", eval_floor, "second reference batch; reports floor_jsd = JSD(b, floor)");
  eval->add_option("--bins", eval_bins)->check(CLI::PositiveNumber);
  eval->add_option("--bounds", eval_bounds, "lo,hi or x_lo,x_hi,y_lo,y_hi");
  eval->add_option("--reference-report", eval_ref, "earlier report whose bins/bounds must match");
  eval->add_option("--out", eval_out)->required();
  add_config(eval);

  // verify
  auto* verify = app.add_subcommand("verify", "Run invariant suites; exit 5 on failure");
  verify->require_subcommand(1);
  std::string verify_out;
  verify->add_option("--out", verify_out, "write results JSON here as well as stdout");
  std::uint64_t vseed = 0;
  int vsteps = 1000;
  double veps_d = kDefaultEpsD;
  QuadratureOptions quad;
  auto* v_grad = verify->add_subcommand("gradcheck", "autodiff and weight gradients vs finite differences");
  double grad_tol = 1e-5;
  v_grad->add_option("--tol", grad_tol);
  v_grad->add_option("--seed", vseed);
  auto* v_sched = verify->add_subcommand("schedule", "cosine schedule invariants");
  v_sched->add_option("--T", vsteps)->check(CLI::Range(2, 1000000));
  v_sched->add_option("--eps-d", veps_d)->check(CLI::PositiveNumber);
  auto* v_oracle = verify->add_subcommand("score-oracle", "closed-form mixture scores vs quadrature");
  double oracle_tol = 1e-3;
  v_oracle->add_option("--T", vsteps)->check(CLI::Range(2, 1000000));
  v_oracle->add_option("--eps-d", veps_d)->check(CLI::PositiveNumber);
  v_oracle->add_option("--tol", oracle_tol);
  v_oracle->add_option("--nodes", quad.nodes)->check(CLI::Range(3, 5000));
  auto* v_gap = verify->add_subcommand("gap", "approximate vs quadrature score of l p over t");
  GapSetup gap;
  std::string gap_tlist = "10,100,500", gap_csv;
  v_gap->add_option("--case", gap.base_case, "8gaussians | gaussian-exp");
  v_gap->add_option("--weight", gap.weight_spec, "weight for the 8gaussians case");
  v_gap->add_option("--weight-floor", gap.weight_floor)->check(CLI::PositiveNumber);
  v_gap->add_option("--t-list", gap_tlist, "comma-separated steps");
  v_gap->add_option("--probes", gap.probes)->check(CLI::PositiveNumber);
  v_gap->add_option("--seed", gap.seed);
  v_gap->add_option("--epsilon", gap.epsilon)->check(CLI::PositiveNumber);
  v_gap->add_option("--T", gap.steps)->check(CLI::Range(2, 1000000));
  v_gap->add_option("--eps-d", gap.eps_d)->check(CLI::PositiveNumber);
  v_gap->add_option("--nodes", quad.nodes)->check(CLI::Range(3, 5000));
  v_gap->add_option("--csv", gap_csv, "GapReport CSV t,mean_gap,max_gap");
  for (auto* sub : {v_grad, v_sched, v_oracle, v_gap}) add_config(sub);

  // render
  auto* render = app.add_subcommand("render", "2-D histogram heatmap as binary PPM");
  std::string render_in, render_out, render_bounds = "-1.2,1.2";
  int render_bins = 200;
  render->add_option("--in", render_in)->required();
  render->add_option("--out", render_out)->required();
  render->add_option("--bins", render_bins)->check(CLI::Range(1, 10000));
  render->add_option("--bounds", render_bounds);
  add_config(render);

  try {
    std::vector<std::string> args = merge_config_file(argc, argv);
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());
    app.parse(static_cast<int>(cargs.size()), cargs.data());

    if (gen->parsed()) {
      if (!is_dataset_name(gen_dataset)) throw ConfigError("unknown dataset '" + gen_dataset + "'");
      const SampleBatch batch = sample_dataset(gen_dataset, gen_n, gen_seed);
      write_csv(batch, gen_out);
      json meta = report_header("gen-data", *gen);
      meta["dataset_meta"] = dataset_meta_for(gen_dataset);
      meta["n"] = batch.count();
      write_json(meta, sidecar_path(gen_out));
      return kOk;
    }

    if (train->parsed()) {
      const SampleBatch data = read_csv(train_data);
      const NoiseSchedule schedule = build_cosine_schedule(train_steps, train_eps_d);
      std::vector<double> losses;
      const TrainResult result = train_mlp_score(data, schedule, hyper, [&](int epoch, double loss) {
        if (epoch == 1 || epoch % 10 == 0 || epoch == hyper.epochs)
          std::fprintf(stderr, "epoch %d/%d loss %.6f\n", epoch, hyper.epochs, loss);
      });
      Checkpoint ckpt{result.params, schedule, json::object(), {}};
      const auto data_meta = sidecar_path(train_data);
      ckpt.dataset_meta = std::filesystem::exists(data_meta) ? read_json(data_meta).value("dataset_meta", json::object())
                                                             : json{{"source", train_data}};
      ckpt.training_meta = {hyper.epochs, static_cast<std::int64_t>(hyper.batch), hyper.lr, hyper.seed,
                            result.epoch_losses.back(), "adam"};
      save_checkpoint(ckpt, train_out);
      const std::string log_path = train_loss_log.empty() ? train_out + ".loss.csv" : train_loss_log;
      std::ofstream log(log_path, std::ios::binary);
      if (!log) throw IoError("cannot open '" + log_path + "' for writing");
      log << "epoch,loss\n";
      char buf[64];
      for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, result.epoch_losses[e]);
        log << buf;
      }
      return kOk;
    }

    if (sample->parsed()) {
      LoadedScore loaded = load_score(sample_score, sample_steps, sample_eps_d);
      scfg.variant = parse_step_variant(sample_variant);
      WeightPtr weight;
      if (!sample_weight.empty()) weight = weight_from_flag(sample_weight, sample_floor);
      const SamplerResult res = run_sampler(*loaded.score, weight.get(), *loaded.schedule, scfg);
      write_csv(res.batch, sample_out);
      if (!res.trajectories.empty()) {
        const std::filesystem::path dir = trace_dir.empty() ? std::filesystem::path(sample_out).parent_path() : std::filesystem::path(trace_dir);
        if (!dir.empty()) std::filesystem::create_directories(dir);
        for (const auto& tr : res.trajectories)
          write_trajectory(tr, dir / ("trajectory_" + std::to_string(tr.chain) + ".csv"));
      }
      json meta = report_header("sample", *sample);
      meta["score_source"] = loaded.source;
      meta["sampler"] = res.batch.meta.sampler;
      meta["n_requested"] = scfg.n_samples;
      meta["n_emitted"] = res.batch.count();
      json failures = json::array();
      for (const auto& f : res.failures) failures.push_back({{"chain", f.chain}, {"step", f.step}});
      meta["failures"] = {{"count", res.failures.size()}, {"chains", failures}};
      if (weight && res.batch.count() > 0) meta["mean_weight"] = mean_weight_json(res.batch, *weight);
      write_json(meta, sidecar_path(sample_out));
      if (!res.failures.empty())
        std::fprintf(stderr, "warning: %zu chains produced non-finite states and were dropped\n", res.failures.size());
      return kOk;
    }

    if (oracle->parsed()) {
      if (!is_dataset_name(oracle_dataset)) throw ConfigError("unknown dataset '" + oracle_dataset + "'");
      const WeightPtr weight = weight_from_flag(oracle_weight, oracle_floor);
      const BaseSampler base = [&](Eigen::Index n, std::uint64_t seed) { return sample_dataset(oracle_dataset, n, seed); };
      const AcceptRejectResult res = accept_reject_sample(base, *weight, oracle_bound, oracle_n, oracle_seed);
      write_csv(res.batch, oracle_out);
      if (res.bound_violations > 0)
        std::fprintf(stderr, "warning: %llu proposals had l(x) > M (max %.6g); acceptance clamped to 1\n",
                     static_cast<unsigned long long>(res.bound_violations), res.max_weight_seen);
      json meta = report_header("oracle-sample", *oracle);
      meta["acceptance_rate"] = res.acceptance_rate;
      meta["proposals"] = res.proposals;
      meta["bound_violations"] = res.bound_violations;
      meta["max_weight_seen"] = res.max_weight_seen;
      meta["dataset_meta"] = dataset_meta_for(oracle_dataset);
      write_json(meta, sidecar_path(oracle_out));
      return kOk;
    }

    if (eval->parsed()) {
      const Bounds2d bounds = parse_bounds(eval_bounds);
      if (!eval_ref.empty()) {
        const json ref = read_json(eval_ref);
        if (!ref.contains("bins") || !ref.contains("bounds"))
          throw IoError("reference report '" + eval_ref + "' lacks bins/bounds");
        if (ref["bins"].get<int>() != eval_bins || ref["bounds"] != bounds_to_json(bounds))
          throw ConfigError("binning convention differs from reference report '" + eval_ref + "' (bins " +
                            ref["bins"].dump() + ", bounds " + ref["bounds"].dump() + ")");
      }
      const SampleBatch a = read_csv(eval_a);
      const SampleBatch b = read_csv(eval_b);
      const HistogramGrid ha = histogram2d(a.data, bounds, eval_bins, eval_bins);
      const HistogramGrid hb = histogram2d(b.data, bounds, eval_bins, eval_bins);
      json report = report_header("eval", *eval);
      report["jsd"] = jsd(ha, hb);
      report["bins"] = eval_bins;
      report["bounds"] = bounds_to_json(bounds);
      report["log_base"] = "e";
      report["n_samples"] = {{"a", a.count()}, {"b", b.count()}};
      report["overflow_counts"] = {{"a", ha.overflow}, {"b", hb.overflow}};
      report["floor_jsd"] = nullptr;
      if (!eval_floor.empty()) {
        const SampleBatch f = read_csv(eval_floor);
        const HistogramGrid hf = histogram2d(f.data, bounds, eval_bins, eval_bins);
        report["floor_jsd"] = jsd(hb, hf);
        report["n_samples"]["floor"] = f.count();
        report["overflow_counts"]["floor"] = hf.overflow;
      }
      report["mean_weight"] = json::object();
      if (!eval_weight.empty()) {
        const WeightPtr w = weight_from_flag(eval_weight, eval_wfloor);
        report["mean_weight"] = {{"spec", eval_weight}, {"a", mean_weight_json(a, *w)}, {"b", mean_weight_json(b, *w)}};
      }
      write_json(report, eval_out);
      std::printf("jsd %.6g\n", report["jsd"].get<double>());
      return kOk;
    }

    if (verify->parsed()) {
      json result;
      bool pass = false;
      if (v_grad->parsed()) {
        const CheckList c = verify_gradcheck(grad_tol, vseed);
        result = report_header("verify gradcheck", *v_grad);
        result["result"] = c.to_json();
        pass = c.pass();
      } else if (v_sched->parsed()) {
        const CheckList c = verify_schedule(vsteps, veps_d);
        result = report_header("verify schedule", *v_sched);
        result["result"] = c.to_json();
        pass = c.pass();
      } else if (v_oracle->parsed()) {
        const CheckList c = verify_score_oracle(vsteps, veps_d, oracle_tol, quad);
        result = report_header("verify score-oracle", *v_oracle);
        result["result"] = c.to_json();
        pass = c.pass();
      } else {
        gap.t_values = parse_int_list(gap_tlist, "--t-list");
        const GapOutcome g = verify_gap(gap, quad);
        result = report_header("verify gap", *v_gap);
        result["result"] = g.checks.to_json();
        json rows = json::array();
        for (const auto& r : g.report.rows)
          rows.push_back({{"t", r.t}, {"mean_gap", r.mean_gap}, {"max_gap", r.max_gap},
                          {"max_self_convergence", r.max_self_convergence}});
        result["rows"] = rows;
        pass = g.checks.pass();
        if (!gap_csv.empty()) {
          std::ofstream csv(gap_csv, std::ios::binary);
          if (!csv) throw IoError("cannot open '" + gap_csv + "' for writing");
          csv << "t,mean_gap,max_gap\n";
          char buf[128];
          for (const auto& r : g.report.rows) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.t, r.mean_gap, r.max_gap);
            csv << buf;
          }
        }
      }
      std::cout << result.dump(2) << '\n';
      if (!verify_out.empty()) write_json(result, verify_out);
      if (!pass) throw VerificationFailed("verification failed");
      return kOk;
    }

    if (render->parsed()) {
      const Bounds2d bounds = parse_bounds(render_bounds);
      std::ifstream probe(render_in);
      if (!probe) throw IoError("cannot open '" + render_in + "'");
      std::string header, second;
      std::getline(probe, header);
      Eigen::MatrixXd points(0, 2);
      if (std::getline(probe, second)) points = read_csv(render_in).data;
      if (points.cols() != 2) throw IoError("'" + render_in + "' must have two columns");
      const std::string img = render_ppm(points, bounds, render_bins);
      std::ofstream out(render_out, std::ios::binary);
      if (!out) throw IoError("cannot open '" + render_out + "' for writing");
      out.write(img.data(), static_cast<std::streamsize>(img.size()));
      if (!out) throw IoError("write to '" + render_out + "' failed");
      return kOk;
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const VerificationFailed& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kVerification;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::logic_error& e) {  // ConfigError, ContractViolation
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  }
  return kOk;
}
