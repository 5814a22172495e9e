//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! `cargo test --test acceptance -- 1 3 8` runs a subset. Setting
//! `CUBELEARN_ACCEPTANCE_SMOKE=1` shrinks every experiment to check the
//! plumbing; a smoke run never counts as a pass.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cubelearn::bench::{bench_pipeline, read_bench_csv, BenchRow, TABLE_PIPELINES};
use cubelearn::ctensor::ComplexTensor;
use cubelearn::cubelearn::{CubeLearn, CubeLearnConfig};
use cubelearn::dft_oracle::{preprocess_dft, reduce_input, HeatmapOptions, SlicingKind};
use cubelearn::io::cube_file::read_cube;
use cubelearn::radar_sim::{generate_dataset, DatasetSpec, Manifest, RadarConfig, RawDataCube, Split, SplitCounts};
use cubelearn::rng;
use cubelearn::training::{
    epochs_to_fraction, evaluate, load_split, manifest_cube_shape, train, EpochMetrics, Example, FrontendKind, Pipeline,
    PipelineConfig, TrainConfig,
};
use common::{grads, physics};
use rand::Rng;

struct Scale {
    smoke: bool,
    radar: RadarConfig,
    spec: DatasetSpec,
    epochs: usize,
    seeds: Vec<u64>,
    repeats: usize,
    oracle_cubes: usize,
}

impl Scale {
    fn new() -> Self {
        if std::env::var_os("CUBELEARN_ACCEPTANCE_SMOKE").is_some() {
            let radar = RadarConfig { n_samples: 32, n_chirps: 32, n_frames: 4, ..RadarConfig::default() };
            let counts = SplitCounts { train: 3, val: 2, test: 2, out_of_set: 2 };
            Self {
                smoke: true,
                radar,
                spec: DatasetSpec { counts, ..DatasetSpec::default() },
                epochs: 3,
                seeds: vec![0, 1, 2],
                repeats: 2,
                oracle_cubes: 2,
            }
        } else {
            Self {
                smoke: false,
                radar: RadarConfig::default(),
                spec: DatasetSpec::default(),
                epochs: 30,
                seeds: vec![0, 1, 2],
                repeats: 10,
                oracle_cubes: 20,
            }
        }
    }

    fn train_config(&self, seed: u64, module_lr: f64) -> TrainConfig {
        TrainConfig { epochs: self.epochs, seed, module_lr, ..TrainConfig::default() }
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn log(msg: impl AsRef<str>) {
    eprintln!("[acceptance] {}", msg.as_ref());
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn minutes(s: f64) -> String {
    format!("{:.1} min", s / 60.0)
}

// ---------------------------------------------------------------- data

/// Reuses a previously generated dataset when its manifest matches.
fn dataset(scale: &Scale, root: &Path) -> (PathBuf, Manifest) {
    let dir = root.join(if scale.smoke { "data-smoke" } else { "data" });
    if let Ok(m) = Manifest::load(&dir) {
        if m.spec == scale.spec && m.config == scale.radar {
            log(format!("reusing dataset in {}", dir.display()));
            return (dir, m);
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    let t0 = Instant::now();
    let m = generate_dataset(&scale.spec, &scale.radar, &dir).expect("dataset generation");
    log(format!("generated {} cubes in {:.0} s", m.samples.len(), t0.elapsed().as_secs_f64()));
    (dir, m)
}

/// Every split of one dataset, prepared for one front-end configuration.
struct Loaded {
    raw_shape: [usize; 4],
    train: Vec<Example<f64>>,
    val: Vec<Example<f64>>,
    test: Vec<Example<f64>>,
    out_of_set: Vec<Example<f64>>,
    seconds: f64,
}

fn load(config: &PipelineConfig, dir: &Path, m: &Manifest) -> Loaded {
    let t0 = Instant::now();
    let raw_shape = manifest_cube_shape(m);
    let probe = Pipeline::<f64>::new(config.clone(), raw_shape, 0).expect("pipeline");
    let split = |s| load_split(&probe, dir, m, s).expect("load split");
    let (train, val, test, out_of_set) = (split(Split::Train), split(Split::Val), split(Split::Test), split(Split::OutOfSet));
    let seconds = t0.elapsed().as_secs_f64();
    log(format!("loaded {} [{}] in {seconds:.0} s", config.name(), config.frontend.name()));
    Loaded { raw_shape, train, val, test, out_of_set, seconds }
}

// ---------------------------------------------------------------- runs

#[derive(Clone, Debug)]
struct Run {
    pipeline: String,
    frontend: &'static str,
    module_lr: f64,
    reduce: [f64; 2],
    seed: u64,
    epochs: Vec<EpochMetrics>,
    best_epoch: usize,
    test_acc: f64,
    out_of_set_acc: f64,
    test_latency_ms: f64,
    seconds: f64,
}

impl Run {
    fn to_epoch_90(&self) -> f64 {
        epochs_to_fraction(&self.epochs, 0.9).map_or(f64::NAN, |e| e as f64)
    }
}

fn run(config: &PipelineConfig, cfg: &TrainConfig, data: &Loaded, log_sink: &mut Vec<Run>) -> Run {
    let t0 = Instant::now();
    let mut p = Pipeline::<f64>::new(config.clone(), data.raw_shape, cfg.seed).expect("pipeline");
    let outcome = train(&mut p, &data.train, &data.val, cfg).expect("training");
    let test = evaluate(&p, &data.test, "test", cfg.batch_size).expect("test evaluation");
    let oos = evaluate(&p, &data.out_of_set, "out_of_set", cfg.batch_size).expect("out-of-set evaluation");
    let r = Run {
        pipeline: config.name(),
        frontend: config.frontend.name(),
        module_lr: if config.frontend == FrontendKind::Dft { f64::NAN } else { cfg.module_lr },
        reduce: config.fractions(),
        seed: cfg.seed,
        best_epoch: outcome.best_epoch,
        epochs: outcome.epochs,
        test_acc: test.accuracy,
        out_of_set_acc: oos.accuracy,
        test_latency_ms: test.latency_ms,
        seconds: t0.elapsed().as_secs_f64(),
    };
    log(format!(
        "{} [{}] lr {} reduce {:?} seed {}: best epoch {}, test {:.4}, out-of-set {:.4}, {:.0} s",
        r.pipeline, r.frontend, r.module_lr, r.reduce, r.seed, r.best_epoch, r.test_acc, r.out_of_set_acc, r.seconds
    ));
    log_sink.push(r.clone());
    r
}

fn write_runs(path: &Path, runs: &[Run]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record([
        "pipeline", "frontend", "module_lr", "sample_frac", "chirp_frac", "seed", "best_epoch", "epoch_to_90pct",
        "best_val_acc", "test_acc", "out_of_set_acc", "test_latency_ms", "seconds",
    ])
    .unwrap();
    for r in runs {
        let best = &r.epochs[r.best_epoch - 1];
        w.write_record([
            r.pipeline.clone(),
            r.frontend.to_string(),
            r.module_lr.to_string(),
            r.reduce[0].to_string(),
            r.reduce[1].to_string(),
            r.seed.to_string(),
            r.best_epoch.to_string(),
            r.to_epoch_90().to_string(),
            best.val_acc.to_string(),
            r.test_acc.to_string(),
            r.out_of_set_acc.to_string(),
            r.test_latency_ms.to_string(),
            r.seconds.to_string(),
        ])
        .unwrap();
    }
    w.flush().unwrap();
}

// ---------------------------------------------------------------- criteria

fn oracle_equivalence(scale: &Scale) -> Verdict {
    let t0 = Instant::now();
    let dims = scale.radar.cube_shape();
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(17, "acceptance/oracle", 0);
    for i in 0..scale.oracle_cubes {
        let n: usize = dims.iter().product();
        let re = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let im = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let full = RawDataCube::new(ComplexTensor::from_parts(&dims, re, im).unwrap(), 0).unwrap();
        for kind in SlicingKind::ALL {
            let cube = if kind.default_half_input() { reduce_input(&full, 0.5, 0.5).unwrap() } else { full.clone() };
            let module = CubeLearn::<f64>::new(CubeLearnConfig::for_kind(kind), cube.shape(), i as u64).unwrap();
            let learned = module.heatmap(&cube).unwrap();
            let oracle = preprocess_dft(&cube, kind, &HeatmapOptions::default()).unwrap();
            let scale = oracle.max_abs().max(1e-300);
            let err = learned.data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            worst = worst.max(err);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Verdict {
        pass: worst <= 1e-6 && secs < 120.0,
        detail: format!("7 kinds x {} cubes {dims:?}: max rel err {worst:.2e} (<= 1e-6), {secs:.1} s (< 120 s)", scale.oracle_cubes),
    }
}

fn physics_peaks() -> Verdict {
    let range = physics::range_peaks();
    let doppler = physics::doppler_offsets();
    let angle = physics::angle_peaks();
    let pass = physics::expected_range_bin(0.4, 256) == 4
        && physics::expected_doppler_offset(-0.4) == -16
        && range.iter().all(|&p| p == 4)
        && doppler.iter().all(|&o| o == -16)
        && angle.iter().all(|&p| p == 48);
    Verdict {
        pass,
        detail: format!("range bins {range:?} (4), doppler offsets {doppler:?} (-16), angle bins {angle:?} (48)"),
    }
}

fn gradient_integrity() -> Verdict {
    let t0 = Instant::now();
    let cases: [(&str, fn() -> f64); 15] = [
        ("cmatmul", grads::cmatmul),
        ("apply_along_axis", grads::apply_along_axis),
        ("modulus", grads::modulus),
        ("log_eps", grads::log_eps),
        ("sum_axis", grads::sum_axis),
        ("add/scale/relu/reshape/sum", grads::elementwise),
        ("modrelu/crelu/zrelu", grads::activations),
        ("conv", grads::conv),
        ("batch_norm", grads::batch_norm),
        ("max_pool", grads::max_pool),
        ("dense", grads::dense),
        ("lstm", grads::lstm),
        ("cross_entropy", grads::cross_entropy),
        ("cubelearn front-end", grads::frontend),
        ("end-to-end D-T", grads::end_to_end_dt),
    ];
    let errs: Vec<(&str, f64)> = cases.iter().map(|(n, f)| (*n, f())).collect();
    let secs = t0.elapsed().as_secs_f64();
    let worst = errs.iter().fold(("", 0.0f64), |w, &(n, e)| if e > w.1 || e.is_nan() { (n, e) } else { w });
    Verdict {
        pass: errs.iter().all(|&(_, e)| e <= 1e-3) && secs < 300.0,
        detail: format!("{} checks, worst {} {:.2e} (<= 1e-3), {secs:.1} s (< 300 s)", errs.len(), worst.0, worst.1),
    }
}

fn clutter() -> Verdict {
    let (ratio, mean) = physics::clutter();
    Verdict {
        pass: ratio <= 1e-9 && mean <= 1e-12,
        detail: format!("static residual energy ratio {ratio:.2e} (<= 1e-9), max chirp mean {mean:.2e}"),
    }
}

/// Runs the `bench` subcommand over the standard table.
fn bench_table(scale: &Scale, dir: &Path, out: &Path) -> Verdict {
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_cubelearn"))
        .args(["bench", "--repeats", &scale.repeats.to_string(), "--data"])
        .arg(dir)
        .arg("--out")
        .arg(out)
        .status()
        .expect("bench subcommand");
    if !status.success() {
        return Verdict { pass: false, detail: format!("bench exited with {status}") };
    }
    let rows: Vec<BenchRow> = read_bench_csv(out).unwrap();
    for r in &rows {
        log(format!("bench {}:{}: dft {:.2} ms, cubelearn {:.2} ms", r.preprocess, r.classifier, r.dft_ms, r.cubelearn_ms));
    }
    let slower: Vec<String> = rows
        .iter()
        .filter(|r| r.cubelearn_ms < r.dft_ms)
        .map(|r| format!("{}:{}", r.preprocess, r.classifier))
        .collect();
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.2}", r.cubelearn_ms / r.dft_ms)).collect();
    let covered = rows.iter().map(|r| format!("{}:{}", r.preprocess, r.classifier)).collect::<Vec<_>>() == TABLE_PIPELINES;
    Verdict {
        pass: covered && slower.is_empty(),
        detail: format!(
            "{} pipelines (full table {covered}), cubelearn/dft latency ratios [{}], violations {slower:?}; table in {}",
            rows.len(),
            ratios.join(", "),
            out.display()
        ),
    }
}

/// Criteria 4 to 7 and 9 share their training runs.
struct Experiments<'a> {
    scale: &'a Scale,
    dir: &'a Path,
    manifest: &'a Manifest,
    runs: Vec<Run>,
}

impl Experiments<'_> {
    fn config(&self, spec: &str, frontend: FrontendKind, reduce: Option<[f64; 2]>) -> PipelineConfig {
        let mut c = PipelineConfig::parse(spec, frontend, self.manifest.n_classes).unwrap();
        c.reduce = reduce;
        c
    }

    fn arm(&mut self, spec: &str, frontend: FrontendKind, data: &Loaded, lr: f64) -> Vec<Run> {
        let config = self.config(spec, frontend, None);
        let seeds = self.scale.seeds.clone();
        seeds.iter().map(|&s| run(&config, &self.scale.train_config(s, lr), data, &mut self.runs)).collect()
    }
}

fn elapsed(runs: &[Run]) -> f64 {
    runs.iter().map(|r| r.seconds).sum()
}

fn test_accs(runs: &[Run]) -> Vec<f64> {
    runs.iter().map(|r| r.test_acc).collect()
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |c: usize| wanted.is_empty() || wanted.contains(&c);
    let scale = Scale::new();
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&root).unwrap();
    let mut verdicts: BTreeMap<usize, Verdict> = BTreeMap::new();
    let mut record = |id: usize, v: Verdict| {
        println!("criterion {id}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        verdicts.insert(id, v);
    };

    if want(1) {
        record(1, oracle_equivalence(&scale));
    }
    if want(2) {
        record(2, physics_peaks());
    }
    if want(3) {
        record(3, gradient_integrity());
    }
    if want(8) {
        record(8, clutter());
    }

    let heavy = [4, 5, 6, 7, 9, 10].iter().any(|&c| want(c));
    if heavy {
        let (dir, manifest) = dataset(&scale, &root);
        let results = root.join(if scale.smoke { "results-smoke" } else { "results" });
        std::fs::create_dir_all(&results).unwrap();
        if want(10) {
            record(10, bench_table(&scale, &dir, &results.join("bench.csv")));
        }
        let mut ex = Experiments { scale: &scale, dir: &dir, manifest: &manifest, runs: Vec::new() };
        if [4, 5, 6, 7, 9].iter().any(|&c| want(c)) {
            experiments(&mut ex, &want, &results, &mut record);
        }
    }

    let failed: Vec<usize> = verdicts.iter().filter(|(_, v)| !v.pass).map(|(&k, _)| k).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        if scale.smoke { " (smoke scale, not a real result)" } else { "" }
    );
    if !failed.is_empty() || scale.smoke {
        std::process::exit(1);
    }
}

fn experiments(ex: &mut Experiments, want: &dyn Fn(usize) -> bool, results: &Path, record: &mut dyn FnMut(usize, Verdict)) {
    let scale = ex.scale;
    let lrs = [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
    let default_lr = TrainConfig::default().module_lr;

    // D-T + 2DCNN: both arms, the module learning-rate sweep, and the
    // full-size point of the reduced-input sweep.
    let dt = "DT:CNN2D";
    let dft_data = load(&ex.config(dt, FrontendKind::Dft, None), ex.dir, ex.manifest);
    let dt_dft = ex.arm(dt, FrontendKind::Dft, &dft_data, default_lr);
    let mut c5_seconds = dft_data.seconds + elapsed(&dt_dft);
    drop(dft_data);
    let learn_data = load(&ex.config(dt, FrontendKind::Cubelearn, None), ex.dir, ex.manifest);
    let mut sweep: Vec<(f64, Vec<Run>)> = Vec::new();
    for &lr in &lrs {
        let needed = lr == default_lr || (lr == 0.0 && want(4)) || want(7);
        if needed {
            sweep.push((lr, ex.arm(dt, FrontendKind::Cubelearn, &learn_data, lr)));
        }
    }
    c5_seconds += learn_data.seconds;
    drop(learn_data);
    let dt_learn = sweep.iter().find(|(lr, _)| *lr == default_lr).unwrap().1.clone();
    c5_seconds += elapsed(&dt_learn);

    if want(4) {
        let zero = &sweep.iter().find(|(lr, _)| *lr == 0.0).unwrap().1;
        let mut worst: f64 = 0.0;
        let mut same_best = true;
        for (a, b) in dt_dft.iter().zip(zero) {
            same_best &= a.best_epoch == b.best_epoch;
            for (x, y) in a.epochs.iter().zip(&b.epochs) {
                for (u, v) in x.scores().iter().zip(y.scores()) {
                    worst = worst.max((u - v).abs());
                }
            }
            worst = worst.max((a.test_acc - b.test_acc).abs()).max((a.out_of_set_acc - b.out_of_set_acc).abs());
        }
        record(
            4,
            Verdict {
                pass: worst <= 1e-9 && same_best,
                detail: format!(
                    "{dt}, {} seeds x {} epochs: max metric difference {worst:.2e} (<= 1e-9), same selected epochs {same_best}",
                    scale.seeds.len(),
                    scale.epochs
                ),
            },
        );
    }

    if want(7) {
        let medians: Vec<f64> = sweep.iter().map(|(_, r)| median(&test_accs(r))).collect();
        let interior = medians[1..medians.len() - 1].iter().cloned().fold(f64::MIN, f64::max);
        let ends = medians[0].max(medians[medians.len() - 1]);
        let table: Vec<String> = sweep.iter().zip(&medians).map(|((lr, _), m)| format!("{lr:e}: {m:.4}")).collect();
        record(
            7,
            Verdict {
                pass: interior > ends,
                detail: format!("{dt} median test accuracy by module_lr [{}]; interior max {interior:.4} vs ends {ends:.4}", table.join(", ")),
            },
        );
    }

    if want(6) {
        let a: Vec<f64> = dt_learn.iter().map(Run::to_epoch_90).collect();
        let b: Vec<f64> = dt_dft.iter().map(Run::to_epoch_90).collect();
        let (ma, mb) = (median(&a), median(&b));
        record(
            6,
            Verdict {
                pass: ma <= mb,
                detail: format!("{dt} median epoch to 90% of max val acc: cubelearn {ma} {a:?} vs dft {mb} {b:?}"),
            },
        );
    }

    // R-D-T with 3DCNN and 2DCNN-LSTM share the prepared inputs per arm.
    let mut per_pipeline: Vec<(String, Vec<Run>, Vec<Run>)> = vec![(dt.to_string(), dt_learn.clone(), dt_dft.clone())];
    if want(5) {
        let rdt = ["RDT:CNN3D", "RDT:CNN2D_LSTM"];
        let mut dft_runs = Vec::new();
        let data = load(&ex.config(rdt[0], FrontendKind::Dft, None), ex.dir, ex.manifest);
        c5_seconds += data.seconds;
        for p in rdt {
            dft_runs.push(ex.arm(p, FrontendKind::Dft, &data, default_lr));
        }
        drop(data);
        let data = load(&ex.config(rdt[0], FrontendKind::Cubelearn, None), ex.dir, ex.manifest);
        c5_seconds += data.seconds;
        for (p, dft) in rdt.iter().zip(dft_runs) {
            let learn = ex.arm(p, FrontendKind::Cubelearn, &data, default_lr);
            c5_seconds += elapsed(&learn) + elapsed(&dft);
            per_pipeline.push((p.to_string(), learn, dft));
        }
        drop(data);
        let mut pass = true;
        let mut parts = Vec::new();
        for (p, learn, dft) in &per_pipeline {
            let (a, b) = (median(&test_accs(learn)), median(&test_accs(dft)));
            pass &= a >= b;
            parts.push(format!("{p} cubelearn {a:.4} vs dft {b:.4}"));
        }
        let in_time = c5_seconds < 3600.0;
        record(
            5,
            Verdict {
                pass: pass && in_time,
                detail: format!(
                    "median test accuracy: {}; accuracy condition {}; runtime {} (< 60 min) {}",
                    parts.join("; "),
                    if pass { "met" } else { "not met" },
                    minutes(c5_seconds),
                    if in_time { "met" } else { "not met" }
                ),
            },
        );
    }

    if want(9) {
        let fracs = [0.25, 0.375, 0.5, 1.0];
        let rec = ex.manifest.records(Split::Test).next().expect("a test cube");
        let cube = read_cube::<f32>(&ex.dir.join(&rec.file)).unwrap();
        let mut table = csv::Writer::from_path(results.join("reduced_input.csv")).unwrap();
        table
            .write_record(["fraction", "samples", "chirps", "frontend", "median_test_acc", "test_accs", "latency_ms"])
            .unwrap();
        let raw = manifest_cube_shape(ex.manifest);
        let mut accs = BTreeMap::new();
        let mut lines = Vec::new();
        for f in fracs {
            let config = ex.config(dt, FrontendKind::Cubelearn, Some([f, f]));
            let runs = if f == 1.0 {
                dt_learn.clone()
            } else {
                let data = load(&config, ex.dir, ex.manifest);
                let seeds = scale.seeds.clone();
                seeds.iter().map(|&s| run(&config, &scale.train_config(s, default_lr), &data, &mut ex.runs)).collect()
            };
            let lat = bench_pipeline::<f64>(&config, &cube, scale.repeats, 0).unwrap();
            let shape = config.reduced_shape(raw).unwrap();
            let acc = median(&test_accs(&runs));
            accs.insert((f * 1000.0) as u32, acc);
            let list = test_accs(&runs).iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" ");
            table
                .write_record([f.to_string(), shape[3].to_string(), shape[2].to_string(), "cubelearn".into(), acc.to_string(), list, lat.cubelearn_ms.to_string()])
                .unwrap();
            if f == 1.0 {
                let dacc = median(&test_accs(&dt_dft));
                let dlist = test_accs(&dt_dft).iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" ");
                table
                    .write_record([f.to_string(), shape[3].to_string(), shape[2].to_string(), "dft".into(), dacc.to_string(), dlist, lat.dft_ms.to_string()])
                    .unwrap();
                lines.push(format!("dft 1: {dacc:.4} @ {:.2} ms", lat.dft_ms));
            }
            lines.push(format!("{f}: {acc:.4} @ {:.2} ms", lat.cubelearn_ms));
        }
        table.flush().unwrap();
        let (a38, a1) = (accs[&375], accs[&1000]);
        record(
            9,
            Verdict {
                pass: a38 >= a1 - 0.05,
                detail: format!(
                    "{dt} cubelearn median test accuracy @ latency [{}]; 3/8 {a38:.4} vs full {a1:.4} (within 0.05); table in {}",
                    lines.join(", "),
                    results.join("reduced_input.csv").display()
                ),
            },
        );
    }
    write_runs(&results.join("runs.csv"), &ex.runs);
}
