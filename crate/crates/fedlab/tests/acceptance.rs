//! Acceptance suite. Prints one `[PASS]` / `[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Run with `cargo test -p fedlab --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fedlab_core::analysis::{
    classifier_fraction, exchange_experiment, fedavg_cost, fedconcat_cost, fedconcat_id_cost,
    track_averaging_degradation, CommCostReport, ProbeConfig,
};
use fedlab_core::cluster::{
    infer_label_distribution, kmeans, kmeans_balanced, label_distribution, laplace_noise,
    sample_laplace, LaplaceMechanism,
};
use fedlab_core::data::{partition_classes, BlobSpec, Dataset};
use fedlab_core::engine::*;
use fedlab_core::math::rng_for;
use fedlab_core::metrics::MetricsLog;
use fedlab_core::nn::{
    concat_encoders, gradient_check, Batch, Classifier, ConcatModel, ModelParams,
};
use fedlab_core::Matrix;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        (
            "gradient correctness",
            Some(Duration::from_secs(10)),
            gradients,
        ),
        (
            "averaging degrades disjoint clients",
            Some(Duration::from_secs(30)),
            degradation,
        ),
        (
            "benchmark at matched budget",
            Some(Duration::from_secs(300)),
            benchmark,
        ),
        (
            "communication formula",
            Some(Duration::from_secs(1)),
            comm_formula,
        ),
        (
            "label inference",
            Some(Duration::from_secs(120)),
            label_inference,
        ),
        ("clustering", None, clustering),
        ("laplace mechanism", None, laplace),
        ("classifier-init logit sum", None, logit_sum),
        ("feature-cache equivalence", None, cache_equivalence),
        ("determinism across thread counts", None, determinism),
        ("probe ordering", None, probe_ordering),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = run();
        let took = start.elapsed();
        if let Some(limit) = budget {
            if took > *limit {
                let detail = match &outcome {
                    Ok(d) | Err(d) => d.clone(),
                };
                outcome = Err(format!("{detail}; took {took:.1?}, budget {limit:?}"));
            }
        }
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] criterion {:>2} {name}: {detail} ({took:.1?})",
            i + 1
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    for pair in 0..20u64 {
        let mut rng = rng_for(pair, &[0xacc1]);
        let depth = rng.random_range(1..4);
        let mut dims = vec![rng.random_range(2..7)];
        dims.extend((0..depth).map(|_| rng.random_range(2..9)));
        let classes = rng.random_range(2..6);
        dims.push(classes);
        let init = ModelParams::init(&dims, &mut rng).map_err(|e| e.to_string())?;
        // nonzero biases keep pre-activations off the ReLU kink, where
        // central differences see a slope the gradient does not have
        let layers = init
            .layers()
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.bias
                    .iter_mut()
                    .for_each(|b| *b = rng.random::<f64>() - 0.5);
                l
            })
            .collect();
        let model = ModelParams::from_layers(layers).map_err(|e| e.to_string())?;
        let n = rng.random_range(1..9);
        let x = Matrix::from_vec(
            n,
            dims[0],
            (0..n * dims[0])
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect(),
        );
        let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let batch = Batch::new(x, y, classes).map_err(|e| e.to_string())?;
        worst = worst.max(gradient_check(&model, &batch, 1e-5).map_err(|e| e.to_string())?);
    }
    check(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over 20 pairs (limit 1e-4)"),
    )
}

fn disjoint_pair(seed: u64) -> ([Dataset; 2], [Dataset; 2]) {
    let (train, test) = BlobSpec {
        classes: 4,
        dim: 32,
        per_class: 200,
        spread: 0.4,
        seed,
    }
    .generate_with_test(100)
    .unwrap();
    let split = |d: &Dataset| {
        [
            d.restrict_to(&[0, 1]).unwrap(),
            d.restrict_to(&[2, 3]).unwrap(),
        ]
    };
    (split(&train), split(&test))
}

fn default_local() -> LocalSpec {
    let cfg = FedConfig::default();
    LocalSpec {
        batch_size: cfg.batch_size,
        sgd: cfg.sgd(),
        prox_mu: None,
    }
}

fn degradation() -> Outcome {
    let mut smallest_drop = f64::INFINITY;
    for seed in 0..3 {
        let (train, test) = disjoint_pair(seed);
        let init = ModelParams::init(&[32, 64, 32, 4], &mut rng_for(seed, &[7])).unwrap();
        let trace =
            track_averaging_degradation(&init, &train, &test, 2, 10, &default_local(), seed)
                .map_err(|e| e.to_string())?;
        for t in 1..=2 {
            for i in 0..2 {
                let pre = trace.pre_average(t, i).unwrap();
                let post = trace.post_average(t, i).unwrap();
                smallest_drop = smallest_drop.min(pre - post);
            }
        }
        if !trace.drops_every_round(2, 2) {
            return Err(format!(
                "seed {seed}: some post-average accuracy did not drop"
            ));
        }
    }
    check(
        smallest_drop > 0.0,
        format!(
            "smallest pre-to-post drop {:.1} points over seeds 0-2",
            100.0 * smallest_drop
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn benchmark() -> Outcome {
    let default = FedConfig::default();
    let dims = default.layer_dims(32, 10);
    let mlp = ModelParams::init(&dims, &mut rng_for(0, &[])).unwrap();
    let parity = |id| {
        CommCostReport::new(&mlp, 40, 5, 0, 50, id, 50)
            .ok()
            .and_then(|r| r.parity_t_e())
            .ok_or("no feasible parity")
    };
    let (t_e, t_e_id) = (parity(false)?, parity(true)?);
    let (mut avg, mut concat, mut id) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..3 {
        let spec = BlobSpec {
            classes: 10,
            dim: 32,
            per_class: 500,
            spread: 0.8,
            seed,
        };
        let (train, test) = spec.generate_with_test(100).unwrap();
        let part = partition_classes(&train, 40, 2, seed).unwrap();
        let clients = build_clients(&train, &part).unwrap();
        let base = FedConfig {
            seed,
            rounds: 50,
            clusters: 5,
            classifier_rounds: 50,
            ..FedConfig::default()
        };
        let fa = run_fedavg(&clients, &test, &base, &Sequential).map_err(|e| e.to_string())?;
        let budget = fa.log.total_cost;
        let final_acc = |cfg: FedConfig| -> Result<f64, String> {
            let out =
                run_fedconcat(&clients, &test, &cfg, &Sequential).map_err(|e| e.to_string())?;
            if out.log.total_cost > budget {
                return Err(format!(
                    "{:?} spent {} over budget {budget}",
                    cfg.variant, out.log.total_cost
                ));
            }
            Ok(out.log.final_accuracy().unwrap_or(0.0))
        };
        concat.push(final_acc(FedConfig {
            variant: Variant::Fedconcat,
            encoder_rounds: t_e,
            ..base.clone()
        })?);
        id.push(final_acc(FedConfig {
            variant: Variant::FedconcatId,
            encoder_rounds: t_e_id,
            ..base.clone()
        })?);
        avg.push(fa.log.final_accuracy().unwrap_or(0.0));
    }
    let (a, c, i) = (median(avg), median(concat), median(id));
    let detail = format!(
        "median accuracy fedavg {:.1}%, fedconcat {:.1}% (T_e {t_e}), fedconcat-id {:.1}% (T_e {t_e_id}); need +5 and +3 points",
        100.0 * a,
        100.0 * c,
        100.0 * i
    );
    check(c >= a + 0.05 && i >= a + 0.03, detail)
}

fn comm_formula() -> Outcome {
    let mut rng = rng_for(4, &[0xacc4]);
    for _ in 0..1000 {
        let w = rng.random_range(1..1_000_000u32) as f64;
        let c = rng.random_range(0.001..0.999);
        let n = rng.random_range(1..1000u32) as f64;
        let k = rng.random_range(1..50u32) as f64;
        let t_e = rng.random_range(0..500u32) as f64;
        let t_c = rng.random_range(0..500u32) as f64;
        let t = rng.random_range(0..500u32) as f64;
        let by_parts = 2.0 * w * n * t_e + k * w * n + 2.0 * c * k * w * n * t_c;
        let total = fedconcat_cost(w, c, n, k, t_e, t_c);
        if (total - by_parts).abs() > 1e-9 * by_parts.max(1.0) {
            return Err(format!("fedconcat_cost {total} vs {by_parts}"));
        }
        if fedavg_cost(w, n, t) != 2.0 * w * n * t {
            return Err("fedavg_cost mismatch".into());
        }
        if (fedconcat_id_cost(w, c, n, k, t_e, t_c) - total - 2.0 * w * n).abs()
            > 1e-9 * total.max(1.0)
        {
            return Err("fedconcat_id_cost mismatch".into());
        }
        let grow = [
            fedconcat_cost(w + 1.0, c, n, k, t_e, t_c),
            // c only enters through the classifier rounds
            if t_c > 0.0 {
                fedconcat_cost(w, c * 1.001, n, k, t_e, t_c)
            } else {
                f64::INFINITY
            },
            fedconcat_cost(w, c, n + 1.0, k, t_e, t_c),
            fedconcat_cost(w, c, n, k + 1.0, t_e, t_c),
            fedconcat_cost(w, c, n, k, t_e + 1.0, t_c),
            fedconcat_cost(w, c, n, k, t_e, t_c + 1.0),
        ];
        if grow.iter().any(|&g| g <= total) {
            return Err(format!(
                "not increasing at w={w} c={c} n={n} k={k} t_e={t_e} t_c={t_c}"
            ));
        }
    }
    let mlp = ModelParams::init(&[32, 64, 32, 10], &mut rng_for(0, &[])).unwrap();
    let c = classifier_fraction(&mlp).unwrap();
    let w = mlp.param_count() as f64;
    let budget = fedavg_cost(w, 40.0, 50.0);
    let parity = |t_c: usize, id: bool| {
        CommCostReport::new(&mlp, 40, 5, 0, t_c, id, 50)
            .unwrap()
            .parity_t_e()
    };
    for t_c in [10usize, 25, 50, 100] {
        let t_e = parity(t_c, false).ok_or(format!("T_c {t_c} infeasible"))? as f64;
        let tc = t_c as f64;
        if fedconcat_cost(w, c, 40.0, 5.0, t_e, tc) > budget
            || fedconcat_cost(w, c, 40.0, 5.0, t_e + 1.0, tc) <= budget
        {
            return Err(format!(
                "parity T_e {t_e} at T_c {t_c} is not the largest affordable value"
            ));
        }
    }
    let (p50, p50_id, p200) = (parity(50, false), parity(50, true), parity(200, false));
    check(
        p50 == Some(29) && p50_id == Some(28) && p200.is_none(),
        format!(
            "1000 tuples exact, monotone; w {w}, c {c:.4}; parity T_e at K=5 T=50: T_c=50 -> {p50:?} (id {p50_id:?}), T_c=200 -> {p200:?}"
        ),
    )
}

fn label_inference() -> Outcome {
    let cfg = FedConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let spec = BlobSpec {
            classes: 10,
            dim: 32,
            per_class: 500,
            spread: 0.8,
            seed,
        };
        let train = spec.generate().unwrap();
        let part = partition_classes(&train, 40, 2, seed).unwrap();
        let clients = build_clients(&train, &part).unwrap();
        let init = ModelParams::init(&cfg.layer_dims(32, 10), &mut rng_for(seed, &[7])).unwrap();
        let (mut matched, mut l1) = (0, 0.0);
        for c in &clients {
            let model = local_train(
                &init,
                &c.data,
                LocalWork::Epochs(10),
                &default_local(),
                None,
                c.id as u64,
            )
            .map_err(|e| e.to_string())?;
            let inferred = infer_label_distribution(&model, 10_000, 32, 99 + c.id as u64, c.id)
                .map_err(|e| e.to_string())?;
            let truth = label_distribution(c.data.labels(), 10, c.id).unwrap();
            matched += usize::from(inferred.top(2) == truth.support());
            l1 += inferred.l1_distance(&truth);
        }
        let mean_l1 = l1 / clients.len() as f64;
        ok &= matched * 10 >= clients.len() * 8 && mean_l1 <= 0.20;
        lines.push(format!(
            "seed {seed}: {matched}/40 supports, mean L1 {mean_l1:.3}"
        ));
    }
    check(
        ok,
        format!("{} (need >= 32/40 and L1 <= 0.20)", lines.join("; ")),
    )
}

fn random_points(n: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = rng_for(seed, &[0xacc6]);
    Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.random::<f64>()).collect())
}

fn partition_wcss(points: &Matrix, labels: &[usize], k: usize) -> Option<f64> {
    let d = points.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        (0..d).for_each(|j| sums[l][j] += points[(i, j)]);
    }
    if counts.contains(&0) {
        return None;
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        for j in 0..d {
            let diff = points[(i, j)] - sums[l][j] / counts[l] as f64;
            total += diff * diff;
        }
    }
    Some(total)
}

/// Lowest WCSS over every labelling of the points into `k` nonempty groups.
fn exhaustive(points: &Matrix, k: usize) -> f64 {
    let n = points.rows();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    // point 0 stays in group 0; count through the rest in base k
    loop {
        if let Some(w) = partition_wcss(points, &labels, k) {
            best = best.min(w);
        }
        let mut i = 1;
        while i < n && labels[i] == k - 1 {
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
        labels[i] += 1;
    }
}

fn clustering() -> Outcome {
    for inst in 0..100u64 {
        let n = 10 + (inst as usize % 30);
        let k = 1 + (inst as usize % 6);
        let a = kmeans(&random_points(n, 10, inst), k, inst).map_err(|e| e.to_string())?;
        if a.history.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            return Err(format!("instance {inst}: objective rose {:?}", a.history));
        }
    }
    let mut optimal = 0;
    for seed in 0..5u64 {
        for (n, k) in [(8, 2), (10, 2), (10, 3)] {
            let pts = random_points(n, 2, 100 + seed);
            let got = kmeans(&pts, k, seed).map_err(|e| e.to_string())?.objective;
            let best = exhaustive(&pts, k);
            if (got - best).abs() > 1e-9 {
                return Err(format!("seed {seed} N={n} K={k}: {got} vs optimum {best}"));
            }
            optimal += 1;
        }
    }
    for inst in 0..100u64 {
        let n = 10 + (inst as usize % 40);
        let k = 2 + (inst as usize % 5);
        let a = kmeans_balanced(&random_points(n, 6, 1000 + inst), k, 1.2, inst)
            .map_err(|e| e.to_string())?;
        let cap = (1.2 * n as f64 / k as f64 - 1e-9).ceil() as usize;
        if a.sizes().iter().any(|&s| s > cap) {
            return Err(format!(
                "instance {inst}: sizes {:?} exceed cap {cap}",
                a.sizes()
            ));
        }
    }
    Ok(format!("Lloyd monotone on 100 instances, {optimal}/15 small instances optimal, balanced cap held on 100"))
}

fn laplace() -> Outcome {
    let mech = LaplaceMechanism::for_label_distribution(2.5).map_err(|e| e.to_string())?;
    let mut rng = rng_for(7, &[0xacc7]);
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| sample_laplace(mech.scale(), &mut rng))
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    // for Laplace(0, b) the mean absolute value is b
    let scale = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
    let mut on_simplex = true;
    for seed in 0..1000u64 {
        let labels: Vec<usize> = (0..20).map(|i| (i * 7 + seed as usize) % 4).collect();
        let d = label_distribution(&labels, 10, seed as usize).unwrap();
        let noisy = laplace_noise(&d, 2.5, seed).map_err(|e| e.to_string())?;
        on_simplex &= noisy.probs.iter().all(|&p| p >= 0.0)
            && (noisy.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    }
    check(
        mean.abs() <= 0.02 && (scale - 0.4).abs() <= 0.04 && on_simplex,
        format!("mean {mean:+.4}, scale {scale:.4} (target 0.4), simplex kept on 1000 noised vectors: {on_simplex}"),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn logit_sum() -> Outcome {
    let models: Vec<ModelParams> = (0..5)
        .map(|k| ModelParams::init(&[32, 64, 32, 10], &mut rng_for(k, &[0xacc8])).unwrap())
        .collect();
    let encoder =
        concat_encoders(&models.iter().map(ModelParams::encoder).collect::<Vec<_>>()).unwrap();
    let classifiers: Vec<_> = models.iter().map(|m| m.classifier().clone()).collect();
    let model = ConcatModel::new(encoder, classifier_init(&classifiers).unwrap()).unwrap();
    let probes = random_points(100, 32, 8);
    let got = model.logits(&probes).unwrap();
    let mut want = Matrix::zeros(100, 10);
    for m in &models {
        let l = m.logits(&probes).unwrap();
        want.as_mut_slice()
            .iter_mut()
            .zip(l.as_slice())
            .for_each(|(a, b)| *a += b);
    }
    let worst = max_abs_diff(got.as_slice(), want.as_slice());
    check(
        worst <= 1e-9,
        format!("max |difference| {worst:.2e} on 100 probes, 5 clusters (limit 1e-9)"),
    )
}

fn small_world(seed: u64) -> (Vec<ClientState>, Dataset) {
    let (train, test) = BlobSpec {
        classes: 6,
        dim: 12,
        per_class: 80,
        spread: 0.3,
        seed,
    }
    .generate_with_test(20)
    .unwrap();
    let part = partition_classes(&train, 12, 2, seed).unwrap();
    (build_clients(&train, &part).unwrap(), test)
}

fn cache_equivalence() -> Outcome {
    let (clients, test) = small_world(9);
    let cfg = FedConfig {
        variant: Variant::Fedconcat,
        encoder_rounds: 3,
        classifier_rounds: 20,
        local_epochs: 2,
        clusters: 3,
        hidden: vec![16, 8],
        participation: 0.5,
        ..FedConfig::default()
    };
    let out = run_fedconcat(&clients, &test, &cfg, &Sequential).map_err(|e| e.to_string())?;
    let encoders: Vec<_> = out
        .cluster_models
        .iter()
        .map(ModelParams::encoder)
        .collect();
    let bitwise = out.model.encoder.members() == encoders.as_slice();
    let global = concat_encoders(&encoders).unwrap();
    let init = classifier_init(
        &out.cluster_models
            .iter()
            .map(|m| m.classifier().clone())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let before = global.clone();
    let units = init.param_count() as f64;
    let run = |path| {
        post_train(
            &global,
            &init,
            &clients,
            &test,
            &cfg,
            path,
            units,
            &mut MetricsLog::default(),
            &Sequential,
        )
    };
    let cached = run(FeaturePath::Cached).map_err(|e| e.to_string())?;
    let recomputed = run(FeaturePath::Recompute).map_err(|e| e.to_string())?;
    let unchanged = global.members() == before.members();
    let worst = max_abs_diff(
        cached.classifier.weights.as_slice(),
        recomputed.classifier.weights.as_slice(),
    )
    .max(max_abs_diff(
        &cached.classifier.bias,
        &recomputed.classifier.bias,
    ));
    let same_as_pipeline = cached.classifier == out.model.classifier;
    check(
        worst <= 1e-9 && bitwise && unchanged && same_as_pipeline,
        format!(
            "cached vs recompute max |difference| {worst:.2e}; encoders bitwise unchanged: {}; cached path matches pipeline: {same_as_pipeline}",
            bitwise && unchanged
        ),
    )
}

fn metrics_without_wall_time(dir: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(dir.join("metrics.json")).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .filter(|l| !l.contains("\"wall_time_secs\""))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/fedconcat.toml");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out = tmp.path().join(format!("threads-{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_fedlab"))
            .args(["--threads", threads, "run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(metrics_without_wall_time(&out)?);
    }
    check(
        outputs[0] == outputs[1],
        format!(
            "configs/fedconcat.toml metrics.json identical for --threads 1 and 2 ({} bytes)",
            outputs[0].len()
        ),
    )
}

fn probe_ordering() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let (train, test) = disjoint_pair(seed);
        let r = exchange_experiment(
            &train,
            &test,
            &[32, 64, 32, 4],
            &default_local(),
            50,
            &ProbeConfig::default(),
            seed,
        )
        .map_err(|e| e.to_string())?;
        let single = r.single[0].loss.min(r.single[1].loss);
        ok &= (0..2).all(|i| r.own[i].loss < r.exchanged[i].loss) && r.concat.loss <= single + 0.05;
        lines.push(format!(
            "seed {seed}: own {:.3}/{:.3} < exchanged {:.3}/{:.3}, concat {:.3} vs single {:.3}",
            r.own[0].loss,
            r.own[1].loss,
            r.exchanged[0].loss,
            r.exchanged[1].loss,
            r.concat.loss,
            single
        ));
    }
    check(ok, lines.join("; "))
}
