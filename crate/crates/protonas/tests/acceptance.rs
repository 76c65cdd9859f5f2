//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line even when an earlier one fails.

#[path = "../../core/tests/common/mod.rs"]
mod fixtures;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use protonas::cli::{self, EXIT_OK};
use protonas::formats::{read_front, read_summary, read_trial_log};
use protonas_core::analysis::kendall_tau_b;
use protonas_core::archspace::{
    apply_static_pruning, decode, sample, Dims, FeatureShape, LayerKind, LayerSpec, Node,
    TemplateLibrary, IMAGE_POOL, TIME_SERIES_POOL,
};
use protonas_core::costmodel::{
    count_flops, estimate_ram, estimate_rom, QuantScheme, TargetProfile,
};
use protonas_core::hvss::{
    exhaustive_subset, hv_monte_carlo, hypervolume, normalize, normalized_reference, repair,
    select_subset, HssConfig, SubsetGene,
};
use protonas_core::proxies::{
    evaluate_ensemble, meco, naswot_from_codes, snip, ProxyConfig, NON_FINITE_SCORE,
};
use protonas_core::rng::seeded;
use protonas_core::search::{
    constrained_dominates, run_random_search, run_search, EvalContext, SearchConfig,
};
use protonas_core::tensorcore::{init_params, ParamSet, Tensor};
use protonas_core::{ArchitectureGraph, SearchSpaceDef, TaskShape};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("hypervolume exactness", hv_exactness),
        ("HSS optimality at small scale", hss_optimality),
        ("repair contract", repair_contract),
        ("gradient correctness", gradient_correctness),
        ("cost-model golden values", cost_goldens),
        ("search soundness", search_soundness),
        ("determinism across --jobs", determinism),
        ("protocol shape", protocol_shape),
        ("Kendall tau-b", kendall),
        ("proxy sanity", proxy_sanity),
        ("search effectiveness", search_effectiveness),
    ];
    let run_dir = tempfile::tempdir().expect("temp dir");
    RUN_DIR.set(run_dir.path().to_path_buf()).unwrap();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
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

static RUN_DIR: std::sync::OnceLock<std::path::PathBuf> = std::sync::OnceLock::new();

fn simplex_front<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn hv_exactness() -> Outcome {
    let one = hypervolume(&[[0.0, 0.0]], &[1.0, 1.0]).unwrap();
    let two = hypervolume(&[[0.0, 0.5], [0.5, 0.0]], &[1.0, 1.0]).unwrap();
    ensure!((one - 1.0).abs() <= 1e-12, "single point gave {one}");
    ensure!((two - 0.75).abs() <= 1e-12, "two points gave {two}");
    let mut rng = seeded(101);
    let r = vec![1.1; 5];
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=20);
        let pts = simplex_front(&mut rng, n, 5);
        let exact = hypervolume(&pts, &r).unwrap();
        let mc = hv_monte_carlo(&pts, &r, 1_000_000, &mut rng).unwrap();
        worst = worst.max((exact - mc).abs() / exact);
    }
    ensure!(worst <= 0.01, "worst relative error {worst:.4}");
    Ok(format!(
        "analytic cases exact; 50 5-D fronts, worst MC relative error {:.3}%",
        worst * 100.0
    ))
}

fn hss_optimality() -> Outcome {
    let mut rng = seeded(202);
    let r = [1.1; 5];
    for i in 0..24 {
        let n = rng.random_range(6..=12);
        let k = rng.random_range(1..=5);
        let pts = simplex_front(&mut rng, n, 5);
        let best = exhaustive_subset(&pts, &r, k).unwrap();
        let want = hypervolume(
            &best.iter().map(|&j| pts[j].clone()).collect::<Vec<_>>(),
            &r,
        )
        .unwrap();
        let cfg = HssConfig {
            seed: i,
            ..HssConfig::default()
        };
        let got = select_subset(&pts, &r, k, &cfg).unwrap();
        ensure!(
            got.indices.len() == k,
            "instance {i}: {} indices for k = {k}",
            got.indices.len()
        );
        ensure!(
            (got.hypervolume - want).abs() <= 1e-9,
            "instance {i} (n={n}, k={k}): {} < {want}",
            got.hypervolume
        );
    }
    Ok("24 instances with |P| <= 12, k in 1..=5, d = 5 match the exhaustive optimum".into())
}

/// Inclusion–exclusion hypervolume, independent of the library's recursion.
fn hv_oracle(points: &[&Vec<f64>], reference: &[f64]) -> f64 {
    let mut total = 0.0;
    for mask in 1u32..(1 << points.len()) {
        let mut corner = vec![f64::NEG_INFINITY; reference.len()];
        for (i, p) in points.iter().enumerate() {
            if mask >> i & 1 == 1 {
                corner
                    .iter_mut()
                    .zip(p.iter())
                    .for_each(|(c, v)| *c = c.max(*v));
            }
        }
        let vol: f64 = corner
            .iter()
            .zip(reference)
            .map(|(c, r)| (r - c).max(0.0))
            .product();
        total += if mask.count_ones() % 2 == 1 {
            vol
        } else {
            -vol
        };
    }
    total
}

fn repair_contract() -> Outcome {
    let mut rng = seeded(303);
    let r = [1.1; 3];
    let (mut under, mut over) = (0, 0);
    for t in 0..1000 {
        let n = rng.random_range(3..=10);
        let k = rng.random_range(1..n);
        let pts: Vec<Vec<f64>> = if rng.random_bool(0.5) {
            simplex_front(&mut rng, n, 3)
        } else {
            (0..n)
                .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
                .collect()
        };
        let target = if t % 2 == 0 {
            rng.random_range(0..k)
        } else {
            rng.random_range(k + 1..=n)
        };
        let mut bits: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            bits.swap(i, rng.random_range(0..=i));
        }
        bits.truncate(target);
        bits.sort_unstable();
        let gene = SubsetGene::from_indices(n, &bits);
        let fixed = repair(&gene, k, &pts, &r).unwrap();
        ensure!(
            fixed.count() == k,
            "trial {t}: {} bits after repair, want {k}",
            fixed.count()
        );
        if target < k {
            under += 1;
            ensure!(
                bits.iter().all(|&i| fixed.get(i)),
                "trial {t}: under-full repair dropped a bit"
            );
            continue;
        }
        over += 1;
        // Keep the k largest exclusive contributions (ties to lower indices).
        let chosen: Vec<&Vec<f64>> = bits.iter().map(|&i| &pts[i]).collect();
        let full = hv_oracle(&chosen, &r);
        let mut contrib: Vec<(f64, usize)> = bits
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let rest: Vec<&Vec<f64>> = chosen
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != pos)
                    .map(|(_, p)| *p)
                    .collect();
                (full - hv_oracle(&rest, &r), i)
            })
            .collect();
        contrib.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let kept: Vec<&Vec<f64>> = contrib[..k].iter().map(|&(_, i)| &pts[i]).collect();
        let baseline = hv_oracle(&kept, &r);
        let repaired: Vec<&Vec<f64>> = fixed.indices().into_iter().map(|i| &pts[i]).collect();
        let got = hv_oracle(&repaired, &r);
        ensure!(
            fixed.indices().iter().all(|i| bits.contains(i)),
            "trial {t}: over-full repair added a bit"
        );
        ensure!(
            got >= baseline - 1e-12,
            "trial {t}: repaired HV {got} < oracle {baseline}"
        );
    }
    Ok(format!("{under} under-full and {over} over-full genes repaired to exactly k bits, never below the oracle"))
}

fn gradient_correctness() -> Outcome {
    let mut rng = seeded(404);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..10 {
        let g = fixtures::random_small_graph(&mut rng);
        let params = ParamSet::zeros(&g).count();
        ensure!(params <= 2000, "graph {i} has {params} parameters");
        let p = init_params(&g, &mut rng);
        let (x, y) = fixtures::random_batch(&g, 2, &mut rng);
        let rep = fixtures::finite_difference_check(&g, &p, &x, &y, 1e-5);
        ensure!(
            rep.checked > 0,
            "graph {i}: every parameter straddled a kink"
        );
        worst = worst.max(rep.max_rel_error);
        checked += rep.checked;
    }
    ensure!(worst <= 1e-4, "max relative error {worst:e}");
    Ok(format!(
        "10 graphs, {checked} parameters, max relative error {worst:.2e}"
    ))
}

fn plain_graph(input: FeatureShape, nodes: Vec<Node>, classes: usize) -> ArchitectureGraph {
    ArchitectureGraph {
        template_id: "golden".into(),
        dims: Dims::Two,
        input,
        num_classes: classes,
        nodes,
    }
}

fn cost_goldens() -> Outcome {
    let shape = |c, h, w| FeatureShape {
        channels: c,
        height: h,
        width: w,
    };
    let conv = |bias| {
        plain_graph(
            shape(3, 32, 32),
            vec![Node::new(
                LayerSpec::conv(3, 8, 3, 1).with_bias(bias),
                vec![],
            )],
            8,
        )
    };
    let flops = count_flops(&conv(false));
    ensure!(flops == 442_368, "conv FLOPs {flops}");
    let rom = estimate_rom(&conv(true), &QuantScheme::default());
    ensure!(rom == 312, "conv ROM {rom}");

    // input 192 -> conv 256 -> relu 256 -> gap 4 -> linear 2.
    // Peaks: 192+256, 256+256, 256+4, 4+2.
    let chain = plain_graph(
        shape(3, 8, 8),
        vec![
            Node::new(LayerSpec::conv(3, 4, 3, 1), vec![]),
            Node::new(LayerSpec::elementwise(LayerKind::Relu, 4), vec![0]),
            Node::new(LayerSpec::elementwise(LayerKind::GlobalAvgPool, 4), vec![1]),
            Node::new(LayerSpec::linear(4, 2), vec![2]),
        ],
        2,
    );
    let chain_ram = estimate_ram(&chain);
    ensure!(chain_ram == 512, "chain RAM {chain_ram}");

    // input 32 -> s 64 -> relu 64 -> conv 64 -> add(conv, s) 64 -> gap 4 -> linear 2.
    // The skip buffer stays live until the add: 64 (s) + 64 (relu) + 64 (conv).
    let diamond = plain_graph(
        shape(2, 4, 4),
        vec![
            Node::new(LayerSpec::conv(2, 4, 1, 1), vec![]),
            Node::new(LayerSpec::elementwise(LayerKind::Relu, 4), vec![0]),
            Node::new(LayerSpec::conv(4, 4, 3, 1), vec![1]),
            Node::new(LayerSpec::elementwise(LayerKind::Add, 4), vec![2, 0]),
            Node::new(LayerSpec::elementwise(LayerKind::GlobalAvgPool, 4), vec![3]),
            Node::new(LayerSpec::linear(4, 2), vec![4]),
        ],
        2,
    );
    let diamond_ram = estimate_ram(&diamond);
    ensure!(diamond_ram == 192, "diamond RAM {diamond_ram}");
    Ok(format!("{flops} FLOPs, {rom} B ROM, liveness peaks {chain_ram} B (chain) and {diamond_ram} B (diamond)"))
}

/// The 500-trial time-series configuration shared by criteria 6–8.
const RUN_CONFIG: &str = r#"seed = 2024
[search]
trials = 500
population_size = 50
[task]
kind = "time-series"
channels = 3
width = 128
classes = 6
"#;

fn run_dir() -> &'static Path {
    RUN_DIR.get().unwrap()
}

fn cli_run(args: &[&str]) -> i32 {
    let mut full = vec!["protonas"];
    full.extend_from_slice(args);
    cli::run(full, None)
}

/// explore + select into `<tmp>/run`; returns the config path.
fn pipeline(jobs: &str) -> Result<(), String> {
    let cfg = run_dir().join("run.toml");
    std::fs::write(&cfg, RUN_CONFIG).map_err(|e| e.to_string())?;
    let out = run_dir().join("run");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    ensure!(
        cli_run(&["explore", "--config", c, "--out", o, "--jobs", jobs]) == EXIT_OK,
        "explore failed"
    );
    ensure!(cli_run(&["select", "--out", o]) == EXIT_OK, "select failed");
    Ok(())
}

fn search_soundness() -> Outcome {
    pipeline("1")?;
    let out = run_dir().join("run");
    let log = read_trial_log(&out.join("trials.jsonl")).map_err(|e| e.to_string())?;
    ensure!(log.len() == 500, "trial log has {} entries", log.len());
    let front = read_front(&out.join("pareto.csv")).map_err(|e| e.to_string())?;
    ensure!(!front.is_empty(), "empty Pareto front");
    let profile = TargetProfile::imxrt1062_like();
    for row in &front {
        let rec = &log[row.trial_index];
        let c = &rec.costs;
        ensure!(
            rec.is_archivable()
                && c.ram_bytes <= profile.ram_max
                && c.rom_bytes <= profile.rom_max
                && c.flops <= profile.flops_max,
            "archived trial {} violates the constraints",
            row.trial_index
        );
        if let Some(other) = log.iter().find(|o| constrained_dominates(o, rec)) {
            return Err(format!(
                "trial {} is dominated by trial {}",
                row.trial_index, other.trial_index
            ));
        }
    }
    let feasible = log.iter().filter(|r| r.is_archivable()).count();
    Ok(format!(
        "500 logged, {feasible} feasible, {} archived, none violating or dominated",
        front.len()
    ))
}

fn determinism() -> Outcome {
    let out = run_dir().join("run");
    let files = [
        "trials.jsonl",
        "pareto.csv",
        "selection.csv",
        "summary.json",
        "config.toml",
    ];
    let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| format!("{f}: {e}"));
    let first: Vec<Vec<u8>> = files.iter().map(|f| read(f)).collect::<Result<_, _>>()?;
    pipeline("2")?;
    for (f, before) in files.iter().zip(&first) {
        ensure!(
            &read(f)? == before,
            "{f} differs between --jobs 1 and --jobs 2"
        );
    }
    Ok(format!(
        "{} artifacts byte-identical for --jobs 1 and --jobs 2",
        files.len()
    ))
}

fn protocol_shape() -> Outcome {
    let s = read_summary(&run_dir().join("run").join("summary.json")).map_err(|e| e.to_string())?;
    let p = &s.protocol;
    ensure!(
        p.trials == 500 && s.trials_logged == 500,
        "trials {} / logged {}",
        p.trials,
        s.trials_logged
    );
    ensure!(p.genes == 14, "genes {}", p.genes);
    ensure!(p.objectives.len() == 5, "objectives {:?}", p.objectives);
    ensure!(p.selection_k == 5, "k {}", p.selection_k);
    ensure!(
        p.hss_population == 2000,
        "HSS population {}",
        p.hss_population
    );
    ensure!(
        p.hss_mutation_rate == 0.3,
        "mutation rate {}",
        p.hss_mutation_rate
    );
    ensure!(
        p.hss_max_generations == 10_000,
        "generations {}",
        p.hss_max_generations
    );
    let sel = s.selection.as_ref().ok_or("summary has no selection")?;
    ensure!(
        sel.selected == 5 && sel.trial_indices.len() == 5,
        "selected {}",
        sel.selected
    );
    ensure!(
        sel.generations <= 10_000,
        "ran {} generations",
        sel.generations
    );
    Ok(format!(
        "summary echoes 500 trials, 14 genes, 5 objectives, top-5 HSS (pop 2000, mutation 0.3, {} of <= 10000 generations)",
        sel.generations
    ))
}

fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (a, b) = ((x[i] - x[j]).signum(), (y[i] - y[j]).signum());
            let (a, b) = (
                if x[i] == x[j] { 0.0 } else { a },
                if y[i] == y[j] { 0.0 } else { b },
            );
            match (a == 0.0, b == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1.0,
                (false, true) => ty += 1.0,
                _ if a == b => c += 1.0,
                _ => d += 1.0,
            }
        }
    }
    (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
}

fn kendall() -> Outcome {
    let mut rng = seeded(909);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    while compared < 1000 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(2..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let want = brute_tau(&x, &y);
        if !want.is_finite() {
            ensure!(kendall_tau_b(&x, &y).is_err(), "degenerate series accepted");
            continue;
        }
        let got = kendall_tau_b(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        compared += 1;
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 41) as f64 + 0.5).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    ensure!(kendall_tau_b(&x, &x).unwrap() == 1.0, "tau(x, x) != 1");
    ensure!(kendall_tau_b(&x, &neg).unwrap() == -1.0, "tau(x, -x) != -1");
    Ok(format!(
        "1000 tied series within {worst:.1e} of pair counting; tau(x,x) = 1, tau(x,-x) = -1"
    ))
}

fn proxy_sanity() -> Outcome {
    // Two tapped 1x1 identity convs over orthogonal channels.
    let tapped = |inputs| {
        let mut n = Node::new(LayerSpec::conv(2, 2, 1, 1), inputs);
        n.tap = true;
        n
    };
    let nodes = vec![
        tapped(vec![]),
        tapped(vec![0]),
        Node::new(LayerSpec::elementwise(LayerKind::GlobalAvgPool, 2), vec![1]),
        Node::new(LayerSpec::linear(2, 2), vec![2]),
    ];
    let g = plain_graph(
        FeatureShape {
            channels: 2,
            height: 2,
            width: 2,
        },
        nodes,
        2,
    );
    let mut p = ParamSet::zeros(&g);
    for id in [0, 1] {
        let w = p.layers[id].as_mut().unwrap().weight.data_mut();
        w[0] = 1.0;
        w[3] = 1.0;
    }
    let x = Tensor::from_vec(
        &[1, 2, 2, 2],
        vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
    )
    .unwrap();
    let m = meco(&g, &p, &x, 1e-6).map_err(|e| e.to_string())?;
    ensure!((m - 2.0).abs() <= 1e-9, "MeCo identity case {m}");

    let codes = vec![
        vec![true, true, false, false],
        vec![false, false, true, true],
    ];
    let nw = naswot_from_codes(&codes, 1e-6);
    ensure!(
        (nw - 2.0 * 4f64.ln()).abs() <= 1e-6,
        "NASWOT orthogonal case {nw}"
    );

    let mut rng = seeded(1010);
    let small = fixtures::random_small_graph(&mut rng);
    let (bx, by) = fixtures::random_batch(&small, 4, &mut rng);
    let s = snip(&small, &ParamSet::zeros(&small), &bx, &by).map_err(|e| e.to_string())?;
    ensure!(s == 0.0, "SNIP with zero weights {s}");

    let lib = TemplateLibrary::builtin();
    let pools = [
        (
            SearchSpaceDef::standard(lib.pool(&IMAGE_POOL).unwrap()),
            TaskShape::image(10),
        ),
        (
            SearchSpaceDef::standard(lib.pool(&TIME_SERIES_POOL).unwrap()),
            TaskShape::time_series(3, 128, 6),
        ),
    ];
    let cfg = ProxyConfig::default();
    for (space, task) in &pools {
        for i in 0..50 {
            let x = sample(&mut rng, space);
            let g = apply_static_pruning(
                &decode(&x, space, task).map_err(|e| e.to_string())?,
                &x.pruning_sparsity,
            );
            let params = init_params(&g, &mut rng);
            let scores =
                evaluate_ensemble(&g, &params, &cfg, &mut rng).map_err(|e| e.to_string())?;
            let all = scores.to_array();
            ensure!(
                all.iter().all(|v| v.is_finite() && *v != NON_FINITE_SCORE),
                "candidate {i} ({}): non-finite proxy {scores:?}",
                g.template_id
            );
        }
    }
    Ok(format!("MeCo {m}, NASWOT {nw:.6}, SNIP 0; 100 decoded candidates (50 image, 50 time-series) all finite"))
}

fn search_effectiveness() -> Outcome {
    let space =
        SearchSpaceDef::standard(TemplateLibrary::builtin().pool(&TIME_SERIES_POOL).unwrap());
    let ctx = EvalContext {
        space,
        task: TaskShape::time_series(3, 128, 6),
        profile: TargetProfile::imxrt1062_like(),
        proxy: ProxyConfig::default(),
    };
    let eval = protonas::ParallelEvaluator::new(0).map_err(|e| e.to_string())?;
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let cfg = SearchConfig::new(ctx.clone(), seed);
        let nsga = run_search(&cfg, &eval, |_| {})
            .map_err(|e| e.to_string())?
            .pareto_objectives();
        let random = run_random_search(&cfg, &eval, |_| {})
            .map_err(|e| e.to_string())?
            .pareto_objectives();
        // Joint normalization so both fronts share one scale.
        let joint = normalize(&nsga.iter().chain(&random).collect::<Vec<_>>());
        let r = normalized_reference(5);
        let hv_n = hypervolume(&joint[..nsga.len()], &r).unwrap();
        let hv_r = hypervolume(&joint[nsga.len()..], &r).unwrap();
        if hv_n >= hv_r {
            wins += 1;
        }
        lines.push(format!("{seed}:{hv_n:.4}/{hv_r:.4}"));
    }
    ensure!(
        wins >= 8,
        "NSGA-II >= random on {wins}/10 seeds [{}]",
        lines.join(" ")
    );
    Ok(format!(
        "NSGA-II >= random on {wins}/10 seeds (nsga/random HV: {})",
        lines.join(" ")
    ))
}
