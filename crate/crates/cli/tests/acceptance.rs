//! Acceptance run: every criterion at its stated tolerance, one line each.
//!
//! Built with `harness = false`; exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shaplit_core::bounds::exact::{to_f64, DiscreteToy, Q};
use shaplit_core::bounds::global_test;
use shaplit_core::experiments::{
    run_boolean, run_power_study, run_quadrant, BooleanConfig, PowerConfig, QuadrantConfig,
};
use shaplit_core::games::{
    check_axioms, exact_shapley, exact_shapley_all, min_weight_exact, permutation_shapley,
    shapley_weight, Coalition, CooperativeGame, FnGame, TabularGame,
};
use shaplit_core::masking::{make_gaussian_conditional, Masker, PatchGeometry};
use shaplit_core::predictors::{gradient_check, make_cnn, make_fcn, FnPredictor};
use shaplit_core::testing::{shaplit, ShaplitConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn shapley_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let game = TabularGame::random(n, &mut rng).map_err(|e| e.to_string())?;
        for j in 0..n {
            let exact = exact_shapley(&game, j).map_err(|e| e.to_string())?.phi;
            let perm = permutation_shapley(&game, j).map_err(|e| e.to_string())?;
            worst = worst.max((exact - perm).abs());
        }
    }
    // additivity on a sum of games, nullity and symmetry on a constructed game
    let a = TabularGame::random(5, &mut rng).map_err(|e| e.to_string())?;
    let b = TabularGame::random(5, &mut rng).map_err(|e| e.to_string())?;
    let sum = TabularGame::new(
        5,
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x + y)
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let mut additive = true;
    for j in 0..5 {
        let lhs = exact_shapley(&sum, j).unwrap().phi;
        let rhs = exact_shapley(&a, j).unwrap().phi + exact_shapley(&b, j).unwrap().phi;
        additive &= (lhs - rhs).abs() <= 1e-12;
    }
    // players 0 and 1 symmetric, player 4 null
    let built = FnGame::new(5, |c: Coalition| {
        let pair = f64::from(u8::from(c.contains(0))) + f64::from(u8::from(c.contains(1)));
        pair * pair + 0.3 * f64::from(u8::from(c.contains(2) && c.contains(3)))
    });
    let all = exact_shapley_all(&built).map_err(|e| e.to_string())?;
    let axioms = check_axioms(&built, &all).map_err(|e| e.to_string())?;
    let efficient = (all.iter().map(|r| r.phi).sum::<f64>()
        - (built.value(Coalition::full(5).unwrap()).unwrap()
            - built.value(Coalition::empty(5).unwrap()).unwrap()))
    .abs()
        <= 1e-12;
    let detected = !axioms.nullity.is_empty() && !axioms.symmetry.is_empty();
    check(
        worst <= 1e-10 && additive && efficient && axioms.all_pass() && detected,
        format!("max |exact - permutation| = {worst:.2e}, additivity {additive}, efficiency {efficient}, nullity/symmetry {}", axioms.all_pass() && detected),
    )
}

/// Compensated sum; plain accumulation over 2^19 terms drifts past 1e-12.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn weight_calculus() -> Outcome {
    let mut worst = 0.0f64;
    let mut min_ok = true;
    for n in 1..=20usize {
        let total = neumaier(
            Coalition::excluding(n, 0)
                .unwrap()
                .map(|c| shapley_weight(n, c.len()).unwrap()),
        );
        worst = worst.max((total - 1.0).abs());
        // enumeration: the largest denominator over all sizes
        let mut largest = 0u128;
        for s in 0..n {
            let mut num = 1u128;
            let mut den = 1u128;
            for i in 0..s {
                num *= (n - 1 - i) as u128;
                den *= (i + 1) as u128;
            }
            largest = largest.max(n as u128 * (num / den));
        }
        min_ok &= min_weight_exact(n).unwrap().denom == largest;
    }
    check(
        worst <= 1e-12 && min_ok,
        format!("max |sum w - 1| = {worst:.2e} for n <= 20, min_weight exact: {min_ok}"),
    )
}

fn shaplit_validity() -> Outcome {
    const N: usize = 2000;
    // f ignores feature 0 entirely
    let f = FnPredictor::new(3, |x: &[f64]| 1.0 / (1.0 + (-x[1] - 0.5 * x[2]).exp()));
    let cov = vec![
        vec![1.0, 0.5, 0.0],
        vec![0.5, 1.0, 0.3],
        vec![0.0, 0.3, 1.0],
    ];
    let sampler = make_gaussian_conditional(vec![0.0; 3], cov).map_err(|e| e.to_string())?;
    let masker = Masker::singletons(Arc::new(sampler)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coalitions: Vec<Coalition> = Coalition::excluding(3, 0).unwrap().collect();
    let mut ps = Vec::with_capacity(N);
    for run in 0..N {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = coalitions[run % coalitions.len()];
        let out = shaplit(
            &f,
            &x,
            0,
            c,
            &masker,
            &ShaplitConfig::new(99, 1, run as u64),
        )
        .map_err(|e| e.to_string())?;
        ps.push(out.p_hat);
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.01, 0.05, 0.1, 0.25] {
        let rate = ps.iter().filter(|&&p| p <= alpha).count() as f64 / N as f64;
        let limit = alpha + 3.0 * (alpha * (1.0 - alpha) / N as f64).sqrt();
        ok &= rate <= limit;
        parts.push(format!("alpha {alpha}: {rate:.4} <= {limit:.4}"));
    }
    check(ok, parts.join(", "))
}

fn toys() -> Vec<DiscreteToy> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut toys: Vec<DiscreteToy> = (0..24)
        .map(|_| DiscreteToy::random(3, &mut rng).unwrap())
        .collect();
    // f = x_0 with X_0 = 0 almost surely: phi_0 = 1 at x = (1, ., .)
    let half = Q::new(1, 2);
    let table = (0..8).map(|b| Q::from_integer(b & 1)).collect();
    toys.push(DiscreteToy::new(vec![Q::from_integer(0), half, half], table).unwrap());
    toys
}

fn exact_p_bound() -> Outcome {
    let one = Q::from_integer(1);
    let mut checked = 0;
    let mut violations = 0;
    for toy in toys() {
        for x in 0..8u64 {
            for j in 0..3 {
                for c in Coalition::excluding(3, j).unwrap() {
                    let (gamma, p) = toy.summand(x, j, c).unwrap();
                    checked += 1;
                    violations += usize::from(p > one - gamma);
                }
            }
        }
    }
    check(
        violations == 0,
        format!("{checked} summands on 25 toys, {violations} with p > 1 - gamma"),
    )
}

fn weighted_p_chain() -> Outcome {
    let one = Q::from_integer(1);
    let (mut chain_bad, mut rule_bad, mut rejections, mut features) = (0, 0, 0, 0);
    for toy in toys() {
        for x in 0..8u64 {
            for j in 0..3 {
                let records = toy.records(x, j).unwrap();
                let phi = DiscreteToy::phi(&records);
                chain_bad += usize::from(DiscreteToy::weighted_p(&records) > one - phi);
                let triples: Vec<_> = records
                    .iter()
                    .map(|r| (r.coalition, to_f64(r.weight), to_f64(r.p)))
                    .collect();
                let g = global_test(j, to_f64(phi), &triples, 0.05).unwrap();
                rule_bad += usize::from(g.reject != (phi >= Q::new(39, 40)));
                rejections += usize::from(g.reject);
                features += 1;
            }
        }
    }
    check(
        chain_bad == 0 && rule_bad == 0 && rejections > 0,
        format!("{features} features: chain violations {chain_bad}, rule mismatches {rule_bad}, rejections {rejections}"),
    )
}

fn boolean_experiment() -> Outcome {
    let r = run_boolean(&BooleanConfig::new(1)).map_err(|e| e.to_string())?;
    let phi_ok = r.features.iter().all(|f| (0.45..=0.55).contains(&f.phi));
    let rej_ok = r
        .features
        .iter()
        .all(|f| (f.rejection_fraction - 0.5).abs() <= 0.08);
    let tests_ok = r.features.iter().all(|f| f.records.len() == 512);
    let (lo, hi) = r.features.iter().fold((f64::MAX, f64::MIN), |(l, h), f| {
        (l.min(f.phi), h.max(f.phi))
    });
    let (rlo, rhi) = r.features.iter().fold((f64::MAX, f64::MIN), |(l, h), f| {
        (l.min(f.rejection_fraction), h.max(f.rejection_fraction))
    });
    check(
        phi_ok && rej_ok && tests_ok && r.all_within_bound && r.features.len() == 20,
        format!(
            "{} features: phi in [{lo:.3}, {hi:.3}], rejection fraction in [{rlo:.3}, {rhi:.3}], soft bound {}",
            r.features.len(),
            r.all_within_bound
        ),
    )
}

fn gradient() -> Outcome {
    let geometry = PatchGeometry::new(3, 2, 2).unwrap();
    let dim = geometry.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for point in 0..10u64 {
        let rows: Vec<f64> = (0..8 * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let labels: Vec<f64> = (0..8)
            .map(|_| f64::from(u8::from(rng.random::<bool>())))
            .collect();
        let cnn = make_cnn(geometry, point);
        let fcn = make_fcn(dim, 8, point).map_err(|e| e.to_string())?;
        worst = worst.max(gradient_check(&cnn, &rows, &labels, 1e-5).map_err(|e| e.to_string())?);
        worst = worst.max(gradient_check(&fcn, &rows, &labels, 1e-5).map_err(|e| e.to_string())?);
    }
    check(
        worst <= 1e-5,
        format!("max relative error {worst:.2e} over 10 points per model"),
    )
}

fn power_study() -> Outcome {
    let r = run_power_study(&PowerConfig::new(8)).map_err(|e| e.to_string())?;
    let ok = r.monotonicity.len() == 2
        && r.monotonicity
            .iter()
            .all(|m| m.non_decreasing_in_m && m.non_increasing_in_sigma2);
    let curves: Vec<String> = r
        .points
        .iter()
        .map(|p| {
            let at = if p.sweep == "m" {
                p.m.to_string()
            } else {
                format!("{:.2e}", p.test_sigma2)
            };
            format!("{:?} {}={at}: {:.3}", p.model, p.sweep, p.mean)
        })
        .collect();
    let flags: Vec<String> = r
        .monotonicity
        .iter()
        .map(|m| {
            format!(
                "{:?}: m {}, sigma2 {}",
                m.model, m.non_decreasing_in_m, m.non_increasing_in_sigma2
            )
        })
        .collect();
    check(
        ok,
        format!("{}; power {}", flags.join("; "), curves.join(", ")),
    )
}

fn quadrant_demo() -> Outcome {
    let r = run_quadrant(&QuadrantConfig::new(9)).map_err(|e| e.to_string())?;
    let s = r.shaplit_scores;
    let h = r.hrt_scores;
    let ok = r.one_signal.len() == 200
        && r.one_signal_pass_rate >= 0.95
        && r.two_signal_pass_rate >= 0.95
        && s.precision > h.precision
        && s.f1 > h.f1;
    check(
        ok,
        format!(
            "one-signal pass {:.3}, two-signal pass {:.3}, precision {:.3} vs HRT {:.3}, f1 {:.3} vs HRT {:.3}",
            r.one_signal_pass_rate, r.two_signal_pass_rate, s.precision, h.precision, s.f1, h.f1
        ),
    )
}

fn cli(dir: &Path, workers: usize, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_shaplit"))
        .arg("--workers")
        .arg(workers.to_string())
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let boolean_p = r#"{"kind":"boolean_truth","k":2,"n":5}"#;
    let boolean_s = r#"{"kind":"boolean","k":2,"n":5}"#;
    let x = "--x=4.5,0,0,0,0,0,0,-5,0,0";
    cli(
        dir,
        1,
        &[
            "generate", "boolean", "--seed", "3", "--count", "200", "--output", "data.csv",
        ],
    )?;
    std::fs::write(
        dir.join("boolean.json"),
        r#"{"seed": 5, "samples": 3, "tests_k": 200, "gamma_draws": 200}"#,
    )
    .map_err(|e| e.to_string())?;
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "shapley",
            "--seed",
            "1",
            "--predictor",
            boolean_p,
            "--sampler",
            boolean_s,
            x,
            "--draws",
            "200",
        ],
        vec![
            "shaplit",
            "--seed",
            "1",
            "--predictor",
            boolean_p,
            "--sampler",
            boolean_s,
            x,
            "--feature",
            "0",
            "--k",
            "99",
        ],
        vec![
            "crt",
            "--seed",
            "2",
            "--sampler",
            boolean_s,
            "--data",
            "data.csv",
            "--k",
            "99",
        ],
        vec![
            "hrt",
            "--seed",
            "2",
            "--predictor",
            boolean_p,
            "--sampler",
            boolean_s,
            "--data",
            "data.csv",
            "--k",
            "5",
        ],
        vec![
            "explain",
            "--seed",
            "4",
            "--predictor",
            boolean_p,
            "--sampler",
            boolean_s,
            x,
            "--features",
            "0,7",
            "--k",
            "99",
            "--m",
            "99",
        ],
    ];
    let mut compared = 0;
    for args in &commands {
        let reference = cli(dir, 1, args)?;
        for workers in [1, 2, 4] {
            if cli(dir, workers, args)? != reference {
                return Err(format!("`{}` differs at {workers} workers", args[0]));
            }
            compared += 1;
        }
    }
    let mut explain_args = commands[4].clone();
    explain_args.extend(["--out", "explain.json"]);
    cli(dir, 1, &explain_args)?;
    let global = cli(dir, 1, &["global", "--report", "explain.json"])?;
    if cli(dir, 4, &["global", "--report", "explain.json"])? != global {
        return Err("`global` differs across worker counts".into());
    }
    let mut files = Vec::new();
    for (workers, out) in [(1, "e1"), (4, "e4")] {
        cli(
            dir,
            workers,
            &[
                "experiment",
                "boolean",
                "--config",
                "boolean.json",
                "--out-dir",
                out,
            ],
        )?;
        let mut bytes = Vec::new();
        for name in ["report.json", "ecdf.csv", "config.snapshot.json"] {
            bytes.push(std::fs::read(dir.join(out).join(name)).map_err(|e| e.to_string())?);
        }
        files.push(bytes);
    }
    check(
        files[0] == files[1],
        format!(
            "{} command runs and the boolean experiment byte-identical at 1, 2 and 4 workers",
            compared + 2
        ),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "Shapley correctness",
            limit: Duration::from_secs(10),
            run: shapley_correctness,
        },
        Criterion {
            id: 2,
            name: "weight calculus",
            limit: Duration::from_secs(1),
            run: weight_calculus,
        },
        Criterion {
            id: 3,
            name: "SHAPLIT validity",
            limit: Duration::from_secs(120),
            run: shaplit_validity,
        },
        Criterion {
            id: 4,
            name: "per-coalition bound, exact",
            limit: Duration::from_secs(30),
            run: exact_p_bound,
        },
        Criterion {
            id: 5,
            name: "global chain, exact",
            limit: Duration::from_secs(30),
            run: weighted_p_chain,
        },
        Criterion {
            id: 6,
            name: "Boolean experiment",
            limit: Duration::from_secs(900),
            run: boolean_experiment,
        },
        Criterion {
            id: 7,
            name: "gradient check",
            limit: Duration::from_secs(5),
            run: gradient,
        },
        Criterion {
            id: 8,
            name: "power study",
            limit: Duration::from_secs(1800),
            run: power_study,
        },
        Criterion {
            id: 9,
            name: "quadrant demo",
            limit: Duration::from_secs(600),
            run: quadrant_demo,
        },
        Criterion {
            id: 10,
            name: "CLI determinism",
            limit: Duration::from_secs(60),
            run: determinism,
        },
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
    {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let (verdict, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {:?} budget", c.limit)),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {:>2} {verdict} {} ({:.1?}): {detail}",
            c.id, c.name, elapsed
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
