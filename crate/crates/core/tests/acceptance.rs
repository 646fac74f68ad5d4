//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Criterion 10 needs the Boston Housing data as a headerless or headed
//! numeric CSV (13 features, label last) named by `CONFDIST_BOSTON_CSV`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use confdist::ccps::fit_ccps;
use confdist::conformity::{ConformityMeasure, ConformityMeasureSpec, FixedMeasure, NwParams};
use confdist::data::Dataset;
use confdist::distribution::{StepCdf, TauSource};
use confdist::error::Result as CdResult;
use confdist::harness::{DataSource, ExperimentConfig, Mode, run_experiment, write_outputs};
use confdist::isotonic::pava;
use confdist::metrics::{PredictiveSystem, crps_step, kolmogorov_shift, kolmogorov_shift_scale, ks_distance_uniform, pit_values};
use confdist::regressors::RegressorSpec;
use confdist::scps::{ScpsModel, Split, fit_scps, ideal};
use confdist::svaps::{SvapsType, example1_asymptotics, example1_expected_crps};
use confdist::synth::{Generator, generate};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok { Outcome::Pass(detail) } else { Outcome::Fail(detail) }
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ys = xs
        .iter()
        .map(|x| x.iter().sum::<f64>() + rng.random_range(-1.0..1.0))
        .collect();
    Dataset::from_rows(xs, ys).unwrap()
}

fn recombination_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = ConformityMeasureSpec::Simple(RegressorSpec::least_squares());
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(k.max(3)..=50);
        let train = random_dataset(&mut rng, n, 2);
        let model = fit_ccps(&train, k, &spec).unwrap();
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let y = rng.random_range(-5.0..5.0);
        let tau = rng.random::<f64>();
        worst = worst.max(model.recombine_identity_check(&x, y, tau).unwrap().abs());
    }
    verdict(worst < 1e-12, format!("max |residual| = {worst:e} over 1000 instances"))
}

fn scps_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let specs = [
        ConformityMeasureSpec::Simple(RegressorSpec::least_squares()),
        ConformityMeasureSpec::Normalized(RegressorSpec::knn(3)),
        ConformityMeasureSpec::NadarayaWatson(NwParams::sigmoid(1.0, 0.5)),
    ];
    let mut violations = 0;
    for i in 0..200 {
        let spec = &specs[i % 3];
        let n = rng.random_range(8..40);
        let train = random_dataset(&mut rng, n, 2);
        let model = fit_scps(&train, Split::Fraction(0.5), spec).unwrap();
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let dist = model.predict(&x).unwrap();
        let mut ys: Vec<f64> = dist.jumps().to_vec();
        ys.extend((0..40).map(|_| rng.random_range(-8.0..8.0)));
        ys.sort_by(f64::total_cmp);
        let taus = [0.0, 0.2, 0.5, 0.9, 1.0];
        for &tau in &taus {
            let q: Vec<f64> = ys.iter().map(|&y| model.q(&x, y, tau).unwrap()).collect();
            let f: Vec<f64> = ys.iter().map(|&y| dist.eval_fuzzy(y, tau)).collect();
            violations += q.windows(2).filter(|w| w[0] > w[1]).count();
            violations += f.windows(2).filter(|w| w[0] > w[1]).count();
        }
        for &y in &ys {
            let q: Vec<f64> = taus.iter().map(|&t| model.q(&x, y, t).unwrap()).collect();
            violations += q.windows(2).filter(|w| w[0] > w[1]).count();
        }
        let (lo, hi) = (dist.jumps()[0], dist.jumps()[dist.len() - 1]);
        let below = lo - 1.0 - lo.abs();
        let above = hi + 1.0 + hi.abs();
        if model.q(&x, below, 0.0).unwrap() != 0.0 || dist.eval_fuzzy(below, 0.0) != 0.0 {
            violations += 1;
        }
        if model.q(&x, above, 1.0).unwrap() != 1.0 || dist.eval_fuzzy(above, 1.0) != 1.0 {
            violations += 1;
        }
    }
    verdict(violations == 0, format!("{violations} monotonicity or tail violations over 200 instances"))
}

struct Negated;

impl ConformityMeasure for Negated {
    fn score(&self, _x: &[f64], y: f64) -> CdResult<f64> {
        Ok(-y)
    }
}

fn non_isotonic_violation() -> Outcome {
    let cal = Dataset::from_rows(vec![vec![0.0]], vec![0.0]).unwrap();
    let model = ScpsModel::from_measure(Negated, &cal).unwrap();
    let (y, y_prime) = (-1.0, 1.0);
    let mut detail = String::new();
    let mut ok = true;
    for tau in [0.0, 0.5, 1.0] {
        let (a, b) = (model.q(&[0.0], y, tau).unwrap(), model.q(&[0.0], y_prime, tau).unwrap());
        ok &= a > b;
        detail += &format!("tau={tau}: Q(-1)={a} > Q(1)={b}; ");
    }
    verdict(ok, detail.trim_end_matches("; ").to_string())
}

fn empirical_validity() -> Outcome {
    let data = generate(Generator::HomoscedasticLinear, 2500, 1.0, 4).unwrap();
    let (train, test) = data.split_at(500).unwrap();
    let spec = ConformityMeasureSpec::Simple(RegressorSpec::least_squares());
    let scps = fit_scps(&train, Split::Fraction(0.5), &spec).unwrap();
    let ccps = fit_ccps(&train, 5, &spec).unwrap();
    let ks_s = ks_distance_uniform(&pit_values(&scps, &test, &mut TauSource::new(5)).unwrap()).unwrap();
    let ks_c = ks_distance_uniform(&pit_values(&ccps, &test, &mut TauSource::new(6)).unwrap()).unwrap();
    verdict(ks_s < 0.05 && ks_c < 0.07, format!("SCPS KS = {ks_s:.4} (< 0.05), CCPS K=5 KS = {ks_c:.4} (< 0.07)"))
}

fn crisp_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = ConformityMeasureSpec::Simple(RegressorSpec::ridge(0.1));
    let mut violations = 0;
    let mut checked = 0;
    while checked < 10_000 {
        let train = random_dataset(&mut rng, 30, 2);
        let scps = fit_scps(&train, Split::Fraction(0.4), &spec).unwrap();
        let ccps = fit_ccps(&train, 4, &spec).unwrap();
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let systems: [&dyn PredictiveSystem; 2] = [&scps, &ccps];
        for system in systems {
            let dist = system.predict(&x).unwrap();
            for _ in 0..250 {
                let y = rng.random_range(-8.0..8.0);
                if dist.jumps().contains(&y) {
                    continue;
                }
                let lo = system.q(&x, y, 0.0).unwrap();
                let hi = system.q(&x, y, 1.0).unwrap();
                let crisp = system.q_crisp(&x, y).unwrap();
                if !(lo <= crisp && crisp <= hi) {
                    violations += 1;
                }
                checked += 1;
            }
        }
    }
    verdict(violations == 0, format!("{violations} violations at {checked} non-jump points"))
}

fn quadrature(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = 0.5 * (b - a) * (fa + fb);
        let halves = 0.25 * (b - a) * (fa + 2.0 * fm + fb);
        if depth >= 60 || (depth >= 4 && (halves - whole).abs() <= tol) {
            halves
        } else {
            rec(f, a, m, fa, fm, tol / 2.0, depth + 1) + rec(f, m, b, fm, fb, tol / 2.0, depth + 1)
        }
    }
    let pieces = 512;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            rec(f, lo, hi, f(lo), f(hi), tol / pieces as f64, 0)
        })
        .sum()
}

fn crps_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let k = rng.random_range(1..10);
        let mut points: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut values: Vec<f64> = (0..points.len()).map(|_| rng.random::<f64>()).collect();
        values.sort_by(f64::total_cmp);
        *values.last_mut().unwrap() = 1.0;
        let cdf = StepCdf::right_continuous(points.clone(), values).unwrap();
        let y = rng.random_range(-6.0..6.0);
        let exact = crps_step(&cdf, y).unwrap();
        let lo = points[0].min(y) - 10.0;
        let hi = points[points.len() - 1].max(y) + 10.0;
        let integrand = |u: f64| (cdf.value(u) - if u >= y { 1.0 } else { 0.0 }).powi(2);
        let approx = quadrature(&integrand, lo, hi, 1e-11);
        worst = worst.max((exact - approx).abs() / approx.max(1e-300));
    }
    let zero = crps_step(&StepCdf::from_atoms(&[(0.3, 1.0)]).unwrap(), 0.3).unwrap();
    verdict(
        worst < 1e-6 && zero == 0.0,
        format!("max relative error {worst:e} over 500 CDFs; point mass at truth gives {zero}"),
    )
}

/// Exhaustive isotonic least squares: the best feasible partition of the
/// sorted, merged points into blocks at their weighted means.
fn brute_force_isotonic(points: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64, f64)> = Vec::new();
    for (s, t, w) in pts {
        match merged.last_mut() {
            Some(last) if last.0 == s => {
                last.1 += t * w;
                last.2 += w;
            }
            _ => merged.push((s, t * w, w)),
        }
    }
    let n = merged.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::new();
        let mut means = Vec::new();
        let mut start = 0;
        for i in 0..n {
            if i == n - 1 || mask & (1 << i) != 0 {
                let (sw, w) = merged[start..=i].iter().fold((0.0, 0.0), |a, p| (a.0 + p.1, a.1 + p.2));
                means.push(sw / w);
                fit.extend(std::iter::repeat_n(sw / w, i + 1 - start));
                start = i + 1;
            }
        }
        if means.windows(2).any(|m| m[0] > m[1]) {
            continue;
        }
        let loss: f64 = fit.iter().zip(&merged).map(|(f, p)| p.2 * (f - p.1 / p.2).powi(2)).sum();
        if loss < best.0 {
            best = (loss, fit);
        }
    }
    best.1
}

fn pava_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let n = rng.random_range(1..=6);
        let pts: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                (
                    rng.random_range(0..5) as f64,
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.1..3.0),
                )
            })
            .collect();
        let got = pava(&pts).unwrap().fitted();
        let want = brute_force_isotonic(&pts);
        if got.len() != want.len() {
            return Outcome::Fail("breakpoint count mismatch".into());
        }
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(worst < 1e-8, format!("max deviation {worst:e} over 2000 instances"))
}

fn close(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 0.03)
}

fn svaps_example() -> Outcome {
    let cases = [
        (0.0, 0.0, [0.25, 0.5, 0.25], [0.25, 0.5, 0.25], 3.0 / 8.0),
        (1.0, 0.0, [0.0, 0.75, 0.25], [0.5, 0.25, 0.25], 5.0 / 16.0),
        (0.0, 1.0, [0.25, 0.75, 0.0], [0.25, 0.25, 0.5], 5.0 / 16.0),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, (a0, a1, w0, w1, expected)) in cases.into_iter().enumerate() {
        for t in [SvapsType::One, SvapsType::Two, SvapsType::Three] {
            let w = example1_asymptotics(t, 4000, a0, a1, 100 + i as u64).unwrap();
            ok &= close(w.x0, w0) && close(w.x1, w1);
        }
        let limit = confdist::svaps::Example1Weights { x0: w0, x1: w1 };
        let crps = example1_expected_crps(&limit).unwrap();
        ok &= crps == expected;
        detail.push(format!("a0={a0},a1={a1}: CRPS {crps}"));
    }
    verdict(ok, format!("weights within 0.03 for all types; {}", detail.join(", ")))
}

fn iscps_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1];
    let sigma = |x: &[f64]| 0.5 + x[0].abs();
    let sample = |rng: &mut ChaCha8Rng, hetero: bool| {
        let xs: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let ys = xs
            .iter()
            .map(|x| f(x) + if hetero { sigma(x) } else { 1.0 } * rng.random_range(-1.0..1.0))
            .collect();
        Dataset::from_rows(xs, ys).unwrap()
    };
    let mut worst_shift = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..5 {
        let x1 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let x2 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let m = ideal(FixedMeasure::simple(f), &sample(&mut rng, false)).unwrap();
        let (a, b) = (m.predict(&x1).unwrap().fuzzy_curve(0.5), m.predict(&x2).unwrap().fuzzy_curve(0.5));
        worst_shift = worst_shift.max(kolmogorov_shift(&a, &b));
        let m = ideal(FixedMeasure::normalized(f, sigma), &sample(&mut rng, true)).unwrap();
        let (a, b) = (m.predict(&x1).unwrap().fuzzy_curve(0.5), m.predict(&x2).unwrap().fuzzy_curve(0.5));
        worst_scale = worst_scale.max(kolmogorov_shift_scale(&a, &b));
    }
    verdict(
        worst_shift < 1e-9 && worst_scale < 1e-4,
        format!("max K' = {worst_shift:e} (simple), max K'' = {worst_scale:e} (normalized)"),
    )
}

fn boston_table() -> Outcome {
    let Some(path) = std::env::var_os("CONFDIST_BOSTON_CSV") else {
        return Outcome::Skip("CONFDIST_BOSTON_CSV not set".into());
    };
    let mut c = ExperimentConfig::new(DataSource::Csv(PathBuf::from(path)), 100);
    c.permutations = 10;
    let r = match run_experiment(&c) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("experiment failed: {e}")),
    };
    let best_s = r.best_scps().unwrap();
    let best_c = r.best_ccps().unwrap();
    let within = |v: f64, target: f64| (v - target).abs() <= 0.2 * target;
    let spread = |m: Vec<f64>| m.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - m.iter().cloned().fold(f64::INFINITY, f64::min);
    let s_spread = spread(r.scps.iter().filter(|p| p.param >= 0.1 - 1e-12 && p.param <= 0.9 + 1e-12).map(|p| p.stats.median).collect());
    let c_spread = spread(r.ccps.iter().map(|p| p.stats.median).collect());
    verdict(
        within(best_s.stats.median, 1.726) && within(best_c.stats.median, 1.533) && c_spread < s_spread,
        format!(
            "best SCPS median {:.4} at alpha {} (target 1.726), best CCPS median {:.4} at K {} (target 1.533), spread CCPS {:.4} < SCPS {:.4}",
            best_s.stats.median, best_s.param, best_c.stats.median, best_c.param, c_spread, s_spread
        ),
    )
}

fn determinism() -> Outcome {
    let run = |mode: Mode| -> Vec<(String, Vec<u8>)> {
        let mut c = ExperimentConfig::new(
            DataSource::Synth {
                generator: Generator::HeteroscedasticLinear,
                n: 120,
                noise: 1.0,
            },
            20,
        );
        c.permutations = 3;
        c.alphas = vec![0.3, 0.5, 0.7];
        c.ks = vec![2, 5, 10];
        c.regressor = RegressorSpec::ridge(1.0);
        c.mode = mode;
        c.seed = 42;
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&run_experiment(&c).unwrap(), dir.path(), true).unwrap();
        let mut out: Vec<(String, Vec<u8>)> = files
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        out.sort();
        out
    };
    let mut ok = true;
    let mut files = 0;
    for mode in [Mode::Crps, Mode::Calibration] {
        let (a, b) = (run(mode), run(mode));
        ok &= a == b;
        files += a.len();
    }
    verdict(ok, format!("{files} CSV files byte-identical across two runs"))
}

fn main() {
    let criteria: [(u32, &str, Check, Option<Duration>); 11] = [
        (1, "cross-conformal recombination identity", recombination_identity, Some(Duration::from_secs(10))),
        (2, "SCPS monotonicity and tails", scps_axioms, None),
        (3, "non-isotonic measure breaks monotonicity", non_isotonic_violation, None),
        (4, "empirical PIT uniformity", empirical_validity, Some(Duration::from_secs(30))),
        (5, "crisp value between the fuzzy bounds", crisp_sandwich, None),
        (6, "exact CRPS against quadrature", crps_exactness, None),
        (7, "PAVA against exhaustive search", pava_oracle, None),
        (8, "Venn-Abers two-class example", svaps_example, None),
        (9, "ideal system shift and scale invariance", iscps_invariance, None),
        (10, "Boston Housing CRPS table", boston_table, Some(Duration::from_secs(300))),
        (11, "harness determinism", determinism, None),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => match budget {
                Some(b) if elapsed > b => ("FAIL", format!("{d}; took {elapsed:.1?}, budget {b:?}")),
                _ => ("PASS", d),
            },
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("criterion {id:>2} {tag} {name}: {detail} [{elapsed:.2?}]");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
