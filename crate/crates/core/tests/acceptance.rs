//! Acceptance suite: one line per criterion, run as a plain binary so the lines are
//! always shown. Exits non-zero if any criterion not listed in `KNOWN_FAILURES` fails,
//! or if a listed one unexpectedly passes.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use uckl::classes::{kato_norm, tau_f3, weak_lorentz_resolved};
use uckl::grid::{GridParams, Region};
use uckl::kernels::{truncated_kernel, truncated_kernel_direct, KernelSpec};
use uckl::potentials::{sample_on_region, Potential};
use uckl::verify::*;

/// The coefficient bound with `c = π²/48` is false: `∏ |1 + iγ/(2j-1)|` tends to
/// `√cosh(πγ/2)`, whose logarithm exceeds `π²γ²/48` for `0 < |γ| ≲ 3.4`.
const KNOWN_FAILURES: &[u32] = &[2];

/// Regression values frozen from the pre-run at the stated grids.
const LEMMA1_CONSTANT: f64 = 1.000000000000177;
const LEMMA2_C1: f64 = 1.9697823131595489;
const LEMMA2_GROWTH: f64 = 0.27518966905746733;
const UNIFORMITY_ENVELOPE: f64 = 0.09327705554549146;
const KATO_RATIO_BOUND: f64 = 0.8073066640097284;

const FROZEN_SLACK: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
    report: Value,
}

fn within_frozen(value: f64, frozen: f64) -> bool {
    value <= frozen * (1.0 + FROZEN_SLACK)
}

fn random_in_ball(rng: &mut ChaCha8Rng, r_max: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-r_max..r_max)).collect();
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= r_max {
            return p;
        }
    }
}

fn c1_kernel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    let mut worst_case = json!({});
    for _ in 0..1000 {
        let y = random_in_ball(&mut rng, 2.0);
        let ry = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x = loop {
            let x = random_in_ball(&mut rng, ry);
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() < ry {
                break x;
            }
        };
        for n in 1..=3 {
            let spec = KernelSpec::newtonian(3, n, 0.0).unwrap();
            let a = truncated_kernel(&spec, &x, &y).unwrap();
            let b = truncated_kernel_direct(&spec, &x, &y).unwrap();
            let e = (a - b).norm() / b.norm().max(1e-300);
            if e > worst {
                worst = e;
                worst_case = json!({ "x": x, "y": y, "N": n, "error": e });
            }
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max relative error {worst:.3e} (tol 1e-10) over 1000 pairs, N = 1..3"),
        report: json!({ "maxRelativeError": worst, "worst": worst_case }),
    }
}

fn c2_coefficients() -> Outcome {
    let unit = unit_coefficient_error(3, 50).unwrap();
    let gammas = gamma_grid(10.0, 0.25).unwrap();
    let stated = check_binom_bound(&gammas, 200, BINOM_GROWTH).unwrap();
    let safe = check_binom_bound(&gammas, 200, BINOM_GROWTH_SAFE).unwrap();
    Outcome {
        pass: unit <= 1e-12 && stated.pass,
        detail: format!(
            "|a_m(0) - 1| = {unit:.1e} (tol 1e-12); bound with c = pi^2/48 {} (worst ratio {:.4} at {}); with c = pi^2/16 {}",
            if stated.pass { "holds" } else { "violated" },
            stated.empirical_constant,
            stated.worst_case,
            if safe.pass { "holds" } else { "violated" },
        ),
        report: json!({ "unitError": unit, "stated": stated, "safe": safe }),
    }
}

fn c3_lemma1() -> Outcome {
    let r = check_lemma1(3, 30, &lemma1_t_grid(), &theta_grid(64)).unwrap();
    let frozen = within_frozen(r.empirical_constant, LEMMA1_CONSTANT);
    Outcome {
        pass: r.pass && frozen,
        detail: format!(
            "C(N<=30) = {:.12}, C(N<=15) = {:.12} (stable within 20%: {}), frozen bound {LEMMA1_CONSTANT}",
            r.fitted_growth["constantFull"], r.fitted_growth["constantHalf"], r.pass
        ),
        report: serde_json::to_value(&r).unwrap(),
    }
}

fn c4_lemma2() -> Outcome {
    let r = check_lemma2(3, &gamma_grid(4.0, 0.5).unwrap(), 20, &lemma2_t_grid(), &theta_grid(33)).unwrap();
    let c1 = r.fitted_growth["c1"].as_f64().unwrap();
    let frac = r.excluded as f64 / r.samples as f64;
    let frozen = within_frozen(r.empirical_constant, LEMMA2_C1) && within_frozen(c1, LEMMA2_GROWTH);
    Outcome {
        pass: r.pass && frac <= 1e-3 && frozen,
        detail: format!(
            "C1 = {:.6}, c1 = {:.6}, {} samples over four t-regimes, excluded {:.4}% (max 0.1%)",
            r.empirical_constant,
            c1,
            r.samples,
            100.0 * frac
        ),
        report: serde_json::to_value(&r).unwrap(),
    }
}

fn c5_quadrature_golds() -> Outcome {
    let o = [0.0; 3];
    let g24 = GridParams::with_n(24);
    let rho = 0.5;
    let one = Potential::constant_ball(3, 1.0, 2.0).unwrap();
    let kato_one = kato_norm(&one, &o, rho, &g24).unwrap().value;
    let want_one = rho * rho / 2.0;
    let err_one = (kato_one - want_one).abs() / want_one;

    let hardy = Potential::hardy(3, 1.0).unwrap();
    let coarse = kato_norm(&hardy, &o, 0.25, &GridParams::with_n(12)).unwrap().value;
    let fine = kato_norm(&hardy, &o, 0.25, &g24).unwrap().value;
    let growth = fine - coarse;
    let want_growth = 0.25 * 2f64.ln();
    let err_growth = (growth - want_growth).abs() / want_growth;

    let inverse_square = Potential::hardy(3, 4.0).unwrap();
    let field = sample_on_region(&inverse_square, &Region::origin_ball(3, 1.0).unwrap(), &g24).unwrap();
    let weak = weak_lorentz_resolved(&field, 1.5).unwrap();
    let want_weak = (4.0 * PI / 3.0).powf(2.0 / 3.0);
    let err_weak = (weak - want_weak).abs() / want_weak;
    Outcome {
        pass: err_one <= 0.05 && err_growth <= 0.2 && err_weak <= 0.1,
        detail: format!(
            "Kato(1) = {kato_one:.5} vs {want_one} ({:.2}%, tol 5%); Hardy Kato step {growth:.5} vs {want_growth:.5} ({:.1}%, tol 20%); weak |x|^-2 = {weak:.4} vs {want_weak:.4} ({:.1}%, tol 10%)",
            100.0 * err_one,
            100.0 * err_growth,
            100.0 * err_weak
        ),
        report: json!({ "katoOne": kato_one, "hardyCoarse": coarse, "hardyFine": fine, "weak": weak }),
    }
}

fn c6_hardy_membership() -> Outcome {
    let v = Potential::hardy(3, 0.5).unwrap();
    let o = [0.0; 3];
    let t12 = tau_f3(&v, &o, 0.25, &GridParams::with_n(12)).unwrap().value;
    let t16 = tau_f3(&v, &o, 0.25, &GridParams::with_n(16)).unwrap().value;
    let drift = (t16 - t12).abs() / t16;
    Outcome {
        pass: t12 <= 0.55 && t16 <= 0.55 && drift < 0.1,
        detail: format!("tau_f3 = {t12:.5} (n=12), {t16:.5} (n=16), bound 0.55, drift {:.2}% (< 10%)", 100.0 * drift),
        report: json!({ "n12": t12, "n16": t16 }),
    }
}

fn c7_strichartz() -> Outcome {
    let g = GridParams::with_n(16);
    let o = [0.0; 3];
    let one = check_strichartz(&Potential::constant_ball(3, 1.0, 2.0).unwrap(), &o, 1.0, &g).unwrap();
    let hardy = check_strichartz(&Potential::hardy(3, 0.5).unwrap(), &o, 1.0, &g).unwrap();
    Outcome {
        pass: one.pass && hardy.pass,
        detail: format!(
            "sqrt(tau)/rhs = {:.4} (V = 1), {:.4} (Hardy 0.5), limit 1.1",
            one.empirical_constant, hardy.empirical_constant
        ),
        report: json!([one, hardy]),
    }
}

fn c8_uniformity() -> Outcome {
    let n: Vec<usize> = (1..=10).collect();
    let r = check_prop_ourlem(
        &Potential::hardy(3, 0.5).unwrap(),
        0.5,
        0.1,
        0.25,
        &n,
        &GridParams::with_n(16),
        None,
    )
    .unwrap();
    let frozen = within_frozen(r.empirical_constant, UNIFORMITY_ENVELOPE);
    Outcome {
        pass: r.pass && frozen,
        detail: format!(
            "max ratio {:.6} (frozen envelope {UNIFORMITY_ENVELOPE:.6}), max/min {:.3} (limit 5)",
            r.empirical_constant, r.fitted_growth["maxOverMin"]
        ),
        report: serde_json::to_value(&r).unwrap(),
    }
}

fn c9_identity() -> Outcome {
    let ms = ManufacturedSolution::new(3, 2, 0.5, 1.0).unwrap();
    let samples = ms.default_samples();
    let mut rows = Vec::new();
    let mut pass = true;
    for n in 0..=3 {
        let coarse = check_identity(&ms, n, &GridParams::with_n(16), &samples).unwrap();
        let fine = check_identity(&ms, n, &GridParams::with_n(24), &samples).unwrap();
        pass &= fine.pass && fine.empirical_constant < coarse.empirical_constant;
        rows.push((n, coarse.empirical_constant, fine.empirical_constant));
    }
    let detail = rows
        .iter()
        .map(|(n, c, f)| format!("N={n}: {:.2}% -> {:.2}%", 100.0 * c, 100.0 * f))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        pass,
        detail: format!("max error / max|u| at n=16 -> n=24: {detail} (tol 5%, strictly decreasing)"),
        report: json!(rows),
    }
}

fn c10_kato_contraction() -> Outcome {
    let n: Vec<usize> = (1..=10).collect();
    let r = check_kato_contraction(
        &Potential::constant_ball(3, 1.0, 2.0).unwrap(),
        0.5,
        &n,
        &GridParams::with_n(16),
    )
    .unwrap();
    let contraction = r.fitted_growth["contraction"].as_f64().unwrap();
    let frozen = within_frozen(r.empirical_constant, KATO_RATIO_BOUND);
    Outcome {
        pass: r.pass && frozen && contraction < 1.0,
        detail: format!(
            "max 1->1 ratio {:.6} (frozen {KATO_RATIO_BOUND:.6}), contraction factor {contraction:.5} (< 1), Kato beta {:.5}",
            r.empirical_constant, r.fitted_growth["kato"]
        ),
        report: serde_json::to_value(&r).unwrap(),
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "kernel oracle equivalence", Duration::from_secs(1), c1_kernel_oracle),
    (2, "coefficient identities", Duration::from_secs(1), c2_coefficients),
    (3, "truncated Newtonian remainder bound", Duration::from_secs(10), c3_lemma1),
    (4, "complex-order remainder fit", Duration::from_secs(60), c4_lemma2),
    (5, "closed-form quadrature golds", Duration::from_secs(30), c5_quadrature_golds),
    (6, "Hardy membership", Duration::from_secs(60), c6_hardy_membership),
    (7, "Strichartz direction", Duration::from_secs(60), c7_strichartz),
    (8, "weighted operator N-uniformity", Duration::from_secs(300), c8_uniformity),
    (9, "reconstruction identity", Duration::from_secs(120), c9_identity),
    (10, "Kato contraction", Duration::from_secs(120), c10_kato_contraction),
];

fn line(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    let expected_fail = KNOWN_FAILURES.contains(&id);
    let tag = match (pass, expected_fail) {
        (true, false) => "PASS",
        (false, false) => "FAIL",
        (false, true) => "FAIL (known)",
        (true, true) => "PASS (unexpected)",
    };
    println!("criterion {id:>2} [{tag}] {name}: {detail}");
    pass != expected_fail
}

fn main() {
    let mut ok = true;
    let mut first = Vec::new();
    for (id, name, budget, run) in CRITERIA {
        let t = Instant::now();
        let out = run();
        let took = t.elapsed();
        let in_time = took <= budget;
        let detail = format!("{}; {:.2}s (budget {}s)", out.detail, took.as_secs_f64(), budget.as_secs());
        ok &= line(id, name, out.pass && in_time, &detail);
        first.push(out.report);
    }
    let t = Instant::now();
    let differing: Vec<u32> = CRITERIA
        .iter()
        .zip(&first)
        .filter(|((_, _, _, run), before)| run().report != **before)
        .map(|((id, ..), _)| *id)
        .collect();
    ok &= line(
        11,
        "determinism",
        differing.is_empty(),
        &format!(
            "second run of criteria 1-10 with equal seeds: {} ({:.2}s)",
            if differing.is_empty() { "identical".to_string() } else { format!("differs in {differing:?}") },
            t.elapsed().as_secs_f64()
        ),
    );
    if !ok {
        std::process::exit(1);
    }
}
