//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use persuasion::auction::{
    half_value_scheme, jensen_ratio, sample_simplex, verify_jensen_factor, AuctionObjective,
    AuctionSpec, Bidder, BidderType,
};
use persuasion::constraints::smooth_constraint;
use persuasion::fixtures::{build_fixture, sample_valid_schemes, verify_fixture, FixtureId};
use persuasion::geometry::{GridOptions, SimplexGrid};
use persuasion::solver::{
    bi_criteria_solve, bi_criteria_solve_with, convert_traced, ex_ante_to_ex_post, oracle_solve,
    single_criteria_solve_with, ExtremePairs, SolveOptions, SolveReport,
};
use persuasion::{
    verify_scheme, ConstraintKind, ConstraintSpec, MaxLinear, Mode, NormOrder, Posterior,
    ProblemInstance, SignalingScheme, UtilitySpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Collects failures while a criterion keeps running.
#[derive(Default)]
struct Tally {
    checked: usize,
    failures: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, summary: String) -> Outcome {
        if self.failures.is_empty() {
            Outcome::new(true, format!("{summary}; {} checks", self.checked))
        } else {
            let shown: Vec<&str> = self.failures.iter().take(3).map(String::as_str).collect();
            Outcome::new(
                false,
                format!(
                    "{summary}; {} of {} checks failed: {}",
                    self.failures.len(),
                    self.checked,
                    shown.join(" | ")
                ),
            )
        }
    }
}

fn mixed_prior(rng: &mut ChaCha8Rng, k: usize) -> Posterior {
    let s = sample_simplex(rng, k);
    Posterior::new(s.iter().map(|x| 0.5 * x + 0.5 / k as f64).collect()).unwrap()
}

fn c1_two_state_gap() -> Outcome {
    let eps = 0.01;
    let start = Instant::now();
    let mut t = Tally::default();
    let mut parts = Vec::new();
    for eps0 in [1.0 / 6.0, 0.05] {
        let inst = build_fixture(FixtureId::TwoState { eps0 })
            .unwrap()
            .instance;
        let ante = bi_criteria_solve(&inst, eps).unwrap();
        let post = bi_criteria_solve(&inst.with_mode(Mode::ExPost), eps).unwrap();
        let target = 2.0 * eps0 / (1.0 + 2.0 * eps0);
        t.check(ante.value >= 0.5 - eps, || {
            format!("eps0 = {eps0}: ex ante value {}", ante.value)
        });
        t.check(ante.max_violation() <= eps, || {
            format!("eps0 = {eps0}: violation {}", ante.max_violation())
        });
        t.check((post.value - target).abs() <= eps.max(1e-6), || {
            format!("eps0 = {eps0}: ex post value {} vs {target}", post.value)
        });
        parts.push(format!(
            "eps0={eps0:.4}: ante {:.4}, post {:.4} (target {:.4})",
            ante.value, post.value, target
        ));
    }
    let elapsed = start.elapsed();
    t.check(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    });
    t.finish(format!("{}; {elapsed:.2?}", parts.join(", ")))
}

fn c2_hypercube_pooling() -> Outcome {
    let mut t = Tally::default();
    let mut ratios = Vec::new();
    for m in 1..=3usize {
        let fx = build_fixture(FixtureId::Hypercube { m }).unwrap();
        let inst = &fx.instance;
        let start = Instant::now();
        let out =
            ex_ante_to_ex_post(&fx.reference.scheme, inst.constraints(), inst.prior()).unwrap();
        let elapsed = start.elapsed();
        let before = verify_scheme(inst, &fx.reference.scheme, 1e-9)
            .unwrap()
            .utility;
        let after = verify_scheme(&inst.with_mode(Mode::ExPost), &out, 1e-9).unwrap();
        let ratio = after.utility / before;
        let expected = 0.5f64.powi(m as i32);
        t.check((ratio - expected).abs() <= 1e-9, || {
            format!("m = {m}: ratio {ratio} vs {expected}")
        });
        t.check(after.valid, || {
            format!("m = {m}: output violates an ex post constraint")
        });
        t.check(elapsed < Duration::from_secs(1), || {
            format!("m = {m}: took {elapsed:?}")
        });
        ratios.push(format!("m={m}: {ratio}"));
    }
    t.finish(format!("ratios {}", ratios.join(", ")))
}

fn c3_jensen_gap() -> Outcome {
    let mut t = Tally::default();
    let mut gaps = Vec::new();
    for big_m in [1.5, 3.0, 10.0] {
        let r = verify_fixture(FixtureId::JensenGap { big_m }).unwrap();
        let gap = r.checks.iter().find(|c| c.name == "gap").unwrap().measured;
        t.check(r.pass && (gap - big_m).abs() <= 1e-9, || {
            format!("M = {big_m}: gap {gap}, {:?}", r.failure())
        });
        gaps.push(format!("M={big_m}: {gap}"));
    }
    t.finish(format!("ex ante / ex post {}", gaps.join(", ")))
}

fn c4_prior_gap() -> Outcome {
    let mut t = Tally::default();
    let mut gaps = Vec::new();
    for m in 1..=3usize {
        let r = verify_fixture(FixtureId::PriorGap { m }).unwrap();
        let gap = r.checks.iter().find(|c| c.name == "gap").unwrap().measured;
        t.check(r.pass && (gap - (m + 1) as f64).abs() <= 1e-6, || {
            format!("m = {m}: gap {gap}, {:?}", r.failure())
        });
        gaps.push(format!("m={m}: {gap}"));
    }
    t.finish(format!("gaps {}", gaps.join(", ")))
}

fn c5_support_bound() -> Outcome {
    let mut t = Tally::default();
    let mut best_seen = f64::NEG_INFINITY;
    for (k, m) in [(2, 1), (2, 2), (3, 2)] {
        let fx = build_fixture(FixtureId::SupportBound { k, m }).unwrap();
        let r = verify_scheme(&fx.instance, &fx.reference.scheme, 1e-9).unwrap();
        t.check((r.utility - 0.75).abs() <= 1e-12, || {
            format!("({k},{m}): reference value {}", r.utility)
        });
        t.check(fx.reference.scheme.len() == k + m, || {
            format!("({k},{m}): support {}", fx.reference.scheme.len())
        });
        t.check(r.valid, || format!("({k},{m}): reference scheme rejected"));
        let fixture = verify_fixture(fx.id).unwrap();
        t.check(fixture.pass, || {
            format!("({k},{m}): {:?}", fixture.failure())
        });
        for s in sample_valid_schemes(&fx.instance, 1000, 500 + k as u64 * 10 + m as u64).unwrap() {
            let v = verify_scheme(&fx.instance, &s, 1e-9).unwrap();
            best_seen = best_seen.max(v.utility);
            t.check(v.valid && v.utility <= 0.75 + 1e-9, || {
                format!("({k},{m}): random scheme value {}", v.utility)
            });
        }
    }
    t.finish(format!("best random valid scheme {best_seen:.6}"))
}

fn random_constraint(rng: &mut ChaCha8Rng, k: usize, prior: &Posterior) -> ConstraintSpec {
    let slack = rng.random_range(0.0..0.3);
    let kind = match rng.random_range(0..3) {
        0 => ConstraintKind::Linear {
            coefficients: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
        },
        1 => ConstraintKind::NormDistance {
            order: [NormOrder::L1, NormOrder::L2, NormOrder::Linf][rng.random_range(0..3)],
        },
        _ => {
            let mut partition: Vec<Vec<usize>> = Vec::new();
            for w in 0..k {
                let cell = rng.random_range(0..=partition.len());
                if cell == partition.len() {
                    partition.push(vec![w]);
                } else {
                    partition[cell].push(w);
                }
            }
            let references = (0..partition.len())
                .map(|_| rng.random_range(0.3..1.5))
                .collect();
            ConstraintKind::GroupedKl {
                partition,
                scale: rng.random_range(0.2..1.5),
                references,
            }
        }
    };
    let base = ConstraintSpec::ex_ante(kind, 0.0);
    let at_prior = base.eval(prior.as_slice(), prior.as_slice());
    ConstraintSpec {
        bound: at_prior + slack,
        ..base
    }
}

/// Random instances for the grid-LP contract, with the Slater margin that
/// no revelation certifies.
fn lp_instances() -> Vec<(ProblemInstance, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    (0..50)
        .map(|_| {
            let k = rng.random_range(2..=3usize);
            let prior = mixed_prior(&mut rng, k);
            let count = rng.random_range(1..=3usize);
            let functionals: Vec<Vec<f64>> = (0..count)
                .map(|_| (0..k).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let rank = if count > 1 && rng.random_bool(0.25) {
                2
            } else {
                1
            };
            let m = rng.random_range(0..=3usize);
            let constraints: Vec<ConstraintSpec> = (0..m)
                .map(|_| random_constraint(&mut rng, k, &prior))
                .collect();
            let margin = constraints
                .iter()
                .map(|c| c.bound - c.eval(prior.as_slice(), prior.as_slice()))
                .fold(f64::INFINITY, f64::min);
            let inst = ProblemInstance::new(
                k,
                prior,
                UtilitySpec::MaxLinear(MaxLinear::new(rank, functionals)),
                constraints,
            )
            .unwrap();
            (inst, margin)
        })
        .collect()
}

fn nested_opts() -> SolveOptions {
    SolveOptions {
        grid: GridOptions {
            denominator_multiple: 4,
            ..GridOptions::default()
        },
    }
}

struct LpRun {
    k: usize,
    m: usize,
    report: SolveReport,
}

fn c6_fptas(runs: &mut Vec<LpRun>) -> Outcome {
    let mut t = Tally::default();
    let opts = nested_opts();
    let mut slowest = Duration::ZERO;
    let mut worst_gap = f64::INFINITY;
    for (i, (inst, _)) in lp_instances().iter().enumerate() {
        let coarse = SimplexGrid::with_denominator(inst.k(), 4, 100).unwrap();
        let oracle = oracle_solve(inst, &coarse).map(|r| r.value);
        for eps in [0.1, 0.02] {
            let start = Instant::now();
            let r = match bi_criteria_solve_with(inst, eps, &opts) {
                Ok(r) => r,
                Err(e) => {
                    t.check(false, || format!("instance {i}, eps {eps}: {e}"));
                    continue;
                }
            };
            let elapsed = start.elapsed();
            slowest = slowest.max(elapsed);
            t.check(elapsed < Duration::from_secs(10), || {
                format!("instance {i}, eps {eps}: took {elapsed:?}")
            });
            t.check(r.max_violation() <= eps, || {
                format!("instance {i}, eps {eps}: violation {}", r.max_violation())
            });
            if let Ok(o) = oracle {
                worst_gap = worst_gap.min(r.value - o);
                t.check(r.value >= o - 1e-9, || {
                    format!("instance {i}, eps {eps}: value {} < oracle {o}", r.value)
                });
            }
            runs.push(LpRun {
                k: inst.k(),
                m: inst.m(),
                report: r,
            });
        }
    }
    t.finish(format!(
        "min(value - oracle) {worst_gap:.3e}, slowest solve {slowest:.2?}"
    ))
}

fn c7_single_criteria() -> Outcome {
    let mut t = Tally::default();
    let eps = 0.05;
    let opts = nested_opts();
    let mut used = 0;
    let mut worst = f64::INFINITY;
    for (i, (inst, margin)) in lp_instances().iter().enumerate() {
        if inst.m() == 0 || *margin < 0.1 {
            continue;
        }
        used += 1;
        let single = single_criteria_solve_with(inst, eps, *margin, &opts);
        let bi = bi_criteria_solve_with(inst, eps, &opts);
        match (single, bi) {
            (Ok(s), Ok(b)) => {
                t.check(s.max_violation() <= 1e-9, || {
                    format!("instance {i}: violation {}", s.max_violation())
                });
                worst = worst.min(s.value - (b.value - eps));
                t.check(s.value >= b.value - eps - 1e-9, || {
                    format!("instance {i}: single {} vs bi {}", s.value, b.value)
                });
            }
            (s, b) => t.check(false, || {
                format!("instance {i}: {:?} / {:?}", s.err(), b.err())
            }),
        }
    }
    t.finish(format!(
        "{used} instances with margin >= 0.1; min(single - (bi - eps)) {worst:.3e}"
    ))
}

fn c8_support(runs: &[LpRun]) -> Outcome {
    let mut t = Tally::default();
    for (i, run) in runs.iter().enumerate() {
        t.check(run.report.scheme.len() <= run.k + run.m, || {
            format!(
                "run {i}: support {} > k + m = {}",
                run.report.scheme.len(),
                run.k + run.m
            )
        });
    }
    let mut restricted = 0;
    for (i, (inst, _)) in lp_instances().iter().enumerate() {
        let post = inst.with_mode(Mode::ExPost);
        match bi_criteria_solve_with(&post, 0.1, &nested_opts()) {
            Ok(r) => {
                restricted += 1;
                t.check(r.scheme.len() <= inst.k(), || {
                    format!("ex post instance {i}: support {}", r.scheme.len())
                });
            }
            Err(e) => t.check(false, || format!("ex post instance {i}: {e}")),
        }
    }
    for eps0 in [1.0 / 6.0, 0.05] {
        let inst = build_fixture(FixtureId::TwoState { eps0 })
            .unwrap()
            .instance;
        let r = bi_criteria_solve(&inst.with_mode(Mode::ExPost), 0.01).unwrap();
        restricted += 1;
        t.check(r.scheme.len() <= 2, || {
            format!("two-state {eps0}: support {}", r.scheme.len())
        });
    }
    t.finish(format!(
        "{} ex ante schemes, {restricted} ex post restricted",
        runs.len()
    ))
}

fn sample_point(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut q = sample_simplex(rng, k);
    match rng.random_range(0..4) {
        0 => {
            let zero = rng.random_range(0..k);
            q[zero] = 0.0;
        }
        1 => {
            let v = rng.random_range(0..k);
            let t: f64 = rng.random_range(0.0..1e-3);
            q = (0..k)
                .map(|w| if w == v { 1.0 - t } else { t / (k - 1) as f64 })
                .collect();
        }
        _ => {}
    }
    let s: f64 = q.iter().sum();
    q.iter().map(|x| x / s).collect()
}

fn c9_smoothing() -> Outcome {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut max_gap: f64 = 0.0;
    let mut max_lip_ratio: f64 = 0.0;
    for k in [2usize, 3] {
        for eps in [0.1, 0.01] {
            for _ in 0..3 {
                let prior = Posterior::uniform(k);
                let mut spec = random_constraint(&mut rng, k, &prior);
                while !matches!(spec.kind, ConstraintKind::GroupedKl { .. }) {
                    spec = random_constraint(&mut rng, k, &prior);
                }
                if rng.random_bool(0.3) {
                    if let ConstraintKind::GroupedKl { scale, .. } = &mut spec.kind {
                        *scale = -*scale;
                    }
                }
                let g = smooth_constraint(&spec, k, eps).unwrap();
                let p = prior.as_slice();
                for _ in 0..10_000 {
                    let q = sample_point(&mut rng, k);
                    let gap = spec.eval(&q, p) - g.eval(&q, p);
                    max_gap = max_gap.max(gap);
                    t.check((0.0..=eps).contains(&gap), || {
                        format!("k {k}, eps {eps}: f - g = {gap} at {q:?}")
                    });
                }
                for i in 0..10_000 {
                    let a = sample_point(&mut rng, k);
                    let b = if i % 2 == 0 {
                        sample_point(&mut rng, k)
                    } else {
                        let step: Vec<f64> = a
                            .iter()
                            .map(|x| (x + rng.random_range(-1e-4..1e-4)).max(0.0))
                            .collect();
                        let s: f64 = step.iter().sum();
                        step.iter().map(|x| x / s).collect()
                    };
                    let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
                    let diff = (g.eval(&a, p) - g.eval(&b, p)).abs();
                    if g.lipschitz_constant * dist > 1e-9 {
                        max_lip_ratio = max_lip_ratio.max(diff / (g.lipschitz_constant * dist));
                    }
                    t.check(diff <= g.lipschitz_constant * dist + 1e-12, || {
                        format!(
                            "k {k}, eps {eps}: |g(a) - g(b)| = {diff} > L |a - b| = {}",
                            g.lipschitz_constant * dist
                        )
                    });
                }
            }
        }
    }
    t.finish(format!(
        "max f - g {max_gap:.4}, max |dg| / (L |dq|) {max_lip_ratio:.3}"
    ))
}

fn random_auction(
    rng: &mut ChaCha8Rng,
    objective: AuctionObjective,
    min_bidders: usize,
) -> AuctionSpec {
    let n = rng.random_range(min_bidders..=3);
    let bidders = (0..n)
        .map(|_| {
            let types = rng.random_range(1..=3usize);
            let mut weights: Vec<f64> = (0..types).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
            Bidder {
                types: weights
                    .into_iter()
                    .map(|weight| BidderType {
                        weight,
                        values: vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                    })
                    .collect(),
            }
        })
        .collect();
    AuctionSpec::new(objective, bidders)
}

fn c10_jensen() -> Outcome {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut max_ratio: f64 = 0.0;
    for i in 0..20 {
        let (objective, min_bidders) = if i % 2 == 0 {
            (AuctionObjective::Welfare, 1)
        } else {
            (AuctionObjective::Revenue, 2)
        };
        let spec = random_auction(&mut rng, objective, min_bidders);
        let k = spec.num_states().unwrap();
        let r = verify_jensen_factor(&UtilitySpec::Auction(spec), k, 100_000, 1000 + i).unwrap();
        max_ratio = max_ratio.max(r.max_ratio);
        t.check(r.max_ratio <= 2.0 + 1e-9, || {
            format!("spec {i} ({objective:?}): max ratio {}", r.max_ratio)
        });
    }
    let linf = UtilitySpec::MaxLinear(MaxLinear::linf(2));
    let equality = jensen_ratio(&linf, 0.5, &[1.0, 0.0], &[0.0, 1.0])
        .unwrap()
        .unwrap();
    t.check(equality == 2.0, || {
        format!("infinity-norm equality case gave {equality}")
    });
    t.finish(format!(
        "max sampled ratio {max_ratio:.6}, infinity-norm equality case {equality}"
    ))
}

fn c11_half_value_recipe() -> Outcome {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eps = 0.02;
    let mut worst = f64::INFINITY;
    for i in 0..10 {
        let k = rng.random_range(2..=3usize);
        let prior = mixed_prior(&mut rng, k);
        let n = rng.random_range(1..=3usize);
        let bidders = (0..n)
            .map(|_| {
                let types = rng.random_range(1..=2usize);
                let mut weights: Vec<f64> =
                    (0..types).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= s);
                Bidder {
                    types: weights
                        .into_iter()
                        .map(|weight| BidderType {
                            weight,
                            values: (0..k).map(|_| rng.random_range(0.0..1.0)).collect(),
                        })
                        .collect(),
                }
            })
            .collect();
        let spec = AuctionSpec::new(AuctionObjective::Welfare, bidders).general();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
        let floor = weights
            .iter()
            .zip(prior.as_slice())
            .map(|(b, p)| b * p)
            .fold(f64::INFINITY, f64::min);
        let bound = -rng.random_range(0.3..0.9) * floor;
        let inst = ProblemInstance::new(
            k,
            prior,
            UtilitySpec::Auction(spec),
            vec![ConstraintSpec::ex_post(
                ConstraintKind::NegMinWeighted { weights },
                bound,
            )],
        )
        .unwrap();
        let recipe = half_value_scheme(&inst).unwrap();
        let recipe_value = verify_scheme(&inst, &recipe, 1e-9).unwrap();
        t.check(recipe_value.valid, || {
            format!("instance {i}: recipe scheme invalid")
        });
        let bi = bi_criteria_solve(&inst.with_mode(Mode::ExAnte), eps).unwrap();
        worst = worst.min(recipe_value.utility - (0.5 * bi.value - eps));
        t.check(recipe_value.utility >= 0.5 * bi.value - eps, || {
            format!(
                "instance {i}: recipe {} < bi {} / 2 - eps",
                recipe_value.utility, bi.value
            )
        });
    }
    t.finish(format!("min(recipe - (bi/2 - eps)) {worst:.4}"))
}

fn random_convex(rng: &mut ChaCha8Rng, k: usize, prior: &Posterior) -> ConstraintSpec {
    match rng.random_range(0..5) {
        0 => ConstraintSpec::ex_ante(ConstraintKind::Entropy, 0.0),
        1 => ConstraintSpec::ex_ante(
            ConstraintKind::NegMinWeighted {
                weights: (0..k).map(|_| rng.random_range(0.5..2.0)).collect(),
            },
            0.0,
        ),
        _ => {
            let mut c = random_constraint(rng, k, prior);
            if let ConstraintKind::GroupedKl { scale, .. } = &mut c.kind {
                *scale = scale.abs();
            }
            c
        }
    }
}

fn random_scheme(rng: &mut ChaCha8Rng, k: usize) -> SignalingScheme {
    let n = rng.random_range(2..=8usize);
    let support: Vec<Posterior> = (0..n)
        .map(|_| Posterior::new(sample_point(rng, k)).unwrap())
        .collect();
    let mut probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= s);
    SignalingScheme::new(support, probs).unwrap()
}

fn c12_pooling_steps() -> Outcome {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut total_steps = 0;
    let mut max_drift: f64 = 0.0;
    for run in 0..100 {
        let k = rng.random_range(2..=4usize);
        let scheme = random_scheme(&mut rng, k);
        let prior = Posterior::new(scheme.barycenter()).unwrap();
        let m = rng.random_range(1..=3usize);
        let constraints: Vec<ConstraintSpec> = (0..m)
            .map(|_| {
                let c = random_convex(&mut rng, k, &prior);
                let mean: f64 = scheme
                    .iter()
                    .map(|(q, w)| w * c.eval(q.as_slice(), prior.as_slice()))
                    .sum();
                ConstraintSpec {
                    bound: mean + rng.random_range(0.0..0.05),
                    ..c
                }
            })
            .collect();
        let (out, trace) = match convert_traced(&scheme, &constraints, &prior, &mut ExtremePairs) {
            Ok(v) => v,
            Err(e) => {
                t.check(false, || format!("run {run}: {e}"));
                continue;
            }
        };
        total_steps += trace.steps.len();
        let mut prev = trace.initial_expectations.clone();
        for (s, step) in trace.steps.iter().enumerate() {
            max_drift = max_drift.max(step.plausibility_deviation);
            t.check(step.plausibility_deviation <= 1e-9, || {
                format!("run {run}, step {s}: drift {}", step.plausibility_deviation)
            });
            for (j, (now, before)) in step.expectations.iter().zip(&prev).enumerate() {
                t.check(*now <= *before + 1e-12, || {
                    format!("run {run}, step {s}: E[f_{j}] rose from {before} to {now}")
                });
            }
            prev = step.expectations.clone();
        }
        for (j, (steps, size)) in trace
            .steps_per_constraint
            .iter()
            .zip(&trace.support_at_start)
            .enumerate()
        {
            t.check(*steps < (*size).max(1), || {
                format!("run {run}, constraint {j}: {steps} steps on support {size}")
            });
        }
        let post = ProblemInstance::new(
            k,
            prior.clone(),
            UtilitySpec::MaxLinear(MaxLinear::linf(k)),
            constraints
                .iter()
                .map(|c| ConstraintSpec {
                    mode: Mode::ExPost,
                    ..c.clone()
                })
                .collect(),
        )
        .unwrap();
        let r = verify_scheme(&post, &out, 1e-9).unwrap();
        t.check(r.valid, || format!("run {run}: output not ex post valid"));
    }
    t.finish(format!(
        "{total_steps} pooling steps, max drift {max_drift:.2e}"
    ))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Outcome::new(false, format!("panicked: {msg}"))
    });
    println!(
        "criterion {n:>2} {name:<28} {} ({:.1?}) {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        start.elapsed(),
        outcome.detail
    );
    outcome.pass
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let mut runs = Vec::new();
    let results = [
        run(1, "two-state gap", c1_two_state_gap),
        run(2, "hypercube pooling loss", c2_hypercube_pooling),
        run(3, "jensen-factor gap", c3_jensen_gap),
        run(4, "m+1 gap", c4_prior_gap),
        run(5, "support k+m optimum", c5_support_bound),
        run(6, "grid-LP contract", || c6_fptas(&mut runs)),
        run(7, "single-criteria contract", c7_single_criteria),
        run(8, "support-size bounds", || c8_support(&runs)),
        run(9, "smoothing sandwich", c9_smoothing),
        run(10, "relaxed jensen", c10_jensen),
        run(11, "half-value recipe", c11_half_value_recipe),
        run(12, "pooling step invariants", c12_pooling_steps),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
