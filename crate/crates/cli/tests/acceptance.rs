//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rla_core::assorters::Vote;
use rla_core::batch::{Batch, BatchCollection, BatchDrawState};
use rla_core::martingale::{alpha_step, eta_to_lambda, init_test};
use rla_core::sim::tables::{comparison_methods, DEFAULT_SEED, DESK_WR_CAP, TABLE5_MASSES, TABLE6_MASSES};
use rla_core::sim::{
    geo_mean_ratio_summary, run_cell, run_experiment, Condition, CostRule, ExperimentSpec, PopulationSpec,
};
use rla_core::{ComparatorSpec, EstimatorSpec, Sampling, SequentialTest, ShrinkTrunc, Status, TestConfig};
use rla_service::session::{Interpretation, Interpretations};
use rla_service::{AssertionConfig, AssorterSpec, Session, SessionConfig, SessionStore};

const REL_TOL_TABLES: f64 = 0.10;
const ABS_TOL_TABLE5: f64 = 1.0;
const SUMMARY_TARGET: f64 = 1.14;
const SUMMARY_TOL: f64 = 0.15;
const RISK_REPS: u64 = 10_000;
/// 0.05 + 4·√(0.05·0.95/10⁴).
const RISK_MAX: f64 = 0.0587;
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_STREAMS: usize = 1000;
const MEAN_REPS: usize = 100_000;
const MEAN_SE: f64 = 4.0;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn unit() -> TestConfig {
    TestConfig::with_replacement(0.05, 1.0, 0.5)
}

fn alpha_st(eta: f64, d: f64) -> ComparatorSpec {
    ComparatorSpec::alpha(EstimatorSpec::ShrinkTrunc(ShrinkTrunc::new(eta, d, &unit())))
}

fn cell(method: ComparatorSpec, condition: Condition, reps: u64) -> f64 {
    run_cell(&ExperimentSpec { method, condition, reps, seed: DEFAULT_SEED, alpha: 0.05 }).unwrap().mean_n
}

fn golden(cells: &[(&str, f64, f64)], within: impl Fn(f64, f64) -> bool) -> Outcome {
    let pass = cells.iter().all(|&(_, got, want)| within(got, want));
    let detail = cells.iter().map(|(name, got, want)| format!("{name}: {got:.2} vs {want}")).collect::<Vec<_>>();
    outcome(pass, detail.join("; "))
}

fn relative(got: f64, want: f64) -> bool {
    (got - want).abs() <= REL_TOL_TABLES * want
}

fn t1_golden() -> Outcome {
    let wr = |theta| Condition {
        population: PopulationSpec::binary(theta, 10_000),
        sampling: Sampling::WithReplacement,
        cap: Some(DESK_WR_CAP),
        cost: CostRule::Observed,
    };
    let fixed = cell(ComparatorSpec::alpha(EstimatorSpec::Fixed { eta: 0.7 }), wr(0.7), 1000);
    let d500 = cell(alpha_st(0.7, 500.0), wr(0.7), 1000);
    let d10 = cell(alpha_st(0.7, 10.0), wr(0.6), 1000);
    golden(
        &[("Fixed .7 @ .7", fixed, 40.0), ("ALPHA .7 d500 @ .7", d500, 39.0), ("ALPHA .7 d10 @ .6", d10, 195.0)],
        relative,
    )
}

fn t1_overflow() -> Outcome {
    // BRAVO with η above θ: listed as over 10⁷ draws; here a 10⁵ budget and 200 reps.
    let cells = [(0.6, 0.7), (0.55, 0.6), (0.51, 0.52)];
    let mut flags = Vec::new();
    for (theta, eta) in cells {
        let row = run_cell(&ExperimentSpec {
            method: ComparatorSpec::alpha(EstimatorSpec::Fixed { eta }),
            condition: Condition {
                population: PopulationSpec::binary(theta, 10_000),
                sampling: Sampling::WithReplacement,
                cap: Some(DESK_WR_CAP),
                cost: CostRule::Observed,
            },
            reps: 200,
            seed: DEFAULT_SEED,
            alpha: 0.05,
        })
        .unwrap();
        flags.push((theta, eta, row.overflow));
    }
    let pass = flags.iter().all(|f| f.2);
    let detail = flags.iter().map(|(t, e, o)| format!("θ={t} η={e}: overflow={o}")).collect::<Vec<_>>();
    outcome(pass, detail.join("; "))
}

fn t2_golden() -> Outcome {
    let wor = |theta| Condition {
        population: PopulationSpec::binary(theta, 20_000),
        sampling: Sampling::WithoutReplacement,
        cap: Some(2000),
        cost: CostRule::RecountAddIn,
    };
    let sprt = cell(ComparatorSpec::SprtWor { eta: 0.7 }, wor(0.7), 10_000);
    let a100 = cell(alpha_st(0.7, 100.0), wor(0.7), 10_000);
    let a1000 = cell(alpha_st(0.55, 1000.0), wor(0.55), 10_000);
    golden(
        &[("SPRT .7 @ .7", sprt, 38.0), ("ALPHA .7 d100 @ .7", a100, 38.0), ("ALPHA .55 d1000 @ .55", a1000, 823.0)],
        relative,
    )
}

fn mix(m: f64) -> Condition {
    Condition {
        population: PopulationSpec::comparison_mix(m, 10_000),
        sampling: Sampling::WithoutReplacement,
        cap: None,
        cost: CostRule::Observed,
    }
}

fn t5_golden() -> Outcome {
    let kelly = cell(ComparatorSpec::AprioriKelly { eta: 0.99 }, mix(0.99), 10_000);
    let a10 = cell(alpha_st(0.9, 10.0), mix(0.9), 10_000);
    golden(&[("apKelly .99 @ m=.99", kelly, 5.0), ("ALPHA .9 d10 @ m=.9", a10, 6.0)], |g, w| {
        (g - w).abs() <= ABS_TOL_TABLE5
    })
}

fn t7_summary() -> Outcome {
    let conditions: Vec<Condition> = TABLE5_MASSES.iter().chain(&TABLE6_MASSES).map(|&m| mix(m)).collect();
    let rows = run_experiment(&conditions, &comparison_methods(), 1000, DEFAULT_SEED, 0.05).unwrap();
    let scores = geo_mean_ratio_summary(&rows).unwrap();
    let target = scores.iter().find(|s| s.method == "alpha" && s.params == "eta=0.9;d=10").unwrap();
    let rivals: Vec<_> = scores
        .iter()
        .filter(|s| matches!(s.method.as_str(), "apriori_kelly" | "kaplan_wald" | "kaplan_kolmogorov"))
        .collect();
    let best_rival = rivals.iter().min_by(|a, b| a.score.total_cmp(&b.score)).unwrap();
    let pass = (target.score - SUMMARY_TARGET).abs() <= SUMMARY_TOL && target.score < best_rival.score;
    outcome(
        pass,
        format!(
            "ALPHA .9 d10 score {:.3} (target {SUMMARY_TARGET} ± {SUMMARY_TOL}); best apKelly/Kaplan: {} {} at {:.3}",
            target.score, best_rival.method, best_rival.params, best_rival.score
        ),
    )
}

/// Mirror-image batches, so the assorter mean is exactly one half.
fn null_batches(rng: &mut ChaCha8Rng) -> BatchCollection {
    let mut batches = Vec::new();
    for i in 0..40 {
        let cards = rng.random_range(5..60u64);
        let a = rng.random_range(0..=cards) as f64;
        for (tag, total) in [("a", a), ("b", cards as f64 - a)] {
            batches.push(Batch { id: format!("{i}{tag}"), cards, total, bound: cards as f64 });
        }
    }
    BatchCollection::new(batches).unwrap()
}

fn risk() -> Outcome {
    let condition = Condition {
        population: PopulationSpec::binary(0.5, 500),
        sampling: Sampling::WithoutReplacement,
        cap: None,
        cost: CostRule::Observed,
    };
    let methods = [
        alpha_st(0.6, 100.0),
        ComparatorSpec::alpha(EstimatorSpec::Fixed { eta: 0.55 }),
        ComparatorSpec::alpha(EstimatorSpec::FromLambda { lambda: 0.4 }),
        ComparatorSpec::KaplanWald { g: 0.5 },
        ComparatorSpec::KaplanKolmogorov { g: 0.1 },
        ComparatorSpec::sq_kelly(),
    ];
    let rows = run_experiment(std::slice::from_ref(&condition), &methods, RISK_REPS, DEFAULT_SEED, 0.05).unwrap();
    let mut rates: Vec<(String, f64)> = rows.iter().map(|r| (r.method_label(), r.reject_rate)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let collection = null_batches(&mut rng);
    assert_eq!(collection.card_mean(), 0.5);
    let start = BatchDrawState::new(collection, 0.05, 0.5, Sampling::WithoutReplacement).unwrap();
    let est = EstimatorSpec::ShrinkTrunc(ShrinkTrunc::new(0.6, 10.0, &unit()));
    let mut rejected = 0;
    for _ in 0..RISK_REPS {
        let mut s = start.clone();
        while s.test().is_running() {
            let draw = s.pps_draw(&mut rng).unwrap();
            s.batch_alpha_step(&draw, &est).unwrap();
        }
        rejected += usize::from(s.test().status == Status::Rejected);
    }
    rates.push(("batch PPS ALPHA .6 d10".into(), rejected as f64 / RISK_REPS as f64));
    let pass = rates.iter().all(|r| r.1 <= RISK_MAX);
    let detail = rates.iter().map(|(m, r)| format!("{m}: {r:.4}")).collect::<Vec<_>>();
    outcome(pass, format!("max {RISK_MAX}; {}", detail.join("; ")))
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= ORACLE_TOL * b.abs().max(1.0)
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    // η form (engine) against λ form ln(1 + λ(x − μ)) summed in the test.
    for stream in 0..ORACLE_STREAMS {
        let eta: f64 = rng.random_range(0.5..0.75);
        let config = TestConfig::with_replacement(1e-300, 1.0, 0.5);
        let lambda = eta_to_lambda(eta, 0.5, 1.0).unwrap();
        let mut test = SequentialTest::new(&ComparatorSpec::AprioriKelly { eta }, config).unwrap();
        let mut log_t = 0.0;
        for j in 0..100 {
            let x: f64 = rng.random();
            log_t += (1.0 + lambda * (x - 0.5)).ln();
            let got = test.step(x).unwrap().log_t;
            if !close(got, log_t) {
                failures.push(format!("λ form stream {stream} draw {j}: {got} vs {log_t}"));
                break;
            }
        }
    }

    // BRAVO: T = (η/μ)^w ((1 − η)/(1 − μ))^l on 0/1 streams.
    for stream in 0..ORACLE_STREAMS {
        let eta: f64 = rng.random_range(0.51..0.99);
        let config = TestConfig::with_replacement(1e-300, 1.0, 0.5);
        let mut test = SequentialTest::new(&ComparatorSpec::alpha(EstimatorSpec::Fixed { eta }), config).unwrap();
        let (mut w, mut l) = (0.0f64, 0.0f64);
        for j in 0..100 {
            let x = f64::from(rng.random_bool(0.55));
            if x == 1.0 {
                w += 1.0
            } else {
                l += 1.0
            }
            let want = w * (eta / 0.5).ln() + l * ((1.0 - eta) / 0.5).ln();
            let got = test.step(x).unwrap().log_t;
            if !close(got, want) {
                failures.push(format!("BRAVO stream {stream} draw {j}: {got} vs {want}"));
                break;
            }
        }
    }

    // Singleton batches, taken in a fixed order, against the ballot-level test.
    for stream in 0..100 {
        let n = rng.random_range(10..200);
        let xs: Vec<f64> = (0..n).map(|_| [0.0, 0.5, 1.0, rng.random()][rng.random_range(0..4)]).collect();
        let items: Vec<(u64, f64)> = xs.iter().map(|&x| (1, x)).collect();
        let cfg = TestConfig::without_replacement(0.05, 1.0, 0.5, n as u64);
        let est = EstimatorSpec::ShrinkTrunc(ShrinkTrunc::new(0.6, 10.0, &cfg));
        let mut batch = BatchDrawState::new(
            BatchCollection::with_default_bounds(&items, 1.0).unwrap(),
            0.05,
            0.5,
            Sampling::WithoutReplacement,
        )
        .unwrap();
        let mut ballot = init_test(&cfg, &est).unwrap();
        for (k, &x) in xs.iter().enumerate() {
            if !ballot.is_running() {
                break;
            }
            ballot = alpha_step(&ballot, x, &cfg, &est).unwrap();
            let d = batch.observe(k).unwrap();
            let t = *batch.batch_alpha_step(&d, &est).unwrap();
            if !close(t.log_t, ballot.log_t) || t.status != ballot.status {
                failures.push(format!("singleton stream {stream} draw {k}: {} vs {}", t.log_t, ballot.log_t));
                break;
            }
        }
    }

    // Blank card: x = μ = u/2 leaves T unchanged, bit for bit.
    for _ in 0..ORACLE_STREAMS {
        let u: f64 = rng.random_range(0.5..10.0);
        let eta = rng.random_range(u / 2.0..u);
        let cfg = TestConfig::with_replacement(0.05, u, u / 2.0);
        let est = EstimatorSpec::Fixed { eta };
        let s = init_test(&cfg, &est).unwrap();
        let s = alpha_step(&s, u, &cfg, &est).unwrap();
        let t = alpha_step(&s, u / 2.0, &cfg, &est).unwrap();
        if t.log_t != s.log_t {
            failures.push(format!("blank card u={u} η={eta}: {} -> {}", s.log_t, t.log_t));
        }
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!(
            "λ/η and BRAVO on {ORACLE_STREAMS} streams each, 100 singleton-batch streams, {ORACLE_STREAMS} blank cards"
        )
    } else {
        failures.into_iter().take(3).collect::<Vec<_>>().join("; ")
    };
    outcome(pass, detail)
}

/// Walks every draw sequence, checking E[Â | history] at each node.
fn enumerate(state: &BatchDrawState, worst: &mut f64, nodes: &mut usize) {
    let remaining = state.remaining().to_vec();
    if remaining.is_empty() || !state.test().is_running() {
        return;
    }
    let batches = state.collection().batches();
    let cards: u64 = remaining.iter().map(|&r| batches[r].cards).sum();
    let truth = remaining.iter().map(|&r| batches[r].total).sum::<f64>() / cards as f64;
    let mut expected = 0.0;
    for &k in &remaining {
        let mut next = state.clone();
        let draw = next.observe(k).unwrap();
        expected += state.selection_probability(k) * draw.value;
        next.batch_alpha_step(&draw, &EstimatorSpec::Fixed { eta: 0.9 }).unwrap();
        enumerate(&next, worst, nodes);
    }
    *worst = worst.max((expected - truth).abs() / truth.max(1.0));
    *nodes += 1;
}

fn pps_unbiased() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst, mut nodes) = (0.0f64, 0usize);
    for size in 1..=6 {
        for _ in 0..5 {
            let batches = (0..size)
                .map(|i| {
                    let cards = rng.random_range(1..40u64);
                    let total = rng.random_range(0.0..=cards as f64);
                    // Bounds between the total and twice the card count.
                    let bound = rng.random_range(cards as f64..=2.0 * cards as f64);
                    Batch { id: format!("b{i}"), cards, total, bound }
                })
                .collect();
            let c = BatchCollection::new(batches).unwrap();
            // μ₀ = 1 keeps every node reachable; α tiny keeps the test running.
            let s = BatchDrawState::new(c, 1e-300, 1.0, Sampling::WithoutReplacement).unwrap();
            enumerate(&s, &mut worst, &mut nodes);
        }
    }
    outcome(worst <= ORACLE_TOL, format!("{nodes} histories, worst relative error {worst:.2e}"))
}

fn martingale_mean() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let config = TestConfig::with_replacement(1e-300, 1.0, 0.5);
    let spec = alpha_st(0.6, 10.0);
    let mut values = Vec::with_capacity(MEAN_REPS);
    for _ in 0..MEAN_REPS {
        let mut t = SequentialTest::new(&spec, config).unwrap();
        for _ in 0..5 {
            t.step(f64::from(rng.random_bool(0.5))).unwrap();
        }
        values.push(t.state().t());
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let z = (mean - 1.0) / se;
    outcome(z.abs() <= MEAN_SE, format!("mean T_5 = {mean:.5}, SE {se:.5}, z = {z:.2}"))
}

fn determinism() -> Outcome {
    let mut notes = Vec::new();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let out = Command::new(env!("CARGO_BIN_EXE_sim"))
            .args(["tables", "t1", "--reps", "50", "--cap", "20000", "--out-dir"])
            .arg(dir.path())
            .output()
            .unwrap();
        if !out.status.success() {
            return outcome(false, String::from_utf8_lossy(&out.stderr).to_string());
        }
    }
    let a = std::fs::read(dirs[0].path().join("t1.csv")).unwrap();
    let b = std::fs::read(dirs[1].path().join("t1.csv")).unwrap();
    let tables_ok = a == b;
    notes.push(format!("t1 CSV identical: {tables_ok} ({} bytes)", a.len()));

    let store_dir = tempfile::tempdir().unwrap();
    let config = SessionConfig {
        session_id: Some("replay".into()),
        seed: 31_337,
        population: Some(20_000),
        sampling: Sampling::WithoutReplacement,
        alpha: 0.05,
        assertions: ["a", "b", "c"]
            .iter()
            .zip([None, Some(ComparatorSpec::sq_kelly()), Some(ComparatorSpec::KaplanWald { g: 0.5 })])
            .map(|(id, test)| AssertionConfig {
                id: id.to_string(),
                assorter: AssorterSpec::Plurality { winner: "w".into(), loser: format!("l{id}") },
                eta0: 0.55,
                test,
            })
            .collect(),
        batches: None,
        compliance_attested: true,
    };
    let mut live = Session::create(config.clone(), chrono::Utc::now()).unwrap();
    {
        let store = SessionStore::open(store_dir.path()).unwrap();
        store.create(config).unwrap();
    }
    let mut vote_rng = ChaCha8Rng::seed_from_u64(3);
    for seq in 1..=60 {
        // A fresh store each step stands in for a restarted process.
        let store = SessionStore::open(store_dir.path()).unwrap();
        let mut running = live
            .report()
            .assertions
            .iter()
            .filter(|a| a.status == Status::Running)
            .map(|a| a.id.clone())
            .collect::<Vec<_>>();
        if running.is_empty() {
            break;
        }
        store.draw("replay", 1).unwrap();
        live.draw(1).unwrap();
        let vote = if vote_rng.random_bool(0.52) { Vote::Winner } else { Vote::Loser };
        let entries =
            running.drain(..).map(|id| (id, rla_core::assorters::CardInterpretation::Vote { vote })).collect();
        let batch = Interpretations::One(Interpretation { seq, entries });
        store.record("replay", &batch).unwrap();
        live.record(&batch, chrono::Utc::now()).unwrap();
    }
    let replayed = SessionStore::open(store_dir.path()).unwrap().load("replay").unwrap();
    let replay_ok = replayed.states() == live.states();
    notes.push(format!("replayed TestStates identical: {replay_ok}"));
    outcome(tables_ok && replay_ok, notes.join("; "))
}

fn main() -> ExitCode {
    let checks: [Check; 10] = [
        ("t1-golden", t1_golden),
        ("t1-overflow", t1_overflow),
        ("t2-golden", t2_golden),
        ("t5-golden", t5_golden),
        ("t7-summary-score", t7_summary),
        ("risk-limit", risk),
        ("oracle-equivalence", oracles),
        ("pps-unbiased", pps_unbiased),
        ("martingale-mean", martingale_mean),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        println!("{} {name} ({secs:.1}s): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        println!("acceptance: all {} criteria pass", checks.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria fail", checks.len());
        ExitCode::FAILURE
    }
}
