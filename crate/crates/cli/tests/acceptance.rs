//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any failed.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shelfwatch_core::anomaly::lof_score;
use shelfwatch_core::classify::{kfold_cv, kfold_partition, CvConfig, KnnClassifier, LabeledSample};
use shelfwatch_core::clock::{Clock, SystemClock};
use shelfwatch_core::features::normalize;
use shelfwatch_core::inventory::{AuditEntry, Catalog, Inventory, InventoryConfig, InventoryError};
use shelfwatch_core::{
    FeatureVector, LandmarkFrame, Point, PoseLabel, ProductRecord, SaleTransaction, ShelfObservation, Size, FEATURE_DIM,
};
use shelfwatch_oracles as oracle;
use shelfwatch_services::cloud::Disposition;
use shelfwatch_services::edge::{AgentConfig, EdgeAgent, RunSummary};
use shelfwatch_services::http::client::CloudClient;
use shelfwatch_sim::pose::DEFAULT_DATASET_SEED;
use shelfwatch_sim::{generate, generate_pose_dataset, run_scenario, PoseParams, Scenario};

const LOF_TOL: f64 = 1e-9;
const NORMALIZE_TOL: f64 = 1e-12;

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(&str, Check); 9] = [
        ("lof-oracle-equivalence", lof_oracle),
        ("lof-symmetry", lof_symmetry),
        ("normalization-invariance", normalization_invariance),
        ("knn-oracle-equivalence", knn_oracle),
        ("cv-partition", cv_partition),
        ("pose-benchmark", pose_benchmark),
        ("inventory-laws", inventory_laws),
        ("conjunction-law-end-to-end", conjunction_law),
        ("fault-injection-restart", fault_injection),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2} s) {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2} s) {reason}");
            }
        }
    }
    std::io::stdout().flush().ok();
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit_s: f64) -> Result<f64, String> {
    let s = started.elapsed().as_secs_f64();
    ensure(s < limit_s, || format!("took {s:.2} s, limit {limit_s} s"))?;
    Ok(s)
}

fn lof_oracle() -> Result<String, String> {
    let started = Instant::now();
    let ns = [20, 50, 200];
    let dims = [2, 136];
    let ks = [2, 5, 10];
    let mut compared = 0;
    let mut worst = 0.0f64;
    for set in 0..50u64 {
        let i = set as usize;
        let (n, dim, k) = (ns[i % 3], dims[(i / 3) % 2], ks[(i / 6) % 3]);
        let pts = oracle::random_points(n, dim, 1000 + set);
        let queries = oracle::random_points(4, dim, 5000 + set);
        for q in queries.iter().chain(pts.iter().take(2)) {
            let got = lof_score(&pts, k, q).map_err(|e| e.to_string())?;
            let want = oracle::lof(&pts, k, q);
            let diff = (got - want).abs();
            worst = worst.max(diff);
            ensure(diff <= LOF_TOL, || {
                format!("set {set} n {n} dim {dim} k {k}: {got} vs {want}")
            })?;
            compared += 1;
        }
    }
    within(started, 30.0)?;
    Ok(format!(
        "{compared} scores over 50 sets, max |diff| {worst:.2e} <= {LOF_TOL:e}"
    ))
}

fn lof_symmetry() -> Result<String, String> {
    let embed = |p: &Vec<f64>| {
        let mut v = vec![0.0; FEATURE_DIM];
        v[..p.len()].copy_from_slice(p);
        v
    };
    let mut configs: Vec<(String, Vec<Vec<f64>>, usize)> = Vec::new();
    for (n, k) in [(5, 2), (8, 3), (12, 4)] {
        configs.push((format!("{n}-gon"), oracle::regular_polygon(n, 2.5), k));
        configs.push((
            format!("{n}-gon in 136d"),
            oracle::regular_polygon(n, 2.5).iter().map(embed).collect(),
            k,
        ));
    }
    for (dim, k) in [(3, 3), (4, 4), (5, 5)] {
        configs.push((format!("{dim}-cube"), oracle::hypercube(dim, 1.5), k));
    }
    let mut points = 0;
    for (name, pts, k) in &configs {
        for p in pts {
            let s = lof_score(pts, *k, p).map_err(|e| e.to_string())?;
            ensure((s - 1.0).abs() <= LOF_TOL, || format!("{name} k {k}: {s}"))?;
            points += 1;
        }
    }
    Ok(format!(
        "{points} points in {} configurations score 1 within {LOF_TOL:e}",
        configs.len()
    ))
}

fn random_frame(rng: &mut ChaCha8Rng) -> LandmarkFrame {
    let origin = Point::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
    let size = Size::new(rng.random_range(10.0..400.0), rng.random_range(10.0..400.0));
    LandmarkFrame {
        camera_id: "cam".into(),
        zone_id: "z".into(),
        timestamp: 0,
        points: (0..68)
            .map(|_| {
                Point::new(
                    origin.x + size.width * rng.random_range(-0.2..1.2),
                    origin.y + size.height * rng.random_range(-0.2..1.2),
                )
            })
            .collect(),
        face_origin: origin,
        face_size: size,
        frame_ref: "r".into(),
    }
}

fn normalization_invariance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(613);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let frame = random_frame(&mut rng);
        let s: f64 = rng.random_range(0.1..=10.0);
        let (tx, ty): (f64, f64) = (rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
        let mut moved = frame.clone();
        for p in &mut moved.points {
            *p = Point::new(s * p.x + tx, s * p.y + ty);
        }
        moved.face_origin = Point::new(s * frame.face_origin.x + tx, s * frame.face_origin.y + ty);
        moved.face_size = Size::new(s * frame.face_size.width, s * frame.face_size.height);
        let a = normalize(&frame).map_err(|e| e.to_string())?;
        let b = normalize(&moved).map_err(|e| e.to_string())?;
        ensure(
            a.values().len() == FEATURE_DIM && b.values().len() == FEATURE_DIM,
            || format!("frame {i}: length {}", b.values().len()),
        )?;
        for (x, y) in a.values().iter().zip(b.values()) {
            worst = worst.max((x - y).abs());
        }
        ensure(worst <= NORMALIZE_TOL, || {
            format!("frame {i} (s = {s}): diff {worst:e}")
        })?;
    }
    Ok(format!(
        "1000 frames, length 136, max |diff| {worst:.2e} <= {NORMALIZE_TOL:e}"
    ))
}

fn knn_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let train_pts = oracle::random_points(300, FEATURE_DIM, 4243);
    let train: Vec<(Vec<f64>, usize)> = train_pts
        .into_iter()
        .map(|p| (p, rng.random_range(0..PoseLabel::COUNT)))
        .collect();
    let samples: Vec<LabeledSample<f64>> = train
        .iter()
        .map(|(p, l)| LabeledSample {
            features: FeatureVector::new(p.clone(), "t", 0).expect("finite"),
            label: PoseLabel::ALL[*l],
        })
        .collect();
    let queries = oracle::random_points(1000, FEATURE_DIM, 4244);
    let mut agree = 0;
    for (i, q) in queries.iter().enumerate() {
        let k = [1, 2, 3, 4, 5, 7, 10, 11][i % 8];
        let model = KnnClassifier::new(k, samples.clone()).map_err(|e| e.to_string())?;
        let got = model.predict(q).index();
        let want = oracle::knn(&train, PoseLabel::COUNT, k, q);
        ensure(got == want, || format!("query {i} k {k}: {got} vs {want}"))?;
        agree += 1;
    }
    Ok(format!("{agree}/1000 queries agree"))
}

fn cv_partition() -> Result<String, String> {
    for seed in [0u64, 7, 1103] {
        let folds = kfold_partition(1103, 10, seed).map_err(|e| e.to_string())?;
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        ensure(sizes == [vec![110; 7], vec![111; 3]].concat(), || {
            format!("seed {seed}: sizes {sizes:?}")
        })?;
        let all: HashSet<usize> = folds.iter().flatten().copied().collect();
        ensure(all.len() == 1103 && all.iter().all(|&i| i < 1103), || {
            format!("seed {seed}: folds cover {} indices", all.len())
        })?;
        let again = kfold_partition(1103, 10, seed).map_err(|e| e.to_string())?;
        ensure(folds == again, || format!("seed {seed}: not deterministic"))?;
    }
    Ok("3 folds of 111, 7 of 110, disjoint, covering, deterministic for 3 seeds".into())
}

// Measured once on the locked dataset (sigma 1.5, seed 1103, CV seed 0).
const PINNED_KNN_CORRECT: usize = 1103;
const PINNED_KNN_K: usize = 1;
const PINNED_LINEAR_CORRECT: usize = 1071;

fn pose_benchmark() -> Result<String, String> {
    let started = Instant::now();
    let data = generate_pose_dataset(&PoseParams::default(), 1103, DEFAULT_DATASET_SEED).map_err(|e| e.to_string())?;
    let report = kfold_cv(&data, &CvConfig::default()).map_err(|e| e.to_string())?;
    let selected = report.selected().mean_accuracy;
    let (knn, linear) = (report.knn.mean_accuracy, report.linear.mean_accuracy);
    ensure(selected >= 0.95, || format!("selected accuracy {selected:.4} < 0.95"))?;
    ensure(knn >= 0.55 && linear >= 0.55, || {
        format!("kNN {knn:.4} / linear {linear:.4} below 0.55")
    })?;
    let knn_correct: usize = report.knn.fold_correct.iter().sum();
    let linear_correct: usize = report.linear.fold_correct.iter().sum();
    ensure(
        knn_correct == PINNED_KNN_CORRECT
            && report.knn.k == Some(PINNED_KNN_K)
            && linear_correct == PINNED_LINEAR_CORRECT,
        || {
            format!(
                "drifted from pinned values: kNN k={:?} {knn_correct}, linear {linear_correct}",
                report.knn.k
            )
        },
    )?;
    let secs = within(started, 60.0)?;
    Ok(format!(
        "selected {:?} {selected:.4}, kNN k={} {knn:.4}, linear {linear:.4}, in {secs:.1} s",
        report.selected_kind, PINNED_KNN_K
    ))
}

fn law_catalog() -> Catalog {
    Catalog {
        products: (0..4)
            .map(|i| ProductRecord {
                product_id: format!("p{i}"),
                zone_id: format!("z{}", i % 2),
                display_name: format!("Product {i}"),
                expected_count: 40,
            })
            .collect(),
    }
}

fn inventory_laws() -> Result<String, String> {
    // Sequential: a model of expected stock, with duplicate tx ids and oversells.
    let mut oversells = 0;
    let mut duplicates = 0;
    for seed in 0..20u64 {
        let inv = Inventory::new(law_catalog(), InventoryConfig::default()).map_err(|e| e.to_string())?;
        let mut model = [40u32; 4];
        let mut applied: HashSet<String> = HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for step in 0..300i64 {
            let p = rng.random_range(0..4usize);
            if rng.random_bool(0.6) {
                let tx = SaleTransaction {
                    tx_id: format!("tx-{}", rng.random_range(0..120)),
                    product_id: format!("p{p}"),
                    quantity: rng.random_range(1..8),
                    timestamp: step,
                };
                let result = inv.apply_sale(&tx);
                if applied.contains(&tx.tx_id) {
                    duplicates += 1;
                    ensure(matches!(&result, Ok(r) if !r.applied), || {
                        format!("seed {seed}: replayed {} applied", tx.tx_id)
                    })?;
                } else if tx.quantity > model[p] {
                    oversells += 1;
                    ensure(matches!(result, Err(InventoryError::Oversell { .. })), || {
                        format!("seed {seed}: oversell of {} accepted", tx.product_id)
                    })?;
                } else {
                    ensure(matches!(&result, Ok(r) if r.applied), || {
                        format!("seed {seed}: sale rejected: {result:?}")
                    })?;
                    model[p] -= tx.quantity;
                    applied.insert(tx.tx_id.clone());
                }
            } else {
                let obs = ShelfObservation {
                    zone_id: format!("z{}", p % 2),
                    product_id: format!("p{p}"),
                    observed_count: rng.random_range(0..50),
                    timestamp: step,
                };
                inv.record_observation(&obs).map_err(|e| e.to_string())?;
            }
            for (i, want) in model.iter().enumerate() {
                let got = inv
                    .get_product(&format!("p{i}"))
                    .map_err(|e| e.to_string())?
                    .expected_count;
                ensure(got == *want, || {
                    format!("seed {seed} step {step}: p{i} has {got}, model {want}")
                })?;
            }
        }
        let log_len = inv.audit_log().len();
        for i in 0..4 {
            let id = format!("p{i}");
            let a = inv.reconcile(&id, 300).map_err(|e| e.to_string())?;
            let b = inv.reconcile(&id, 300).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("seed {seed}: reconcile of {id} not repeatable"))?;
            ensure(a.deficit == a.expected_count.saturating_sub(a.observed_count), || {
                format!("seed {seed}: deficit of {id} inconsistent")
            })?;
        }
        ensure(inv.audit_log().len() == log_len, || {
            format!("seed {seed}: reconcile wrote to the log")
        })?;
    }

    // Interleaved writers sharing one tx id space.
    let inv = Arc::new(Inventory::new(law_catalog(), InventoryConfig::default()).map_err(|e| e.to_string())?);
    let handles: Vec<_> = (0..8u64)
        .map(|w| {
            let inv = Arc::clone(&inv);
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + w);
                let mut accepted = Vec::new();
                for n in 0..150 {
                    let tx = SaleTransaction {
                        tx_id: format!("tx-{}", rng.random_range(0..200)),
                        product_id: format!("p{}", rng.random_range(0..4)),
                        quantity: rng.random_range(1..4),
                        timestamp: n,
                    };
                    match inv.apply_sale(&tx) {
                        Ok(r) if r.applied => accepted.push(tx),
                        Ok(_) | Err(InventoryError::Oversell { .. }) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
                accepted
            })
        })
        .collect();
    let mut accepted = Vec::new();
    for h in handles {
        accepted.extend(h.join().map_err(|_| "writer panicked".to_owned())?);
    }
    let ids: HashSet<_> = accepted.iter().map(|t| &t.tx_id).collect();
    ensure(ids.len() == accepted.len(), || "a tx id was applied twice".into())?;
    for i in 0..4 {
        let id = format!("p{i}");
        let sold: u32 = accepted.iter().filter(|t| t.product_id == id).map(|t| t.quantity).sum();
        let left = inv.get_product(&id).map_err(|e| e.to_string())?.expected_count;
        ensure(sold <= 40 && left == 40 - sold, || {
            format!("{id}: {left} left after selling {sold}")
        })?;
        let logged: u32 = inv
            .audit_log()
            .iter()
            .filter_map(|e| match e {
                AuditEntry::Sale { tx, .. } if tx.product_id == id => Some(tx.quantity),
                _ => None,
            })
            .sum();
        ensure(logged == sold, || {
            format!("{id}: audit log sums to {logged}, accepted {sold}")
        })?;
    }
    Ok(format!(
        "20 sequential runs ({oversells} oversells rejected, {duplicates} replays ignored) and 8 interleaved writers conserve stock"
    ))
}

fn conjunction_law() -> Result<String, String> {
    let expected = [
        ("clean-retail", None),
        ("single-theft", Some("p-razors")),
        ("anomaly-without-theft", None),
        ("theft-without-anomaly", None),
    ];
    let mut summary = Vec::new();
    for (name, product) in expected {
        let scenario = Scenario::builtin(name).map_err(|e| e.to_string())?;
        let started = Instant::now();
        let report = run_scenario(&scenario);
        let secs = within(started, 10.0).map_err(|e| format!("{name}: {e}"))?;
        ensure(report.passed(), || format!("{name}: {}", report.table()))?;
        let products: Vec<&str> = report.alerts.iter().map(|a| a.product_id.as_str()).collect();
        ensure(products == product.into_iter().collect::<Vec<_>>(), || {
            format!("{name}: alerts on {products:?}")
        })?;
        ensure(report.false_positives == 0, || {
            format!("{name}: {} false positives", report.false_positives)
        })?;
        ensure(report.true_positives + report.misses == report.thefts.len(), || {
            format!("{name}: TP + miss != thefts")
        })?;
        let again = run_scenario(&scenario);
        ensure(report.without_latencies() == again.without_latencies(), || {
            format!("{name}: second run differs")
        })?;
        summary.push(format!("{name} {} alert(s) in {secs:.2} s", products.len()));
    }
    Ok(summary.join(", "))
}

struct CloudProcess {
    child: Child,
    url: String,
}

impl CloudProcess {
    fn start(listen: &str, catalog: &Path, state: &Path) -> Result<Self, String> {
        // A just-freed port can take a moment to become bindable again.
        let mut last = String::new();
        for _ in 0..50 {
            let mut child = Command::new(env!("CARGO_BIN_EXE_shelfwatch-cloud"))
                .args([
                    "--listen",
                    listen,
                    "--control-token",
                    "s3cret",
                    "--log-level",
                    "error",
                    "--catalog",
                ])
                .arg(catalog)
                .arg("--state-dir")
                .arg(state)
                .stdout(Stdio::piped())
                .stderr(Stdio::null())
                .spawn()
                .map_err(|e| e.to_string())?;
            let mut line = String::new();
            BufReader::new(child.stdout.take().expect("piped"))
                .read_line(&mut line)
                .map_err(|e| e.to_string())?;
            if let Some(url) = line.trim().strip_prefix("listening on ") {
                return Ok(Self {
                    child,
                    url: url.to_owned(),
                });
            }
            last = format!("exit {:?}", child.wait().map_err(|e| e.to_string())?);
            thread::sleep(Duration::from_millis(100));
        }
        Err(format!("cloud did not start: {last}"))
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for CloudProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn fault_injection() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = Scenario::builtin("anomaly-without-theft").map_err(|e| e.to_string())?;
    let catalog = dir.path().join("catalog.json");
    std::fs::write(
        &catalog,
        serde_json::to_vec(&Catalog {
            products: scenario.catalog.clone(),
        })
        .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let frames = dir.path().join("frames.ndjson");
    let generated = generate(&scenario).map_err(|e| e.to_string())?;
    std::fs::write(&frames, generated.frames_ndjson()).map_err(|e| e.to_string())?;
    let state = dir.path().join("state");

    let cloud = CloudProcess::start("127.0.0.1:0", &catalog, &state)?;
    let url = cloud.url.clone();
    let addr = url.trim_start_matches("http://").to_owned();
    let client = CloudClient::new(&url, None);
    // One razor missing from the aisle: every suspicion there is corroborated.
    let now = SystemClock.now_ms();
    for p in scenario.catalog.iter().filter(|p| p.zone_id == scenario.camera.zone_id) {
        let missing = u32::from(p.product_id == "p-razors");
        client
            .record_observation(&ShelfObservation {
                zone_id: p.zone_id.clone(),
                product_id: p.product_id.clone(),
                observed_count: p.expected_count - missing,
                timestamp: now,
            })
            .map_err(|e| e.to_string())?;
    }

    let lof = &scenario.lof;
    let config_text = format!(
        "camera_id = \"{}\"\nzone_id = \"{}\"\nendpoint = \"{url}\"\ncontrol_token = \"s3cret\"\nreplay_speed = 10\n\
         queue_path = \"outbox.jsonl\"\npoll_interval_ms = 200\n\
         [lof]\nk = {}\nthreshold = {:?}\nwindow_capacity = {}\nwarmup_min = {}\n\
         [backoff]\ninitial_ms = 20\nmax_ms = 200\n",
        scenario.camera.camera_id, scenario.camera.zone_id, lof.k, lof.threshold, lof.window_capacity, lof.warmup_min
    );
    let config_path = dir.path().join("agent.toml");
    std::fs::write(&config_path, &config_text).map_err(|e| e.to_string())?;

    // 60 s of frames at 10x: bursts at about 2 s and 4 s. The cloud is down
    // from 2.5 s to 5 s, so the second burst has to wait in the outbox.
    let mut edge = Command::new(env!("CARGO_BIN_EXE_shelfwatch-edge"))
        .arg("--config")
        .arg(&config_path)
        .arg("--source")
        .arg(&frames)
        .args(["--log-level", "error"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    thread::sleep(Duration::from_millis(2500));
    let alive = |edge: &mut Child| matches!(edge.try_wait(), Ok(None));
    ensure(alive(&mut edge), || "edge finished before the cloud went down".into())?;
    cloud.kill();
    thread::sleep(Duration::from_millis(2500));
    let cloud = CloudProcess::start(&addr, &catalog, &state)?;
    ensure(alive(&mut edge), || "edge finished while the cloud was down".into())?;
    let output = edge.wait_with_output().map_err(|e| e.to_string())?;
    ensure(output.status.success(), || {
        format!(
            "edge exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr)
        )
    })?;
    let summary: RunSummary = serde_json::from_slice(&output.stdout).map_err(|e| e.to_string())?;

    // The same frames through an in-process agent give the same events.
    let config = AgentConfig::from_toml(&config_text).map_err(|e| e.to_string())?;
    let mut agent = EdgeAgent::new(&config).map_err(|e| e.to_string())?;
    let mut events = Vec::new();
    for frame in generated.frames() {
        if let Some(e) = agent.process_frame(frame).map_err(|e| e.to_string())? {
            events.push(e);
        }
    }
    let ids: Vec<String> = events.iter().map(|e| e.event_id.clone()).collect();
    ensure(summary.emitted == ids, || {
        format!("edge emitted {:?}, expected {ids:?}", summary.emitted)
    })?;
    ensure(!ids.is_empty(), || "no events were emitted".into())?;
    ensure(
        summary.undelivered == 0 && summary.dropped == 0 && summary.rejected == 0,
        || format!("lost events: {summary:?}"),
    )?;

    let client = CloudClient::new(&cloud.url, None);
    let status = client
        .zone_status(&scenario.camera.zone_id)
        .map_err(|e| e.to_string())?;
    ensure(status.events == ids.len(), || {
        format!("cloud holds {} of {} events", status.events, ids.len())
    })?;
    let alerts = client.alerts(0).map_err(|e| e.to_string())?.alerts;
    ensure(alerts.len() == 1 && alerts[0].product_id == "p-razors", || {
        format!("alerts: {alerts:?}")
    })?;

    for event in &events {
        let d = client.post_event(event).map_err(|e| e.to_string())?;
        ensure(d == Disposition::Duplicate, || {
            format!("replay of {} gave {d:?}", event.event_id)
        })?;
    }
    let after = client.alerts(0).map_err(|e| e.to_string())?.alerts;
    ensure(after == alerts, || "replays changed the alert feed".into())?;
    Ok(format!(
        "cloud process killed and restarted mid-run; {}/{} events received, {} replays deduplicated, 1 alert",
        status.events,
        ids.len(),
        events.len()
    ))
}
