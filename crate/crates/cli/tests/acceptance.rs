//! One PASS/FAIL line per primary acceptance criterion, written straight to
//! stderr so it shows up in `cargo test` output without `--nocapture`.

use std::io::Write;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use copresence_core::config::SessionConfig;
use copresence_core::netdiag::FaultProfile;
use copresence_core::protocol::*;
use copresence_core::psychometrics::instruments::snap_scores;
use copresence_core::psychometrics::synth::{matched_histogram, paired_cohort};
use copresence_core::psychometrics::*;
use copresence_core::simdyn::*;
use copresence_core::spatial::*;
use copresence_core::states::{reference_sequences, ParamValue};
use copresence_session::bot::{run_ensemble, shipped_script};
use copresence_session::server::{start, ServerOptions};
use copresence_session::transport::{connect, Connection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Default)]
struct Sheet {
    rows: Vec<(String, bool, String)>,
}

impl Sheet {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
        let _ = std::io::stderr().write_all(line.as_bytes());
        self.rows.push((name.into(), pass, detail));
    }
}

fn cohort() -> [CohortSummary; 4] {
    let (c, _) = bundled_reference();
    Factor::ALL.map(|f| c.summary(f).unwrap().unwrap())
}

fn sm2_reproduction(sheet: &mut Sheet) {
    let started = Instant::now();
    let c = cohort();
    let (_, refs) = bundled_reference();
    let (mut cells, mut worst) = (0, 0.0f64);
    for study in &refs {
        for f in Factor::ALL {
            let (Some(s), Some(printed)) = (study.summary(f), study.printed_p[f as usize]) else { continue };
            let p = ttest_two_sample_summary(&c[f as usize], &s.unwrap(), true).unwrap().p_two_sided;
            worst = worst.max((p - printed).abs());
            cells += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    sheet.record(
        "reference table p values",
        worst <= 5e-5 && elapsed < 1.0 && cells >= 104,
        format!("{cells} populated cells, max |p - printed| = {worst:.2e} (tol 5e-5), {elapsed:.3} s (limit 1 s)"),
    );
}

fn sm1_pipeline(sheet: &mut Sheet) {
    let rows: Vec<FactorScores> = bundled_sm1().iter().map(snap_scores).collect();
    let expect = [(57.2, 26.6), (49.0, 22.4), (63.3, 18.7), (59.5, 21.6)];
    let mut ok = true;
    let mut parts = Vec::new();
    for f in Factor::ALL {
        let col: Vec<f64> = rows.iter().map(|r| r.get(f)).collect();
        let s = cohort_summary(&col).unwrap();
        let (m, sd) = expect[f as usize];
        ok &= (s.mean - m).abs() <= 0.05 && (s.sd - sd).abs() <= 0.15;
        parts.push(format!("{} {:.3}/{:.3}", f.label(), s.mean, s.sd));
    }
    sheet.record("cohort table summaries", ok, format!("{} (tol 0.05 mean, 0.15 sd)", parts.join(", ")));

    let complete = bundled_sm1().iter().filter(|r| complete_mte(r)).count();
    sheet.record(
        "complete mystical experience rate",
        (16..=18).contains(&complete),
        format!("{complete}/58 = {:.1}% (target 17 +- 1)", 100.0 * complete as f64 / 58.0),
    );
}

fn intensity_bins(sheet: &mut Sheet) {
    let (_, refs) = bundled_reference();
    let s = summarize(&compare_to_reference(&cohort(), &refs, 0.05).unwrap());
    sheet.record(
        "comparison classification",
        s.more_intense_all == 3 && s.indistinguishable_all == 3 && s.indistinguishable_three == 4,
        format!(
            "{} more intense on all 4, {} indistinguishable on all 4, {} on exactly 3 (targets 3, 3, 4)",
            s.more_intense_all, s.indistinguishable_all, s.indistinguishable_three
        ),
    );
}

fn communitas(sheet: &mut Sheet) {
    let sum: f64 = bundled_sm5().iter().take(8).map(|i| i.mean).sum();
    let ours = CohortSummary::new(58, 44.14, 6.87).unwrap();
    let kettner = CohortSummary::new(886, 39.58, 11.23).unwrap();
    let p = ttest_two_sample_summary(&ours, &kettner, true).unwrap().p_two_sided;
    sheet.record(
        "communitas",
        (sum - 44.1).abs() <= 0.1 + 1e-9 && (p - 0.002).abs() <= 0.001,
        format!("item 1-8 mean sum {sum:.2} (44.1 +- 0.1), p vs Kettner {p:.4} (0.002 +- 0.001)"),
    );
}

fn ics(sheet: &mut Sheet) {
    let pre = matched_histogram(1.2, 1.5, 54, 6, 0.05).unwrap();
    let post = matched_histogram(2.9, 1.4, 54, 6, 0.05).unwrap();
    let mut ps: Vec<f64> = (0..100)
        .map(|seed| {
            let (a, b) = paired_cohort(&pre, &post, 0.5, seed).unwrap();
            wilcoxon_signed_rank(&a, &b).unwrap().p_two_sided
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    let median = 0.5 * (ps[49] + ps[50]);
    let below = ps.iter().filter(|&&p| p < 1e-6).count();
    sheet.record(
        "inclusion of community in self shift",
        median < 1e-6,
        format!("median Wilcoxon p over 100 synthetic cohorts {median:.2e} (< 1e-6); {below}/100 below 1e-6"),
    );

    let post_s = CohortSummary::new(54, 2.9, 1.4).unwrap();
    let theirs = CohortSummary::new(450, 2.8, 1.3).unwrap();
    let p = ttest_two_sample_summary(&post_s, &theirs, true).unwrap().p_two_sided;
    sheet.record(
        "Forstmann comparison (loose)",
        (0.40..=0.65).contains(&p),
        format!("p = {p:.3} (within [0.40, 0.65]; the printed 0.510 is not recoverable from rounded summaries)"),
    );
}

fn spatial(sheet: &mut Sheet) {
    let yaws: Vec<f64> = (0..4).map(|k| radial_transform(k, 4).unwrap().rotation.yaw()).collect();
    let worst = (0..4)
        .map(|k| {
            let gap = (yaws[(k + 1) % 4] - yaws[k]).rem_euclid(std::f64::consts::TAU);
            (gap - std::f64::consts::FRAC_PI_2).abs()
        })
        .fold(0.0, f64::max);
    let k = BodyKernel::default();
    let p = Vec3::new(0.0, 1.2, 0.0);
    let l = [group_luminosity(&[p; 4], &k), group_luminosity(&[p; 2], &k), group_luminosity(&[p], &k)];
    let o = pair_overlap(p, p + Vec3::new(2.0 * k.sigma, 0.0, 0.0), &k);
    let oerr = (o - (-1.0f64).exp()).abs();
    sheet.record(
        "radial placement, coalescence and overlap",
        worst < 1e-12 && l == [10.0, 3.0, 1.0] && oerr <= 1e-12,
        format!("max spacing error {worst:.1e} rad; L = {}/{}/{}; |overlap(2 sigma) - 1/e| = {oerr:.1e}", l[0], l[1], l[2]),
    );
}

fn perturbed_ring(seed: u64) -> (RingTopology, SimState) {
    let topo = RingTopology::default();
    let mut s = build_ring(&topo, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in s.positions.iter_mut() {
        *p += Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.06;
    }
    (topo, s)
}

/// Negated central difference of the potential.
fn numeric_forces(s: &SimState, topo: &RingTopology, its: &[InteractionForce], h: f64) -> Vec<Vec3> {
    let mut probe = s.clone();
    (0..s.n_beads())
        .map(|i| {
            let orig = probe.positions[i];
            let mut d = [0.0; 3];
            for (axis, slot) in d.iter_mut().enumerate() {
                let mut e = [0.0; 3];
                e[axis] = h;
                let step = Vec3::new(e[0], e[1], e[2]);
                probe.positions[i] = orig + step;
                let up = potential_energy(&probe, topo, its);
                probe.positions[i] = orig - step;
                let down = potential_energy(&probe, topo, its);
                *slot = -(up - down) / (2.0 * h);
            }
            probe.positions[i] = orig;
            Vec3::new(d[0], d[1], d[2])
        })
        .collect()
}

fn simulation(sheet: &mut Sheet) {
    let mut worst = 0.0f64;
    for seed in 0..8u64 {
        let (topo, s) = perturbed_ring(seed);
        let b = (seed * 5 % 40) as usize;
        let its = [InteractionForce {
            owner: 1,
            target_bead: b,
            anchor: s.positions[b] + Vec3::new(0.03, -0.02, 0.01),
            stiffness: 50.0,
            max_force: 5.0,
        }];
        let analytic = forces(&s, &topo, &its);
        let numeric = numeric_forces(&s, &topo, &its, 1e-6);
        let scale = numeric.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = analytic.iter().zip(&numeric).map(|(a, n)| (*a - *n).norm()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    sheet.record("force matches potential gradient", worst < 1e-4, format!("max relative error {worst:.2e} (< 1e-4)"));

    // windowed mean energy, first 1000 steps against the last 1000
    let topo = RingTopology::default();
    let mut s = build_ring(&topo, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in s.velocities.iter_mut() {
        *v = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.2;
    }
    let ip = IntegratorParams { dt: topo.stability_bound() / 10.0, friction: 0.0, temperature: 0.0, seed: 0 };
    let mut energies = vec![total_energy(&s, &topo, &[])];
    for _ in 0..10_000 {
        s = step(&s, &topo, &[], &ip).unwrap();
        energies.push(total_energy(&s, &topo, &[]));
    }
    let w = 1000;
    let head = energies[..w].iter().sum::<f64>() / w as f64;
    let tail = energies[energies.len() - w..].iter().sum::<f64>() / w as f64;
    let drift = ((tail - head) / energies[0]).abs();
    sheet.record("energy drift without thermostat", drift < 1e-4, format!("{drift:.2e} relative over 1e4 steps (< 1e-4)"));

    let run = || {
        let (topo, mut s) = perturbed_ring(9);
        let ip = IntegratorParams { seed: 42, ..Default::default() };
        let pull = InteractionForce { owner: 1, target_bead: 7, anchor: Vec3::new(0.4, 1.4, 0.1), stiffness: 50.0, max_force: 5.0 };
        for i in 0..3000 {
            let its = if i % 1000 < 500 { vec![pull] } else { vec![] };
            s = step(&s, &topo, &its, &ip).unwrap();
        }
        s.positions.iter().chain(&s.velocities).flat_map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]).collect::<Vec<u64>>()
    };
    sheet.record("seeded replay is bitwise identical", run() == run(), "3000 thermostatted steps, two runs".into());
}

fn random_string(rng: &mut ChaCha8Rng, max: usize) -> String {
    const POOL: &[char] = &['a', 'z', '_', ' ', '.', '"', '\\', '\n', 'é', 'ß', '中', '🙂', '\u{7f}', '0'];
    (0..rng.random_range(0..=max)).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let mut c = || if rng.random_bool(0.1) { rng.random_range(-1e6..1e6) } else { rng.random_range(-10.0..10.0) };
    let position = Vec3::new(c(), c(), c());
    let orientation =
        Quat { w: rng.random_range(-1.0..1.0), x: rng.random_range(-1.0..1.0), y: rng.random_range(-1.0..1.0), z: rng.random_range(-1.0..1.0) };
    Pose { position, orientation }
}

fn random_role(rng: &mut ChaCha8Rng) -> Role {
    [Role::Participant, Role::Facilitator, Role::Observer][rng.random_range(0..3)]
}

fn random_frame(rng: &mut ChaCha8Rng) -> WorldFrame {
    let avatars = (0..rng.random_range(0..6))
        .map(|_| AvatarView {
            id: rng.random(),
            role: random_role(rng),
            head: random_pose(rng),
            left: random_pose(rng),
            right: random_pose(rng),
            luminosity: rng.random_range(0.0..100.0),
            seq: rng.random(),
        })
        .collect();
    WorldFrame {
        tick: rng.random(),
        state_index: rng.random_range(0..64),
        state_name: random_string(rng, 12),
        finished: rng.random(),
        avatars,
        sim_positions: (0..rng.random_range(0..48))
            .map(|_| [0; 3].map(|_: i64| rng.random_range(-1_000_000..1_000_000)))
            .collect(),
        group_luminosity: rng.random_range(0.0..1e3),
        scale: rng.random_range(0.01..100.0),
    }
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..10) {
        0 => Message::JoinRequest(JoinRequest { version: PROTOCOL_VERSION, role: random_role(rng), node_label: random_string(rng, 16) }),
        1 => {
            let n = rng.random_range(1..=5);
            Message::JoinAccept(Box::new(JoinAccept {
                participant_id: rng.random(),
                role: random_role(rng),
                node_index: rng.random_bool(0.7).then(|| rng.random_range(0..n)),
                n_participants: n,
                session_config: SessionConfig { max_participants: n, ..Default::default() },
                snapshot: rng.random_bool(0.5).then(|| random_frame(rng)),
            }))
        }
        2 => Message::JoinReject { reason: random_string(rng, 32) },
        3 => {
            let m = [Mudra::None, Mudra::Index, Mudra::Middle];
            Message::PoseUpdate(PoseUpdate {
                seq: rng.random(),
                head: random_pose(rng),
                left: random_pose(rng),
                right: random_pose(rng),
                mudra_left: m[rng.random_range(0..3)],
                mudra_right: m[rng.random_range(0..3)],
            })
        }
        4 => Message::Ping { nonce: rng.random() },
        5 => Message::Pong { nonce: rng.random() },
        6 => {
            let command = match rng.random_range(0..7) {
                0 => FacilitatorCommand::Hold,
                1 => FacilitatorCommand::Resume,
                2 => FacilitatorCommand::Skip,
                3 => FacilitatorCommand::SetOverride {
                    key: random_string(rng, 20),
                    value: ParamValue::Scalar(rng.random_range(-1e9..1e9)),
                },
                4 => FacilitatorCommand::ClearOverride { key: random_string(rng, 20) },
                5 => FacilitatorCommand::SetScale { scale: rng.random_range(0.01..100.0) },
                _ => FacilitatorCommand::Spectate { on: rng.random() },
            };
            Message::FacilitatorCommand { command }
        }
        7 => Message::WorldFrame(random_frame(rng)),
        8 => Message::Leave,
        _ => Message::Error { code: "x".repeat(rng.random_range(1..12)), detail: random_string(rng, 32) },
    }
}

fn codec(sheet: &mut Sheet) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let mut failures = 0;
    for _ in 0..n {
        let m = random_message(&mut rng);
        let ok = encode(&m).ok().and_then(|bytes| {
            let d = decode(&bytes).ok()?;
            let again = encode(&d.message).ok()?;
            Some(d.consumed == bytes.len() && d.message == m.quantized() && again == bytes)
        });
        if ok != Some(true) {
            failures += 1;
        }
    }
    sheet.record("codec round trip", failures == 0, format!("{n} generated messages, {failures} failures"));
}

async fn join(addr: SocketAddr, role: Role) -> (Connection, Box<JoinAccept>) {
    let mut c = connect(addr).await.unwrap();
    let req = JoinRequest { version: PROTOCOL_VERSION, role, node_label: format!("{role:?}") };
    c.outgoing.send(Message::JoinRequest(req)).await.unwrap();
    loop {
        match c.incoming.recv().await.unwrap().unwrap() {
            Message::JoinAccept(a) => return (c, a),
            Message::JoinReject { reason } => panic!("rejected: {reason}"),
            _ => {}
        }
    }
}

/// Frames until the first finished one: (tick, avatar ids).
async fn collect_frames(mut c: Connection, pose_every: Option<Duration>) -> Vec<(u64, Vec<u32>)> {
    let mut out = Vec::new();
    let mut seq = 0;
    let mut ticker = tokio::time::interval(pose_every.unwrap_or(Duration::from_secs(3600)));
    loop {
        tokio::select! {
            m = c.incoming.recv() => match m {
                Some(Ok(Message::WorldFrame(f))) => {
                    out.push((f.tick, f.avatars.iter().map(|a| a.id).collect()));
                    if f.finished {
                        return out;
                    }
                }
                Some(Ok(_)) => {}
                _ => return out,
            },
            _ = ticker.tick(), if pose_every.is_some() => {
                seq += 1;
                let head = Vec3::new(0.0, 1.6, 0.3);
                let up = PoseUpdate {
                    seq,
                    head: Pose::at(head),
                    left: Pose::at(head + Vec3::new(-0.2, -0.5, 0.0)),
                    right: Pose::at(head + Vec3::new(0.2, -0.5, 0.0)),
                    mudra_left: Mudra::None,
                    mudra_right: Mudra::None,
                };
                let _ = c.outgoing.send(Message::PoseUpdate(up)).await;
            }
        }
    }
}

async fn full_run(sheet: &mut Sheet) {
    let expected: Vec<String> = reference_sequences().iter().flat_map(|s| s.states.iter().map(|st| st.name.clone())).collect();
    let cfg = SessionConfig { time_scale: 100.0, ..Default::default() };
    let started = Instant::now();
    let server = start(ServerOptions::new(cfg)).await.unwrap();

    // the facilitator goes into spectate before sending any pose, then keeps streaming
    let (fac, fac_accept) = join(server.addr, Role::Facilitator).await;
    fac.outgoing.send(Message::FacilitatorCommand { command: FacilitatorCommand::Spectate { on: true } }).await.unwrap();
    let (obs, _) = join(server.addr, Role::Observer).await;
    let fac_task = tokio::spawn(collect_frames(fac, Some(Duration::from_millis(33))));
    let obs_task = tokio::spawn(collect_frames(obs, None));

    let bots = (0..4).map(|i| (format!("bot{i}"), shipped_script("coalesce").unwrap())).collect();
    let fault = FaultProfile { seed: 17, drop_p: 0.05, jitter: 100.0, base_delay: 100.0, dup_p: 0.0 };
    let reports = run_ensemble(server.addr, bots, Some(fault), true, Some(Duration::from_secs(120))).await;
    let wall = started.elapsed().as_secs_f64();
    let observed = obs_task.await.unwrap();
    let fac_frames = fac_task.await.unwrap();
    server.shutdown().await.unwrap();

    let reports = match reports {
        Ok(r) => r,
        Err(e) => {
            sheet.record("four-bot reference run under faults", false, format!("ensemble failed: {e}"));
            return;
        }
    };
    let digests: Vec<_> = reports.iter().map(|r| r.final_frame_digest.clone()).collect();
    let all_finished = reports.iter().all(|r| r.finished && !r.partial && r.errors.is_empty());
    let full_order = reports.iter().all(|r| r.states_observed == expected);
    let agree = digests[0].is_some() && digests.iter().all(|d| *d == digests[0]);
    sheet.record(
        "four-bot reference run under faults",
        all_finished && full_order && agree && wall <= 60.0,
        format!(
            "{} states each, finished {all_finished}, final frames agree {agree}, {wall:.1} s wall (limit 60), drop 0.05, jitter 100 ms",
            expected.len()
        ),
    );

    let fid = fac_accept.participant_id;
    let leaks = observed.iter().chain(&fac_frames).filter(|(_, ids)| ids.contains(&fid)).count();
    sheet.record(
        "spectating facilitator never broadcast",
        leaks == 0 && !observed.is_empty(),
        format!("{} observer frames and {} facilitator frames checked, {leaks} contain the facilitator", observed.len(), fac_frames.len()),
    );
}

fn no_console(sheet: &mut Sheet) {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let node_manifests = std::fs::read_dir(root.join("crates"))
        .map(|rd| rd.filter_map(Result::ok).filter(|e| e.path().join("package.json").exists()).count())
        .unwrap_or(0);
    sheet.record(
        "suite runs without a console",
        node_manifests == 0 && !root.join("package.json").exists(),
        "no console package in the workspace; the control API is driven by Rust clients".into(),
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn primary_acceptance() {
    let mut sheet = Sheet::default();
    sm2_reproduction(&mut sheet);
    sm1_pipeline(&mut sheet);
    intensity_bins(&mut sheet);
    communitas(&mut sheet);
    ics(&mut sheet);
    spatial(&mut sheet);
    simulation(&mut sheet);
    codec(&mut sheet);
    full_run(&mut sheet).await;
    no_console(&mut sheet);

    let failed: Vec<_> = sheet.rows.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    let summary = format!("acceptance: {} of {} criteria pass\n", sheet.rows.len() - failed.len(), sheet.rows.len());
    let _ = std::io::stderr().write_all(summary.as_bytes());
    assert!(failed.is_empty(), "failing: {failed:?}");
}
