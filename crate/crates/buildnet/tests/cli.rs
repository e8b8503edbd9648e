use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use buildnet::files;
use buildnet_core::catalog::BuildCatalog;
use buildnet_core::event_log::{EventLog, GameEvent};

fn buildnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_buildnet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = buildnet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ten_production_log(id: &str, c: &BuildCatalog) -> EventLog {
    let mut log = EventLog::new(id);
    for i in 0..10 {
        log.events.push(GameEvent::produced(i * 100, c.worker()));
    }
    log
}

#[test]
fn extract_counts_games_pairs_and_rejections() {
    let c = BuildCatalog::default_pvt();
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events");
    files::write_corpus(&events, &["g1", "g2", "g3"].map(|id| ten_production_log(id, &c)), &c).unwrap();
    fs::write(events.join("g4.events"), "game g4\n0 produced probe\n50 produced scv\n").unwrap();
    let out = dir.path().join("d.bnds");
    let report = dir.path().join("r.json");
    let text = ok(&["extract", "--events", p(&events), "--out", p(&out), "--report", p(&report)]);
    assert!(text.contains("games: 3") && text.contains("pairs: 30"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["pairs"], 30);
    let reason = json["rejected"][0]["reason"].as_str().unwrap();
    assert!(reason.contains("mind control") && reason.contains("scv"), "{reason}");
    assert_eq!(files::load_dataset(&out).unwrap().games.len(), 3);
}

#[test]
fn extract_of_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = buildnet(&["extract", "--events", p(dir.path()), "--out", p(&dir.path().join("d"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no .events files"));
}

/// synth → extract → train → eval → analyze → ablate on a small corpus.
#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    ok(&["synth", "--out", p(&d("corpus")), "--games", "40", "--seed", "5"]);
    ok(&["extract", "--events", p(&d("corpus")), "--out", p(&d("data.bnds"))]);

    let train = |out: &str, epochs: &str| {
        ok(&["train", "--dataset", p(&d("data.bnds")), "--out", p(&d(out)), "--epochs", epochs, "--seed", "3"])
    };
    let text = train("m1.bnmd", "2");
    assert!(text.contains("most frequent") && text.contains("random"), "{text}");
    train("m2.bnmd", "2");
    assert_eq!(fs::read(d("m1.bnmd")).unwrap(), fs::read(d("m2.bnmd")).unwrap());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d("m1.bnmd.report.json")).unwrap()).unwrap();
    assert_eq!(report["history"].as_array().unwrap().len(), 2);

    let eval = ok(&["eval", "--model", p(&d("m1.bnmd")), "--dataset", p(&d("data.bnds")), "--report", p(&d("e.json"))]);
    assert!(eval.contains("a+b+c+d+e"), "{eval}");

    ok(&["analyze", "--model", p(&d("m1.bnmd")), "--dataset", p(&d("data.bnds")), "--out", p(&d("x.csv"))]);
    let csv_text = fs::read_to_string(d("x.csv")).unwrap();
    assert!(csv_text.starts_with(buildnet::cli::EXPANSION_SCHEMA));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_text.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["probe_count", "n_states", "mean_probability"]);
    let rows: Vec<(u32, usize, f64)> = reader.deserialize().map(Result::unwrap).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.1 > 0 && (0.0..=1.0).contains(&r.2)));

    let masks = "a,a+d,a+b+c+e,a+b+c+d+e";
    let ablate = ok(&[
        "ablate", "--dataset", p(&d("data.bnds")), "--masks", masks, "--repeats", "5", "--epochs", "1", "--report",
        p(&d("ab.json")),
    ]);
    assert!(ablate.contains('±'), "{ablate}");
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(d("ab.json")).unwrap()).unwrap();
    let rows = table["rows"].as_array().unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["a", "a+d", "a+b+c+e", "a+b+c+d+e", "most frequent", "random"]);
    assert!(rows[..4].iter().all(|r| r["runs"] == 5));
}

#[test]
fn untrained_model_is_near_chance_on_balanced_data() {
    use buildnet_core::encoder::{Dataset, GameRecord, Sample, StateVector};
    use rand::{Rng, SeedableRng};
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let games = (0..50)
        .map(|g| GameRecord {
            game_id: format!("g{g}"),
            samples: (0..116)
                .map(|i| {
                    let mut s = StateVector::zeros();
                    s.0.iter_mut().for_each(|x| *x = rng.gen());
                    Sample { state: s, action: (i % 58) as u8 }
                })
                .collect(),
        })
        .collect();
    let data = dir.path().join("d.bnds");
    files::save_dataset(&data, &Dataset { games }).unwrap();
    let model = dir.path().join("m.bnmd");
    ok(&["train", "--dataset", p(&data), "--out", p(&model), "--epochs", "0"]);
    let report = dir.path().join("e.json");
    ok(&["eval", "--model", p(&model), "--dataset", p(&data), "--all", "--report", p(&report)]);
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let top1 = table["rows"][0]["errors"][0]["mean"].as_f64().unwrap();
    // 5800 balanced examples: chance is 98.28%, 3σ is about 0.5 points
    assert!((top1 - 98.28).abs() < 1.0, "{top1}");
}

#[test]
fn simulate_is_deterministic_and_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let r1 = dir.path().join("1.json");
    let r2 = dir.path().join("2.json");
    let args = |r: &Path| {
        ok(&["simulate", "--a", "random", "--b", "script", "--matches", "40", "--seed", "8", "--report", p(r)]);
    };
    args(&r1);
    args(&r2);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(&r1).unwrap()).unwrap();
    assert!(table["wins_b"].as_u64().unwrap() > 30);

    let self_play = dir.path().join("s.json");
    ok(&["simulate", "--a", "script", "--b", "script", "--matches", "10", "--report", p(&self_play)]);
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(&self_play).unwrap()).unwrap();
    assert_eq!(table["draws"], 10);
}

#[test]
fn model_contender_needs_a_model() {
    let out = buildnet(&["simulate", "--a", "model", "--b", "script", "--matches", "1"]);
    assert!(!out.status.success());
}

#[test]
fn serve_rejects_an_unusable_bind_address() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = buildnet_core::EncoderContext::default_pvt();
    let model = dir.path().join("m.bnmd");
    let m = buildnet_core::Model {
        network: buildnet_core::Network::init(Default::default(), 0),
        meta: buildnet_core::nn::ModelMeta::for_context(&ctx, Default::default()),
    };
    files::save_model(&model, &m).unwrap();
    let out = buildnet(&["serve", "--model", p(&model), "--bind", "256.0.0.1:1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
}
