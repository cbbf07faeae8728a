//! Golden problem files under `problems/` at the repository root.
//!
//! Three pins per example: the file's byte hash, a load -> serialize round
//! trip that must reproduce the file exactly, and a hash over 100 dynamics
//! probes evaluated from the parsed file. Regenerate with
//! `REGEN_GOLDEN=1 cargo test -p reachcert-workbench --test golden`.

use std::fs;
use std::path::PathBuf;

use reachcert::benchmarks;
use reachcert::problem::{derive_seed, ReachAvoidProblem};
use sha2::{Digest, Sha256};

/// (name, sha256 of file bytes, sha256 of the 100-probe dynamics trace).
const GOLDEN: [(&str, &str, &str); 5] = [
    (
        "ex1",
        "196152fb40c90f04c9d3b2f2ec84e25cc24a2196bb4804ed86b8752788ae6898",
        "5423e07af461af5a042a2d6dee63abbfeaa692c3edd89b040a34722f43694864",
    ),
    (
        "ex2",
        "3d72b6fdb396c30008a5613db7172d531c5edecbcb135a139959157fb4225bfe",
        "65e0bfd291c9430e069d79bc449702be8a3b54013fd1b1051f2a4e0ee30eef5b",
    ),
    (
        "ex3",
        "0aa4ac941b3d18b289777991428e658bc3eb9156956e0b9290c25c75d6b5554b",
        "4fbd409cee36dd78b434493bb23a13500fc2b0ca9e809160d7c144625405057b",
    ),
    (
        "ex4",
        "f526e055d25181f238f211e98512d0f2ec423708ebe08cfb845da96b67f8c30c",
        "1038a2a5961c3cf68d29769a36b2d3b7d8300a4afcb82eff36c461e50da7e881",
    ),
    (
        "walk",
        "8621f1ae9b03d00be6ec8e01e611246ab6b3473e3e45312032ac41b5723fa709",
        "3483e2ad5a4b3dd0f3159ff77a81e876792e16de3071262eea5f1ef3baf22042",
    ),
];

fn problems_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// `derive_seed` as a deterministic uniform draw on `[lo, hi)`.
fn pinned_uniform(seed: u64, index: u64, lo: f64, hi: f64) -> f64 {
    let u = derive_seed(seed, index) as f64 / 1.844_674_407_370_955_2e19; // 2^64
    lo + (hi - lo) * u
}

/// Hash 100 probes: state in the working box, noise in the disturbance
/// support, plus the one-step image, all as little-endian f64 bytes.
fn probe_hash(problem: &ReachAvoidProblem, seed: u64) -> String {
    let system = &problem.system;
    let support = system.disturbance().support_box();
    let bounds = &problem.working_box;
    let mut hasher = Sha256::new();
    let mut index = 0u64;
    for _ in 0..100 {
        let mut draw = |lo: f64, hi: f64| {
            let v = pinned_uniform(seed, index, lo, hi);
            index += 1;
            v
        };
        let x: Vec<f64> =
            (0..system.state_dim()).map(|a| draw(bounds.lo()[a], bounds.hi()[a])).collect();
        let theta: Vec<f64> = support.iter().map(|iv| draw(iv.lo(), iv.hi())).collect();
        let image = system.step(&x, &theta).expect("probe dimensions match the system");
        for v in x.iter().chain(&theta).chain(&image) {
            hasher.update(v.to_le_bytes());
        }
    }
    hex(&hasher.finalize())
}

fn probe_seed(name: &str) -> u64 {
    // stable per-example seed independent of list order
    name.bytes().fold(0x5eed_u64, |acc, b| derive_seed(acc, b as u64))
}

#[test]
fn golden_files_match_pins() {
    if std::env::var("REGEN_GOLDEN").is_ok() {
        regenerate();
        return;
    }
    for (name, file_pin, probe_pin) in GOLDEN {
        let path = problems_dir().join(format!("{name}.json"));
        let bytes = fs::read(&path).unwrap_or_else(|e| {
            panic!("{} missing ({e}); run with REGEN_GOLDEN=1 to create it", path.display())
        });
        assert_eq!(file_sha256(&bytes), file_pin, "{name}.json bytes changed");

        let text = String::from_utf8(bytes).expect("golden files are UTF-8");
        let parsed = ReachAvoidProblem::from_json(&text).expect("golden file parses");
        let round = parsed.to_json().expect("golden problem serializes") + "\n";
        assert_eq!(round, text, "{name}.json load -> serialize is not idempotent");

        assert_eq!(probe_hash(&parsed, probe_seed(name)), probe_pin, "{name} dynamics changed");
    }
}

#[test]
fn golden_files_match_builtins() {
    if std::env::var("REGEN_GOLDEN").is_ok() {
        return;
    }
    for (name, _, _) in GOLDEN {
        let path = problems_dir().join(format!("{name}.json"));
        let text = fs::read_to_string(&path).expect("golden file exists");
        let parsed = ReachAvoidProblem::from_json(&text).expect("golden file parses");
        let builtin = benchmarks::by_name(name).expect("every golden name is a built-in");
        assert_eq!(
            parsed.to_json().unwrap(),
            builtin.to_json().unwrap(),
            "{name}.json drifted from the built-in definition"
        );
    }
}

fn regenerate() {
    let dir = problems_dir();
    fs::create_dir_all(&dir).expect("create problems dir");
    for (name, _, _) in GOLDEN {
        let problem = benchmarks::by_name(name).expect("built-in");
        let text = problem.to_json().expect("serialize") + "\n";
        let path = dir.join(format!("{name}.json"));
        fs::write(&path, &text).expect("write golden file");
        eprintln!(
            "    (\n        \"{name}\",\n        \"{}\",\n        \"{}\",\n    ),",
            file_sha256(text.as_bytes()),
            probe_hash(&problem, probe_seed(name))
        );
    }
}
