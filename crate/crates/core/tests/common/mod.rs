#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use callsim::engine::{DataPaths, Engine};
use callsim::generation::BackendClient;
use callsim::validation::ValidationConfig;
use callsim::SimulationInstruction;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn data_paths() -> DataPaths {
    DataPaths {
        taxonomy: None,
        corpus: fixture("corpus.jsonl"),
        gazetteer: fixture("gazetteer.txt"),
        map: fixture("map.toml"),
        protocols: fixture("protocols.toml"),
        profiles: None,
        questions: None,
        classifier: None,
    }
}

pub fn engine(client: Box<dyn BackendClient>, threshold: u32) -> Engine {
    let validation = ValidationConfig { threshold, ..ValidationConfig::default() };
    Engine::load(&data_paths(), client, validation).expect("fixture engine loads")
}

/// Crash report with severe weather and a medical emergency, reported by an
/// anxious adult who is unhoused and a non-native speaker.
pub fn crash_instruction(seed: u64) -> SimulationInstruction {
    serde_json::from_value(serde_json::json!({
        "is": {
            "incident_type": "crash report",
            "scenario_contexts": ["severe weather"],
            "special_requests": ["medical emergency"]
        },
        "ci": {"age": "adult", "emotion": "anxious", "vulnerable": ["unhoused", "non-native speaker"]},
        "seed": seed
    }))
    .unwrap()
}

/// Compares `actual` against a golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {}: {e} (run with UPDATE_GOLDEN=1)", path.display()));
    assert_eq!(actual, expected, "golden {name} differs");
}

/// Outcome of the capture experiment at one loop threshold.
#[derive(Debug, Clone, Copy)]
pub struct CaptureRun {
    pub threshold: u32,
    /// Final caller turns still carrying an injected fault.
    pub bad: usize,
    pub total: usize,
}

impl CaptureRun {
    pub fn rate(&self) -> f64 {
        self.bad as f64 / self.total as f64
    }
}

fn is_faulty(text: &str) -> bool {
    text.contains(callsim::generation::FABRICATED_ADDRESS) || text.starts_with("Caller:")
}

/// Runs `trials` seeded sessions (opening line plus the answer to an address
/// question) per threshold against a rule-based backend with `fault_rate`.
pub fn capture_experiment(thresholds: &[u32], trials: u64, fault_rate: f64) -> Vec<CaptureRun> {
    use callsim::generation::RuleBasedBackend;
    use callsim::validation::{LoopDeps, SessionState};
    use callsim::{Ablation, ManualClock};

    let e = engine(Box::new(RuleBasedBackend::new(fault_rate)), 1);
    let clock = ManualClock::new(0);
    thresholds
        .iter()
        .map(|&threshold| {
            let deps = LoopDeps { config: ValidationConfig { threshold, ..e.validation }, ..e.deps(&clock) };
            let mut bad = 0;
            let mut total = 0;
            for trial in 0..trials {
                let inst = crash_instruction(trial.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ 0xC0FFEE);
                let mut s =
                    SessionState::new("capture", inst, Ablation::full(), &e.knowledge, &e.profiles, &e.generation)
                        .unwrap();
                s.open(&deps).unwrap();
                s.respond("What is the address of the emergency?", &deps).unwrap();
                for t in s.caller_turns() {
                    total += 1;
                    if is_faulty(&t.text) {
                        bad += 1;
                    }
                }
            }
            CaptureRun { threshold, bad, total }
        })
        .collect()
}

/// Upper end of the two-sided 99% normal-approximation interval for a
/// binomial rate `p` observed over `n` draws.
pub fn binomial_upper_99(p: f64, n: usize) -> f64 {
    p + 2.576 * (p * (1.0 - p) / n as f64).sqrt()
}
