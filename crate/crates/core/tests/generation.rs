mod common;

use callsim::corpus::{Label, LabelSet, Turn};
use callsim::generation::{
    assemble_prompt, select_backend, Ablation, BackendClient, CompletionRequest, GenerationConfig, GenerationError,
    ProfileSet, RuleBasedBackend, ScriptedBackend, FABRICATED_ADDRESS,
};
use callsim::validation::contains_sensitive;
use callsim::SimulationInstruction;

use common::{crash_instruction, engine};

fn labels(xs: &[&str]) -> LabelSet {
    xs.iter().map(|x| Label::new(x)).collect()
}

#[test]
fn crash_bundle_carries_instruction() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let inst = crash_instruction(7);
    let b = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();

    let te = b.task_explanation.as_ref().unwrap();
    assert_eq!(te.incident_type.as_str(), "crash report");
    assert_eq!(te.scenario_contexts, vec![Label::new("severe weather")]);
    assert_eq!(te.special_requests, vec![Label::new("medical emergency")]);
    assert_eq!(te.behaviour.len(), 2);
    let rendered = b.render();
    for l in ["crash report", "severe weather", "medical emergency"] {
        assert!(rendered.contains(l), "{l}");
    }

    let fc = b.fact_context.as_ref().unwrap();
    assert!(!fc.excerpts.is_empty());
    let is_tags = inst.is.labels();
    for ex in &fc.excerpts {
        let entry = e.knowledge.retrievable.entries().iter().find(|en| en.call_id == ex.call_id).unwrap();
        assert!(is_tags.is_subset(&entry.labels));
    }
    assert_eq!(fc.protocol_questions.len(), 4);
    assert_eq!(fc.addresses.len(), 3);
    assert!(fc.addresses.iter().all(|a| e.knowledge.gazetteer.contains(a)));

    let fs = b.few_shot.as_ref().unwrap();
    assert!(!fs.exemplars.is_empty() && fs.marker.is_none());
    let ci_tags = labels(&["adult", "unhoused", "non-native speaker"]);
    for ex in &fs.exemplars {
        let entry = e.knowledge.retrievable.entries().iter().find(|en| en.call_id == ex.call_id).unwrap();
        assert!(ci_tags.is_subset(&entry.labels), "{}", ex.call_id);
    }

    assert!(!contains_sensitive(&b.brief, &e.knowledge.taxonomy));
    assert!(!contains_sensitive(&te.render(), &e.knowledge.taxonomy));
    assert!(!contains_sensitive(&b.persona, &e.knowledge.taxonomy));
}

#[test]
fn assembly_is_deterministic() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let a = assemble_prompt(&crash_instruction(5), &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    let b = assemble_prompt(&crash_instruction(5), &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    assert_eq!(a.render(), b.render());
    let c = assemble_prompt(&crash_instruction(6), &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    assert_eq!(a.task_explanation, c.task_explanation);
}

#[test]
fn ablated_sections_leave_the_rest_untouched() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let inst = crash_instruction(3);
    let full = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    let row = |name: &str| {
        assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::from_row_name(name).unwrap(), &e.generation)
            .unwrap()
    };

    let no_fsp = row("no-fsp");
    assert_eq!(no_fsp.sections_present(), [true, true, false]);
    assert_eq!(no_fsp.fact_context, full.fact_context);
    assert_eq!(no_fsp.task_explanation, full.task_explanation);
    assert!(!no_fsp.render().contains("### FEW-SHOT"));

    let no_rag = row("no-rag");
    assert_eq!(no_rag.sections_present(), [false, true, true]);
    assert_eq!(no_rag.few_shot, full.few_shot);
    assert!(!no_rag.render().contains("### FACT CONTEXT"));

    assert_eq!(row("no-cot").sections_present(), [true, false, true]);
    assert_eq!(row("no-all").sections_present(), [false, false, false]);

    let no_kc = row("no-kc");
    let fc = no_kc.fact_context.unwrap();
    assert!(fc.addresses.is_empty() && fc.protocol_questions.is_empty());
    assert_eq!(no_kc.task_explanation, full.task_explanation);
}

#[test]
fn unmatched_caller_image_gets_marker() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let mut inst = crash_instruction(1);
    inst.ci.age = Label::new("kid");
    inst.ci.vulnerable = labels(&["low-income housing area"]);
    let b = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    let fs = b.few_shot.unwrap();
    assert!(fs.exemplars.is_empty());
    assert_eq!(fs.marker.as_deref(), Some("no exemplars"));
    assert!(fs.render().contains("(no exemplars)"));
}

#[test]
fn unknown_or_unprotocolled_instructions() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let mut inst = crash_instruction(1);
    inst.is.incident_type = Label::new("meteor strike");
    let err = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap_err();
    assert!(matches!(err, GenerationError::Tags(_)));

    let mut inst = crash_instruction(1);
    inst.is.incident_type = Label::new("fraud");
    let b = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    assert_eq!(b.fact_context.unwrap().protocol_note.as_deref(), Some("no protocol tree for fraud"));
}

#[test]
fn profile_selection_ignores_vulnerable_tags() {
    let p = ProfileSet::bundled();
    let mut inst: SimulationInstruction = crash_instruction(0);
    let with = select_backend(&inst.ci, &p).clone();
    inst.ci.vulnerable.clear();
    assert_eq!(select_backend(&inst.ci, &p), &with);
    assert!(with.key.is_some());
    inst.ci.age = Label::new("kid");
    inst.ci.emotion = Label::new("irrational");
    assert_eq!(select_backend(&inst.ci, &p), p.default_profile());
    assert!(ProfileSet::from_toml("[default]\npersona = \"x\"\n[paraphrases]\nunhoused = \"is unhoused\"\n").is_err());
}

fn request<'a>(
    bundle: &'a callsim::generation::PromptBundle,
    history: &'a [Turn],
    profile: &'a callsim::generation::BackendProfile,
    attempt: u32,
    seed: u64,
) -> CompletionRequest<'a> {
    let call_index = history.iter().filter(|t| t.speaker == callsim::Speaker::Caller).count() as u64;
    CompletionRequest { bundle, history, profile, attempt, seed, call_index }
}

#[test]
fn rule_based_backend_answers_from_the_bundle() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let inst = crash_instruction(9);
    let b = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    let profile = select_backend(&inst.ci, &e.profiles);
    let clean = RuleBasedBackend::new(0.0);

    let opening = clean.complete(&request(&b, &[], profile, 1, 9)).unwrap();
    assert!(opening.contains("crash report"), "{opening}");

    let history = vec![Turn::caller(opening.clone(), 0), Turn::calltaker("What is the address of the emergency?", 1)];
    let addr = clean.complete(&request(&b, &history, profile, 1, 9)).unwrap();
    let first = &b.fact_context.as_ref().unwrap().addresses[0];
    assert_eq!(addr, format!("It's {first}."));
    assert_eq!(clean.complete(&request(&b, &history, profile, 1, 9)).unwrap(), addr);

    let faulty = RuleBasedBackend::new(1.0);
    assert_eq!(faulty.complete(&request(&b, &history, profile, 1, 9)).unwrap(), format!("It's {FABRICATED_ADDRESS}."));
    assert!(faulty.complete(&request(&b, &[], profile, 1, 9)).unwrap().starts_with("Caller: "));
}

#[test]
fn fault_draws_are_seeded() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let inst = crash_instruction(2);
    let b = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    let profile = select_backend(&inst.ci, &e.profiles);
    let half = RuleBasedBackend::new(0.5);
    let draws = |seed: u64| -> Vec<bool> {
        (1..=40).map(|a| half.complete(&request(&b, &[], profile, a, seed)).unwrap().starts_with("Caller:")).collect()
    };
    assert_eq!(draws(1), draws(1));
    assert_ne!(draws(1), draws(2));
    let faults = draws(1).iter().filter(|f| **f).count();
    assert!((5..=35).contains(&faults), "{faults}");
}

#[test]
fn scripted_backend_follows_turns_and_attempts() {
    let e = engine(Box::new(RuleBasedBackend::new(0.0)), 3);
    let inst = crash_instruction(2);
    let b = assemble_prompt(&inst, &e.knowledge, &e.profiles, Ablation::full(), &e.generation).unwrap();
    let profile = select_backend(&inst.ci, &e.profiles);
    let s = ScriptedBackend::from_json(r#"["open", {"attempts": ["bad", "good"]}]"#).unwrap();
    assert_eq!(s.complete(&request(&b, &[], profile, 2, 0)).unwrap(), "open");
    let h = vec![Turn::caller("open", 0), Turn::calltaker("q", 1)];
    assert_eq!(s.complete(&request(&b, &h, profile, 1, 0)).unwrap(), "bad");
    assert_eq!(s.complete(&request(&b, &h, profile, 2, 0)).unwrap(), "good");
    assert_eq!(GenerationConfig::default().k_few_shot, 4);
}
